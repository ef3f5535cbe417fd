//! Line-delimited JSON log records on stderr.

use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};

pub const LOG_ENV: &str = "PROMPTBANK_LOG";

struct JsonLogger {
    level: LevelFilter,
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = serde_json::json!({
            "level": record.level().as_str().to_ascii_lowercase(),
            "target": record.target(),
            "message": record.args().to_string(),
        });
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

/// Level named by `value`, falling back to info for anything unknown.
pub fn parse_level(value: Option<&str>) -> LevelFilter {
    match value.map(str::trim).map(str::to_ascii_lowercase).as_deref() {
        Some("debug") => LevelFilter::Debug,
        Some("trace") => LevelFilter::Trace,
        Some("warn") => LevelFilter::Warn,
        Some("error") => LevelFilter::Error,
        Some("off") => LevelFilter::Off,
        _ => Level::Info.to_level_filter(),
    }
}

/// Installs the logger once; later calls are no-ops.
pub fn init() {
    let level = parse_level(std::env::var(LOG_ENV).ok().as_deref());
    if log::set_logger(Box::leak(Box::new(JsonLogger { level }))).is_ok() {
        log::set_max_level(level);
    }
}
