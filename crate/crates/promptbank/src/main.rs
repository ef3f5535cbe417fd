use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptbank::config::{Overrides, PipelineConfig};
use promptbank::error::{PipelineError, Result};
use promptbank::eval::{evaluate_run, self_bleu_file};
use promptbank::io::json::write_json;
use promptbank::pipeline::{self, files, Tagged};
use promptbank_core::prompt::RetrievalMode;
use promptbank_core::retrieval::Retention;

/// Builds textual memory banks from a caption corpus, retrieves prompts for
/// videos and scores caption sets.
#[derive(Debug, Parser)]
#[command(name = "promptbank", version)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Settings {
    /// TOML file of settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset preset: msvd, msrvtt, vatex, msrvtt-to-msvd, msvd-to-msrvtt.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Seed for noise, neighbor sampling and retention draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Retrieval mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// τ: cumulative-mass threshold for top-p refinement, in (0, 1].
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// B: base retrieval count for the rarest cross-domain category.
    #[arg(long = "base-b", global = true)]
    base_b: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for every artifact written.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Directory holding captions, categories, embeddings and video features.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// N_p: noun-phrase bank size.
    #[arg(long, global = true)]
    np_bank_size: Option<usize>,
    /// N_g: scene-graph bank size.
    #[arg(long, global = true)]
    sg_bank_size: Option<usize>,
    /// K_p: noun phrases per prompt.
    #[arg(long, global = true)]
    k_np: Option<usize>,
    /// K_g: scene graphs per prompt.
    #[arg(long, global = true)]
    k_sg: Option<usize>,
    /// M: nearest captions sampled from during training.
    #[arg(long, global = true)]
    neighbors: Option<usize>,
    /// λ²: variance of the training noise.
    #[arg(long, global = true)]
    noise_variance: Option<f64>,
    /// Softmax temperature for the entire-caption prompt.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Whether in-domain retention is drawn once per category or per item.
    #[arg(long, global = true, value_enum)]
    retention: Option<RetentionArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "in_domain")]
    InDomain,
    #[value(name = "cross_domain")]
    CrossDomain,
    #[value(name = "direct_top_k")]
    DirectTopK,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RetentionArg {
    #[value(name = "per_category")]
    PerCategory,
    #[value(name = "per_item")]
    PerItem,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the noun-phrase, scene-graph and entire-caption banks.
    BuildBanks,
    /// Emit enhanced scene-graph candidates and the strings to embed.
    SgCandidates,
    /// Pick the enhanced scene graph closest to each caption.
    SgSelect,
    /// Assign categories to bank phrases and scene graphs.
    Classify,
    /// Compute in-domain priors or cross-domain quotas.
    Stats,
    /// Retrieve refined prompts for every video.
    Retrieve,
    /// Export training prompt bundles.
    AssembleTrain,
    /// Export inference prompt bundles.
    AssembleInfer,
    /// Score predictions against references.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
    /// Self-BLEU of a sentence set (predictions JSONL or one per line).
    Selfbleu {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Settings {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            data_dir: self.data_dir.clone(),
            out_dir: self.out_dir.clone(),
            np_bank_size: self.np_bank_size,
            sg_bank_size: self.sg_bank_size,
            k_np: self.k_np,
            k_sg: self.k_sg,
            neighbors: self.neighbors,
            noise_variance: self.noise_variance,
            tau: self.tau,
            base_retrieval: self.base_b,
            temperature: self.temperature,
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                ModeArg::InDomain => RetrievalMode::InDomain,
                ModeArg::CrossDomain => RetrievalMode::CrossDomain,
                ModeArg::DirectTopK => RetrievalMode::DirectTopK,
            }),
            retention: self.retention.map(|r| match r {
                RetentionArg::PerCategory => Retention::PerCategory,
                RetentionArg::PerItem => Retention::PerItem,
            }),
            ec_weights_topk: None,
        }
    }

    fn resolve(&self) -> Result<PipelineConfig> {
        let file = self.config.as_deref().map(Overrides::load).transpose()?;
        PipelineConfig::resolve(file.as_ref(), &self.overrides())
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.settings.threads {
        if n == 0 {
            return Err(PipelineError::InvalidConfig("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    }
    let cfg = cli.settings.resolve()?;
    log::debug!("config hash {}", cfg.hash());
    match cli.command {
        Command::BuildBanks => drop(pipeline::build_banks(&cfg)?),
        Command::SgCandidates => drop(pipeline::sg_candidates(&cfg)?),
        Command::SgSelect => drop(pipeline::sg_select(&cfg)?),
        Command::Classify => drop(pipeline::classify(&cfg)?),
        Command::Stats => drop(pipeline::stats(&cfg)?),
        Command::Retrieve => drop(pipeline::retrieve(&cfg)?),
        Command::AssembleTrain => drop(pipeline::assemble_train(&cfg)?),
        Command::AssembleInfer => drop(pipeline::assemble_infer(&cfg)?),
        Command::Evaluate { predictions, references } => {
            let report = evaluate_run(&predictions, &references)?;
            let stamped = Tagged { config_hash: cfg.hash(), record: report };
            println!("{}", serde_json::to_string_pretty(&stamped).expect("report serializes"));
            write_json(&cfg.out_dir.join(files::REPORT), &stamped)?;
        }
        Command::Selfbleu { input } => {
            let score = self_bleu_file(&input)?;
            println!("{}", serde_json::json!({ "config_hash": cfg.hash(), "self_bleu": score }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    promptbank::logging::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
