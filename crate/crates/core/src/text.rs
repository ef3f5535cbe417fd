//! Text normalization and the frozen metric tokenizer.
//!
//! Textual units (noun phrases, triple endpoints, predicates) are identified
//! by their normalized form: lowercase, whitespace collapsed to single
//! spaces, terminal punctuation stripped.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases, collapses runs of whitespace and strips terminal punctuation.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    while let Some(last) = out.chars().last() {
        if last.is_ascii_punctuation() || last == ' ' {
            out.pop();
        } else {
            break;
        }
    }
    out
}

/// True when the tokens of `needle` occur as a contiguous run inside
/// `haystack`. Both arguments are expected to be normalized already, so
/// "boy" matches "young boy" but not "boycott".
pub fn contains_tokens(haystack: &str, needle: &str) -> bool {
    let needle: Vec<&str> = needle.split(' ').filter(|t| !t.is_empty()).collect();
    if needle.is_empty() {
        return false;
    }
    let hay: Vec<&str> = haystack.split(' ').filter(|t| !t.is_empty()).collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Tokenizer shared by every caption metric.
///
/// Lowercases, splits on whitespace and emits ASCII punctuation as separate
/// tokens. Apostrophes and hyphens stay inside a word when both neighbours
/// are alphanumeric ("t-shirt", "man's").
pub fn metric_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(|c| c.to_lowercase()).collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if c.is_ascii_punctuation() {
            let joiner = (c == '-' || c == '\'')
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if joiner {
                word.push(c);
            } else {
                flush(&mut word, &mut tokens);
                tokens.push(String::from(c));
            }
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(core::mem::take(word));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_strips() {
        assert_eq!(normalize("  A Young   Boy is playing basketball. "), "a young boy is playing basketball");
        assert_eq!(normalize("What?!"), "what");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn token_boundaries() {
        assert!(contains_tokens("young boy", "boy"));
        assert!(contains_tokens("a young boy", "young boy"));
        assert!(!contains_tokens("boycott", "boy"));
        assert!(!contains_tokens("a boy", ""));
        assert!(contains_tokens("boy", "boy"));
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(metric_tokens("A man, in a T-shirt!"), ["a", "man", ",", "in", "a", "t-shirt", "!"]);
        assert_eq!(metric_tokens("the man's dog"), ["the", "man's", "dog"]);
        assert_eq!(metric_tokens("-hi- 'yo'"), ["-", "hi", "-", "'", "yo", "'"]);
    }
}
