//! Caption-quality and diversity metrics: BLEU@4, ROUGE-L, CIDEr and
//! Self-BLEU.
//!
//! All metrics share [`metric_tokens`]. Corpus averages sum sorted values,
//! so every corpus score is exactly invariant to item order.
//!
//! BLEU orders for which the candidate side has no n-grams at all are left
//! out of the geometric mean instead of forcing the score to zero; a
//! three-word sentence identical to its reference therefore scores 1.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::metric_tokens;

pub const MAX_ORDER: usize = 4;
/// Recall weight of the LCS F-measure.
pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SCALE: f64 = 10.0;

type Counts<'a> = BTreeMap<&'a [String], u32>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Order-independent mean.
fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn check_lengths(candidates: usize, references: usize) -> Result<()> {
    if candidates != references {
        return Err(Error::LengthMismatch { candidates, references });
    }
    if candidates == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn tokenize_all<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) {
    (
        candidates.iter().map(|c| metric_tokens(c.as_ref())).collect(),
        references.iter().map(|rs| rs.iter().map(|r| metric_tokens(r.as_ref())).collect()).collect(),
    )
}

/// Sufficient statistics of BLEU for one or more items.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BleuStats {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    hyp_len: u64,
    ref_len: u64,
}

impl BleuStats {
    fn add(&mut self, other: &Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += libm::log(self.matches[n] as f64 / self.totals[n] as f64);
            orders += 1;
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let brevity = if c > r { 1.0 } else { libm::exp(1.0 - r / c) };
        brevity * libm::exp(log_sum / orders as f64)
    }
}

fn bleu_stats(hyp: &[String], refs: &[Vec<String>]) -> BleuStats {
    let mut s = BleuStats { hyp_len: hyp.len() as u64, ..Default::default() };
    // Closest reference length, shorter on ties.
    s.ref_len = refs
        .iter()
        .map(|r| r.len() as u64)
        .min_by_key(|&len| (len.abs_diff(s.hyp_len), len))
        .unwrap_or(0);
    for n in 1..=MAX_ORDER {
        let hyp_counts = ngrams(hyp, n);
        let mut max_ref: Counts<'_> = BTreeMap::new();
        for r in refs {
            for (g, c) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        s.totals[n - 1] = hyp_counts.values().map(|&c| c as u64).sum();
        s.matches[n - 1] = hyp_counts.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)) as u64).sum();
    }
    s
}

/// Corpus-level BLEU@4: clipped n-gram counts and lengths pooled over all
/// items before the geometric mean and brevity penalty.
pub fn bleu4<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> Result<f64> {
    check_lengths(candidates.len(), references.len())?;
    let (hyps, refs) = tokenize_all(candidates, references);
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(&refs) {
        total.add(&bleu_stats(h, r));
    }
    Ok(total.score())
}

/// BLEU@4 of a single sentence.
pub fn sentence_bleu<R: AsRef<str>>(candidate: &str, references: &[R]) -> f64 {
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r.as_ref())).collect();
    bleu_stats(&metric_tokens(candidate), &refs).score()
}

/// Mean BLEU@4 of each sentence against all the others.
pub fn self_bleu<S: AsRef<str>>(sentences: &[S]) -> Result<f64> {
    if sentences.len() < 2 {
        return Err(Error::TooFewSentences(sentences.len()));
    }
    let tokens: Vec<Vec<String>> = sentences.iter().map(|s| metric_tokens(s.as_ref())).collect();
    let scores: Vec<f64> = (0..tokens.len())
        .map(|i| {
            let others: Vec<Vec<String>> = tokens.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t.clone()).collect();
            bleu_stats(&tokens[i], &others).score()
        })
        .collect();
    Ok(mean(&scores))
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l_item(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let (mut p_max, mut r_max) = (0.0f64, 0.0f64);
    for r in refs.iter().filter(|r| !r.is_empty()) {
        let l = lcs_len(hyp, r) as f64;
        p_max = p_max.max(l / hyp.len() as f64);
        r_max = r_max.max(l / r.len() as f64);
    }
    if p_max == 0.0 || r_max == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p_max * r_max / (r_max + b2 * p_max)
}

/// Mean over items of the LCS F-measure, taking the best precision and the
/// best recall over each item's references.
pub fn rouge_l<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> Result<f64> {
    Ok(mean(&rouge_l_items(candidates, references)?))
}

fn rouge_l_items<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> Result<Vec<f64>> {
    check_lengths(candidates.len(), references.len())?;
    let (hyps, refs) = tokenize_all(candidates, references);
    Ok(hyps.iter().zip(&refs).map(|(h, r)| rouge_l_item(h, r)).collect())
}

/// Per-order n-gram weights `count · idf`.
fn tfidf<'a>(counts: &Counts<'a>, idf: &BTreeMap<&'a [String], f64>, log_n: f64) -> BTreeMap<&'a [String], f64> {
    counts.iter().map(|(&g, &c)| (g, c as f64 * idf.get(g).copied().unwrap_or(log_n))).collect()
}

/// `dot / sqrt(|a|² |b|²)`; identical vectors give exactly 1.
fn sparse_cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum();
    let nb: f64 = b.values().map(|v| v * v).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, v)| b.get(g).map(|w| v * w)).sum();
    dot / libm::sqrt(na * nb)
}

fn cider_items<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> Result<Vec<f64>> {
    check_lengths(candidates.len(), references.len())?;
    let (hyps, refs) = tokenize_all(candidates, references);
    let log_n = libm::log(hyps.len() as f64);
    let mut per_item = alloc::vec![0.0f64; hyps.len()];
    for n in 1..=MAX_ORDER {
        let ref_counts: Vec<Vec<Counts<'_>>> = refs.iter().map(|rs| rs.iter().map(|r| ngrams(r, n)).collect()).collect();
        // Document frequency: number of items whose references contain g.
        let mut df: BTreeMap<&[String], u32> = BTreeMap::new();
        for item in &ref_counts {
            let mut seen: BTreeMap<&[String], ()> = BTreeMap::new();
            for counts in item {
                seen.extend(counts.keys().map(|&g| (g, ())));
            }
            for g in seen.into_keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let idf: BTreeMap<&[String], f64> = df.into_iter().map(|(g, d)| (g, log_n - libm::log(d.max(1) as f64))).collect();
        for (i, h) in hyps.iter().enumerate() {
            if ref_counts[i].is_empty() {
                continue;
            }
            let hv = tfidf(&ngrams(h, n), &idf, log_n);
            let sims: Vec<f64> = ref_counts[i].iter().map(|rc| sparse_cosine(&hv, &tfidf(rc, &idf, log_n))).collect();
            per_item[i] += sims.iter().sum::<f64>() / sims.len() as f64;
        }
    }
    Ok(per_item.into_iter().map(|s| s / MAX_ORDER as f64 * CIDER_SCALE).collect())
}

/// CIDEr with document frequencies taken from this run's references,
/// natural-log idf, no length penalty, scaled by 10. A single-item corpus
/// has zero idf everywhere and scores 0.
pub fn cider<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[Vec<R>]) -> Result<f64> {
    Ok(mean(&cider_items(candidates, references)?))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ItemScores {
    pub id: String,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    /// Reserved; always absent.
    pub meteor: Option<f64>,
    /// Diversity of the candidates; absent for fewer than two items.
    pub self_bleu: Option<f64>,
    pub items: Vec<ItemScores>,
}

/// Full report over aligned `ids`, candidates and references.
pub fn evaluate<I: AsRef<str>, C: AsRef<str>, R: AsRef<str>>(ids: &[I], candidates: &[C], references: &[Vec<R>]) -> Result<EvalReport> {
    check_lengths(candidates.len(), references.len())?;
    check_lengths(ids.len(), candidates.len())?;
    let rouge = rouge_l_items(candidates, references)?;
    let cider = cider_items(candidates, references)?;
    let items = ids
        .iter()
        .enumerate()
        .map(|(i, id)| ItemScores {
            id: id.as_ref().into(),
            bleu4: sentence_bleu(candidates[i].as_ref(), &references[i]),
            rouge_l: rouge[i],
            cider: cider[i],
        })
        .collect();
    Ok(EvalReport {
        bleu4: bleu4(candidates, references)?,
        rouge_l: mean(&rouge),
        cider: mean(&cider),
        meteor: None,
        self_bleu: if candidates.len() >= 2 { Some(self_bleu(candidates)?) } else { None },
        items,
    })
}
