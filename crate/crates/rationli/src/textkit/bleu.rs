//! Corpus BLEU with up-to-4-gram modified precision and the standard brevity
//! penalty. The corpus variant is unsmoothed: a zero precision at any order
//! zeroes the score. A smoothed sentence variant exists for inspecting single
//! generations without the all-or-nothing collapse.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    pub bleu: f64,
    /// Modified n-gram precisions for n = 1..=4.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over aligned candidate/reference pairs. Clipped n-gram matches
/// and n-gram totals are accumulated over the whole corpus before dividing,
/// so short sentences cannot dominate. Panics if the slices differ in length.
pub fn bleu_corpus<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> BleuReport {
    assert_eq!(
        candidates.len(),
        references.len(),
        "each candidate needs exactly one reference"
    );
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }

    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if total[n] > 0 {
            precisions[n] = matched[n] as f64 / total[n] as f64;
        }
    }
    let brevity_penalty = if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    let bleu = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        brevity_penalty * log_mean.exp()
    };
    BleuReport {
        bleu,
        precisions,
        brevity_penalty,
    }
}

/// Single-pair BLEU with add-one smoothing on orders above 1, so one missing
/// 4-gram does not zero the whole score. Unigram precision stays unsmoothed:
/// no overlapping word still means zero.
pub fn bleu_sentence<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let ref_counts = ngram_counts(reference, n);
        let cand_counts = ngram_counts(candidate, n);
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(*gram).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len().saturating_sub(n - 1);
        let p = if n == 1 {
            if total == 0 || matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let brevity_penalty = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    brevity_penalty * (log_sum / MAX_ORDER as f64).exp()
}
