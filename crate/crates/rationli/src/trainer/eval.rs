//! Held-out evaluation: teacher-forced loss, decoded label accuracy, and
//! rationale BLEU.
//!
//! The loss aggregates region sums over the whole split before dividing, so
//! the result is independent of evaluation batch size. The behavioural
//! metrics run greedy decoding: the first generated token is the predicted
//! label, and everything after the first separator (minus `<eos>`) is the
//! rationale candidate. Malformed decodes score zero; they are never errors.

use serde::{Deserialize, Serialize};

use crate::seq2seq::{forward, greedy_decode_batch, DecodeFormat, Mode, ModelError, Parameters, Scalar};
use crate::textkit::bleu::bleu_corpus;
use crate::textkit::vocab::{EOS, PAD, SEP};

use super::data::{make_batches, PreparedDataset};
use super::loss::{split_loss, LossError, LossWeights};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("nothing to evaluate")]
    Empty,
}

/// One evaluation event in a training run's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: String,
    pub step: u64,
    pub eval_loss: f64,
    pub label_accuracy: f64,
    /// Absent for label-only datasets.
    pub rationale_bleu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub eval_loss: f64,
    pub label_accuracy: f64,
    pub rationale_bleu: Option<f64>,
}

pub fn evaluate<F: Scalar>(
    params: &Parameters<F>,
    ds: &PreparedDataset,
    weights: LossWeights,
    batch_size: usize,
) -> Result<EvalMetrics, EvalError> {
    if ds.examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let order: Vec<usize> = (0..ds.examples.len()).collect();
    let batches = make_batches(ds, &order, batch_size);

    let mut label_sum = 0f64;
    let mut label_tokens = 0usize;
    let mut rationale_sum = 0f64;
    let mut rationale_tokens = 0usize;
    for batch in &batches {
        let (logits, _) = forward(params, &batch.src, &batch.tgt, Mode::Eval)?;
        let part = split_loss(&logits, &batch.tgt, &batch.spans, weights)?;
        label_sum += part.label_ce * part.label_tokens as f64;
        label_tokens += part.label_tokens;
        rationale_sum += part.rationale_ce * part.rationale_tokens as f64;
        rationale_tokens += part.rationale_tokens;
    }
    let (w_label, w_rationale) = weights.pair();
    let label_ce = label_sum / label_tokens as f64;
    let rationale_ce = if rationale_tokens > 0 {
        rationale_sum / rationale_tokens as f64
    } else {
        0.0
    };
    let eval_loss = w_label * label_ce + w_rationale * rationale_ce;

    let max_tgt = ds
        .examples
        .iter()
        .map(|ex| ex.tgt.len())
        .max()
        .expect("non-empty");
    let max_new = max_tgt + 2;
    // Rationale targets never train the separator (no loss region covers
    // it), so decoding pins it instead of hoping the argmax lands there.
    let format = if ds.has_rationales {
        DecodeFormat::LabelSepRationale
    } else {
        DecodeFormat::Free
    };
    let mut correct = 0usize;
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    for batch in &batches {
        let decoded = greedy_decode_batch(params, &batch.src, max_new, format)?;
        for (row, dec) in decoded.iter().enumerate() {
            let gold_label = batch.tgt[[row, 0]];
            if dec.first() == Some(&gold_label) {
                correct += 1;
            }
            if let Some((rs, re)) = batch.spans[row].rationale {
                let reference: Vec<u32> = (rs..re)
                    .map(|t| batch.tgt[[row, t]])
                    .filter(|&id| id != EOS && id != PAD)
                    .collect();
                references.push(reference);
                candidates.push(rationale_candidate(dec));
            }
        }
    }
    let label_accuracy = correct as f64 / ds.examples.len() as f64;
    let rationale_bleu = if ds.has_rationales {
        Some(bleu_corpus(&candidates, &references).bleu)
    } else {
        None
    };
    Ok(EvalMetrics {
        eval_loss,
        label_accuracy,
        rationale_bleu,
    })
}

/// Tokens after the first separator, with `<eos>` and `<pad>` dropped.
pub(crate) fn rationale_candidate(decoded: &[u32]) -> Vec<u32> {
    match decoded.iter().position(|&id| id == SEP) {
        Some(pos) => decoded[pos + 1..]
            .iter()
            .copied()
            .filter(|&id| id != EOS && id != PAD)
            .collect(),
        None => Vec::new(),
    }
}
