//! The split training objective.
//!
//! An augmented target has three zones: the label word at position 0, the
//! literal separator at position 1, and the rationale from position 2 through
//! `<eos>`. Cross entropy is averaged per region at token level across the
//! whole batch, and the two region means are blended with weights that must
//! sum to one exactly. The separator and padding belong to neither region
//! and receive no gradient. Plain targets (no rationale) use a single region
//! covering every real token.

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::seq2seq::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error(
        "region weights label={label} rationale={rationale} must be nonnegative and sum to exactly 1"
    )]
    BadRatio { label: f64, rationale: f64 },
    #[error("example {index}: {region} region is empty")]
    EmptyRegion { index: usize, region: &'static str },
    #[error("example {index}: split weights given but target has no rationale span")]
    MissingRationale { index: usize },
    #[error("example {index}: span {start}..{end} exceeds sequence length {len}")]
    SpanOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("example {index} position {position}: target id {id} out of range for vocab {vocab}")]
    TargetOutOfRange {
        index: usize,
        position: usize,
        id: u32,
        vocab: usize,
    },
}

/// Blend weights for the label and rationale regions. The pair must be
/// nonnegative and sum to 1 exactly in f64 arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSplitRatio", into = "RawSplitRatio")]
pub struct SplitRatio {
    label: f64,
    rationale: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSplitRatio {
    label: f64,
    rationale: f64,
}

impl TryFrom<RawSplitRatio> for SplitRatio {
    type Error = LossError;

    fn try_from(raw: RawSplitRatio) -> Result<SplitRatio, LossError> {
        SplitRatio::new(raw.label, raw.rationale)
    }
}

impl From<SplitRatio> for RawSplitRatio {
    fn from(ratio: SplitRatio) -> RawSplitRatio {
        RawSplitRatio {
            label: ratio.label,
            rationale: ratio.rationale,
        }
    }
}

impl SplitRatio {
    pub fn new(label: f64, rationale: f64) -> Result<SplitRatio, LossError> {
        if !(label >= 0.0) || !(rationale >= 0.0) || label + rationale != 1.0 {
            return Err(LossError::BadRatio { label, rationale });
        }
        Ok(SplitRatio { label, rationale })
    }

    pub fn label(self) -> f64 {
        self.label
    }

    pub fn rationale(self) -> f64 {
        self.rationale
    }
}

/// Objective selector: plain sequence cross entropy over the label span
/// (which covers the whole target for plain datasets), or the split loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossWeights {
    Plain,
    Split(SplitRatio),
}

impl LossWeights {
    pub(crate) fn pair(self) -> (f64, f64) {
        match self {
            LossWeights::Plain => (1.0, 0.0),
            LossWeights::Split(r) => (r.label(), r.rationale()),
        }
    }
}

/// Token spans of one target row; ends are exclusive. `label` is always
/// present, `rationale` only for augmented targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpans {
    pub label: (usize, usize),
    pub rationale: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// The blended objective.
    pub total: f64,
    pub label_ce: f64,
    /// Zero when no rationale region participates.
    pub rationale_ce: f64,
    pub label_tokens: usize,
    pub rationale_tokens: usize,
}

/// Loss only; see [`split_loss_grad`] for the gradient too.
pub fn split_loss<F: Scalar>(
    logits: &Array3<F>,
    targets: &Array2<u32>,
    spans: &[RegionSpans],
    weights: LossWeights,
) -> Result<LossBreakdown, LossError> {
    compute(logits, targets, spans, weights, None)
}

/// Loss plus `dL/dlogits`. Positions outside both regions get zero gradient.
pub fn split_loss_grad<F: Scalar>(
    logits: &Array3<F>,
    targets: &Array2<u32>,
    spans: &[RegionSpans],
    weights: LossWeights,
) -> Result<(LossBreakdown, Array3<F>), LossError> {
    let mut grad = Array3::zeros(logits.raw_dim());
    let breakdown = compute(logits, targets, spans, weights, Some(&mut grad))?;
    Ok((breakdown, grad))
}

fn compute<F: Scalar>(
    logits: &Array3<F>,
    targets: &Array2<u32>,
    spans: &[RegionSpans],
    weights: LossWeights,
    mut grad: Option<&mut Array3<F>>,
) -> Result<LossBreakdown, LossError> {
    let (b, t_len, vocab) = logits.dim();
    assert_eq!((b, t_len), targets.dim(), "logits and targets disagree");
    assert_eq!(b, spans.len(), "one span set per example");
    let split = matches!(weights, LossWeights::Split(_));

    // First pass: validate and count region tokens, so per-token gradient
    // scales are known before any row is processed.
    let mut label_tokens = 0usize;
    let mut rationale_tokens = 0usize;
    for (index, span) in spans.iter().enumerate() {
        let (ls, le) = span.label;
        if le > t_len {
            return Err(LossError::SpanOutOfBounds {
                index,
                start: ls,
                end: le,
                len: t_len,
            });
        }
        if ls >= le {
            return Err(LossError::EmptyRegion {
                index,
                region: "label",
            });
        }
        label_tokens += le - ls;
        if split {
            let Some((rs, re)) = span.rationale else {
                return Err(LossError::MissingRationale { index });
            };
            if re > t_len {
                return Err(LossError::SpanOutOfBounds {
                    index,
                    start: rs,
                    end: re,
                    len: t_len,
                });
            }
            if rs >= re {
                return Err(LossError::EmptyRegion {
                    index,
                    region: "rationale",
                });
            }
            rationale_tokens += re - rs;
        }
    }

    let (w_label, w_rationale) = weights.pair();
    let mut label_sum = 0f64;
    let mut rationale_sum = 0f64;
    for (index, span) in spans.iter().enumerate() {
        let region = |range: (usize, usize),
                          scale: f64,
                          sum: &mut f64,
                          grad: &mut Option<&mut Array3<F>>|
         -> Result<(), LossError> {
            for t in range.0..range.1 {
                let target = targets[[index, t]];
                if target as usize >= vocab {
                    return Err(LossError::TargetOutOfRange {
                        index,
                        position: t,
                        id: target,
                        vocab,
                    });
                }
                let row = logits.slice(s![index, t, ..]);
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.to_f64()));
                let lse = row
                    .iter()
                    .map(|&x| (x.to_f64() - max).exp())
                    .sum::<f64>()
                    .ln();
                *sum += max + lse - row[target as usize].to_f64();
                if let Some(g) = grad.as_deref_mut() {
                    for (j, &x) in row.iter().enumerate() {
                        let p = (x.to_f64() - max - lse).exp();
                        let delta = if j == target as usize { 1.0 } else { 0.0 };
                        g[[index, t, j]] = F::from_f64(scale * (p - delta));
                    }
                }
            }
            Ok(())
        };
        region(
            span.label,
            w_label / label_tokens as f64,
            &mut label_sum,
            &mut grad,
        )?;
        if split {
            let rationale = span.rationale.expect("validated above");
            region(
                rationale,
                w_rationale / rationale_tokens as f64,
                &mut rationale_sum,
                &mut grad,
            )?;
        }
    }

    let label_ce = label_sum / label_tokens as f64;
    let rationale_ce = if rationale_tokens > 0 {
        rationale_sum / rationale_tokens as f64
    } else {
        0.0
    };
    Ok(LossBreakdown {
        total: w_label * label_ce + w_rationale * rationale_ce,
        label_ce,
        rationale_ce,
        label_tokens,
        rationale_tokens,
    })
}
