//! End-to-end gradient verification.
//!
//! Analytic gradients (split loss through the full model) are compared with
//! central finite differences at randomly probed parameters. Runs in f64
//! with dropout off; anything else makes the comparison meaningless.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seq2seq::{backward, forward, init_params, Mode, ModelConfig, ModelError, Parameters};
use crate::textkit::vocab::{EOS, PAD, RESERVED, SEP};

use super::loss::{split_loss, split_loss_grad, LossError, LossWeights, RegionSpans};

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("invalid gradient check config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Must have `dropout == 0`.
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub batch: usize,
    pub src_len: usize,
    pub rationale_len: usize,
    pub probes: usize,
    /// Central-difference step.
    pub epsilon: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    /// A small geometry that keeps the finite-difference passes cheap.
    pub fn small(weights: LossWeights) -> GradCheckConfig {
        GradCheckConfig {
            model: ModelConfig {
                vocab_size: 23,
                d_model: 16,
                n_layers: 2,
                n_heads: 2,
                d_ff: 24,
                max_len: 16,
                dropout: 0.0,
            },
            weights,
            batch: 3,
            src_len: 6,
            rationale_len: 4,
            probes: 12,
            epsilon: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

/// Compare analytic and numeric gradients at `probes` random parameters;
/// reports relative errors (both-near-zero counts as zero error).
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport, GradCheckError> {
    if cfg.model.dropout != 0.0 {
        return Err(GradCheckError::Config(
            "dropout must be zero for finite differences".to_string(),
        ));
    }
    if cfg.probes == 0 || cfg.batch == 0 || cfg.src_len == 0 {
        return Err(GradCheckError::Config(
            "probes, batch, and src_len must be positive".to_string(),
        ));
    }
    let vocab = cfg.model.vocab_size;
    if vocab <= RESERVED {
        return Err(GradCheckError::Config(format!(
            "vocab {vocab} leaves no content tokens past the reserved band"
        )));
    }
    let params = init_params::<f64>(&cfg.model, cfg.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(40));
    let mut src = Array2::from_shape_simple_fn((cfg.batch, cfg.src_len), || {
        rng.gen_range(RESERVED as u32..vocab as u32)
    });
    if cfg.batch > 1 && cfg.src_len > 1 {
        // One padded row exercises the key masks.
        src[[0, cfg.src_len - 1]] = PAD;
    }
    let (tgt, spans) = synthetic_targets(cfg, &mut rng);

    let loss_of = |p: &Parameters<f64>| -> f64 {
        let (logits, _) = forward(p, &src, &tgt, Mode::Eval).expect("same shapes as checked pass");
        split_loss(&logits, &tgt, &spans, cfg.weights)
            .expect("same spans as checked pass")
            .total
    };

    let (logits, trace) = forward(&params, &src, &tgt, Mode::Eval)?;
    let (_, dlogits) = split_loss_grad(&logits, &tgt, &spans, cfg.weights)?;
    let analytic = backward(&params, &trace, &dlogits).to_flat();

    let count = params.param_count();
    let mut max_rel = 0f64;
    let mut sum_rel = 0f64;
    for _ in 0..cfg.probes {
        let idx = rng.gen_range(0..count);
        let mut hi = params.clone();
        hi.nudge_flat(idx, cfg.epsilon);
        let mut lo = params.clone();
        lo.nudge_flat(idx, -cfg.epsilon);
        let numeric = (loss_of(&hi) - loss_of(&lo)) / (2.0 * cfg.epsilon);
        let a = analytic[idx];
        let rel = if a.abs() < 1e-12 && numeric.abs() < 1e-12 {
            0.0
        } else {
            (a - numeric).abs() / a.abs().max(numeric.abs())
        };
        max_rel = max_rel.max(rel);
        sum_rel += rel;
    }
    Ok(GradCheckReport {
        probes: cfg.probes,
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / cfg.probes as f64,
    })
}

fn synthetic_targets(
    cfg: &GradCheckConfig,
    rng: &mut ChaCha8Rng,
) -> (Array2<u32>, Vec<RegionSpans>) {
    let vocab = cfg.model.vocab_size as u32;
    match cfg.weights {
        LossWeights::Split(_) => {
            let t_len = 3 + cfg.rationale_len.max(1);
            let mut tgt = Array2::zeros((cfg.batch, t_len));
            for bi in 0..cfg.batch {
                tgt[[bi, 0]] = 5 + (bi as u32 % 3);
                tgt[[bi, 1]] = SEP;
                for t in 2..t_len - 1 {
                    tgt[[bi, t]] = rng.gen_range(RESERVED as u32..vocab);
                }
                tgt[[bi, t_len - 1]] = EOS;
            }
            let spans = vec![
                RegionSpans {
                    label: (0, 1),
                    rationale: Some((2, t_len)),
                };
                cfg.batch
            ];
            (tgt, spans)
        }
        LossWeights::Plain => {
            let mut tgt = Array2::zeros((cfg.batch, 2));
            for bi in 0..cfg.batch {
                tgt[[bi, 0]] = 5 + (bi as u32 % 3);
                tgt[[bi, 1]] = EOS;
            }
            let spans = vec![
                RegionSpans {
                    label: (0, 2),
                    rationale: None,
                };
                cfg.batch
            ];
            (tgt, spans)
        }
    }
}
