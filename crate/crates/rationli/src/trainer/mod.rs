//! Fine-tuning: the split objective, Adam, the training loop with periodic
//! evaluation, dual-criterion checkpoint selection, and gradient checking.
//!
//! A run writes everything under its run directory: `log.jsonl` with one
//! evaluation record per line, and `checkpoints/` with one file per
//! evaluation point. After training, only the two selected checkpoints
//! (lowest eval loss, highest label accuracy) survive unless the run asks to
//! keep them all.

mod adam;
mod data;
mod eval;
mod gradcheck;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use data::{
    build_vocab_augmented, build_vocab_plain, make_batches, prepare_augmented, prepare_plain,
    Batch, DataError, PreparedDataset, PreparedExample,
};
pub use eval::{evaluate, EvalError, EvalMetrics, EvalRecord};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckError, GradCheckReport};
pub use loss::{
    split_loss, split_loss_grad, LossBreakdown, LossError, LossWeights, RegionSpans, SplitRatio,
};

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::seq2seq::checkpoint::{checkpoint_path, list_checkpoints, save_checkpoint};
use crate::seq2seq::{
    backward, forward, init_params, CheckpointError, Mode, ModelConfig, ModelError, Parameters,
    Scalar,
};

pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_EVALS_PER_EPOCH: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite training loss at step {step}; lower the learning rate")]
    NonFiniteLoss { step: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub evals_per_epoch: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, weights: LossWeights, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            evals_per_epoch: DEFAULT_EVALS_PER_EPOCH,
            seed,
            weights,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.evals_per_epoch == 0 {
            return Err(TrainError::Config(
                "epochs, batch_size, and evals_per_epoch must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Where a run writes and how it is identified in records.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub keep_all_checkpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointRef {
    pub step: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EvalRecord>,
    /// Earliest step with the lowest evaluation loss.
    pub best_loss: CheckpointRef,
    /// Earliest step with the highest label accuracy.
    pub best_accuracy: CheckpointRef,
}

/// Step numbers that trigger an evaluation: `evals_per_epoch` evenly spaced
/// points per epoch, by ceiling, so the last lands on the epoch boundary.
pub fn eval_steps(steps_per_epoch: usize, epochs: usize, evals_per_epoch: usize) -> Vec<u64> {
    let mut steps = Vec::new();
    for epoch in 0..epochs {
        for j in 1..=evals_per_epoch {
            let within = (steps_per_epoch * j).div_ceil(evals_per_epoch);
            steps.push((epoch * steps_per_epoch + within) as u64);
        }
    }
    steps
}

/// Earliest step with minimal eval loss and earliest with maximal accuracy.
pub fn select_checkpoints(records: &[EvalRecord]) -> Option<(u64, u64)> {
    let mut best_loss: Option<&EvalRecord> = None;
    let mut best_acc: Option<&EvalRecord> = None;
    for record in records {
        if best_loss.is_none_or(|b| record.eval_loss < b.eval_loss) {
            best_loss = Some(record);
        }
        if best_acc.is_none_or(|b| record.label_accuracy > b.label_accuracy) {
            best_acc = Some(record);
        }
    }
    Some((best_loss?.step, best_acc?.step))
}

/// Train a fresh model on `train_ds`, evaluating on `eval_ds` along the way.
///
/// Evaluations happen at the scheduled steps and once more after the final
/// step regardless of the schedule, so the last entry always reflects the
/// finished model. Every evaluation writes a log line and a checkpoint.
pub fn train<F: Scalar>(
    model: &ModelConfig,
    train_ds: &PreparedDataset,
    eval_ds: &PreparedDataset,
    cfg: &TrainConfig,
    ctx: &RunContext,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model.validate()?;
    if train_ds.examples.is_empty() || eval_ds.examples.is_empty() {
        return Err(TrainError::Config("datasets must be non-empty".to_string()));
    }

    fs::create_dir_all(&ctx.run_dir).map_err(|source| TrainError::Io {
        path: ctx.run_dir.clone(),
        source,
    })?;
    let ckpt_dir = ctx.run_dir.join("checkpoints");
    let log_path = ctx.run_dir.join("log.jsonl");
    let mut log = File::create(&log_path).map_err(|source| TrainError::Io {
        path: log_path.clone(),
        source,
    })?;

    let mut params = init_params::<F>(model, cfg.seed)?;
    let mut optimizer = Adam::new(AdamConfig::with_lr(cfg.learning_rate), params.param_count());
    // Independent streams so changing the batch order never changes which
    // dropout masks a given step draws, and vice versa.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let n = train_ds.examples.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let schedule = eval_steps(steps_per_epoch, cfg.epochs, cfg.evals_per_epoch);
    let mut next_eval = 0usize;
    let mut records = Vec::new();
    let mut step = 0u64;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        for batch in make_batches(train_ds, &order, cfg.batch_size) {
            step += 1;
            let (logits, trace) =
                forward(&params, &batch.src, &batch.tgt, Mode::Train(&mut dropout_rng))?;
            let (breakdown, dlogits) =
                split_loss_grad(&logits, &batch.tgt, &batch.spans, cfg.weights)?;
            if !breakdown.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            let grads = backward(&params, &trace, &dlogits);
            optimizer.step(&mut params, &grads);

            while next_eval < schedule.len() && schedule[next_eval] == step {
                next_eval += 1;
                push_eval(
                    &params, eval_ds, cfg, ctx, step, &ckpt_dir, &log_path, &mut log,
                    &mut records,
                )?;
            }
        }
    }
    // The always-present final record; a duplicate step is intentional when
    // the schedule also lands here.
    push_eval(
        &params, eval_ds, cfg, ctx, step, &ckpt_dir, &log_path, &mut log, &mut records,
    )?;

    let (loss_step, acc_step) = select_checkpoints(&records).expect("at least the final record");
    let best_loss = CheckpointRef {
        step: loss_step,
        path: checkpoint_path(&ckpt_dir, loss_step),
    };
    let best_accuracy = CheckpointRef {
        step: acc_step,
        path: checkpoint_path(&ckpt_dir, acc_step),
    };
    if !ctx.keep_all_checkpoints {
        for (ckpt_step, path) in list_checkpoints(&ckpt_dir)? {
            if ckpt_step != loss_step && ckpt_step != acc_step {
                fs::remove_file(&path).map_err(|source| TrainError::Io { path, source })?;
            }
        }
    }
    Ok(TrainOutcome {
        records,
        best_loss,
        best_accuracy,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_eval<F: Scalar>(
    params: &Parameters<F>,
    eval_ds: &PreparedDataset,
    cfg: &TrainConfig,
    ctx: &RunContext,
    step: u64,
    ckpt_dir: &Path,
    log_path: &Path,
    log: &mut File,
    records: &mut Vec<EvalRecord>,
) -> Result<(), TrainError> {
    let metrics = evaluate(params, eval_ds, cfg.weights, cfg.batch_size)?;
    let record = EvalRecord {
        run_id: ctx.run_id.clone(),
        step,
        eval_loss: metrics.eval_loss,
        label_accuracy: metrics.label_accuracy,
        rationale_bleu: metrics.rationale_bleu,
    };
    let line = serde_json::to_string(&record).expect("record serializes");
    writeln!(log, "{line}").map_err(|source| TrainError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    save_checkpoint(ckpt_dir, params, step)?;
    records.push(record);
    Ok(())
}
