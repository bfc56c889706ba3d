//! Train grid cells on disk-resident datasets and persist per-cell results.
//!
//! Each cell owns a run directory under the runs root: checkpoints, the
//! eval log, the vocabulary, and a final `result.json`. The grid resumes by
//! skipping cells whose `result.json` already exists, so an interrupted
//! sweep continues where it stopped.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use crate::bench::config::BenchConfig;
use crate::bench::grid::{DatasetKind, GridCell};
use crate::corpus::{load_augmented, load_examples, CorpusError};
use crate::seq2seq::{load_checkpoint, CheckpointError};
use crate::textkit::{VocabError, Vocabulary};
use crate::trainer::{
    build_vocab_augmented, build_vocab_plain, evaluate, prepare_augmented, prepare_plain, train,
    DataError, EvalError, EvalRecord, PreparedDataset, RunContext, SplitRatio, TrainConfig,
    TrainError,
};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("runner io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("bad dataset for cell: {0}")]
    BadData(String),
    #[error("bad result file {path}: {message}")]
    BadResult { path: PathBuf, message: String },
    #[error("worker for cell {cell} exited with {status}")]
    Worker { cell: String, status: String },
}

/// Outcome of one grid cell, as persisted in `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub cell_id: String,
    pub dataset: DatasetKind,
    pub split_ratio: Option<SplitRatio>,
    pub learning_rate: f64,
    /// Test accuracy of the lowest-eval-loss checkpoint; absent if failed.
    pub acc_by_loss: Option<f64>,
    /// Test accuracy of the highest-eval-accuracy checkpoint.
    pub acc_by_accuracy: Option<f64>,
    pub records: Vec<EvalRecord>,
    pub wall_secs: f64,
    pub failed: bool,
    pub error: Option<String>,
}

impl RunResult {
    /// The better of the two checkpoint accuracies.
    pub fn best_accuracy(&self) -> Option<f64> {
        match (self.acc_by_loss, self.acc_by_accuracy) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    fn validate(&self) -> Result<(), String> {
        for acc in [self.acc_by_loss, self.acc_by_accuracy].into_iter().flatten() {
            if !(0.0..=1.0).contains(&acc) {
                return Err(format!("accuracy {acc} outside [0, 1]"));
            }
        }
        if !self.failed && self.acc_by_loss.is_none() {
            return Err("successful cell without test accuracies".to_string());
        }
        Ok(())
    }
}

/// Prepared splits and the vocabulary they were encoded with.
pub struct CellData {
    pub train: PreparedDataset,
    pub eval: PreparedDataset,
    pub test: PreparedDataset,
    pub vocab: Vocabulary,
}

/// Load and encode the three splits a dataset kind trains on. The
/// vocabulary is built from the training split only.
pub fn load_cell_data(
    kind: DatasetKind,
    data_dir: &Path,
    max_len: usize,
) -> Result<CellData, RunnerError> {
    let path = |split: &str| data_dir.join(format!("{}.{split}.jsonl", kind.as_str()));
    match kind {
        DatasetKind::Baseline => {
            let train = load_examples(path("train"))?;
            let eval = load_examples(path("eval"))?;
            let test = load_examples(path("test"))?;
            let vocab = build_vocab_plain(&train, 1);
            Ok(CellData {
                train: prepare_plain(&train, &vocab, max_len)?,
                eval: prepare_plain(&eval, &vocab, max_len)?,
                test: prepare_plain(&test, &vocab, max_len)?,
                vocab,
            })
        }
        DatasetKind::FiveW | DatasetKind::FreeText => {
            let train = load_augmented(path("train"))?;
            let eval = load_augmented(path("eval"))?;
            let test = load_augmented(path("test"))?;
            let expected = match kind {
                DatasetKind::FiveW => crate::corpus::RationaleKind::FiveW,
                _ => crate::corpus::RationaleKind::FreeText,
            };
            for ex in train.iter().chain(&eval).chain(&test) {
                if ex.rationale_kind != expected {
                    return Err(RunnerError::BadData(format!(
                        "example {} carries a {:?} rationale in a {} dataset",
                        ex.uid, ex.rationale_kind, kind
                    )));
                }
            }
            let vocab = build_vocab_augmented(&train, 1);
            Ok(CellData {
                train: prepare_augmented(&train, &vocab, max_len)?,
                eval: prepare_augmented(&eval, &vocab, max_len)?,
                test: prepare_augmented(&test, &vocab, max_len)?,
                vocab,
            })
        }
    }
}

/// Train one cell and persist its result. A run aborted by non-finite loss
/// produces a failed result rather than an error; anything else (missing
/// data, io) propagates.
pub fn train_cell(
    cell: &GridCell,
    data_dir: &Path,
    runs_dir: &Path,
    cfg: &BenchConfig,
) -> Result<RunResult, RunnerError> {
    let start = Instant::now();
    let run_dir = runs_dir.join(&cell.id);
    fs::create_dir_all(&run_dir).map_err(|source| RunnerError::Io {
        path: run_dir.clone(),
        source,
    })?;

    let data = load_cell_data(cell.dataset, data_dir, cfg.model.max_len())?;
    data.vocab.save(run_dir.join("vocab.json"))?;
    let model = cfg.model.build(data.vocab.size());

    let train_cfg = TrainConfig {
        learning_rate: cell.learning_rate,
        epochs: cfg.trainer.epochs,
        batch_size: cfg.trainer.batch_size,
        evals_per_epoch: cfg.trainer.evals_per_epoch,
        seed: cfg.trainer.seed,
        weights: cell.weights(),
    };
    let ctx = RunContext {
        run_id: cell.id.clone(),
        run_dir: run_dir.clone(),
        keep_all_checkpoints: false,
    };

    let mut result = RunResult {
        cell_id: cell.id.clone(),
        dataset: cell.dataset,
        split_ratio: cell.split_ratio,
        learning_rate: cell.learning_rate,
        acc_by_loss: None,
        acc_by_accuracy: None,
        records: Vec::new(),
        wall_secs: 0.0,
        failed: false,
        error: None,
    };
    match train::<f32>(&model, &data.train, &data.eval, &train_cfg, &ctx) {
        Ok(outcome) => {
            let test_accuracy = |path: &Path| -> Result<f64, RunnerError> {
                let (params, _) = load_checkpoint::<f32>(path)?;
                let metrics = evaluate(&params, &data.test, train_cfg.weights, train_cfg.batch_size)?;
                Ok(metrics.label_accuracy)
            };
            result.acc_by_loss = Some(test_accuracy(&outcome.best_loss.path)?);
            result.acc_by_accuracy = Some(test_accuracy(&outcome.best_accuracy.path)?);
            result.records = outcome.records;
        }
        Err(err @ TrainError::NonFiniteLoss { .. }) => {
            result.failed = true;
            result.error = Some(err.to_string());
        }
        Err(other) => return Err(other.into()),
    }
    result.wall_secs = start.elapsed().as_secs_f64();

    write_result(&run_dir, &result)?;
    Ok(result)
}

fn result_path(run_dir: &Path) -> PathBuf {
    run_dir.join("result.json")
}

fn write_result(run_dir: &Path, result: &RunResult) -> Result<(), RunnerError> {
    let path = result_path(run_dir);
    let tmp = run_dir.join("result.json.tmp");
    let io_err = |path: &Path, source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = serde_json::to_vec_pretty(result).expect("result serializes");
    bytes.push(b'\n');
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Read a cell's persisted result; `None` when the cell has not run yet.
pub fn load_result(run_dir: &Path) -> Result<Option<RunResult>, RunnerError> {
    let path = result_path(run_dir);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(RunnerError::Io { path, source }),
    };
    let result: RunResult = serde_json::from_str(&text).map_err(|e| RunnerError::BadResult {
        path: path.clone(),
        message: e.to_string(),
    })?;
    result.validate().map_err(|message| RunnerError::BadResult {
        path: path.clone(),
        message,
    })?;
    Ok(Some(result))
}

#[derive(Debug)]
pub struct GridOutcome {
    pub results: Vec<RunResult>,
    /// Cells trained in this invocation.
    pub trained: usize,
    /// Cells served from existing results.
    pub skipped: usize,
}

/// Run every cell in order, resuming from persisted results unless forced.
pub fn run_grid(
    cells: &[GridCell],
    data_dir: &Path,
    runs_dir: &Path,
    cfg: &BenchConfig,
    force: bool,
) -> Result<GridOutcome, RunnerError> {
    run_grid_with(cells, data_dir, runs_dir, cfg, force, |_, _, _| {})
}

/// `run_grid` with a per-cell observer; `trained` is false for cells served
/// from a persisted result.
pub fn run_grid_with(
    cells: &[GridCell],
    data_dir: &Path,
    runs_dir: &Path,
    cfg: &BenchConfig,
    force: bool,
    mut on_cell: impl FnMut(&GridCell, &RunResult, bool),
) -> Result<GridOutcome, RunnerError> {
    let mut outcome = GridOutcome {
        results: Vec::with_capacity(cells.len()),
        trained: 0,
        skipped: 0,
    };
    for cell in cells {
        let run_dir = runs_dir.join(&cell.id);
        let existing = if force { None } else { load_result(&run_dir)? };
        let (result, trained) = match existing {
            Some(result) => {
                check_result_matches(cell, &result, &run_dir)?;
                outcome.skipped += 1;
                (result, false)
            }
            None => {
                outcome.trained += 1;
                (train_cell(cell, data_dir, runs_dir, cfg)?, true)
            }
        };
        on_cell(cell, &result, trained);
        outcome.results.push(result);
    }
    Ok(outcome)
}

fn check_result_matches(
    cell: &GridCell,
    result: &RunResult,
    run_dir: &Path,
) -> Result<(), RunnerError> {
    if result.cell_id != cell.id || result.dataset != cell.dataset {
        return Err(RunnerError::BadResult {
            path: result_path(run_dir),
            message: format!(
                "stored result is for cell {} on {}, expected {} on {}",
                result.cell_id, result.dataset, cell.id, cell.dataset
            ),
        });
    }
    Ok(())
}

/// Like `run_grid`, but pending cells train in child processes, `parallel`
/// at a time. `exe` must be this crate's binary; each child is invoked as
/// `train --cell <id>` and persists its own result.
pub fn run_grid_processes(
    exe: &Path,
    cells: &[GridCell],
    data_dir: &Path,
    runs_dir: &Path,
    config_path: Option<&Path>,
    parallel: usize,
    force: bool,
) -> Result<GridOutcome, RunnerError> {
    let parallel = parallel.max(1);
    let mut pending: Vec<&GridCell> = Vec::new();
    for cell in cells {
        if force || load_result(&runs_dir.join(&cell.id))?.is_none() {
            pending.push(cell);
        }
    }

    for wave in pending.chunks(parallel) {
        let mut children = Vec::with_capacity(wave.len());
        for cell in wave {
            let mut cmd = Command::new(exe);
            cmd.arg("train")
                .arg("--cell")
                .arg(&cell.id)
                .arg("--data")
                .arg(data_dir)
                .arg("--runs")
                .arg(runs_dir)
                .arg("--force");
            if let Some(path) = config_path {
                cmd.arg("--config").arg(path);
            }
            let child = cmd.spawn().map_err(|source| RunnerError::Io {
                path: exe.to_path_buf(),
                source,
            })?;
            children.push((cell.id.clone(), child));
        }
        for (cell_id, mut child) in children {
            let status = child.wait().map_err(|source| RunnerError::Io {
                path: exe.to_path_buf(),
                source,
            })?;
            if !status.success() {
                return Err(RunnerError::Worker {
                    cell: cell_id,
                    status: status.to_string(),
                });
            }
        }
    }

    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let run_dir = runs_dir.join(&cell.id);
        let result = load_result(&run_dir)?.ok_or_else(|| RunnerError::BadResult {
            path: result_path(&run_dir),
            message: "worker finished without writing a result".to_string(),
        })?;
        check_result_matches(cell, &result, &run_dir)?;
        results.push(result);
    }
    Ok(GridOutcome {
        results,
        trained: pending.len(),
        skipped: cells.len() - pending.len(),
    })
}
