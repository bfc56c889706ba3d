//! The experiment harness: the 21-cell configuration grid, a synthetic
//! cue-based corpus for offline runs, the resumable grid runner, and
//! report emission (CSVs plus a markdown summary).

pub mod config;
pub mod grid;
pub mod report;
pub mod runner;
pub mod toygen;

pub use config::{load_config, BenchConfig, ConfigError, ModelSection, TeacherSection, TrainerSection};
pub use grid::{canonical_grid, find_cell, DatasetKind, GridCell, LEARNING_RATES, SPLIT_RATIOS};
pub use report::{emit_report, format_accuracy_pct, format_delta_pct, ReportError, ReportFiles};
pub use runner::{
    load_cell_data, load_result, run_grid, run_grid_processes, run_grid_with, train_cell, CellData,
    GridOutcome, RunResult, RunnerError,
};
pub use toygen::{
    augmented_examples, cue_label, make_toy_corpus, plain_examples, write_corpus, LabelTemplates,
    ToyCorpus, ToyCorpusSpec, ToyExample, ToygenError,
};
