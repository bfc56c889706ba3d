//! Command-line front end: corpus augmentation, toy data generation, cell
//! and grid training, and report emission. All logic lives in the library;
//! this file parses flags, merges them over the config file, and prints.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use rationli::bench::{
    canonical_grid, emit_report, find_cell, load_config, load_result, make_toy_corpus,
    run_grid_processes, run_grid_with, train_cell, write_corpus, RunResult, ToyCorpusSpec,
};
use rationli::corpus::{load_examples, save_augmented, RationaleKind};
use rationli::teacher::{augment, PromptCache};

#[derive(Parser)]
#[command(name = "rationli", version, about = "Rationale-augmented NLI distillation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ask the teacher for rationales and write the augmented corpus.
    Augment {
        /// Plain NLI corpus (JSONL) to augment.
        #[arg(long)]
        input: PathBuf,
        /// Where the augmented JSONL goes.
        #[arg(long)]
        output: PathBuf,
        /// Rationale variant to request.
        #[arg(long, value_enum)]
        kind: KindArg,
        /// TOML config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Teacher endpoint: "fixture:<path>" or an http(s) URL.
        #[arg(long)]
        endpoint: Option<String>,
        /// Response cache location.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Concurrent teacher requests.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Generate the synthetic cue-based corpus files.
    Toygen {
        /// Corpus spec (TOML); omit for the standard 300/100/100 corpus.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Directory for the nine dataset files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one grid cell.
    Train {
        /// Cell ID, e.g. B1 or S5.
        #[arg(long)]
        cell: String,
        /// Directory holding the dataset files.
        #[arg(long)]
        data: PathBuf,
        /// Directory run output goes under.
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Retrain even if this cell already has a result.
        #[arg(long)]
        force: bool,
    },
    /// Train all 21 grid cells, resuming completed ones.
    Grid {
        /// Directory holding the dataset files.
        #[arg(long)]
        data: PathBuf,
        /// Directory run output goes under.
        #[arg(long)]
        out: PathBuf,
        /// Train this many cells in parallel worker processes.
        #[arg(long)]
        parallel: Option<usize>,
        /// Retrain cells that already have results.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summarize persisted results into CSVs and a markdown summary.
    Report {
        /// Grid output directory (one subdirectory per cell).
        #[arg(long)]
        runs: PathBuf,
        /// Directory for results.csv, curves/, and summary.md.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// 5-W information extraction from the premise.
    #[value(name = "five_w")]
    FiveW,
    /// Free-text label justification.
    #[value(name = "free_text")]
    FreeText,
}

impl From<KindArg> for RationaleKind {
    fn from(kind: KindArg) -> RationaleKind {
        match kind {
            KindArg::FiveW => RationaleKind::FiveW,
            KindArg::FreeText => RationaleKind::FreeText,
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Cmd::Augment {
            input,
            output,
            kind,
            config,
            endpoint,
            cache,
            workers,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(mode) = endpoint {
                cfg.teacher.mode = mode;
            }
            if let Some(path) = cache {
                cfg.teacher.cache = path;
            }
            if let Some(n) = workers {
                cfg.teacher.workers = n;
            }
            let teacher = cfg.teacher.endpoint()?;
            let examples = load_examples(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut cache = PromptCache::open(&cfg.teacher.cache)?;
            let (augmented, ledger) =
                augment(&examples, kind.into(), &teacher, &mut cache, cfg.teacher.workers)?;
            save_augmented(&output, &augmented)?;
            println!(
                "augmented {} examples -> {}; {} teacher calls ({} fresh, {} reprompts), {} from cache",
                augmented.len(),
                output.display(),
                ledger.teacher_calls(),
                ledger.requests_sent,
                ledger.reprompts,
                ledger.served_from_cache,
            );
        }
        Cmd::Toygen { spec, out } => {
            let spec: ToyCorpusSpec = match spec {
                Some(path) => toml::from_str(
                    &std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )
                .with_context(|| format!("parsing {}", path.display()))?,
                None => ToyCorpusSpec::default(),
            };
            let corpus = make_toy_corpus(&spec)?;
            write_corpus(&corpus, &out)?;
            println!(
                "wrote {}/{}/{} train/eval/test examples as nine files under {}",
                corpus.train.len(),
                corpus.eval.len(),
                corpus.test.len(),
                out.display(),
            );
        }
        Cmd::Train {
            cell,
            data,
            runs,
            config,
            force,
        } => {
            let cfg = load_config(config.as_deref())?;
            let Some(cell) = find_cell(&cell) else {
                bail!(
                    "unknown cell {cell:?}; valid IDs are B1-B3, S1-S9, E1-E9",
                );
            };
            if !force {
                if let Some(result) = load_result(&runs.join(&cell.id))? {
                    print_cell(&result, false);
                    return Ok(());
                }
            }
            let result = train_cell(&cell, &data, &runs, &cfg)?;
            print_cell(&result, true);
        }
        Cmd::Grid {
            data,
            out,
            parallel,
            force,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let cells = canonical_grid();
            let outcome = match parallel {
                Some(n) if n > 1 => {
                    let exe = std::env::current_exe().context("locating this binary")?;
                    run_grid_processes(&exe, &cells, &data, &out, config.as_deref(), n, force)?
                }
                _ => run_grid_with(&cells, &data, &out, &cfg, force, |_, result, trained| {
                    print_cell(result, trained)
                })?,
            };
            let failed = outcome.results.iter().filter(|r| r.failed).count();
            println!(
                "grid complete: {} trained, {} resumed, {} failed",
                outcome.trained, outcome.skipped, failed,
            );
        }
        Cmd::Report { runs, out } => {
            let mut results: Vec<RunResult> = Vec::new();
            for entry in std::fs::read_dir(&runs)
                .with_context(|| format!("reading {}", runs.display()))?
            {
                let dir = entry?.path();
                if dir.is_dir() {
                    results.extend(load_result(&dir)?);
                }
            }
            if results.is_empty() {
                bail!("no result.json files under {}", runs.display());
            }
            let files = emit_report(&results, &out)?;
            println!(
                "wrote {}, {} curve files under {}, and {}",
                files.results_csv.display(),
                results.len(),
                files.curves_dir.display(),
                files.summary_md.display(),
            );
        }
    }
    Ok(())
}

fn print_cell(result: &RunResult, trained: bool) {
    let verb = if trained { "trained" } else { "kept" };
    if result.failed {
        println!(
            "{verb} {}: FAILED ({})",
            result.cell_id,
            result.error.as_deref().unwrap_or("unknown"),
        );
    } else {
        println!(
            "{verb} {}: test acc {:.4} (by loss) / {:.4} (by accuracy), {:.1}s",
            result.cell_id,
            result.acc_by_loss.unwrap_or(f64::NAN),
            result.acc_by_accuracy.unwrap_or(f64::NAN),
            result.wall_secs,
        );
    }
}
