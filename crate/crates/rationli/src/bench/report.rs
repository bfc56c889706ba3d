//! Turn grid results into plot-ready CSVs and a markdown summary.
//!
//! Identical inputs produce byte-identical files: rows are ordered by grid
//! position, floats use fixed formats, and files land via temp-then-rename.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::bench::grid::{canonical_grid, DatasetKind};
use crate::bench::runner::RunResult;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no results to report")]
    Empty,
    #[error("report io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Paths of everything a report emission wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub results_csv: PathBuf,
    pub curves_dir: PathBuf,
    pub summary_md: PathBuf,
}

/// `0.417` renders as `41.7%`.
pub fn format_accuracy_pct(accuracy: f64) -> String {
    format!("{:.1}%", accuracy * 100.0)
}

/// `0.013` renders as `+1.3%`; negative deltas keep their sign.
pub fn format_delta_pct(delta: f64) -> String {
    format!("{:+.1}%", delta * 100.0)
}

/// Write `results.csv`, `curves/<cell_id>.csv`, and `summary.md` under
/// `out_dir`.
pub fn emit_report(
    results: &[RunResult],
    out_dir: impl AsRef<Path>,
) -> Result<ReportFiles, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let out_dir = out_dir.as_ref();
    let curves_dir = out_dir.join("curves");
    create_dir(&curves_dir)?;

    let ordered = grid_order(results);

    let mut csv = String::from(
        "cell_id,dataset,f_label,f_rationale,learning_rate,acc_by_loss_ckpt,acc_by_acc_ckpt\n",
    );
    for r in &ordered {
        let (f_label, f_rationale) = match r.split_ratio {
            Some(ratio) => (ratio.label(), ratio.rationale()),
            // Label-only training is all weight on the label region.
            None => (1.0, 0.0),
        };
        writeln!(
            csv,
            "{},{},{:.2},{:.2},{},{},{}",
            r.cell_id,
            r.dataset,
            f_label,
            f_rationale,
            r.learning_rate,
            format_opt_accuracy(r.acc_by_loss),
            format_opt_accuracy(r.acc_by_accuracy),
        )
        .unwrap();
    }
    let results_csv = out_dir.join("results.csv");
    write_atomic(&results_csv, csv.as_bytes())?;

    for r in &ordered {
        let mut curve = String::from("step,eval_loss,label_accuracy,rationale_bleu\n");
        for record in &r.records {
            writeln!(
                curve,
                "{},{:.6},{:.4},{}",
                record.step,
                record.eval_loss,
                record.label_accuracy,
                record
                    .rationale_bleu
                    .map(|b| format!("{b:.4}"))
                    .unwrap_or_default(),
            )
            .unwrap();
        }
        write_atomic(&curves_dir.join(format!("{}.csv", r.cell_id)), curve.as_bytes())?;
    }

    let summary_md = out_dir.join("summary.md");
    write_atomic(&summary_md, summary(&ordered).as_bytes())?;

    Ok(ReportFiles {
        results_csv,
        curves_dir,
        summary_md,
    })
}

/// Canonical grid order first, unknown cells after by ID.
fn grid_order<'a>(results: &'a [RunResult]) -> Vec<&'a RunResult> {
    let canon: Vec<String> = canonical_grid().into_iter().map(|c| c.id).collect();
    let mut ordered: Vec<&RunResult> = results.iter().collect();
    ordered.sort_by_key(|r| {
        let pos = canon.iter().position(|id| *id == r.cell_id);
        (pos.unwrap_or(canon.len()), r.cell_id.clone())
    });
    ordered
}

fn format_opt_accuracy(acc: Option<f64>) -> String {
    acc.map(|a| format!("{a:.4}")).unwrap_or_default()
}

fn summary(ordered: &[&RunResult]) -> String {
    let failed: Vec<&&RunResult> = ordered.iter().filter(|r| r.failed).collect();
    let mut md = String::from("# Grid results\n\n");
    writeln!(md, "{} cells, {} failed.\n", ordered.len(), failed.len()).unwrap();

    // Best cell per dataset by the better of its two checkpoint accuracies.
    // Ties keep the earliest cell in grid order, like checkpoint selection.
    let best = |kind: DatasetKind| -> Option<&&RunResult> {
        ordered
            .iter()
            .filter(|r| r.dataset == kind && !r.failed)
            .fold(None, |acc: Option<&&RunResult>, r| match acc {
                Some(cur) if r.best_accuracy() <= cur.best_accuracy() => Some(cur),
                _ => Some(r),
            })
    };
    let baseline_best = best(DatasetKind::Baseline).and_then(|r| r.best_accuracy());

    md.push_str("| dataset | best cell | test accuracy | vs baseline |\n");
    md.push_str("|---|---|---|---|\n");
    for kind in DatasetKind::ALL {
        let Some(r) = best(kind) else { continue };
        let accuracy = r.best_accuracy().unwrap();
        let delta = match baseline_best {
            Some(base) if kind != DatasetKind::Baseline => format_delta_pct(accuracy - base),
            _ => String::new(),
        };
        writeln!(
            md,
            "| {} | {} | {} | {} |",
            kind,
            r.cell_id,
            format_accuracy_pct(accuracy),
            delta
        )
        .unwrap();
    }
    md.push_str(
        "\nAccuracy is the better of each cell's two selected checkpoints \
         (lowest eval loss, highest eval accuracy).\n",
    );

    if !failed.is_empty() {
        md.push_str("\n## Failed cells\n\n");
        for r in &failed {
            writeln!(
                md,
                "- {}: {}",
                r.cell_id,
                r.error.as_deref().unwrap_or("unknown failure")
            )
            .unwrap();
        }
    }
    md
}

fn create_dir(path: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io_err = |path: &Path, source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}
