//! A miniature configuration sweep plus report emission.
//!
//! One cell per dataset keeps this example quick; the binary's `grid`
//! subcommand runs all 21 cells the same way. Run with
//! `cargo run --example grid_toy`.

use rationli::bench::{
    emit_report, find_cell, make_toy_corpus, run_grid, write_corpus, BenchConfig, ToyCorpusSpec,
};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data_dir = dir.path().join("data");
    let runs_dir = dir.path().join("runs");

    let spec = ToyCorpusSpec {
        train_size: 96,
        eval_size: 24,
        test_size: 24,
        ..ToyCorpusSpec::default()
    };
    write_corpus(&make_toy_corpus(&spec)?, &data_dir)?;
    println!("toy corpus under {}", data_dir.display());

    // One cell per dataset: plain baseline, 5-W, and free-text rationales.
    let cells: Vec<_> = ["B2", "S5", "E5"]
        .iter()
        .map(|id| find_cell(id).expect("canonical cell"))
        .collect();
    let mut cfg = BenchConfig::default();
    cfg.trainer.epochs = 10;

    let outcome = run_grid(&cells, &data_dir, &runs_dir, &cfg, false)?;
    for result in &outcome.results {
        println!(
            "{}: test acc {:.4} (by loss) / {:.4} (by accuracy) in {:.1}s",
            result.cell_id,
            result.acc_by_loss.unwrap_or(f64::NAN),
            result.acc_by_accuracy.unwrap_or(f64::NAN),
            result.wall_secs
        );
    }

    // A second pass trains nothing: every cell resumes from result.json.
    let resumed = run_grid(&cells, &data_dir, &runs_dir, &cfg, false)?;
    println!(
        "resume pass: {} trained, {} resumed",
        resumed.trained, resumed.skipped
    );

    let report_dir = dir.path().join("report");
    let files = emit_report(&outcome.results, &report_dir)?;
    println!("\n{}:", files.results_csv.display());
    print!("{}", std::fs::read_to_string(&files.results_csv)?);
    println!("\n{}:", files.summary_md.display());
    print!("{}", std::fs::read_to_string(&files.summary_md)?);
    Ok(())
}
