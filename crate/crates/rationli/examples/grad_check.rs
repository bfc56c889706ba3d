//! Analytic gradients versus central finite differences.
//!
//! Run with `cargo run --example grad_check`.

use rationli::trainer::{grad_check, GradCheckConfig, LossWeights, SplitRatio};

fn main() -> anyhow::Result<()> {
    for (name, weights) in [
        ("label only      (1.00, 0.00)", LossWeights::Plain),
        (
            "even split      (0.50, 0.50)",
            LossWeights::Split(SplitRatio::new(0.5, 0.5)?),
        ),
        (
            "rationale heavy (0.25, 0.75)",
            LossWeights::Split(SplitRatio::new(0.25, 0.75)?),
        ),
    ] {
        let mut cfg = GradCheckConfig::small(weights);
        cfg.probes = 24;
        let report = grad_check(&cfg)?;
        println!(
            "{name}: {} probes, max rel err {:.3e}, mean rel err {:.3e}",
            report.probes, report.max_rel_err, report.mean_rel_err
        );
    }
    println!("\nevery probe nudges one random parameter by ±1e-5 and compares");
    println!("(loss+ - loss-) / 2eps against the backward pass, in f64");
    Ok(())
}
