//! One split-loss training run on a synthetic corpus, end to end.
//!
//! Run with `cargo run --example train_toy`.

use rationli::bench::{augmented_examples, make_toy_corpus, ToyCorpusSpec};
use rationli::corpus::RationaleKind;
use rationli::seq2seq::ModelConfig;
use rationli::trainer::{
    build_vocab_augmented, prepare_augmented, train, LossWeights, RunContext, SplitRatio,
    TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let spec = ToyCorpusSpec {
        train_size: 48,
        eval_size: 24,
        test_size: 24,
        ..ToyCorpusSpec::default()
    };
    let corpus = make_toy_corpus(&spec)?;
    let train_set = augmented_examples(&corpus.train, RationaleKind::FreeText);
    let eval_set = augmented_examples(&corpus.eval, RationaleKind::FreeText);

    let vocab = build_vocab_augmented(&train_set, 1);
    let model = ModelConfig::with_vocab(vocab.size());
    println!(
        "vocab {} tokens, model d={} ({} encoder + {} decoder layers)",
        vocab.size(),
        model.d_model,
        model.n_layers,
        model.n_layers
    );

    let train_ds = prepare_augmented(&train_set, &vocab, model.max_len)?;
    let eval_ds = prepare_augmented(&eval_set, &vocab, model.max_len)?;

    // Half the loss weight on the one-token label region, half on the
    // rationale region.
    let weights = LossWeights::Split(SplitRatio::new(0.5, 0.5)?);
    let mut cfg = TrainConfig::new(1.2e-3, weights, 0);
    cfg.epochs = 3;
    cfg.batch_size = 8;

    let dir = tempfile::tempdir()?;
    let ctx = RunContext {
        run_id: "train-toy".to_string(),
        run_dir: dir.path().join("train-toy"),
        keep_all_checkpoints: false,
    };
    let outcome = train::<f32>(&model, &train_ds, &eval_ds, &cfg, &ctx)?;

    println!("\n step | eval loss | label acc | rationale bleu");
    for r in &outcome.records {
        println!(
            " {:>4} | {:>9.4} | {:>9.4} | {:>14.4}",
            r.step,
            r.eval_loss,
            r.label_accuracy,
            r.rationale_bleu.unwrap_or(f64::NAN)
        );
    }
    println!(
        "\nselected checkpoints: step {} (lowest loss), step {} (highest accuracy)",
        outcome.best_loss.step, outcome.best_accuracy.step
    );
    println!(
        "kept on disk: {} and {}",
        outcome.best_loss.path.file_name().unwrap().to_string_lossy(),
        outcome.best_accuracy.path.file_name().unwrap().to_string_lossy()
    );
    Ok(())
}
