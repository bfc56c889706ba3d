//! Vocabulary building, encode/decode round trips, and corpus BLEU.
//!
//! Run with `cargo run --example tokenize_and_bleu`.

use rationli::textkit::{bleu_corpus, tokenize, Vocabulary};

fn main() -> anyhow::Result<()> {
    println!("tokens: {:?}", tokenize("The farmer's barn isn't empty!"));

    let corpus = [
        "premise: a farmer stacks hay hypothesis: someone works outdoors",
        "entailment | stacking hay happens outside",
        "neutral | the text does not say",
    ];
    let vocab = Vocabulary::build(corpus.iter().copied(), 1);
    println!("vocabulary of {} tokens (8 reserved)", vocab.size());

    let ids = vocab.encode("a farmer stacks hay");
    println!("encoded: {ids:?} (ends with EOS)");
    println!("decoded: {:?}", vocab.decode(&ids)?);

    // Unknown words survive as a visible placeholder, not an error.
    let oov = vocab.encode("a farmer stacks pineapples");
    println!("with OOV: {:?}", vocab.decode(&oov)?);

    // BLEU over token id sequences, one reference per candidate. The first
    // pair is perfect, the second misses one word, the third shares nothing.
    let refs: Vec<Vec<u32>> = [
        "stacking hay happens outside",
        "the text does not say",
        "someone works outdoors",
    ]
    .iter()
    .map(|t| vocab.encode(t))
    .collect();
    let cands: Vec<Vec<u32>> = [
        "stacking hay happens outside",
        "the text does not state",
        "entailment entailment entailment entailment",
    ]
    .iter()
    .map(|t| vocab.encode(t))
    .collect();

    for (cand, reference) in cands.iter().zip(&refs) {
        let report = bleu_corpus(std::slice::from_ref(cand), std::slice::from_ref(reference));
        println!(
            "sentence bleu {:.4}  (precisions {:?}, brevity {:.3})",
            report.bleu, report.precisions, report.brevity_penalty
        );
    }
    let pooled = bleu_corpus(&cands, &refs);
    println!("corpus bleu {:.4}", pooled.bleu);
    Ok(())
}
