//! Offline augmentation against a recorded teacher, with cost accounting.
//!
//! Run with `cargo run --example augment_fixture`.

use std::collections::HashMap;

use rationli::corpus::{Label, NliExample, RationaleKind};
use rationli::teacher::{augment, build_five_w_prompt, PromptCache, TeacherEndpoint};

fn main() -> anyhow::Result<()> {
    // Three examples over two distinct premises: 5-W augmentation needs one
    // teacher call per premise, not per example.
    let barn = "A farmer is stacking hay bales beside the barn.";
    let court = "Two players argue with the referee on the court.";
    let examples = vec![
        NliExample {
            uid: "demo-0001".to_string(),
            premise: barn.to_string(),
            hypothesis: "Someone is working outdoors.".to_string(),
            label: Label::Entailment,
        },
        NliExample {
            uid: "demo-0002".to_string(),
            premise: barn.to_string(),
            hypothesis: "The barn is empty.".to_string(),
            label: Label::Neutral,
        },
        NliExample {
            uid: "demo-0003".to_string(),
            premise: court.to_string(),
            hypothesis: "The game proceeds without dispute.".to_string(),
            label: Label::Contradiction,
        },
    ];

    // A fixture maps request cache keys to canned response text.
    let mut responses = HashMap::new();
    responses.insert(
        build_five_w_prompt(barn)?.cache_key,
        "Who: a farmer\nWhat: stacking hay bales\nWhen: unspecified\n\
         Where: beside the barn\nWhy: storing winter feed"
            .to_string(),
    );
    responses.insert(
        build_five_w_prompt(court)?.cache_key,
        "Who: two players\nWhat: arguing with the referee\nWhen: during a game\n\
         Where: on the court\nWhy: disputing a call"
            .to_string(),
    );
    let teacher = TeacherEndpoint::fixture(responses);

    let dir = tempfile::tempdir()?;
    let mut cache = PromptCache::open(dir.path().join("cache.jsonl"))?;

    let (augmented, cold) = augment(&examples, RationaleKind::FiveW, &teacher, &mut cache, 2)?;
    println!("augmented {} examples", augmented.len());
    for ex in &augmented {
        println!("\n{} ({}):\n{}", ex.uid, ex.label.word(), ex.rationale);
    }
    println!(
        "\ncold pass: {} lookups, {} requests sent, {} from cache",
        cold.lookups, cold.requests_sent, cold.served_from_cache
    );

    // Every response is already cached, so a rerun costs nothing.
    let (_, warm) = augment(&examples, RationaleKind::FiveW, &teacher, &mut cache, 2)?;
    println!(
        "warm pass: {} lookups, {} requests sent, {} from cache",
        warm.lookups, warm.requests_sent, warm.served_from_cache
    );
    Ok(())
}
