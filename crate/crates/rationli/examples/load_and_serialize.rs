//! Corpus I/O and the exact text layouts the student model consumes.
//!
//! Run with `cargo run --example load_and_serialize`.

use rationli::corpus::{
    label_rationale_target, label_target, load_augmented, save_augmented, serialize_input,
    AugmentedExample, Label, RationaleKind,
};

fn main() -> anyhow::Result<()> {
    let example = AugmentedExample {
        uid: "demo-0001".to_string(),
        premise: "A farmer is stacking hay bales beside the barn.".to_string(),
        hypothesis: "Someone is working outdoors.".to_string(),
        label: Label::Entailment,
        rationale: "Stacking hay beside a barn happens outside.".to_string(),
        rationale_kind: RationaleKind::FreeText,
    };

    // The model never sees raw fields, only these serializations.
    println!("model input:   {:?}", serialize_input(&example.premise, &example.hypothesis));
    println!("label target:  {:?}", label_target(example.label));
    println!(
        "split target:  {:?}",
        label_rationale_target(example.label, &example.rationale)
    );

    // Round-trip through JSONL on disk.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("augmented.jsonl");
    save_augmented(&path, &[example.clone()])?;
    println!("\nwrote {}:", path.display());
    print!("{}", std::fs::read_to_string(&path)?);

    let loaded = load_augmented(&path)?;
    assert_eq!(loaded, vec![example]);
    println!("\nround trip preserved all {} example(s)", loaded.len());

    // Labels carry both a numeric code and the word the model must emit.
    for label in Label::ALL {
        println!("label {} <-> word {:?}", label.code(), label.word());
    }
    Ok(())
}
