//! Teacher prompt construction, content-hash cache keys, and 5-W parsing.
//!
//! Run with `cargo run --example build_prompts`.

use rationli::corpus::{Label, NliExample};
use rationli::teacher::{build_five_w_prompt, build_free_text_prompt, parse_five_w};

fn main() -> anyhow::Result<()> {
    let example = NliExample {
        uid: "demo-0001".to_string(),
        premise: "A farmer is stacking hay bales beside the barn.".to_string(),
        hypothesis: "Someone is working outdoors.".to_string(),
        label: Label::Entailment,
    };

    // 5-W prompts depend on the premise alone, so examples sharing a premise
    // share one request (and one cache slot).
    let five_w = build_five_w_prompt(&example.premise)?;
    println!("five-w prompt:\n---\n{}\n---", five_w.prompt_text);
    println!("cache key: {}", five_w.cache_key);
    println!("response budget: {} tokens", five_w.max_response_tokens);

    let twin = build_five_w_prompt(&example.premise)?;
    assert_eq!(five_w.cache_key, twin.cache_key);
    println!("same premise, same key: {}", five_w.cache_key == twin.cache_key);

    // Free-text prompts quote the full example including its label.
    let free = build_free_text_prompt(&example)?;
    println!("\nfree-text prompt:\n---\n{}\n---", free.prompt_text);
    println!("cache key: {}", free.cache_key);

    // A teacher answer in the expected shape parses into the five fields.
    let response = "Who: a farmer\nWhat: stacking hay bales\nWhen: unspecified\n\
                    Where: beside the barn\nWhy: preparing winter feed";
    let parsed = parse_five_w(response)?;
    println!("\nparsed who:   {:?}", parsed.who);
    println!("parsed where: {:?}", parsed.r#where);
    println!("stored rationale:\n{}", parsed.to_rationale());
    Ok(())
}
