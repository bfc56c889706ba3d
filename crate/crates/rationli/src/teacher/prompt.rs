//! Prompt construction for the two rationale styles, and the parser for the
//! structured 5-W response format.
//!
//! Prompt texts are frozen templates: the cache key is a digest of the exact
//! bytes, so any drift in wording silently invalidates every cache. The 5-W
//! template ends in a deliberately odd question tail; it stays as-is.

use sha2::{Digest, Sha256};

use crate::corpus::{Label, NliExample};

/// Hard cap on answer length requested from the teacher, per 5-W question.
pub const FIVE_W_MAX_WORDS: usize = 10;

const FIVE_W_MARKERS: [&str; 5] = ["who:", "what:", "when:", "where:", "why:"];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("premise is empty")]
    EmptyPremise,
    #[error("hypothesis is empty")]
    EmptyHypothesis,
    #[error("5-W response has only {found} of {required} markers")]
    TooFewMarkers { found: usize, required: usize },
}

/// A single teacher call: the exact prompt text, its content-addressed cache
/// key, and the response budget to request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub prompt_text: String,
    pub cache_key: String,
    pub max_response_tokens: u32,
}

impl PromptRequest {
    fn new(prompt_text: String, max_response_tokens: u32) -> PromptRequest {
        let cache_key = cache_key(&prompt_text);
        PromptRequest {
            prompt_text,
            cache_key,
            max_response_tokens,
        }
    }
}

/// Content hash of the prompt bytes, hex-encoded. Identical prompt text
/// always maps to the same key, across runs and processes.
pub fn cache_key(prompt_text: &str) -> String {
    hex::encode(Sha256::digest(prompt_text.as_bytes()))
}

/// Prompt asking the teacher for 5-W answers about a premise. Premise-only by
/// design: every example sharing the premise shares the prompt, and the cache
/// collapses them to one call.
pub fn build_five_w_prompt(premise: &str) -> Result<PromptRequest, PromptError> {
    if premise.trim().is_empty() {
        return Err(PromptError::EmptyPremise);
    }
    let text = format!(
        "Answer the 5 W questions about the following text with max 10 words per question: \
         {premise}\nWho:, What: When, Where:, Why:"
    );
    Ok(PromptRequest::new(text, 128))
}

fn relation_line(label: Label) -> &'static str {
    // The contradiction line carries no trailing colon; the asymmetry is part
    // of the frozen template.
    match label {
        Label::Entailment => "entails the following hypothesis:",
        Label::Neutral => "is neutral to the following hypothesis:",
        Label::Contradiction => "contradicts the following hypothesis",
    }
}

/// Prompt asking the teacher to justify the label of one premise-hypothesis
/// pair in free text. The middle line states the labeled relation.
pub fn build_free_text_prompt(example: &NliExample) -> Result<PromptRequest, PromptError> {
    if example.premise.trim().is_empty() {
        return Err(PromptError::EmptyPremise);
    }
    if example.hypothesis.trim().is_empty() {
        return Err(PromptError::EmptyHypothesis);
    }
    let text = format!(
        "Explain why this text\n{}\n{}\n{}\nin 100 words or less.",
        example.premise,
        relation_line(example.label),
        example.hypothesis
    );
    Ok(PromptRequest::new(text, 256))
}

/// Parsed 5-W answers. Missing or blank answers are normalized to "N/A".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiveW {
    pub who: String,
    pub what: String,
    pub when: String,
    pub r#where: String,
    pub why: String,
}

impl FiveW {
    fn fields(&self) -> [(&'static str, &str); 5] {
        [
            ("Who", &self.who),
            ("What", &self.what),
            ("When", &self.when),
            ("Where", &self.r#where),
            ("Why", &self.why),
        ]
    }

    /// Canonical storage form: the five answers re-joined one per line. This
    /// round-trips through [`parse_five_w`].
    pub fn to_rationale(&self) -> String {
        self.fields()
            .iter()
            .map(|(q, a)| format!("{q}: {a}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// How many answers exceed `max_words` whitespace-separated words. Used
    /// for cost accounting; long answers are kept, not truncated.
    pub fn over_limit_fields(&self, max_words: usize) -> usize {
        self.fields()
            .iter()
            .filter(|(_, a)| a.split_whitespace().count() > max_words)
            .count()
    }
}

/// Parse a teacher response into 5-W answers.
///
/// A marker counts only at the start of a line (after trimming), matched
/// case-insensitively. At least 3 of the 5 markers must appear; anything less
/// is treated as the teacher not following the format. The first occurrence
/// of a marker wins; absent or empty answers become "N/A".
pub fn parse_five_w(response: &str) -> Result<FiveW, PromptError> {
    let mut answers: [Option<String>; 5] = Default::default();
    for line in response.lines() {
        let trimmed = line.trim();
        let lowered = trimmed.to_lowercase();
        for (slot, marker) in FIVE_W_MARKERS.iter().enumerate() {
            if lowered.starts_with(marker) && answers[slot].is_none() {
                // The marker's colon is the first colon on the line, so the
                // answer is everything after it.
                let answer = trimmed.splitn(2, ':').nth(1).unwrap_or("").trim();
                answers[slot] = Some(if answer.is_empty() {
                    "N/A".to_string()
                } else {
                    answer.to_string()
                });
            }
        }
    }
    let found = answers.iter().flatten().count();
    if found < 3 {
        return Err(PromptError::TooFewMarkers { found, required: 3 });
    }
    let mut take = |slot: usize| answers[slot].take().unwrap_or_else(|| "N/A".to_string());
    Ok(FiveW {
        who: take(0),
        what: take(1),
        when: take(2),
        r#where: take(3),
        why: take(4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(label: Label) -> NliExample {
        NliExample {
            uid: "u".to_string(),
            premise: "A chef cooks pasta in Rome.".to_string(),
            hypothesis: "Food is being prepared.".to_string(),
            label,
        }
    }

    #[test]
    fn five_w_prompt_is_byte_exact() {
        let req = build_five_w_prompt("A chef cooks pasta in Rome.").unwrap();
        assert_eq!(
            req.prompt_text,
            "Answer the 5 W questions about the following text with max 10 words per \
             question: A chef cooks pasta in Rome.\nWho:, What: When, Where:, Why:"
        );
    }

    #[test]
    fn five_w_prompt_rejects_empty_premise() {
        assert!(matches!(
            build_five_w_prompt("   "),
            Err(PromptError::EmptyPremise)
        ));
    }

    #[test]
    fn free_text_prompt_varies_only_the_relation_line() {
        let entail = build_free_text_prompt(&example(Label::Entailment)).unwrap();
        assert_eq!(
            entail.prompt_text,
            "Explain why this text\nA chef cooks pasta in Rome.\nentails the following \
             hypothesis:\nFood is being prepared.\nin 100 words or less."
        );
        let neutral = build_free_text_prompt(&example(Label::Neutral)).unwrap();
        assert!(neutral
            .prompt_text
            .contains("\nis neutral to the following hypothesis:\n"));
        // The contradiction line has no colon.
        let contra = build_free_text_prompt(&example(Label::Contradiction)).unwrap();
        assert!(contra
            .prompt_text
            .contains("\ncontradicts the following hypothesis\n"));
        assert!(!contra
            .prompt_text
            .contains("contradicts the following hypothesis:"));
    }

    #[test]
    fn cache_key_is_stable_and_content_addressed() {
        let a = build_five_w_prompt("same premise").unwrap();
        let b = build_five_w_prompt("same premise").unwrap();
        let c = build_five_w_prompt("other premise").unwrap();
        assert_eq!(a.cache_key, b.cache_key);
        assert_ne!(a.cache_key, c.cache_key);
        assert_eq!(a.cache_key.len(), 64);
        assert!(a.cache_key.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn parses_complete_five_w_response() {
        let response = "Who: a chef\nWhat: cooks pasta\nWhen: N/A\nWhere: Rome\nWhy: dinner";
        let parsed = parse_five_w(response).unwrap();
        assert_eq!(parsed.who, "a chef");
        assert_eq!(parsed.r#where, "Rome");
        assert_eq!(parsed.why, "dinner");
    }

    #[test]
    fn markers_are_case_insensitive_and_line_anchored() {
        let response = "WHO: someone\nwhat: something\nThe chef is where: misleading\nWHEN: now";
        let parsed = parse_five_w(response).unwrap();
        assert_eq!(parsed.who, "someone");
        assert_eq!(parsed.what, "something");
        assert_eq!(parsed.when, "now");
        // "where:" mid-line is not a marker, so the answer defaults.
        assert_eq!(parsed.r#where, "N/A");
    }

    #[test]
    fn missing_and_blank_answers_become_na() {
        let parsed = parse_five_w("Who: a chef\nWhat:\nWhy: hunger").unwrap();
        assert_eq!(parsed.what, "N/A");
        assert_eq!(parsed.when, "N/A");
        assert_eq!(parsed.r#where, "N/A");
    }

    #[test]
    fn too_few_markers_is_an_error() {
        match parse_five_w("Who: a chef\nWhat: cooks").unwrap_err() {
            PromptError::TooFewMarkers { found, required } => {
                assert_eq!(found, 2);
                assert_eq!(required, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(parse_five_w("no structure at all").is_err());
    }

    #[test]
    fn rationale_join_round_trips_through_the_parser() {
        let parsed = parse_five_w("who: a\nwhat: b\nwhen: c\nwhere: d\nwhy: e").unwrap();
        let rationale = parsed.to_rationale();
        assert_eq!(rationale, "Who: a\nWhat: b\nWhen: c\nWhere: d\nWhy: e");
        assert_eq!(parse_five_w(&rationale).unwrap(), parsed);
    }

    #[test]
    fn over_limit_fields_counts_long_answers() {
        let parsed = parse_five_w(
            "Who: one two three four five six seven eight nine ten eleven\nWhat: short\nWhy: ok",
        )
        .unwrap();
        assert_eq!(parsed.over_limit_fields(FIVE_W_MAX_WORDS), 1);
    }
}
