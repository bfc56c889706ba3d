//! Teacher-side dataset augmentation.
//!
//! Given a plain corpus, build one prompt per unit of new information (per
//! distinct premise for 5-W rationales, per example for free-text ones),
//! answer as much as possible from the response cache, send the rest to the
//! endpoint with bounded parallelism, and assemble augmented examples in the
//! original corpus order. All spending is tallied in a [`CostLedger`].

pub mod cache;
pub mod client;
pub mod prompt;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use indexmap::IndexMap;
use serde::Serialize;

use crate::corpus::{AugmentedExample, NliExample, RationaleKind};

pub use cache::{CacheEntry, CacheError, PromptCache};
pub use client::{
    RetryPolicy, TeacherEndpoint, TeacherError, TeacherResponse, API_KEY_ENV,
};
pub use prompt::{
    build_five_w_prompt, build_free_text_prompt, cache_key, parse_five_w, FiveW, PromptError,
    PromptRequest, FIVE_W_MAX_WORDS,
};

/// Accounting for one augmentation pass.
///
/// `lookups` counts distinct prompts consulted against the cache, and always
/// equals `requests_sent + served_from_cache`. Format-recovery calls bypass
/// the cache and are tallied separately in `reprompts`.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    pub lookups: u64,
    pub requests_sent: u64,
    pub served_from_cache: u64,
    pub reprompts: u64,
    /// 5-W answers longer than the requested per-question word budget. They
    /// are kept verbatim; this only measures teacher discipline.
    pub over_length_answers: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CostLedger {
    /// Total calls that actually reached the teacher.
    pub fn teacher_calls(&self) -> u64 {
        self.requests_sent + self.reprompts
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("teacher request {cache_key} failed: {source}")]
    Request {
        cache_key: String,
        #[source]
        source: TeacherError,
    },
    #[error(
        "5-W response for request {cache_key} stayed unparseable after one re-prompt; \
         raw response: {response:?}"
    )]
    UnparseableFiveW { cache_key: String, response: String },
    #[error("teacher returned an empty rationale for request {cache_key}")]
    EmptyResponse { cache_key: String },
}

/// Group examples by premise, preserving first-occurrence order. The values
/// are the uids sharing each premise.
pub fn dedup_premises(examples: &[NliExample]) -> IndexMap<String, Vec<String>> {
    let mut map: IndexMap<String, Vec<String>> = IndexMap::new();
    for ex in examples {
        map.entry(ex.premise.clone())
            .or_default()
            .push(ex.uid.clone());
    }
    map
}

/// Augment every example with a teacher rationale of the requested kind.
///
/// Returns the augmented examples in input order plus the cost ledger. On
/// failure, every response that already arrived is still in the cache, so a
/// rerun resumes where this one stopped.
pub fn augment(
    examples: &[NliExample],
    kind: RationaleKind,
    endpoint: &TeacherEndpoint,
    cache: &mut PromptCache,
    parallelism: usize,
) -> Result<(Vec<AugmentedExample>, CostLedger), AugmentError> {
    let mut ledger = CostLedger::default();

    // One request per unit of new information, deduplicated by cache key;
    // assignment maps each example to its request.
    let mut requests: Vec<PromptRequest> = Vec::new();
    let mut by_key: IndexMap<String, usize> = IndexMap::new();
    let mut assignment: Vec<usize> = Vec::with_capacity(examples.len());
    for ex in examples {
        let request = match kind {
            RationaleKind::FiveW => build_five_w_prompt(&ex.premise)?,
            RationaleKind::FreeText => build_free_text_prompt(ex)?,
        };
        let idx = *by_key
            .entry(request.cache_key.clone())
            .or_insert_with(|| {
                requests.push(request);
                requests.len() - 1
            });
        assignment.push(idx);
    }

    ledger.lookups = requests.len() as u64;
    let mut responses: Vec<Option<String>> = vec![None; requests.len()];
    let mut pending: Vec<usize> = Vec::new();
    for (idx, request) in requests.iter().enumerate() {
        if let Some(hit) = cache.get(&request.cache_key) {
            responses[idx] = Some(hit.to_string());
            ledger.served_from_cache += 1;
        } else {
            pending.push(idx);
        }
    }

    if !pending.is_empty() {
        let workers = parallelism.max(1).min(pending.len());
        let abort = AtomicBool::new(false);
        let cursor = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, Result<TeacherResponse, TeacherError>)>();
        let mut first_error: Option<AugmentError> = None;

        std::thread::scope(|scope| -> Result<(), AugmentError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (abort, cursor, pending, requests) = (&abort, &cursor, &pending, &requests);
                scope.spawn(move || loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let slot = cursor.fetch_add(1, Ordering::Relaxed);
                    let Some(&idx) = pending.get(slot) else { break };
                    let result = endpoint.complete(&requests[idx]);
                    if result.is_err() {
                        abort.store(true, Ordering::Relaxed);
                    }
                    if tx.send((idx, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Cache writes happen here on the receiving side, so the cache
            // needs no lock and grows even when a later request fails.
            for (idx, result) in rx {
                match result {
                    Ok(response) => {
                        let request = &requests[idx];
                        if let Err(e) =
                            cache.record(&request.cache_key, &request.prompt_text, &response.text)
                        {
                            abort.store(true, Ordering::Relaxed);
                            return Err(e.into());
                        }
                        ledger.requests_sent += 1;
                        ledger.prompt_tokens += response.prompt_tokens;
                        ledger.completion_tokens += response.completion_tokens;
                        responses[idx] = Some(response.text);
                    }
                    Err(source) => {
                        if first_error.is_none() {
                            first_error = Some(AugmentError::Request {
                                cache_key: requests[idx].cache_key.clone(),
                                source,
                            });
                        }
                    }
                }
            }
            Ok(())
        })?;
        if let Some(error) = first_error {
            return Err(error);
        }
    }

    // Turn raw responses into rationales. 5-W responses must parse; one
    // cache-bypassing re-prompt is allowed per request to recover from a
    // teacher that ignored the format (including stale bad cache entries).
    let mut rationales: Vec<String> = Vec::with_capacity(requests.len());
    for (idx, request) in requests.iter().enumerate() {
        let text = responses[idx].take().expect("every request was answered");
        let rationale = match kind {
            RationaleKind::FreeText => {
                let trimmed = text.trim();
                if trimmed.is_empty() {
                    return Err(AugmentError::EmptyResponse {
                        cache_key: request.cache_key.clone(),
                    });
                }
                trimmed.to_string()
            }
            RationaleKind::FiveW => {
                let parsed = match parse_five_w(&text) {
                    Ok(parsed) => parsed,
                    Err(_) => {
                        let retry = endpoint.complete(request).map_err(|source| {
                            AugmentError::Request {
                                cache_key: request.cache_key.clone(),
                                source,
                            }
                        })?;
                        ledger.reprompts += 1;
                        ledger.prompt_tokens += retry.prompt_tokens;
                        ledger.completion_tokens += retry.completion_tokens;
                        let parsed = parse_five_w(&retry.text).map_err(|_| {
                            AugmentError::UnparseableFiveW {
                                cache_key: request.cache_key.clone(),
                                response: retry.text.clone(),
                            }
                        })?;
                        cache.record(&request.cache_key, &request.prompt_text, &retry.text)?;
                        parsed
                    }
                };
                ledger.over_length_answers += parsed.over_limit_fields(FIVE_W_MAX_WORDS) as u64;
                parsed.to_rationale()
            }
        };
        rationales.push(rationale);
    }

    let augmented = examples
        .iter()
        .zip(&assignment)
        .map(|(ex, &idx)| AugmentedExample {
            uid: ex.uid.clone(),
            premise: ex.premise.clone(),
            hypothesis: ex.hypothesis.clone(),
            label: ex.label,
            rationale: rationales[idx].clone(),
            rationale_kind: kind,
        })
        .collect();

    debug_assert_eq!(ledger.lookups, ledger.requests_sent + ledger.served_from_cache);
    Ok((augmented, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use std::collections::HashMap;

    fn examples() -> Vec<NliExample> {
        let mk = |uid: &str, premise: &str, hypothesis: &str, label| NliExample {
            uid: uid.to_string(),
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            label,
        };
        vec![
            mk("u1", "A dog runs in the park.", "An animal moves.", Label::Entailment),
            mk("u2", "A dog runs in the park.", "The dog is asleep.", Label::Contradiction),
            mk("u3", "A chef cooks pasta.", "Dinner is being made.", Label::Neutral),
            mk("u4", "A dog runs in the park.", "The park is green.", Label::Neutral),
        ]
    }

    fn five_w_fixture(premises: &[&str]) -> TeacherEndpoint {
        let mut map = HashMap::new();
        for premise in premises {
            let req = build_five_w_prompt(premise).unwrap();
            map.insert(
                req.cache_key,
                format!("Who: someone\nWhat: about {premise}\nWhen: today\nWhere: here\nWhy: because"),
            );
        }
        TeacherEndpoint::fixture(map)
    }

    fn cache_in(dir: &tempfile::TempDir) -> PromptCache {
        PromptCache::open(dir.path().join("cache.jsonl")).unwrap()
    }

    #[test]
    fn dedup_groups_by_premise_in_first_seen_order() {
        let groups = dedup_premises(&examples());
        let premises: Vec<&String> = groups.keys().collect();
        assert_eq!(premises, ["A dog runs in the park.", "A chef cooks pasta."]);
        assert_eq!(groups["A dog runs in the park."], ["u1", "u2", "u4"]);
        assert_eq!(groups["A chef cooks pasta."], ["u3"]);
    }

    #[test]
    fn five_w_augment_collapses_premises_and_shares_rationales() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let endpoint = five_w_fixture(&["A dog runs in the park.", "A chef cooks pasta."]);
        let (augmented, ledger) =
            augment(&examples(), RationaleKind::FiveW, &endpoint, &mut cache, 4).unwrap();

        assert_eq!(augmented.len(), 4);
        assert_eq!(
            augmented.iter().map(|a| a.uid.as_str()).collect::<Vec<_>>(),
            ["u1", "u2", "u3", "u4"]
        );
        assert_eq!(augmented[0].rationale, augmented[1].rationale);
        assert_eq!(augmented[0].rationale, augmented[3].rationale);
        assert_ne!(augmented[0].rationale, augmented[2].rationale);
        assert!(augmented[0].rationale.starts_with("Who: someone\nWhat:"));
        assert!(parse_five_w(&augmented[0].rationale).is_ok());

        assert_eq!(ledger.lookups, 2);
        assert_eq!(ledger.requests_sent, 2);
        assert_eq!(ledger.served_from_cache, 0);
        assert_eq!(ledger.reprompts, 0);
        assert!(ledger.prompt_tokens > 0);

        // Warm pass: everything comes from the cache.
        let (_, warm) =
            augment(&examples(), RationaleKind::FiveW, &endpoint, &mut cache, 4).unwrap();
        assert_eq!(warm.requests_sent, 0);
        assert_eq!(warm.served_from_cache, 2);
        assert_eq!(warm.prompt_tokens, 0);
    }

    #[test]
    fn free_text_augment_is_per_example() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let mut map = HashMap::new();
        for ex in examples() {
            let req = build_free_text_prompt(&ex).unwrap();
            map.insert(req.cache_key, format!("  Because of {}.  ", ex.uid));
        }
        let endpoint = TeacherEndpoint::fixture(map);
        let (augmented, ledger) =
            augment(&examples(), RationaleKind::FreeText, &endpoint, &mut cache, 2).unwrap();
        assert_eq!(ledger.lookups, 4);
        assert_eq!(ledger.requests_sent, 4);
        assert_eq!(augmented[2].rationale, "Because of u3.");
        assert!(augmented.iter().all(|a| a.rationale_kind == RationaleKind::FreeText));
    }

    #[test]
    fn stale_unparseable_cache_entry_triggers_one_recovering_reprompt() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let ex = vec![examples()[0].clone()];
        let req = build_five_w_prompt(&ex[0].premise).unwrap();
        cache
            .record(&req.cache_key, &req.prompt_text, "no structure at all")
            .unwrap();
        let endpoint = five_w_fixture(&[ex[0].premise.as_str()]);
        let (augmented, ledger) =
            augment(&ex, RationaleKind::FiveW, &endpoint, &mut cache, 1).unwrap();
        assert_eq!(ledger.served_from_cache, 1);
        assert_eq!(ledger.requests_sent, 0);
        assert_eq!(ledger.reprompts, 1);
        assert!(augmented[0].rationale.starts_with("Who: someone"));
        // The recovered response replaced the stale entry.
        assert!(cache.get(&req.cache_key).unwrap().starts_with("Who: someone"));
    }

    #[test]
    fn persistently_unparseable_five_w_reports_the_raw_response() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let ex = vec![examples()[0].clone()];
        let req = build_five_w_prompt(&ex[0].premise).unwrap();
        let endpoint = TeacherEndpoint::fixture(HashMap::from([(
            req.cache_key.clone(),
            "still not the format".to_string(),
        )]));
        match augment(&ex, RationaleKind::FiveW, &endpoint, &mut cache, 1).unwrap_err() {
            AugmentError::UnparseableFiveW { cache_key, response } => {
                assert_eq!(cache_key, req.cache_key);
                assert_eq!(response, "still not the format");
            }
            other => panic!("unexpected error {other:?}"),
        }
        // Exactly one garbage response is cached (from the first fetch); the
        // failed re-prompt must not overwrite it with a second copy.
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn failed_request_names_its_key_and_keeps_partial_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let exs = examples();
        // Fixture only knows the first premise; the second request fails.
        let endpoint = five_w_fixture(&["A dog runs in the park."]);
        let missing = build_five_w_prompt("A chef cooks pasta.").unwrap();
        match augment(&exs, RationaleKind::FiveW, &endpoint, &mut cache, 1).unwrap_err() {
            AugmentError::Request { cache_key, source } => {
                assert_eq!(cache_key, missing.cache_key);
                assert!(matches!(source, TeacherError::FixtureMiss { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(cache.len(), 1);

        // Rerun with a complete fixture: the cached premise is not re-sent.
        let full = five_w_fixture(&["A dog runs in the park.", "A chef cooks pasta."]);
        let (_, ledger) =
            augment(&exs, RationaleKind::FiveW, &full, &mut cache, 1).unwrap();
        assert_eq!(ledger.served_from_cache, 1);
        assert_eq!(ledger.requests_sent, 1);
    }

    #[test]
    fn counts_over_length_answers() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let ex = vec![examples()[0].clone()];
        let req = build_five_w_prompt(&ex[0].premise).unwrap();
        let long = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11";
        let endpoint = TeacherEndpoint::fixture(HashMap::from([(
            req.cache_key,
            format!("Who: {long}\nWhat: {long}\nWhy: fine"),
        )]));
        let (_, ledger) = augment(&ex, RationaleKind::FiveW, &endpoint, &mut cache, 1).unwrap();
        assert_eq!(ledger.over_length_answers, 2);
    }

    #[test]
    fn empty_free_text_response_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let ex = vec![examples()[0].clone()];
        let req = build_free_text_prompt(&ex[0]).unwrap();
        let endpoint =
            TeacherEndpoint::fixture(HashMap::from([(req.cache_key, "   \n ".to_string())]));
        assert!(matches!(
            augment(&ex, RationaleKind::FreeText, &endpoint, &mut cache, 1).unwrap_err(),
            AugmentError::EmptyResponse { .. }
        ));
    }

    #[test]
    fn rejects_empty_premise_before_any_request() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = cache_in(&dir);
        let ex = vec![NliExample {
            uid: "u".to_string(),
            premise: " ".to_string(),
            hypothesis: "h".to_string(),
            label: Label::Entailment,
        }];
        let endpoint = TeacherEndpoint::fixture(HashMap::new());
        assert!(matches!(
            augment(&ex, RationaleKind::FiveW, &endpoint, &mut cache, 1).unwrap_err(),
            AugmentError::Prompt(PromptError::EmptyPremise)
        ));
        assert!(cache.is_empty());
    }
}
