//! Synthetic NLI corpus with a lexical label cue.
//!
//! Each example embeds one cue word, tied to its label, in both premise and
//! hypothesis with probability `cue_strength`; otherwise a neutral filler
//! takes the cue's slot and the label is unrecoverable from the text. Both
//! rationale variants reference the cue, so every grid dataset is learnable
//! by the default model and the grid exercises the loss machinery rather
//! than dataset difficulty.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::{Path, PathBuf};

use crate::bench::grid::DatasetKind;
use crate::corpus::{
    self, AugmentedExample, CorpusError, Label, NliExample, RationaleKind,
};
use crate::textkit::tokenize;

const SUBJECTS: [&str; 6] = [
    "the cat", "a dog", "the pilot", "the child", "a farmer", "the team",
];
const VERBS: [&str; 4] = ["sees", "finds", "holds", "moves"];
const OBJECTS: [&str; 4] = ["the ball", "a map", "the door", "a lamp"];

/// Words that fill the cue slot on uncued examples. Label-neutral: each is
/// equally likely under every label.
const FILLERS: [&str; 3] = ["today", "quietly", "again"];

#[derive(Debug, thiserror::Error)]
pub enum ToygenError {
    #[error("invalid toy corpus spec: {0}")]
    Spec(String),
    #[error("toy corpus io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Cue word and rationale templates for one label. Templates may contain
/// `{cue}`, replaced with the cue word at generation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTemplates {
    pub cue: String,
    /// Variants for the Why line of the 5-W rationale.
    pub why: Vec<String>,
    /// Variants for the free-text rationale.
    pub free_text: Vec<String>,
}

fn default_templates() -> Vec<LabelTemplates> {
    vec![
        LabelTemplates {
            cue: "certainly".to_string(),
            why: vec!["the word {cue} confirms the claim".to_string()],
            free_text: vec![
                "the word {cue} shows the claim follows".to_string(),
                "{cue} marks agreement with the premise".to_string(),
            ],
        },
        LabelTemplates {
            cue: "possibly".to_string(),
            why: vec!["the word {cue} leaves the claim open".to_string()],
            free_text: vec![
                "the word {cue} keeps the claim uncertain".to_string(),
                "{cue} marks the claim as unsettled".to_string(),
            ],
        },
        LabelTemplates {
            cue: "never".to_string(),
            why: vec!["the word {cue} rejects the claim".to_string()],
            free_text: vec![
                "the word {cue} shows the claim fails".to_string(),
                "{cue} marks conflict with the premise".to_string(),
            ],
        },
    ]
}

/// Everything needed to generate one corpus. Deserializes from TOML with
/// per-field defaults, so an empty spec file yields the standard corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCorpusSpec {
    pub train_size: usize,
    pub eval_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Probability that the label cue appears; the rest get a filler.
    pub cue_strength: f64,
    /// One entry per label, in entailment, neutral, contradiction order.
    pub templates: Vec<LabelTemplates>,
}

impl Default for ToyCorpusSpec {
    fn default() -> ToyCorpusSpec {
        ToyCorpusSpec {
            train_size: 300,
            eval_size: 100,
            test_size: 100,
            seed: 0,
            cue_strength: 1.0,
            templates: default_templates(),
        }
    }
}

impl ToyCorpusSpec {
    pub fn validate(&self) -> Result<(), ToygenError> {
        // The negated form also rejects NaN.
        if !(self.cue_strength > 0.5 && self.cue_strength <= 1.0) {
            return Err(ToygenError::Spec(format!(
                "cue_strength must be in (0.5, 1], got {}",
                self.cue_strength
            )));
        }
        if self.train_size == 0 || self.eval_size == 0 || self.test_size == 0 {
            return Err(ToygenError::Spec("split sizes must be positive".to_string()));
        }
        if self.templates.len() != Label::ALL.len() {
            return Err(ToygenError::Spec(format!(
                "need one template set per label, got {}",
                self.templates.len()
            )));
        }
        let mut cues = Vec::new();
        for t in &self.templates {
            if tokenize(&t.cue) != [t.cue.clone()] {
                return Err(ToygenError::Spec(format!(
                    "cue {:?} must be a single lowercase word",
                    t.cue
                )));
            }
            if FILLERS.contains(&t.cue.as_str()) {
                return Err(ToygenError::Spec(format!(
                    "cue {:?} collides with a filler word",
                    t.cue
                )));
            }
            if cues.contains(&t.cue) {
                return Err(ToygenError::Spec(format!("duplicate cue {:?}", t.cue)));
            }
            cues.push(t.cue.clone());
            if t.why.is_empty() || t.free_text.is_empty() {
                return Err(ToygenError::Spec(format!(
                    "cue {:?} needs at least one template of each kind",
                    t.cue
                )));
            }
        }
        Ok(())
    }
}

/// One generated example carrying both rationale variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyExample {
    pub base: NliExample,
    pub five_w: String,
    pub free_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyCorpus {
    pub train: Vec<ToyExample>,
    pub eval: Vec<ToyExample>,
    pub test: Vec<ToyExample>,
}

impl ToyCorpus {
    pub fn splits(&self) -> [(&'static str, &[ToyExample]); 3] {
        [
            ("train", self.train.as_slice()),
            ("eval", self.eval.as_slice()),
            ("test", self.test.as_slice()),
        ]
    }
}

/// Strip the rationales.
pub fn plain_examples(examples: &[ToyExample]) -> Vec<NliExample> {
    examples.iter().map(|e| e.base.clone()).collect()
}

/// Project one rationale variant into augmented-corpus form.
pub fn augmented_examples(examples: &[ToyExample], kind: RationaleKind) -> Vec<AugmentedExample> {
    examples
        .iter()
        .map(|e| {
            let rationale = match kind {
                RationaleKind::FiveW => e.five_w.clone(),
                RationaleKind::FreeText => e.free_text.clone(),
            };
            AugmentedExample {
                uid: e.base.uid.clone(),
                premise: e.base.premise.clone(),
                hypothesis: e.base.hypothesis.clone(),
                label: e.base.label,
                rationale,
                rationale_kind: kind,
            }
        })
        .collect()
}

/// Generate the three splits. Deterministic given the spec; each split draws
/// from its own stream, so resizing one split leaves the others unchanged.
pub fn make_toy_corpus(spec: &ToyCorpusSpec) -> Result<ToyCorpus, ToygenError> {
    spec.validate()?;
    Ok(ToyCorpus {
        train: generate_split(spec, "train", spec.train_size, 0),
        eval: generate_split(spec, "eval", spec.eval_size, 1),
        test: generate_split(spec, "test", spec.test_size, 2),
    })
}

fn generate_split(
    spec: &ToyCorpusSpec,
    split: &str,
    size: usize,
    stream: u64,
) -> Vec<ToyExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(stream));
    let mut out = Vec::with_capacity(size);
    for i in 0..size {
        // Round-robin labels keep every split balanced within one.
        let label = Label::ALL[i % Label::ALL.len()];
        let templates = &spec.templates[i % Label::ALL.len()];
        let cued = rng.gen_bool(spec.cue_strength);
        let marker = if cued {
            templates.cue.as_str()
        } else {
            FILLERS.choose(&mut rng).unwrap()
        };

        let subject = SUBJECTS.choose(&mut rng).unwrap();
        let verb = VERBS.choose(&mut rng).unwrap();
        let object = OBJECTS.choose(&mut rng).unwrap();
        let premise = frame_sentence(&mut rng, subject, marker, verb, object);
        let verb2 = VERBS.choose(&mut rng).unwrap();
        let object2 = OBJECTS.choose(&mut rng).unwrap();
        let hypothesis = frame_sentence(&mut rng, subject, marker, verb2, object2);

        let why = pick_template(&mut rng, &templates.why, marker, cued);
        let five_w = format!("Who: {subject}\nWhat: {verb} {object}\nWhy: {why}");
        let free_text = pick_template(&mut rng, &templates.free_text, marker, cued);

        out.push(ToyExample {
            base: NliExample {
                uid: format!("toy-{split}-{i:04}"),
                premise,
                hypothesis,
                label,
            },
            five_w,
            free_text,
        });
    }
    out
}

/// Two frames so the cue is not positionally fixed.
fn frame_sentence(
    rng: &mut ChaCha8Rng,
    subject: &str,
    marker: &str,
    verb: &str,
    object: &str,
) -> String {
    if rng.gen_bool(0.5) {
        format!("{subject} {marker} {verb} {object}")
    } else {
        format!("{subject} {verb} {object} {marker}")
    }
}

fn pick_template(rng: &mut ChaCha8Rng, variants: &[String], marker: &str, cued: bool) -> String {
    if cued {
        variants
            .choose(rng)
            .unwrap()
            .replace("{cue}", marker)
    } else {
        "no deciding word appears".to_string()
    }
}

/// Read a label off the cue word alone; None when no cue is present. With
/// cue strength 1 this recovers every label by construction.
pub fn cue_label(spec: &ToyCorpusSpec, premise: &str, hypothesis: &str) -> Option<Label> {
    let text = format!("{premise} {hypothesis}");
    let tokens = tokenize(&text);
    for (label, templates) in Label::ALL.iter().zip(&spec.templates) {
        if tokens.iter().any(|t| t == &templates.cue) {
            return Some(*label);
        }
    }
    None
}

/// Write the nine dataset files: one plain and two augmented variants per
/// split, named `<dataset>.<split>.jsonl`.
pub fn write_corpus(corpus: &ToyCorpus, dir: impl AsRef<Path>) -> Result<(), ToygenError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ToygenError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (split, examples) in corpus.splits() {
        let stem = |kind: DatasetKind| dir.join(format!("{}.{split}.jsonl", kind.as_str()));
        corpus::save_examples(stem(DatasetKind::Baseline), &plain_examples(examples))?;
        corpus::save_augmented(
            stem(DatasetKind::FiveW),
            &augmented_examples(examples, RationaleKind::FiveW),
        )?;
        corpus::save_augmented(
            stem(DatasetKind::FreeText),
            &augmented_examples(examples, RationaleKind::FreeText),
        )?;
    }
    Ok(())
}
