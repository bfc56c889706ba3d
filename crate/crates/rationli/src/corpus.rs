//! NLI corpus records and their on-disk JSONL form.
//!
//! Two record shapes exist: plain examples (premise, hypothesis, label) and
//! augmented examples that additionally carry a teacher-written rationale.
//! Loading is strict: every malformed row is reported with its 1-based line
//! number, labels outside the three-class coding reject the file, and uids
//! must be unique. Blank lines are skipped so files may end with a newline.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Surface form separating the label region from the rationale region in a
/// combined target. Kept to a single word so the tokenizer maps it to one
/// token.
pub const LABEL_RATIONALE_SEPARATOR: &str = "|";

/// Three-way inference label, serialized as its integer code 0/1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn code(self) -> u8 {
        match self {
            Label::Entailment => 0,
            Label::Neutral => 1,
            Label::Contradiction => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            0 => Some(Label::Entailment),
            1 => Some(Label::Neutral),
            2 => Some(Label::Contradiction),
            _ => None,
        }
    }

    /// Lowercase surface word used in model targets and generated output.
    pub fn word(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }

    pub fn from_word(word: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.word() == word)
    }
}

impl TryFrom<i64> for Label {
    type Error = String;

    fn try_from(code: i64) -> Result<Self, Self::Error> {
        Label::from_code(code).ok_or_else(|| format!("label code must be 0, 1, or 2, got {code}"))
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.code()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Which teacher prompt produced a rationale: structured 5-W answers or a
/// free-text justification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleKind {
    FiveW,
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliExample {
    pub uid: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub uid: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub rationale: String,
    pub rationale_kind: RationaleKind,
}

impl AugmentedExample {
    pub fn base(&self) -> NliExample {
        NliExample {
            uid: self.uid.clone(),
            premise: self.premise.clone(),
            hypothesis: self.hypothesis.clone(),
            label: self.label,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: label code must be 0, 1, or 2, got {code}")]
    LabelCode { line: usize, code: i64 },
    #[error("line {line}: duplicate uid {uid:?}")]
    DuplicateUid { line: usize, uid: String },
    #[error("line {line}: rationale is empty")]
    EmptyRationale { line: usize },
}

// Raw mirror structs keep the label an integer so range violations surface as
// a dedicated error instead of a generic parse failure.
#[derive(Deserialize)]
struct RawExample {
    uid: String,
    premise: String,
    hypothesis: String,
    label: i64,
}

#[derive(Deserialize)]
struct RawAugmented {
    uid: String,
    premise: String,
    hypothesis: String,
    label: i64,
    rationale: String,
    rationale_kind: RationaleKind,
}

// Shared line loop: skip blank lines, convert each remaining line, and
// reject uid reuse at the line where the duplicate appears.
fn parse_lines<T, R, F>(reader: R, mut convert: F) -> Result<Vec<T>, CorpusError>
where
    R: BufRead,
    F: FnMut(usize, &str) -> Result<(String, T), CorpusError>,
{
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (uid, record) = convert(line_no, &line)?;
        if !seen.insert(uid.clone()) {
            return Err(CorpusError::DuplicateUid { line: line_no, uid });
        }
        out.push(record);
    }
    Ok(out)
}

/// Parse plain examples from JSONL, one object per non-blank line.
pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<NliExample>, CorpusError> {
    parse_lines(reader, |line_no, line| {
        let raw: RawExample =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let label = Label::from_code(raw.label).ok_or(CorpusError::LabelCode {
            line: line_no,
            code: raw.label,
        })?;
        Ok((
            raw.uid.clone(),
            NliExample {
                uid: raw.uid,
                premise: raw.premise,
                hypothesis: raw.hypothesis,
                label,
            },
        ))
    })
}

/// Parse augmented examples from JSONL; rationales must be non-empty.
pub fn read_augmented<R: BufRead>(reader: R) -> Result<Vec<AugmentedExample>, CorpusError> {
    parse_lines(reader, |line_no, line| {
        let raw: RawAugmented =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let label = Label::from_code(raw.label).ok_or(CorpusError::LabelCode {
            line: line_no,
            code: raw.label,
        })?;
        if raw.rationale.trim().is_empty() {
            return Err(CorpusError::EmptyRationale { line: line_no });
        }
        Ok((
            raw.uid.clone(),
            AugmentedExample {
                uid: raw.uid,
                premise: raw.premise,
                hypothesis: raw.hypothesis,
                label,
                rationale: raw.rationale,
                rationale_kind: raw.rationale_kind,
            },
        ))
    })
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<NliExample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_examples(BufReader::new(file))
}

pub fn load_augmented(path: impl AsRef<Path>) -> Result<Vec<AugmentedExample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_augmented(BufReader::new(file))
}

fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    records: &[T],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        let json = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{json}").map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

pub fn save_examples(
    path: impl AsRef<Path>,
    examples: &[NliExample],
) -> Result<(), CorpusError> {
    write_jsonl(path, examples)
}

pub fn save_augmented(
    path: impl AsRef<Path>,
    examples: &[AugmentedExample],
) -> Result<(), CorpusError> {
    write_jsonl(path, examples)
}

/// Model input text: both sentences on one line behind field markers.
pub fn serialize_input(premise: &str, hypothesis: &str) -> String {
    format!("premise: {premise} hypothesis: {hypothesis}")
}

/// Target for label-only training: just the surface word.
pub fn label_target(label: Label) -> String {
    label.word().to_string()
}

/// Target for combined training: label word, separator, rationale.
pub fn label_rationale_target(label: Label, rationale: &str) -> String {
    format!("{} {LABEL_RATIONALE_SEPARATOR} {rationale}", label.word())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_jsonl() -> &'static str {
        concat!(
            r#"{"uid":"a1","premise":"A dog runs.","hypothesis":"An animal moves.","label":0}"#,
            "\n",
            r#"{"uid":"a2","premise":"A dog runs.","hypothesis":"The dog is red.","label":1}"#,
            "\n\n",
            r#"{"uid":"a3","premise":"A dog runs.","hypothesis":"The dog sleeps.","label":2}"#,
            "\n",
        )
    }

    #[test]
    fn label_codes_round_trip() {
        for label in Label::ALL {
            assert_eq!(Label::from_code(label.code() as i64), Some(label));
            assert_eq!(Label::from_word(label.word()), Some(label));
        }
        assert_eq!(Label::from_code(3), None);
        assert_eq!(Label::from_code(-1), None);
    }

    #[test]
    fn label_words_are_lowercase() {
        for label in Label::ALL {
            let word = label.word();
            assert_eq!(word, word.to_lowercase());
            assert!(!word.contains(' '));
        }
    }

    #[test]
    fn reads_examples_and_skips_blank_lines() {
        let examples = read_examples(Cursor::new(sample_jsonl())).unwrap();
        assert_eq!(examples.len(), 3);
        assert_eq!(examples[0].uid, "a1");
        assert_eq!(examples[0].label, Label::Entailment);
        assert_eq!(examples[2].label, Label::Contradiction);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = format!("{}\nnot json\n", sample_jsonl().lines().next().unwrap());
        let err = read_examples(Cursor::new(text)).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_is_a_dedicated_error() {
        let text = r#"{"uid":"x","premise":"p","hypothesis":"h","label":7}"#;
        let err = read_examples(Cursor::new(text)).unwrap_err();
        match err {
            CorpusError::LabelCode { line, code } => {
                assert_eq!(line, 1);
                assert_eq!(code, 7);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_uid_is_rejected() {
        let text = concat!(
            r#"{"uid":"same","premise":"p","hypothesis":"h","label":0}"#,
            "\n",
            r#"{"uid":"same","premise":"q","hypothesis":"i","label":1}"#,
        );
        let err = read_examples(Cursor::new(text)).unwrap_err();
        match err {
            CorpusError::DuplicateUid { line, uid } => {
                assert_eq!(line, 2);
                assert_eq!(uid, "same");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn augmented_round_trip_through_files() {
        let examples = vec![
            AugmentedExample {
                uid: "r1".to_string(),
                premise: "A man naps.".to_string(),
                hypothesis: "Someone rests.".to_string(),
                label: Label::Entailment,
                rationale: "Who: a man\nWhat: naps\nWhen: N/A\nWhere: N/A\nWhy: N/A"
                    .to_string(),
                rationale_kind: RationaleKind::FiveW,
            },
            AugmentedExample {
                uid: "r2".to_string(),
                premise: "A man naps.".to_string(),
                hypothesis: "Someone rests.".to_string(),
                label: Label::Entailment,
                rationale: "Napping is a form of resting.".to_string(),
                rationale_kind: RationaleKind::FreeText,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aug.jsonl");
        save_augmented(&path, &examples).unwrap();
        let loaded = load_augmented(&path).unwrap();
        assert_eq!(loaded, examples);
    }

    #[test]
    fn augmented_rejects_empty_rationale_and_bad_kind() {
        let empty = r#"{"uid":"x","premise":"p","hypothesis":"h","label":0,"rationale":"  ","rationale_kind":"free_text"}"#;
        match read_augmented(Cursor::new(empty)).unwrap_err() {
            CorpusError::EmptyRationale { line } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        let bad_kind = r#"{"uid":"x","premise":"p","hypothesis":"h","label":0,"rationale":"r","rationale_kind":"poem"}"#;
        match read_augmented(Cursor::new(bad_kind)).unwrap_err() {
            CorpusError::Malformed { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("poem"), "message was {message:?}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn input_serialization_is_exact() {
        assert_eq!(
            serialize_input("A dog runs.", "An animal moves."),
            "premise: A dog runs. hypothesis: An animal moves."
        );
    }

    #[test]
    fn target_layouts_are_exact() {
        assert_eq!(label_target(Label::Neutral), "neutral");
        assert_eq!(
            label_rationale_target(Label::Contradiction, "The claims conflict."),
            "contradiction | The claims conflict."
        );
    }
}
