//! Dense token vocabulary with fixed special ids.
//!
//! Ids are assigned in three bands: structural specials first, then the three
//! label words (always present so a classifier head is never out of
//! vocabulary), then content tokens ordered by descending frequency with
//! lexicographic tie-break. The ordering makes vocabulary construction a pure
//! function of its inputs.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LABEL_RATIONALE_SEPARATOR};
use crate::textkit::tokenize;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SEP: u32 = 4;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";
const BOS_TOKEN: &str = "<bos>";
const EOS_TOKEN: &str = "<eos>";

/// Number of reserved ids before content tokens start: the five structural
/// specials plus the three label words.
pub const RESERVED: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid vocabulary file: {0}")]
    Format(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

// On-disk form: the ordered token list plus a named map of the special ids,
// so readers in other languages need not hard-code the band layout.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    specials: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from an iterator of texts. Content tokens must appear at least
    /// `min_freq` times; specials and label words are always included.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Vocabulary {
        let mut tokens: Vec<String> = vec![
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            LABEL_RATIONALE_SEPARATOR.to_string(),
        ];
        tokens.extend(Label::ALL.iter().map(|l| l.word().to_string()));
        debug_assert_eq!(tokens.len(), RESERVED);

        let mut freq: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for token in tokenize(text) {
                *freq.entry(token).or_insert(0) += 1;
            }
        }
        for reserved in &tokens {
            freq.remove(reserved);
        }
        let mut content: Vec<(String, usize)> =
            freq.into_iter().filter(|(_, n)| *n >= min_freq).collect();
        content.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(content.into_iter().map(|(t, _)| t));

        Vocabulary::from_tokens(tokens).expect("constructed token list is valid")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, VocabError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id as u32).is_some() {
                return Err(VocabError::Format(format!("duplicate token {token:?}")));
            }
        }
        let vocab = Vocabulary { tokens, index };
        for (expected, id) in [
            (PAD_TOKEN, PAD),
            (UNK_TOKEN, UNK),
            (BOS_TOKEN, BOS),
            (EOS_TOKEN, EOS),
            (LABEL_RATIONALE_SEPARATOR, SEP),
        ] {
            if vocab.tokens.get(id as usize).map(String::as_str) != Some(expected) {
                return Err(VocabError::Format(format!(
                    "special token {expected:?} missing from id {id}"
                )));
            }
        }
        for label in Label::ALL {
            if vocab.id(label.word()).is_none() {
                return Err(VocabError::Format(format!(
                    "label word {:?} missing",
                    label.word()
                )));
            }
        }
        Ok(vocab)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn label_id(&self, label: Label) -> u32 {
        self.id(label.word()).expect("label words are always present")
    }

    /// Tokenize and map to ids, with unknown tokens mapped to `<unk>` and a
    /// trailing `<eos>` appended. Never emits `<pad>` or `<bos>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = tokenize(text)
            .into_iter()
            .map(|t| self.id(&t).unwrap_or(UNK))
            .collect();
        ids.push(EOS);
        ids
    }

    /// Render ids back to space-joined text. Structural specials (`<pad>`,
    /// `<bos>`, `<eos>`) are dropped; `<unk>` keeps its literal surface so
    /// lossy positions stay visible.
    pub fn decode(&self, ids: &[u32]) -> Result<String, VocabError> {
        let mut words = Vec::new();
        for &id in ids {
            if id as usize >= self.tokens.len() {
                return Err(VocabError::IdOutOfRange {
                    id,
                    size: self.tokens.len(),
                });
            }
            if id == PAD || id == BOS || id == EOS {
                continue;
            }
            words.push(self.tokens[id as usize].as_str());
        }
        Ok(words.join(" "))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        let path = path.as_ref();
        let file = VocabFile {
            tokens: self.tokens.clone(),
            specials: HashMap::from([
                ("pad".to_string(), PAD),
                ("unk".to_string(), UNK),
                ("bos".to_string(), BOS),
                ("eos".to_string(), EOS),
                ("separator".to_string(), SEP),
            ]),
        };
        let json = serde_json::to_string_pretty(&file).expect("vocab serializes");
        std::fs::write(path, json).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: VocabFile =
            serde_json::from_str(&text).map_err(|e| VocabError::Format(e.to_string()))?;
        for (name, expected) in [
            ("pad", PAD),
            ("unk", UNK),
            ("bos", BOS),
            ("eos", EOS),
            ("separator", SEP),
        ] {
            if file.specials.get(name) != Some(&expected) {
                return Err(VocabError::Format(format!(
                    "special {name:?} must map to id {expected}"
                )));
            }
        }
        Vocabulary::from_tokens(file.tokens)
    }
}
