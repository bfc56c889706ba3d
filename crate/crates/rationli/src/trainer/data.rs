//! Corpus examples encoded into id space and batched.
//!
//! Targets keep a fixed structure the loss spans index into: plain targets
//! are `label <eos>`, augmented targets are `label | rationale... <eos>` with
//! the separator always at position 1. Batches pad on the right, so spans
//! survive batching unchanged.

use ndarray::Array2;

use crate::corpus::{
    label_rationale_target, label_target, serialize_input, AugmentedExample, NliExample,
};
use crate::textkit::vocab::{Vocabulary, PAD, SEP};

use super::loss::RegionSpans;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("example {uid}: encoded {what} length {len} exceeds max_len {max_len}")]
    TooLong {
        uid: String,
        what: &'static str,
        len: usize,
        max_len: usize,
    },
    #[error("example {uid}: malformed target: {message}")]
    BadTarget { uid: String, message: String },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedExample {
    pub uid: String,
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub spans: RegionSpans,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedDataset {
    pub examples: Vec<PreparedExample>,
    /// True when every target carries a rationale region.
    pub has_rationales: bool,
}

/// Vocabulary over a plain training split: every serialized input and target.
pub fn build_vocab_plain(examples: &[NliExample], min_freq: usize) -> Vocabulary {
    let texts: Vec<String> = examples
        .iter()
        .flat_map(|ex| {
            [
                serialize_input(&ex.premise, &ex.hypothesis),
                label_target(ex.label),
            ]
        })
        .collect();
    Vocabulary::build(texts.iter().map(String::as_str), min_freq)
}

/// Vocabulary over an augmented training split, rationales included.
pub fn build_vocab_augmented(examples: &[AugmentedExample], min_freq: usize) -> Vocabulary {
    let texts: Vec<String> = examples
        .iter()
        .flat_map(|ex| {
            [
                serialize_input(&ex.premise, &ex.hypothesis),
                label_rationale_target(ex.label, &ex.rationale),
            ]
        })
        .collect();
    Vocabulary::build(texts.iter().map(String::as_str), min_freq)
}

/// Encode label-only targets; the label span covers the whole sequence.
pub fn prepare_plain(
    examples: &[NliExample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<PreparedDataset, DataError> {
    if examples.is_empty() {
        return Err(DataError::Empty);
    }
    let mut prepared = Vec::with_capacity(examples.len());
    for ex in examples {
        let src = encode_src(ex, vocab, max_len)?;
        let tgt = vocab.encode(&label_target(ex.label));
        check_len(&ex.uid, "target", tgt.len(), max_len)?;
        let spans = RegionSpans {
            label: (0, tgt.len()),
            rationale: None,
        };
        prepared.push(PreparedExample {
            uid: ex.uid.clone(),
            src,
            tgt,
            spans,
        });
    }
    Ok(PreparedDataset {
        examples: prepared,
        has_rationales: false,
    })
}

/// Encode `label | rationale` targets with the split-loss span layout.
pub fn prepare_augmented(
    examples: &[AugmentedExample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<PreparedDataset, DataError> {
    if examples.is_empty() {
        return Err(DataError::Empty);
    }
    let mut prepared = Vec::with_capacity(examples.len());
    for ex in examples {
        let base = ex.base();
        let src = encode_src(&base, vocab, max_len)?;
        let tgt = vocab.encode(&label_rationale_target(ex.label, &ex.rationale));
        check_len(&ex.uid, "target", tgt.len(), max_len)?;
        if tgt.len() < 4 {
            return Err(DataError::BadTarget {
                uid: ex.uid.clone(),
                message: "needs label, separator, rationale, and <eos>".to_string(),
            });
        }
        if tgt[1] != SEP {
            return Err(DataError::BadTarget {
                uid: ex.uid.clone(),
                message: format!("separator expected at position 1, found id {}", tgt[1]),
            });
        }
        let spans = RegionSpans {
            label: (0, 1),
            rationale: Some((2, tgt.len())),
        };
        prepared.push(PreparedExample {
            uid: ex.uid.clone(),
            src,
            tgt,
            spans,
        });
    }
    Ok(PreparedDataset {
        examples: prepared,
        has_rationales: true,
    })
}

fn encode_src(
    ex: &NliExample,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<u32>, DataError> {
    let src = vocab.encode(&serialize_input(&ex.premise, &ex.hypothesis));
    check_len(&ex.uid, "input", src.len(), max_len)?;
    Ok(src)
}

fn check_len(uid: &str, what: &'static str, len: usize, max_len: usize) -> Result<(), DataError> {
    if len > max_len {
        return Err(DataError::TooLong {
            uid: uid.to_string(),
            what,
            len,
            max_len,
        });
    }
    Ok(())
}

/// One padded batch plus the metadata the loss and metrics need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub src: Array2<u32>,
    pub tgt: Array2<u32>,
    pub spans: Vec<RegionSpans>,
    /// Dataset indices of the rows, in row order.
    pub indices: Vec<usize>,
}

/// Split `order` into consecutive batches, padding rows to the longest
/// sequence in each batch.
pub fn make_batches(ds: &PreparedDataset, order: &[usize], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size > 0, "batch size must be positive");
    order
        .chunks(batch_size)
        .map(|chunk| {
            let src_width = chunk
                .iter()
                .map(|&i| ds.examples[i].src.len())
                .max()
                .expect("non-empty chunk");
            let tgt_width = chunk
                .iter()
                .map(|&i| ds.examples[i].tgt.len())
                .max()
                .expect("non-empty chunk");
            let mut src = Array2::from_elem((chunk.len(), src_width), PAD);
            let mut tgt = Array2::from_elem((chunk.len(), tgt_width), PAD);
            let mut spans = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                let ex = &ds.examples[i];
                for (col, &id) in ex.src.iter().enumerate() {
                    src[[row, col]] = id;
                }
                for (col, &id) in ex.tgt.iter().enumerate() {
                    tgt[[row, col]] = id;
                }
                spans.push(ex.spans);
            }
            Batch {
                src,
                tgt,
                spans,
                indices: chunk.to_vec(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, RationaleKind};
    use crate::textkit::vocab::EOS;

    fn plain_examples() -> Vec<NliExample> {
        vec![
            NliExample {
                uid: "a".to_string(),
                premise: "a dog runs fast".to_string(),
                hypothesis: "a dog moves".to_string(),
                label: Label::Entailment,
            },
            NliExample {
                uid: "b".to_string(),
                premise: "a cat sleeps".to_string(),
                hypothesis: "a cat runs fast".to_string(),
                label: Label::Contradiction,
            },
        ]
    }

    fn augmented_examples() -> Vec<AugmentedExample> {
        plain_examples()
            .into_iter()
            .map(|ex| AugmentedExample {
                uid: ex.uid.clone(),
                premise: ex.premise.clone(),
                hypothesis: ex.hypothesis.clone(),
                label: ex.label,
                rationale: "movement follows from running".to_string(),
                rationale_kind: RationaleKind::FreeText,
            })
            .collect()
    }

    #[test]
    fn plain_targets_are_label_then_eos() {
        let examples = plain_examples();
        let vocab = build_vocab_plain(&examples, 1);
        let ds = prepare_plain(&examples, &vocab, 64).unwrap();
        assert!(!ds.has_rationales);
        for (ex, prepared) in examples.iter().zip(&ds.examples) {
            assert_eq!(prepared.tgt, vec![vocab.label_id(ex.label), EOS]);
            assert_eq!(prepared.spans.label, (0, 2));
            assert_eq!(prepared.spans.rationale, None);
        }
    }

    #[test]
    fn augmented_targets_have_separator_at_one() {
        let examples = augmented_examples();
        let vocab = build_vocab_augmented(&examples, 1);
        let ds = prepare_augmented(&examples, &vocab, 64).unwrap();
        assert!(ds.has_rationales);
        for prepared in &ds.examples {
            assert_eq!(prepared.tgt[1], SEP);
            assert_eq!(*prepared.tgt.last().unwrap(), EOS);
            assert_eq!(prepared.spans.label, (0, 1));
            assert_eq!(prepared.spans.rationale, Some((2, prepared.tgt.len())));
        }
        // Rationale words entered the vocabulary, so no <unk> appears.
        assert!(ds.examples[0].tgt.iter().all(|&id| id != 1));
    }

    #[test]
    fn length_limits_are_enforced() {
        let examples = plain_examples();
        let vocab = build_vocab_plain(&examples, 1);
        let err = prepare_plain(&examples, &vocab, 5).unwrap_err();
        assert!(matches!(err, DataError::TooLong { what: "input", .. }));
    }

    #[test]
    fn empty_rationale_is_a_bad_target() {
        let mut examples = augmented_examples();
        examples[0].rationale = " ".to_string();
        let vocab = build_vocab_augmented(&examples, 1);
        let err = prepare_augmented(&examples, &vocab, 64).unwrap_err();
        assert!(matches!(err, DataError::BadTarget { .. }));
    }

    #[test]
    fn batches_pad_trailing_and_follow_order() {
        let examples = augmented_examples();
        let vocab = build_vocab_augmented(&examples, 1);
        let ds = prepare_augmented(&examples, &vocab, 64).unwrap();
        let batches = make_batches(&ds, &[1, 0], 1);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].indices, vec![1]);
        assert_eq!(batches[1].indices, vec![0]);

        let joint = make_batches(&ds, &[0, 1], 2);
        assert_eq!(joint.len(), 1);
        let batch = &joint[0];
        let widths: Vec<usize> = ds.examples.iter().map(|e| e.src.len()).collect();
        assert_eq!(batch.src.ncols(), *widths.iter().max().unwrap());
        // Shorter rows end in padding; real prefixes are intact.
        for (row, ex) in ds.examples.iter().enumerate() {
            for (col, &id) in ex.src.iter().enumerate() {
                assert_eq!(batch.src[[row, col]], id);
            }
            for col in ex.src.len()..batch.src.ncols() {
                assert_eq!(batch.src[[row, col]], PAD);
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let vocab = build_vocab_plain(&[], 1);
        assert!(matches!(
            prepare_plain(&[], &vocab, 64),
            Err(DataError::Empty)
        ));
    }
}
