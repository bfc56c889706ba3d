//! Text processing for the student model: word-level tokenization, a dense
//! vocabulary with fixed special tokens, and corpus BLEU for rationale
//! quality.

pub mod bleu;
pub mod vocab;

pub use bleu::{bleu_corpus, bleu_sentence, BleuReport};
pub use vocab::{VocabError, Vocabulary};

/// Lowercased word-level tokenization. Whitespace separates words; within a
/// word, runs of alphanumeric and runs of non-alphanumeric characters become
/// separate tokens, so punctuation never sticks to a word ("runs." is two
/// tokens) while multi-character punctuation stays whole ("!!" is one).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        let mut alnum_run = false;
        for ch in word.chars() {
            let alnum = ch.is_alphanumeric();
            if !current.is_empty() && alnum != alnum_run {
                tokens.push(std::mem::take(&mut current));
            }
            alnum_run = alnum;
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}
