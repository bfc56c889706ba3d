//! Rationale-augmented NLI distillation at desk scale.
//!
//! The crate takes a plain natural-language-inference corpus, asks a teacher
//! chat model to produce a rationale for every example, and fine-tunes a
//! small from-scratch encoder-decoder on targets that carry both the label
//! and the rationale. A weighted split loss controls how much of the training
//! signal each output region receives, and a benchmarking grid sweeps the
//! weighting against learning rates for two rationale styles.
//!
//! The library is organised so that each capability is runnable on its own;
//! see `examples/` for one entry point per capability:
//!
//! - `load_and_serialize` - corpus I/O and the text layouts fed to the model
//! - `build_prompts` - teacher prompt construction and 5-W parsing
//! - `augment_fixture` - offline augmentation against a recorded teacher
//! - `tokenize_and_bleu` - vocabulary building and corpus BLEU
//! - `train_toy` - one training run on a synthetic corpus
//! - `grad_check` - analytic gradients vs finite differences
//! - `grid_toy` - the full sweep plus the report emitter
//!
//! A thin `rationli` binary exposes the same capabilities as subcommands
//! (`augment`, `toygen`, `train`, `grid`, `report`) for shell pipelines.

pub mod bench;
pub mod corpus;
pub mod seq2seq;
pub mod teacher;
pub mod textkit;
pub mod trainer;
