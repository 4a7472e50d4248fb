//! Semi-supervised training for sequence tagging and span classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: tag/label vocabularies, IOB handling, JSONL I/O, batching.
//! - [`sampling`]: seeded RNG streams, Beta/categorical samplers, TF-IDF,
//!   similarity neighbourhoods and span tables.
//! - [`augment`]: the token- and span-level augmentation operators, with
//!   edit scripts and original/augmented alignment.
//! - [`model`]: a small transformer encoder with hand-written backward
//!   passes, task heads, losses, Adam, checkpoints and gradient checking.
//! - [`mixda`]: interpolation of original and augmented encodings.
//! - [`mixmatch`]: label guessing, sharpening and labeled/unlabeled mixing.
//! - [`harness`]: training loop, metrics, synthetic corpora, experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod augment;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod mixda;
pub mod mixmatch;
pub mod model;
pub mod sampling;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
