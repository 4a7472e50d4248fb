//! Randomness and scoring used by augmentation and training.

mod distributions;
mod rng;
mod similarity;
mod spans;
mod tfidf;

pub use distributions::{beta_sample, categorical_sample};
pub use rng::{RngStream, ALGORITHM};
pub use similarity::{
    cooccurrence_embeddings, load_embeddings, save_embeddings, similarity_weight, SimilarityIndex,
    TOP_K,
};
pub use spans::{build_span_table, SpanEntry, SpanTable};
pub use tfidf::{build_tfidf, importance_weights, importance_weights_from_scores, TfidfTable};
