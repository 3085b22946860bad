//! Weakly supervised domain adaptation for ordinal multi-instance bags.
//!
//! A bag is a set of feature-vector instances carrying a single bag-level
//! label equal to the most severe instance label it contains. The source
//! domain provides instance- and bag-level labels; the target domain
//! provides bag-level labels only. This crate trains a source model
//! (encoder, k-rank instance head, aggregation tokens, bag heads) and then
//! adapts a target encoder with adversarial alignment, bag classification
//! through frozen aggregation tokens, and a max-severity triplet loss that
//! pulls over-predicted target instances toward the prototype of their bag
//! label class.
//!
//! Everything runs on plain `f64` vectors: no GPU, no external ML
//! framework. Gradients come from a small reverse-mode tape
//! ([`numerics::tape`]) and are verified against central differences
//! ([`numerics::grad_check`]).

pub mod contract;
pub mod datamodel;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
