//! Dense vector embeddings and the math every other module consumes.
//!
//! Embeddings carry provenance (`backend_id`); operations refuse to mix
//! vectors from different backends or of different dimensions.

pub mod backend;

pub use backend::{
    embed_sentences, make_embedding_backend, EmbeddingBackend, EmbeddingBackendSpec,
    MockEmbeddingBackend, RemoteEmbeddingBackend,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("backend mismatch: expected '{expected}', got '{actual}'")]
    BackendMismatch { expected: String, actual: String },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("cannot aggregate an empty list of embeddings")]
    EmptyList,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding job of {got} texts exceeds the configured limit of {limit}")]
    JobTooLarge { got: usize, limit: usize },
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
}

/// A fixed-dimension real vector tagged with the backend that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<Scalar>,
    backend_id: String,
}

impl Embedding {
    /// Build an embedding, rejecting empty or non-finite vectors.
    pub fn new(values: Vec<Scalar>, backend_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self {
            values,
            backend_id: backend_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Check that two embeddings may be compared or aggregated together.
    pub fn check_compatible(&self, other: &Embedding) -> Result<(), EmbeddingError> {
        if self.backend_id != other.backend_id {
            return Err(EmbeddingError::BackendMismatch {
                expected: self.backend_id.clone(),
                actual: other.backend_id.clone(),
            });
        }
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<Scalar, EmbeddingError> {
    a.check_compatible(b)?;
    numeric::cosine(a.values(), b.values()).ok_or(EmbeddingError::ZeroVector)
}

/// Euclidean (L2) distance.
pub fn euclidean_distance(a: &Embedding, b: &Embedding) -> Result<Scalar, EmbeddingError> {
    a.check_compatible(b)?;
    Ok(numeric::euclidean(a.values(), b.values()))
}

/// Component-wise arithmetic mean. The result is intentionally not
/// re-normalized.
pub fn mean_pool(embs: &[Embedding]) -> Result<Embedding, EmbeddingError> {
    let first = embs.first().ok_or(EmbeddingError::EmptyList)?;
    for e in embs.iter().skip(1) {
        first.check_compatible(e)?;
    }
    let rows: Vec<&[Scalar]> = embs.iter().map(|e| e.values()).collect();
    let values = numeric::mean(&rows).expect("non-empty by construction");
    Ok(Embedding {
        values,
        backend_id: first.backend_id.clone(),
    })
}

/// Strategy for collapsing a paragraph's sentence embeddings into one
/// paragraph vector. Mean pooling is the default; a remote hierarchical
/// encoder can be slotted in behind this trait.
pub trait ParagraphAggregator: Send + Sync {
    fn aggregate(&self, sentence_embeddings: &[Embedding]) -> Result<Embedding, EmbeddingError>;
}

/// Component-wise mean over the paragraph's sentence vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanPoolAggregator;

impl ParagraphAggregator for MeanPoolAggregator {
    fn aggregate(&self, sentence_embeddings: &[Embedding]) -> Result<Embedding, EmbeddingError> {
        mean_pool(sentence_embeddings)
    }
}
