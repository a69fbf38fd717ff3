//! Zero-shot long-text style transfer with hierarchical template repositories.
//!
//! The pipeline runs in two phases. Phase 1 ingests reference-style documents
//! and builds two template repositories: a sentence-level repository obtained
//! by density-based clustering of sentence embeddings, and a paragraph-level
//! repository grown by threshold-gated insertion of paragraph embeddings.
//! Phase 2 rewrites a source document sentence by sentence: each sentence is
//! matched against the sentence repository, each paragraph against the
//! paragraph repository, and a generation backend rewrites the text
//! conditioned on both matches before a refinement pass restores
//! inter-sentence flow.
//!
//! All model access (embedding, generation, judging) goes through pluggable
//! backends. Every backend ships with a deterministic offline mock, so full
//! pipeline runs are byte-reproducible without network access.
//!
//! Modules map onto pipeline stages:
//!
//! - [`corpus`] — document ingestion, segmentation, reference sampling
//! - [`embedding`] — encoder backends and vector math
//! - [`templates`] — repository construction and persistence
//! - [`matching`] — multi-granular template lookup
//! - [`transfer`] — template-conditioned generation and pipeline variants
//! - [`evaluation`] — tri-axial scoring and adversarial pairwise judging

pub mod corpus;
pub mod embedding;
pub mod evaluation;
mod fsutil;
pub mod matching;
pub mod numeric;
pub mod templates;
pub mod transfer;

/// Scalar type used by the concrete pipeline. The low-level kernels in
/// [`numeric`] are generic over `num_traits::Float`; everything above them
/// is instantiated at this alias.
pub type Scalar = f64;
