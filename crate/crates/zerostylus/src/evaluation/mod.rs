//! Evaluation machinery: the tri-axial metric (style consistency, content
//! preservation, expression quality) with cohort min-max normalization, and
//! the adversarial pairwise protocol with position-bias mitigation and
//! δ-margin win rates.

pub mod adversarial;
pub mod judge;
pub mod report;

pub use adversarial::{
    adversarial_run, pairwise_preference, win_rate, AdversarialReport, AdversarialSample,
    PairwiseRecord, WinLossTie,
};
pub use judge::{
    make_judge_backend, JudgeBackend, JudgeBackendSpec, JudgeMargins, MockJudgeBackend,
};
pub use report::{triaxial_run, SampleRow, SystemAggregate, TriAxialReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingBackend, EmbeddingError};
use crate::numeric;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot normalize an empty cohort")]
    EmptyCohort,
    #[error("style consistency needs at least one reference paragraph")]
    EmptyReferenceSet,
    #[error("{what} {value} is outside the expected range {range}")]
    RangeError {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("no judge backends configured")]
    NoJudgesConfigured,
    #[error("judge backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid judge spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Which scorer produced each axis of a tri-axial score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisProvenance {
    pub style: String,
    pub content: String,
    pub expression: String,
}

/// One sample's (style consistency, content preservation, expression
/// quality) triple. Raw scores live on their native scales; after
/// [`normalize_and_fuse`] every axis is on 0-10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriAxialScore {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub provenance: AxisProvenance,
}

impl TriAxialScore {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            provenance: AxisProvenance::default(),
        }
    }
}

/// `A = (X + Y + Z) / 3`.
pub fn average_score(v: &TriAxialScore) -> f64 {
    (v.x + v.y + v.z) / 3.0
}

/// Per-axis min-max normalization over the cohort, rescaled to 0-10. A
/// degenerate axis (all samples equal) maps every sample to 5.0.
pub fn normalize_and_fuse(raw_scores: &[TriAxialScore]) -> Result<Vec<TriAxialScore>, EvalError> {
    if raw_scores.is_empty() {
        return Err(EvalError::EmptyCohort);
    }
    let axis = |f: fn(&TriAxialScore) -> f64| -> Vec<f64> {
        numeric::min_max_rescale(&raw_scores.iter().map(f).collect::<Vec<_>>(), 0.0, 10.0)
    };
    let xs = axis(|s| s.x);
    let ys = axis(|s| s.y);
    let zs = axis(|s| s.z);
    Ok(raw_scores
        .iter()
        .enumerate()
        .map(|(i, s)| TriAxialScore {
            x: xs[i],
            y: ys[i],
            z: zs[i],
            provenance: s.provenance.clone(),
        })
        .collect())
}

/// Style consistency: highest paragraph-level embedding cosine between the
/// output and any reference paragraph.
pub fn score_style_consistency(
    output_para: &str,
    reference_paras: &[&str],
    backend: &dyn EmbeddingBackend,
) -> Result<f64, EvalError> {
    if reference_paras.is_empty() {
        return Err(EvalError::EmptyReferenceSet);
    }
    let mut texts = vec![output_para];
    texts.extend_from_slice(reference_paras);
    let embeddings = backend.embed(&texts)?;
    let (out_emb, ref_embs) = embeddings.split_first().expect("one output plus references");
    let mut best = f64::NEG_INFINITY;
    for r in ref_embs {
        best = best.max(cosine_similarity(out_emb, r)?);
    }
    Ok(best)
}

/// Pluggable semantic-similarity scorer (the BLEURT stand-in).
pub trait SemanticScorer: Send + Sync {
    fn id(&self) -> &str;
    /// Similarity in [0, 1].
    fn similarity(&self, a: &str, b: &str) -> Result<f64, EvalError>;
}

/// Offline scorer: token-level F1 over lowercase alphanumeric tokens
/// (multiset overlap).
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1Scorer;

impl SemanticScorer for TokenF1Scorer {
    fn id(&self) -> &str {
        "token-f1"
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, EvalError> {
        Ok(token_f1(a, b))
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn token_f1(a: &str, b: &str) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() || tb.is_empty() {
        return if ta.is_empty() && tb.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &ta {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0i64;
    for t in &tb {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / tb.len() as f64;
    let recall = overlap as f64 / ta.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Pluggable key-term extractor.
pub trait KeywordExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn keywords(&self, text: &str, top_k: usize) -> Vec<String>;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could", "do", "does",
    "for", "from", "had", "has", "have", "how", "if", "in", "is", "it", "its", "may", "might",
    "more", "most", "must", "no", "not", "of", "on", "or", "our", "should", "so", "such", "than",
    "that", "the", "their", "then", "these", "this", "those", "to", "too", "was", "we", "were",
    "what", "when", "where", "which", "while", "will", "with", "would",
];

/// Offline keyworder: top-k tokens by frequency excluding a stopword list,
/// ties broken lexicographically.
#[derive(Debug, Clone)]
pub struct FrequencyKeyworder {
    stopwords: BTreeSet<&'static str>,
}

impl Default for FrequencyKeyworder {
    fn default() -> Self {
        Self {
            stopwords: STOPWORDS.iter().copied().collect(),
        }
    }
}

impl KeywordExtractor for FrequencyKeyworder {
    fn id(&self) -> &str {
        "term-frequency"
    }

    fn keywords(&self, text: &str, top_k: usize) -> Vec<String> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for token in tokenize(text) {
            if !self.stopwords.contains(token.as_str()) {
                *counts.entry(token).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.into_iter().take(top_k).map(|(t, _)| t).collect()
    }
}

/// Content-preservation score plus the degenerate-path flags it raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentScore {
    pub value: f64,
    pub flags: Vec<String>,
}

/// Content preservation: `w * semantic + (1 - w) * keyword_recall`. A scorer
/// failure degrades to keywords only; an empty source keyword set counts as
/// vacuously retained. Both paths are flagged.
pub fn score_content_preservation(
    output_para: &str,
    source_para: &str,
    scorer: &dyn SemanticScorer,
    keyworder: &dyn KeywordExtractor,
    weight: f64,
    top_k: usize,
) -> ContentScore {
    let mut flags = Vec::new();
    let source_keywords = keyworder.keywords(source_para, top_k);
    let recall = if source_keywords.is_empty() {
        flags.push("vacuous_keyword_recall".to_string());
        1.0
    } else {
        let output_tokens: BTreeSet<String> = tokenize(output_para).into_iter().collect();
        let kept = source_keywords
            .iter()
            .filter(|k| output_tokens.contains(*k))
            .count();
        kept as f64 / source_keywords.len() as f64
    };
    match scorer.similarity(output_para, source_para) {
        Ok(semantic) => ContentScore {
            value: weight * semantic + (1.0 - weight) * recall,
            flags,
        },
        Err(e) => {
            log::warn!("semantic scorer failed: {e}; using keyword recall only");
            flags.push("semantic_scorer_failed".to_string());
            ContentScore {
                value: recall,
                flags,
            }
        }
    }
}

/// Expression quality: the judge's 0-10 naturalness rating. Empty output is
/// pinned to 0 and flagged; an out-of-range rating is a [`EvalError::RangeError`].
pub fn score_expression_quality(
    output_para: &str,
    judge: &dyn JudgeBackend,
) -> Result<(f64, Vec<String>), EvalError> {
    if output_para.trim().is_empty() {
        return Ok((0.0, vec!["empty_output".to_string()]));
    }
    let rating = judge.rate_naturalness(output_para)?;
    if !(0.0..=10.0).contains(&rating) {
        return Err(EvalError::RangeError {
            what: "naturalness rating",
            value: rating,
            range: "[0, 10]",
        });
    }
    Ok((rating, Vec::new()))
}
