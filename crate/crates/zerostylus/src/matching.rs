//! Multi-granular template matching: argmax cosine similarity into the
//! sentence repository, argmin euclidean distance into the paragraph
//! repository. Ties always break toward the smallest template id, so results
//! do not depend on repository iteration order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{
    cosine_similarity, euclidean_distance, mean_pool, Embedding, EmbeddingBackend, EmbeddingError,
};
use crate::corpus::Paragraph;
use crate::templates::{ParagraphRepo, SentenceRepo};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("cannot match against an empty {0} repository")]
    EmptyRepo(&'static str),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Best sentence-template match for one source sentence, with the runner-up
/// kept for confidence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub sent_id: String,
    pub template_id: usize,
    /// Cosine similarity of the winning template.
    pub score: Scalar,
    pub runner_up_id: Option<usize>,
    /// Winner score minus runner-up score; 0 for single-template repos.
    pub margin: Scalar,
}

/// Best paragraph-template match for one source paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphMatch {
    pub para_id: String,
    pub template_id: usize,
    pub distance: Scalar,
}

/// Highest cosine similarity wins; exact ties go to the smaller template id.
pub fn match_sentence(
    repo: &SentenceRepo,
    sent_id: &str,
    e_src: &Embedding,
) -> Result<MatchResult, MatchError> {
    if repo.is_empty() {
        return Err(MatchError::EmptyRepo("sentence"));
    }
    let mut best: Option<(Scalar, usize)> = None;
    let mut runner: Option<(Scalar, usize)> = None;
    for t in &repo.templates {
        let score = cosine_similarity(e_src, &t.centroid)?;
        let candidate = (score, t.template_id);
        match best {
            None => best = Some(candidate),
            Some(b) => {
                if beats_similarity(candidate, b) {
                    runner = best;
                    best = Some(candidate);
                } else if runner.map_or(true, |r| beats_similarity(candidate, r)) {
                    runner = Some(candidate);
                }
            }
        }
    }
    let (score, template_id) = best.expect("repo is non-empty");
    Ok(MatchResult {
        sent_id: sent_id.to_string(),
        template_id,
        score,
        runner_up_id: runner.map(|(_, id)| id),
        margin: runner.map_or(0.0, |(s, _)| score - s),
    })
}

// Candidate ordering for similarity argmax: higher score wins, equal scores
// prefer the smaller id.
fn beats_similarity(a: (Scalar, usize), b: (Scalar, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Lowest euclidean distance wins; exact ties go to the smaller template id.
pub fn match_paragraph(
    repo: &ParagraphRepo,
    para_id: &str,
    e_p_src: &Embedding,
) -> Result<ParagraphMatch, MatchError> {
    if repo.is_empty() {
        return Err(MatchError::EmptyRepo("paragraph"));
    }
    let mut best: Option<(Scalar, usize)> = None;
    for t in &repo.templates {
        let d = euclidean_distance(e_p_src, &t.vector)?;
        let candidate = (d, t.template_id);
        let better = match best {
            None => true,
            Some(b) => candidate.0 < b.0 || (candidate.0 == b.0 && candidate.1 < b.1),
        };
        if better {
            best = Some(candidate);
        }
    }
    let (distance, template_id) = best.expect("repo is non-empty");
    Ok(ParagraphMatch {
        para_id: para_id.to_string(),
        template_id,
        distance,
    })
}

/// Embed every sentence of `paragraph`, mean-pool into the paragraph vector,
/// and resolve both the paragraph match and the per-sentence matches
/// (order-preserving).
pub fn match_paragraph_full(
    s_repo: &SentenceRepo,
    p_repo: &ParagraphRepo,
    paragraph: &Paragraph,
    backend: &dyn EmbeddingBackend,
) -> Result<(ParagraphMatch, Vec<MatchResult>), MatchError> {
    if s_repo.is_empty() {
        return Err(MatchError::EmptyRepo("sentence"));
    }
    if p_repo.is_empty() {
        return Err(MatchError::EmptyRepo("paragraph"));
    }
    let texts: Vec<&str> = paragraph.sentences.iter().map(|s| s.text.as_str()).collect();
    let embeddings = backend.embed(&texts)?;
    let e_p = mean_pool(&embeddings)?;
    let p_match = match_paragraph(p_repo, &paragraph.para_id, &e_p)?;
    let s_matches = paragraph
        .sentences
        .iter()
        .zip(embeddings.iter())
        .map(|(s, e)| match_sentence(s_repo, &s.sent_id, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((p_match, s_matches))
}
