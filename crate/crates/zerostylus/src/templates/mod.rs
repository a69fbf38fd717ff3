//! Template repositories: sentence templates from density-based clustering,
//! paragraph templates from threshold-gated incremental insertion.

pub mod dbscan;
mod persist;

pub use persist::{
    load_paragraph_repo, load_sentence_repo, save_paragraph_repo, save_sentence_repo,
    FORMAT_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Paragraph;
use crate::embedding::{euclidean_distance, mean_pool, Embedding, EmbeddingError};
use crate::numeric;
use crate::transfer::backend::{GenerationBackend, GenerationRequest, PromptStage, RequestMeta};
use crate::transfer::prompts;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("at least one sentence is required to build a repository")]
    EmptyInput,
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("sentence match count {matches} does not equal paragraph sentence count {sentences}")]
    MatchCountMismatch { matches: usize, sentences: usize },
    #[error("repository file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("repository backend '{actual}' does not match expected '{expected}'")]
    BackendMismatch { expected: String, actual: String },
    #[error("corrupt repository file: {0}")]
    CorruptFile(String),
    #[error("repository io error: {0}")]
    Io(#[from] std::io::Error),
}

/// DBSCAN parameters for sentence-repository construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringParams {
    pub eps: Scalar,
    pub min_pts: usize,
}

impl ClusteringParams {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if !(self.eps > 0.0) {
            return Err(TemplateError::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.min_pts < 1 {
            return Err(TemplateError::InvalidParams("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// A prototypical sentence pattern: cluster centroid plus the member
/// sentence closest to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceTemplate {
    pub template_id: usize,
    pub centroid: Embedding,
    pub medoid_text: String,
    pub member_count: usize,
    pub abstracted_pattern: Option<String>,
}

/// The sentence-level template repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRepo {
    pub templates: Vec<SentenceTemplate>,
    pub backend_id: String,
    pub clustering_params: ClusteringParams,
}

impl SentenceRepo {
    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.templates.first().map(|t| t.centroid.dim())
    }

    pub fn template(&self, id: usize) -> Option<&SentenceTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }
}

/// A paragraph-level structural template: the admitted paragraph embedding
/// plus the sentence-template sequence of its exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphTemplate {
    pub template_id: usize,
    pub vector: Embedding,
    pub exemplar_para_id: String,
    pub sentence_template_ids: Vec<usize>,
    pub member_count: usize,
}

/// The paragraph-level template repository. Any two template vectors are
/// more than `epsilon` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRepo {
    pub templates: Vec<ParagraphTemplate>,
    pub epsilon: Scalar,
    pub backend_id: String,
}

impl ParagraphRepo {
    pub fn new(epsilon: Scalar, backend_id: impl Into<String>) -> Self {
        Self {
            templates: Vec::new(),
            epsilon,
            backend_id: backend_id.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.templates.first().map(|t| t.vector.dim())
    }

    pub fn template(&self, id: usize) -> Option<&ParagraphTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }
}

/// One embedded sentence: repository construction input.
#[derive(Debug, Clone)]
pub struct EmbeddedSentence {
    pub sent_id: String,
    pub text: String,
    pub embedding: Embedding,
}

/// Cluster sentence embeddings with DBSCAN and turn each cluster into a
/// template. Noise points become singleton templates. Template ids are
/// assigned by descending member count, then smallest member sent_id.
/// Groups that end up with identical centroids are merged so the repository
/// never holds duplicate centroids.
pub fn build_sentence_repo(
    sentences: &[EmbeddedSentence],
    params: ClusteringParams,
) -> Result<SentenceRepo, TemplateError> {
    params.validate()?;
    let first = sentences.first().ok_or(TemplateError::EmptyInput)?;
    for s in sentences.iter().skip(1) {
        first.embedding.check_compatible(&s.embedding)?;
    }
    let backend_id = first.embedding.backend_id().to_string();

    let points: Vec<&[Scalar]> = sentences.iter().map(|s| s.embedding.values()).collect();
    let labels = dbscan::dbscan(&points, params.eps, params.min_pts);

    // Group member indices by label; each noise point forms its own group.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut cluster_to_group: std::collections::BTreeMap<usize, usize> =
        std::collections::BTreeMap::new();
    for (idx, label) in labels.iter().enumerate() {
        match label {
            dbscan::Label::Cluster(c) => {
                let g = *cluster_to_group.entry(*c).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].push(idx);
            }
            dbscan::Label::Noise => groups.push(vec![idx]),
        }
    }

    // Merge groups whose centroids coincide exactly (duplicate inputs).
    let mut built: Vec<(Vec<Scalar>, Vec<usize>)> = Vec::new();
    for members in groups {
        let rows: Vec<&[Scalar]> = members.iter().map(|&i| points[i]).collect();
        let centroid = numeric::mean(&rows).expect("group is non-empty");
        match built.iter_mut().find(|(c, _)| *c == centroid) {
            Some((_, existing)) => existing.extend(members),
            None => built.push((centroid, members)),
        }
    }

    // Deterministic id assignment: larger clusters first, ties by the
    // smallest member sent_id.
    let mut keyed: Vec<(usize, String, Vec<Scalar>, Vec<usize>)> = built
        .into_iter()
        .map(|(centroid, members)| {
            let min_sent = members
                .iter()
                .map(|&i| sentences[i].sent_id.clone())
                .min()
                .expect("non-empty group");
            (members.len(), min_sent, centroid, members)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    let templates = keyed
        .into_iter()
        .enumerate()
        .map(|(id, (count, _, centroid, members))| {
            let medoid_idx = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = numeric::euclidean(points[a], &centroid);
                    let db = numeric::euclidean(points[b], &centroid);
                    da.partial_cmp(&db)
                        .expect("finite distances")
                        .then_with(|| sentences[a].sent_id.cmp(&sentences[b].sent_id))
                })
                .expect("non-empty group");
            SentenceTemplate {
                template_id: id,
                centroid: Embedding::new(centroid, backend_id.clone())
                    .expect("mean of finite vectors is finite"),
                medoid_text: sentences[medoid_idx].text.clone(),
                member_count: count,
                abstracted_pattern: None,
            }
        })
        .collect();

    Ok(SentenceRepo {
        templates,
        backend_id,
        clustering_params: params,
    })
}

/// Admit `e_p` into the repository when it lies further than `epsilon` from
/// every existing template vector; otherwise increment the nearest
/// template's member count (ties broken by smallest template_id).
pub fn insert_paragraph(
    mut repo: ParagraphRepo,
    para: &Paragraph,
    e_p: Embedding,
    sentence_matches: Vec<usize>,
) -> Result<(ParagraphRepo, bool), TemplateError> {
    if sentence_matches.len() != para.sentences.len() {
        return Err(TemplateError::MatchCountMismatch {
            matches: sentence_matches.len(),
            sentences: para.sentences.len(),
        });
    }
    if e_p.backend_id() != repo.backend_id {
        return Err(EmbeddingError::BackendMismatch {
            expected: repo.backend_id.clone(),
            actual: e_p.backend_id().to_string(),
        }
        .into());
    }
    if let Some(dim) = repo.dim() {
        if e_p.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                actual: e_p.dim(),
            }
            .into());
        }
    }

    let nearest = repo
        .templates
        .iter_mut()
        .map(|t| {
            let d = numeric::euclidean(t.vector.values(), e_p.values());
            (d, t)
        })
        .min_by(|(da, ta), (db, tb)| {
            da.partial_cmp(db)
                .expect("finite distances")
                .then_with(|| ta.template_id.cmp(&tb.template_id))
        });

    match nearest {
        Some((dist, t)) if dist <= repo.epsilon => {
            t.member_count += 1;
            Ok((repo, false))
        }
        _ => {
            let next_id = repo
                .templates
                .iter()
                .map(|t| t.template_id + 1)
                .max()
                .unwrap_or(0);
            repo.templates.push(ParagraphTemplate {
                template_id: next_id,
                vector: e_p,
                exemplar_para_id: para.para_id.clone(),
                sentence_template_ids: sentence_matches,
                member_count: 1,
            });
            Ok((repo, true))
        }
    }
}

/// Ask the extractor backend for an abstracted pattern of the template's
/// medoid. Backend failure is non-fatal: the template comes back unchanged
/// and the error is logged, since it stays usable through its medoid text.
pub fn abstract_template(
    extractor: &dyn GenerationBackend,
    template: &SentenceTemplate,
) -> SentenceTemplate {
    let mut out = template.clone();
    if template.medoid_text.is_empty() {
        return out;
    }
    let prompt = prompts::render_abstract_prompt(&template.medoid_text);
    let request = GenerationRequest {
        stage: PromptStage::AbstractPattern,
        prompt,
        meta: RequestMeta {
            source_text: &template.medoid_text,
            ..RequestMeta::default()
        },
    };
    match extractor.complete(&request) {
        Ok(pattern) => out.abstracted_pattern = Some(pattern),
        Err(e) => {
            log::warn!(
                "pattern abstraction failed for template {}: {e}; keeping medoid only",
                template.template_id
            );
        }
    }
    out
}

/// k-distance heuristic for DBSCAN's eps: the 90th-percentile distance to
/// each point's `min_pts`-th nearest neighbor (self excluded). Returns
/// `None` when fewer than two points are available.
pub fn suggest_eps(embeddings: &[Embedding], min_pts: usize) -> Option<Scalar> {
    if embeddings.len() < 2 {
        return None;
    }
    let k = min_pts.max(1);
    let mut k_dists = Vec::with_capacity(embeddings.len());
    for (i, e) in embeddings.iter().enumerate() {
        let mut dists: Vec<Scalar> = embeddings
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, other)| numeric::euclidean(e.values(), other.values()))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let idx = k.min(dists.len()) - 1;
        k_dists.push(dists[idx]);
    }
    numeric::percentile(&k_dists, 0.9).map(|eps| eps.max(Scalar::EPSILON))
}

/// Scale-free default for the paragraph repository threshold: half the
/// median pairwise distance over the reference paragraph embeddings.
/// Returns `None` when fewer than two paragraphs are available.
pub fn suggest_epsilon(paragraph_embeddings: &[Embedding]) -> Option<Scalar> {
    if paragraph_embeddings.len() < 2 {
        return None;
    }
    let mut dists = Vec::new();
    for (i, a) in paragraph_embeddings.iter().enumerate() {
        for b in paragraph_embeddings.iter().skip(i + 1) {
            dists.push(numeric::euclidean(a.values(), b.values()));
        }
    }
    numeric::median(&dists).map(|m| (m * 0.5).max(Scalar::EPSILON))
}

/// Turn a paragraph's sentence embeddings into the paragraph vector using
/// the default mean-pool aggregation.
pub fn paragraph_embedding(sentence_embeddings: &[Embedding]) -> Result<Embedding, TemplateError> {
    Ok(mean_pool(sentence_embeddings)?)
}

/// Exhaustive check of the repository's defining separation property.
pub fn check_separation(repo: &ParagraphRepo) -> Result<(), TemplateError> {
    for (i, a) in repo.templates.iter().enumerate() {
        for b in repo.templates.iter().skip(i + 1) {
            let d = euclidean_distance(&a.vector, &b.vector)?;
            if d <= repo.epsilon {
                return Err(TemplateError::CorruptFile(format!(
                    "templates {} and {} are {d} apart, within epsilon {}",
                    a.template_id, b.template_id, repo.epsilon
                )));
            }
        }
    }
    Ok(())
}
