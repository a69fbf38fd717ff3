//! Template-conditioned generation, paragraph refinement, windowed
//! rewriting, and the baseline pipeline variants.

pub mod backend;
pub mod checkpoint;
pub mod prompts;

pub use backend::{
    make_generation_backend, GenerationBackend, GenerationBackendSpec, GenerationRequest,
    MockGenerationBackend, PromptStage, RemoteGenerationBackend, RequestMeta,
};
pub use checkpoint::RunOptions;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Paragraph, RawDocument, SegmentedDocument, SentenceUnit};
use crate::embedding::{EmbeddingBackend, EmbeddingError};
use crate::matching::{self, MatchError};
use crate::templates::{ParagraphRepo, ParagraphTemplate, SentenceRepo, SentenceTemplate};
use checkpoint::CompletedParagraph;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("generation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt of {prompt_chars} chars exceeds the context limit of {max_chars}; shrink the window")]
    ContextOverflow {
        prompt_chars: usize,
        max_chars: usize,
    },
    #[error("variant '{variant}' requires reference documents")]
    MissingReferences { variant: String },
    #[error("refinement produced no usable drafts: {0}")]
    EmptyInput(&'static str),
    #[error("invalid transfer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("transfer io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Pipeline variant, matching the benchmark set the evaluation compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full two-phase pipeline: dual matching, generation, refinement.
    StructuredRewritten,
    /// Per-sentence rewrite conditioned on raw reference sentences; no
    /// clustering, empty paragraph repository.
    TemplateOnly,
    /// Sentence-repository matching only; no paragraph templates and no
    /// refinement pass.
    SentencePattern,
    /// One generation call over the whole document.
    DirectPrompt,
    /// Two-step destylize/restylize rewriting per window. A simplified
    /// re-implementation of the conversation-transfer baseline; the original
    /// method's hand-built parallel exemplars are not available here.
    ConvTransfer,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::StructuredRewritten => "structured_rewritten",
            Variant::TemplateOnly => "template_only",
            Variant::SentencePattern => "sentence_pattern",
            Variant::DirectPrompt => "direct_prompt",
            Variant::ConvTransfer => "conv_transfer",
        }
    }

    pub const ALL: [Variant; 5] = [
        Variant::StructuredRewritten,
        Variant::TemplateOnly,
        Variant::SentencePattern,
        Variant::DirectPrompt,
        Variant::ConvTransfer,
    ];
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .iter()
            .find(|v| v.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_window() -> usize {
    8
}

fn default_low_confidence() -> f64 {
    0.05
}

/// Transfer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Style intensity in [0, 1]. Zero contracts to identity with no
    /// generation calls; one asks for maximal template imitation.
    pub alpha: f64,
    /// Sentences per generation/refinement window.
    #[serde(default = "default_window")]
    pub window_sentences: usize,
    pub variant: Variant,
    /// Prompt-skeleton overrides keyed `<variant>.<stage>`.
    #[serde(default)]
    pub prompt_templates: BTreeMap<String, String>,
    /// Matches with a smaller winner/runner-up margin are logged as
    /// low-confidence.
    #[serde(default = "default_low_confidence")]
    pub low_confidence_margin: f64,
}

impl TransferConfig {
    pub fn new(variant: Variant, alpha: f64) -> Self {
        Self {
            alpha,
            window_sentences: default_window(),
            variant,
            prompt_templates: BTreeMap::new(),
            low_confidence_margin: default_low_confidence(),
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TransferError::InvalidConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.window_sentences < 1 {
            return Err(TransferError::InvalidConfig(
                "window_sentences must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sentence audit record: which templates conditioned the rewrite, the
/// exact prompt, the raw generation, and the post-refinement text (absent
/// when refinement merged or split a boundary and 1:1 alignment broke).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceTraceRecord {
    pub sent_id: String,
    pub sentence_template_id: Option<usize>,
    pub paragraph_template_id: Option<usize>,
    pub prompt: String,
    pub raw_generation: String,
    pub refined_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphTraceRecord {
    pub para_id: String,
    pub paragraph_template_id: Option<usize>,
    pub paragraph_distance: Option<f64>,
    /// True when refinement (or a conv-transfer stage) fell back to its
    /// input after a failure or an unrecoverable sentence-count drift.
    pub refinement_skipped: bool,
    pub windows: usize,
}

/// Full audit trail of one transfer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTrace {
    pub doc_id: String,
    pub variant: Variant,
    pub alpha: f64,
    pub generation_backend_id: String,
    pub generation_model: String,
    pub embedding_backend_id: Option<String>,
    /// Completions issued during this run (resumed paragraphs excluded).
    pub generation_calls: u64,
    /// True for the single-call variant, which is exempt from the
    /// paragraph-count preservation rule.
    pub structural_preservation_exempt: bool,
    pub paragraphs: Vec<ParagraphTraceRecord>,
    pub sentences: Vec<SentenceTraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedParagraph {
    pub para_id: String,
    pub text: String,
    pub separator_after: String,
}

/// The rewritten document plus its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedDocument {
    pub doc_id: String,
    pub leading: String,
    pub paragraphs: Vec<StylizedParagraph>,
    pub trace: TransferTrace,
}

impl StylizedDocument {
    /// Document text with original separators re-applied.
    pub fn full_text(&self) -> String {
        let mut out = String::from(&self.leading);
        for p in &self.paragraphs {
            out.push_str(&p.text);
            out.push_str(&p.separator_after);
        }
        out
    }
}

/// The backends one transfer run needs.
pub struct TransferBackends<'a> {
    pub embedding: &'a dyn EmbeddingBackend,
    pub generation: &'a dyn GenerationBackend,
}

/// Repositories and reference material available to [`run_variant`]. Which
/// parts are required depends on the variant.
#[derive(Default)]
pub struct VariantInputs<'a> {
    pub sentence_repo: Option<&'a SentenceRepo>,
    pub paragraph_repo: Option<&'a ParagraphRepo>,
    pub references: &'a [RawDocument],
}

fn format_alpha(alpha: f64) -> String {
    format!("{alpha}")
}

fn check_context(prompt: &str, spec: &GenerationBackendSpec) -> Result<(), TransferError> {
    let prompt_chars = prompt.chars().count();
    if prompt_chars > spec.max_context_chars {
        return Err(TransferError::ContextOverflow {
            prompt_chars,
            max_chars: spec.max_context_chars,
        });
    }
    Ok(())
}

fn structure_description(tau_p: &ParagraphTemplate) -> String {
    if tau_p.sentence_template_ids.is_empty() {
        return "(empty)".to_string();
    }
    tau_p
        .sentence_template_ids
        .iter()
        .map(|id| format!("S{id}"))
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Rewrite one sentence under tripartite conditioning: the lexical pattern
/// of the matched sentence template, the structural constraints of the
/// matched paragraph template, and the original semantic content, with the
/// style intensity spelled out in the prompt. At `alpha == 0` the source
/// sentence is returned untouched without any backend call.
pub fn generate_sentence(
    backend: &dyn GenerationBackend,
    s: &SentenceUnit,
    tau_s: &SentenceTemplate,
    tau_p: &ParagraphTemplate,
    cfg: &TransferConfig,
) -> Result<String, TransferError> {
    cfg.validate()?;
    if cfg.alpha == 0.0 {
        return Ok(s.text.clone());
    }
    let skeleton = prompts::skeleton_for(
        &cfg.prompt_templates,
        Variant::StructuredRewritten,
        PromptStage::Generate,
    );
    let alpha = format_alpha(cfg.alpha);
    let pattern = tau_s
        .abstracted_pattern
        .as_deref()
        .unwrap_or(&tau_s.medoid_text);
    let structure = structure_description(tau_p);
    let prompt = prompts::render(
        skeleton,
        &[
            ("alpha", &alpha),
            ("sentence_template", pattern),
            ("paragraph_structure", &structure),
            ("paragraph_exemplar", &tau_p.exemplar_para_id),
            ("source", &s.text),
        ],
    );
    check_context(&prompt, backend.spec())?;
    let request = GenerationRequest {
        stage: PromptStage::Generate,
        prompt,
        meta: RequestMeta {
            source_text: &s.text,
            sentence_template_id: Some(tau_s.template_id),
            paragraph_template_id: Some(tau_p.template_id),
            alpha: cfg.alpha,
            lines: None,
        },
    };
    backend.complete(&request)
}

/// Split a line-oriented completion into sentences, stripping any `N. `
/// numbering a model may echo back.
fn parse_lines(response: &str) -> Vec<String> {
    response
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let stripped = l
                .split_once(". ")
                .filter(|(num, _)| !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()))
                .map(|(_, rest)| rest);
            stripped.unwrap_or(l).to_string()
        })
        .collect()
}

/// One refinement pass over a window of drafts. Output sentence count must
/// land within ±1 of the input count; a drifted response is retried once and
/// then the drafts are returned unrefined with the skip flag set. A backend
/// failure also falls back to the drafts.
pub fn refine_paragraph(
    backend: &dyn GenerationBackend,
    drafts: &[String],
    tau_p: &ParagraphTemplate,
    cfg: &TransferConfig,
) -> Result<(Vec<String>, bool), TransferError> {
    if drafts.is_empty() {
        return Err(TransferError::EmptyInput("refine_paragraph needs drafts"));
    }
    if cfg.alpha == 0.0 {
        return Ok((drafts.to_vec(), false));
    }
    let skeleton = prompts::skeleton_for(
        &cfg.prompt_templates,
        Variant::StructuredRewritten,
        PromptStage::Refine,
    );
    let alpha = format_alpha(cfg.alpha);
    let structure = structure_description(tau_p);
    let numbered = prompts::numbered_lines(drafts);
    let prompt = prompts::render(
        skeleton,
        &[
            ("alpha", &alpha),
            ("paragraph_structure", &structure),
            ("paragraph_exemplar", &tau_p.exemplar_para_id),
            ("drafts", &numbered),
        ],
    );
    check_context(&prompt, backend.spec())?;
    let request = GenerationRequest {
        stage: PromptStage::Refine,
        prompt,
        meta: RequestMeta {
            source_text: "",
            sentence_template_id: None,
            paragraph_template_id: Some(tau_p.template_id),
            alpha: cfg.alpha,
            lines: Some(drafts),
        },
    };
    for attempt in 0..2 {
        match backend.complete(&request) {
            Ok(response) => {
                let lines = parse_lines(&response);
                let diff = lines.len().abs_diff(drafts.len());
                if diff <= 1 && !lines.is_empty() {
                    return Ok((lines, false));
                }
                log::warn!(
                    "refinement returned {} sentences for {} drafts (attempt {})",
                    lines.len(),
                    drafts.len(),
                    attempt + 1
                );
            }
            Err(TransferError::BackendUnavailable(e)) => {
                log::warn!("refinement backend failed: {e}; returning drafts unrefined");
                return Ok((drafts.to_vec(), true));
            }
            Err(other) => return Err(other),
        }
    }
    Ok((drafts.to_vec(), true))
}

/// Join rewritten sentences back into paragraph text, reusing the source
/// separators when the counts still line up.
fn join_sentences(refined: &[String], source: &Paragraph) -> String {
    if refined.len() == source.sentences.len() {
        refined
            .iter()
            .zip(&source.sentences)
            .map(|(text, s)| format!("{text}{}", s.separator_after))
            .collect()
    } else {
        refined.join(" ")
    }
}

/// Run the full two-phase pipeline over a document: dual template matching,
/// windowed tripartite generation, and per-window refinement, with a
/// resumable checkpoint after every paragraph.
pub fn transfer_document(
    src: &SegmentedDocument,
    s_repo: &SentenceRepo,
    p_repo: &ParagraphRepo,
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
) -> Result<StylizedDocument, TransferError> {
    cfg.validate()?;
    if s_repo.is_empty() {
        return Err(MatchError::EmptyRepo("sentence").into());
    }
    if p_repo.is_empty() {
        return Err(MatchError::EmptyRepo("paragraph").into());
    }

    run_paragraphs(
        src,
        Variant::StructuredRewritten,
        backends,
        cfg,
        options,
        |paragraph| {
            let (p_match, s_matches) =
                matching::match_paragraph_full(s_repo, p_repo, paragraph, backends.embedding)?;
            let tau_p = p_repo
                .template(p_match.template_id)
                .expect("match came from this repo");
            for m in &s_matches {
                if m.runner_up_id.is_some() && m.margin < cfg.low_confidence_margin {
                    log::warn!(
                        "low-confidence match for {}: margin {:.4}",
                        m.sent_id,
                        m.margin
                    );
                }
            }

            let mut sentence_records = Vec::with_capacity(paragraph.sentences.len());
            let mut refined_all = Vec::with_capacity(paragraph.sentences.len());
            let mut refinement_skipped = false;
            let mut windows = 0usize;
            for window in paragraph.sentences.chunks(cfg.window_sentences) {
                windows += 1;
                let offset = sentence_records.len();
                let mut drafts = Vec::with_capacity(window.len());
                for s in window {
                    let m = &s_matches[offset + drafts.len()];
                    let tau_s = s_repo
                        .template(m.template_id)
                        .expect("match came from this repo");
                    let (prompt, raw) = if cfg.alpha == 0.0 {
                        (String::new(), s.text.clone())
                    } else {
                        let raw = generate_sentence(backends.generation, s, tau_s, tau_p, cfg)?;
                        (rendered_generate_prompt(s, tau_s, tau_p, cfg), raw)
                    };
                    sentence_records.push(SentenceTraceRecord {
                        sent_id: s.sent_id.clone(),
                        sentence_template_id: Some(m.template_id),
                        paragraph_template_id: Some(tau_p.template_id),
                        prompt,
                        raw_generation: raw.clone(),
                        refined_text: None,
                    });
                    drafts.push(raw);
                }
                let (refined, skipped) =
                    refine_paragraph(backends.generation, &drafts, tau_p, cfg)?;
                refinement_skipped |= skipped;
                if refined.len() == drafts.len() {
                    for (rec, text) in sentence_records[offset..].iter_mut().zip(&refined) {
                        rec.refined_text = Some(text.clone());
                    }
                }
                refined_all.extend(refined);
            }

            let stylized = StylizedParagraph {
                para_id: paragraph.para_id.clone(),
                text: join_sentences(&refined_all, paragraph),
                separator_after: paragraph.separator_after.clone(),
            };
            let record = ParagraphTraceRecord {
                para_id: paragraph.para_id.clone(),
                paragraph_template_id: Some(p_match.template_id),
                paragraph_distance: Some(p_match.distance),
                refinement_skipped,
                windows,
            };
            Ok((stylized, sentence_records, record))
        },
    )
}

// Re-render the generation prompt for the trace. Rendering is deterministic,
// so this equals the prompt the backend saw.
fn rendered_generate_prompt(
    s: &SentenceUnit,
    tau_s: &SentenceTemplate,
    tau_p: &ParagraphTemplate,
    cfg: &TransferConfig,
) -> String {
    let skeleton = prompts::skeleton_for(
        &cfg.prompt_templates,
        Variant::StructuredRewritten,
        PromptStage::Generate,
    );
    let alpha = format_alpha(cfg.alpha);
    let pattern = tau_s
        .abstracted_pattern
        .as_deref()
        .unwrap_or(&tau_s.medoid_text);
    let structure = structure_description(tau_p);
    prompts::render(
        skeleton,
        &[
            ("alpha", &alpha),
            ("sentence_template", pattern),
            ("paragraph_structure", &structure),
            ("paragraph_exemplar", &tau_p.exemplar_para_id),
            ("source", &s.text),
        ],
    )
}

/// Shared per-paragraph driver: checkpoint resume, paragraph loop with
/// checkpoint saves, trace assembly, checkpoint cleanup.
fn run_paragraphs<F>(
    src: &SegmentedDocument,
    variant: Variant,
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
    mut process: F,
) -> Result<StylizedDocument, TransferError>
where
    F: FnMut(
        &Paragraph,
    ) -> Result<
        (StylizedParagraph, Vec<SentenceTraceRecord>, ParagraphTraceRecord),
        TransferError,
    >,
{
    let calls_before = backends.generation.call_count();
    let mut completed = checkpoint::load_matching(options, &src.doc_id, variant);
    completed.truncate(src.paragraphs.len());

    for paragraph in src.paragraphs.iter().skip(completed.len()) {
        let (stylized, sentences, record) = process(paragraph)?;
        completed.push(CompletedParagraph {
            stylized,
            sentences,
            record,
        });
        checkpoint::save(options, &src.doc_id, variant, &completed)?;
    }
    checkpoint::clear(options);

    let mut paragraphs = Vec::with_capacity(completed.len());
    let mut sentence_records = Vec::new();
    let mut paragraph_records = Vec::with_capacity(completed.len());
    for c in completed {
        paragraphs.push(c.stylized);
        sentence_records.extend(c.sentences);
        paragraph_records.push(c.record);
    }

    Ok(StylizedDocument {
        doc_id: src.doc_id.clone(),
        leading: src.leading.clone(),
        paragraphs,
        trace: TransferTrace {
            doc_id: src.doc_id.clone(),
            variant,
            alpha: cfg.alpha,
            generation_backend_id: backends.generation.backend_id().to_string(),
            generation_model: backends.generation.spec().model_name.clone(),
            embedding_backend_id: Some(backends.embedding.backend_id().to_string()),
            generation_calls: backends.generation.call_count() - calls_before,
            structural_preservation_exempt: false,
            paragraphs: paragraph_records,
            sentences: sentence_records,
        },
    })
}

/// Dispatch a named pipeline variant. The passed `variant` wins over
/// `cfg.variant`.
pub fn run_variant(
    variant: Variant,
    src: &SegmentedDocument,
    inputs: &VariantInputs,
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
) -> Result<StylizedDocument, TransferError> {
    cfg.validate()?;
    match variant {
        Variant::StructuredRewritten => {
            let s_repo = inputs
                .sentence_repo
                .ok_or(MatchError::EmptyRepo("sentence"))?;
            let p_repo = inputs
                .paragraph_repo
                .ok_or(MatchError::EmptyRepo("paragraph"))?;
            transfer_document(src, s_repo, p_repo, backends, cfg, options)
        }
        Variant::SentencePattern => {
            let s_repo = inputs
                .sentence_repo
                .ok_or(MatchError::EmptyRepo("sentence"))?;
            run_sentence_pattern(src, s_repo, backends, cfg, options)
        }
        Variant::TemplateOnly => run_template_only(src, inputs.references, backends, cfg, options),
        Variant::DirectPrompt => run_direct(src, inputs.references, backends, cfg),
        Variant::ConvTransfer => run_conv(src, inputs.references, backends, cfg, options),
    }
}

fn run_sentence_pattern(
    src: &SegmentedDocument,
    s_repo: &SentenceRepo,
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
) -> Result<StylizedDocument, TransferError> {
    if s_repo.is_empty() {
        return Err(MatchError::EmptyRepo("sentence").into());
    }
    run_paragraphs(
        src,
        Variant::SentencePattern,
        backends,
        cfg,
        options,
        |paragraph| {
            let texts: Vec<&str> = paragraph.sentences.iter().map(|s| s.text.as_str()).collect();
            let embeddings = backends.embedding.embed(&texts)?;
            let mut records = Vec::with_capacity(paragraph.sentences.len());
            let mut rewritten = Vec::with_capacity(paragraph.sentences.len());
            for (s, e) in paragraph.sentences.iter().zip(embeddings.iter()) {
                let m = matching::match_sentence(s_repo, &s.sent_id, e)?;
                let tau_s = s_repo.template(m.template_id).expect("match from repo");
                let (prompt, raw) = if cfg.alpha == 0.0 {
                    (String::new(), s.text.clone())
                } else {
                    let skeleton = prompts::skeleton_for(
                        &cfg.prompt_templates,
                        Variant::SentencePattern,
                        PromptStage::Generate,
                    );
                    let alpha = format_alpha(cfg.alpha);
                    let pattern = tau_s
                        .abstracted_pattern
                        .as_deref()
                        .unwrap_or(&tau_s.medoid_text);
                    let prompt = prompts::render(
                        skeleton,
                        &[
                            ("alpha", &alpha),
                            ("sentence_template", pattern),
                            ("source", &s.text),
                        ],
                    );
                    check_context(&prompt, backends.generation.spec())?;
                    let raw = backends.generation.complete(&GenerationRequest {
                        stage: PromptStage::Generate,
                        prompt: prompt.clone(),
                        meta: RequestMeta {
                            source_text: &s.text,
                            sentence_template_id: Some(tau_s.template_id),
                            paragraph_template_id: None,
                            alpha: cfg.alpha,
                            lines: None,
                        },
                    })?;
                    (prompt, raw)
                };
                records.push(SentenceTraceRecord {
                    sent_id: s.sent_id.clone(),
                    sentence_template_id: Some(m.template_id),
                    paragraph_template_id: None,
                    prompt,
                    raw_generation: raw.clone(),
                    refined_text: None,
                });
                rewritten.push(raw);
            }
            let stylized = StylizedParagraph {
                para_id: paragraph.para_id.clone(),
                text: join_sentences(&rewritten, paragraph),
                separator_after: paragraph.separator_after.clone(),
            };
            let record = ParagraphTraceRecord {
                para_id: paragraph.para_id.clone(),
                paragraph_template_id: None,
                paragraph_distance: None,
                refinement_skipped: false,
                windows: paragraph.sentences.chunks(cfg.window_sentences).count(),
            };
            Ok((stylized, records, record))
        },
    )
}

fn run_template_only(
    src: &SegmentedDocument,
    references: &[RawDocument],
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
) -> Result<StylizedDocument, TransferError> {
    let ref_sentences = if cfg.alpha == 0.0 {
        Vec::new()
    } else {
        if references.is_empty() {
            return Err(TransferError::MissingReferences {
                variant: Variant::TemplateOnly.to_string(),
            });
        }
        reference_sentences(references)?
    };
    let budget = backends.generation.spec().max_context_chars / 2;
    let excerpt = take_to_budget(&ref_sentences, budget);

    run_paragraphs(
        src,
        Variant::TemplateOnly,
        backends,
        cfg,
        options,
        |paragraph| {
            let mut records = Vec::with_capacity(paragraph.sentences.len());
            let mut rewritten = Vec::with_capacity(paragraph.sentences.len());
            for s in &paragraph.sentences {
                let (prompt, raw) = if cfg.alpha == 0.0 {
                    (String::new(), s.text.clone())
                } else {
                    let skeleton = prompts::skeleton_for(
                        &cfg.prompt_templates,
                        Variant::TemplateOnly,
                        PromptStage::Generate,
                    );
                    let alpha = format_alpha(cfg.alpha);
                    let prompt = prompts::render(
                        skeleton,
                        &[
                            ("alpha", &alpha),
                            ("reference", &excerpt),
                            ("source", &s.text),
                        ],
                    );
                    check_context(&prompt, backends.generation.spec())?;
                    let raw = backends.generation.complete(&GenerationRequest {
                        stage: PromptStage::Generate,
                        prompt: prompt.clone(),
                        meta: RequestMeta {
                            source_text: &s.text,
                            sentence_template_id: None,
                            paragraph_template_id: None,
                            alpha: cfg.alpha,
                            lines: None,
                        },
                    })?;
                    (prompt, raw)
                };
                records.push(SentenceTraceRecord {
                    sent_id: s.sent_id.clone(),
                    sentence_template_id: None,
                    paragraph_template_id: None,
                    prompt,
                    raw_generation: raw.clone(),
                    refined_text: None,
                });
                rewritten.push(raw);
            }
            let stylized = StylizedParagraph {
                para_id: paragraph.para_id.clone(),
                text: join_sentences(&rewritten, paragraph),
                separator_after: paragraph.separator_after.clone(),
            };
            let record = ParagraphTraceRecord {
                para_id: paragraph.para_id.clone(),
                paragraph_template_id: None,
                paragraph_distance: None,
                refinement_skipped: false,
                windows: paragraph.sentences.chunks(cfg.window_sentences).count(),
            };
            Ok((stylized, records, record))
        },
    )
}

fn run_direct(
    src: &SegmentedDocument,
    references: &[RawDocument],
    backends: &TransferBackends,
    cfg: &TransferConfig,
) -> Result<StylizedDocument, TransferError> {
    let calls_before = backends.generation.call_count();
    let body = src.reconstruct();
    let out_para_id = format!("{}#out", src.doc_id);

    let (text, sentences, prompt_used) = if cfg.alpha == 0.0 {
        (body.clone(), Vec::new(), false)
    } else {
        if references.is_empty() {
            return Err(TransferError::MissingReferences {
                variant: Variant::DirectPrompt.to_string(),
            });
        }
        let reference: String = references
            .iter()
            .map(|d| d.body.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        let skeleton = prompts::skeleton_for(
            &cfg.prompt_templates,
            Variant::DirectPrompt,
            PromptStage::DirectTransfer,
        );
        let alpha = format_alpha(cfg.alpha);
        let prompt = prompts::render(
            skeleton,
            &[("alpha", &alpha), ("reference", &reference), ("source", &body)],
        );
        check_context(&prompt, backends.generation.spec())?;
        let raw = backends.generation.complete(&GenerationRequest {
            stage: PromptStage::DirectTransfer,
            prompt: prompt.clone(),
            meta: RequestMeta {
                source_text: &body,
                sentence_template_id: None,
                paragraph_template_id: None,
                alpha: cfg.alpha,
                lines: None,
            },
        })?;
        let record = SentenceTraceRecord {
            sent_id: out_para_id.clone(),
            sentence_template_id: None,
            paragraph_template_id: None,
            prompt,
            raw_generation: raw.clone(),
            refined_text: None,
        };
        (raw, vec![record], true)
    };

    Ok(StylizedDocument {
        doc_id: src.doc_id.clone(),
        leading: String::new(),
        paragraphs: vec![StylizedParagraph {
            para_id: out_para_id.clone(),
            text,
            separator_after: String::new(),
        }],
        trace: TransferTrace {
            doc_id: src.doc_id.clone(),
            variant: Variant::DirectPrompt,
            alpha: cfg.alpha,
            generation_backend_id: backends.generation.backend_id().to_string(),
            generation_model: backends.generation.spec().model_name.clone(),
            embedding_backend_id: None,
            generation_calls: backends.generation.call_count() - calls_before,
            structural_preservation_exempt: true,
            paragraphs: vec![ParagraphTraceRecord {
                para_id: out_para_id,
                paragraph_template_id: None,
                paragraph_distance: None,
                refinement_skipped: false,
                windows: usize::from(prompt_used),
            }],
            sentences,
        },
    })
}

fn run_conv(
    src: &SegmentedDocument,
    references: &[RawDocument],
    backends: &TransferBackends,
    cfg: &TransferConfig,
    options: &RunOptions,
) -> Result<StylizedDocument, TransferError> {
    let excerpt = if cfg.alpha == 0.0 {
        String::new()
    } else {
        if references.is_empty() {
            return Err(TransferError::MissingReferences {
                variant: Variant::ConvTransfer.to_string(),
            });
        }
        let bodies: Vec<String> = references.iter().map(|d| d.body.clone()).collect();
        take_to_budget(&bodies, backends.generation.spec().max_context_chars / 2)
    };

    run_paragraphs(
        src,
        Variant::ConvTransfer,
        backends,
        cfg,
        options,
        |paragraph| {
            let mut records = Vec::with_capacity(paragraph.sentences.len());
            let mut rewritten = Vec::with_capacity(paragraph.sentences.len());
            let mut fallback = false;
            let mut windows = 0usize;
            for window in paragraph.sentences.chunks(cfg.window_sentences) {
                windows += 1;
                let originals: Vec<String> =
                    window.iter().map(|s| s.text.clone()).collect();
                if cfg.alpha == 0.0 {
                    for s in window {
                        records.push(SentenceTraceRecord {
                            sent_id: s.sent_id.clone(),
                            sentence_template_id: None,
                            paragraph_template_id: None,
                            prompt: String::new(),
                            raw_generation: s.text.clone(),
                            refined_text: None,
                        });
                    }
                    rewritten.extend(originals);
                    continue;
                }

                let (style_free, step1_fallback) = conv_stage(
                    backends.generation,
                    cfg,
                    PromptStage::Destylize,
                    &originals,
                    &[("drafts", &prompts::numbered_lines(&originals))],
                )?;
                let alpha = format_alpha(cfg.alpha);
                let numbered = prompts::numbered_lines(&style_free);
                let (styled, step2_fallback) = conv_stage(
                    backends.generation,
                    cfg,
                    PromptStage::Restylize,
                    &style_free,
                    &[
                        ("alpha", &alpha),
                        ("reference", &excerpt),
                        ("drafts", &numbered),
                    ],
                )?;
                // Stage fallbacks revert to the original window text so
                // content is never replaced by a destylized intermediate.
                let styled = if step2_fallback { originals.clone() } else { styled };
                fallback |= step1_fallback || step2_fallback;

                let restylize_prompt = prompts::render(
                    prompts::skeleton_for(
                        &cfg.prompt_templates,
                        Variant::ConvTransfer,
                        PromptStage::Restylize,
                    ),
                    &[
                        ("alpha", &alpha),
                        ("reference", &excerpt),
                        ("drafts", &numbered),
                    ],
                );
                for (i, s) in window.iter().enumerate() {
                    records.push(SentenceTraceRecord {
                        sent_id: s.sent_id.clone(),
                        sentence_template_id: None,
                        paragraph_template_id: None,
                        prompt: restylize_prompt.clone(),
                        raw_generation: styled.get(i).cloned().unwrap_or_default(),
                        refined_text: None,
                    });
                }
                rewritten.extend(styled);
            }
            let stylized = StylizedParagraph {
                para_id: paragraph.para_id.clone(),
                text: join_sentences(&rewritten, paragraph),
                separator_after: paragraph.separator_after.clone(),
            };
            let record = ParagraphTraceRecord {
                para_id: paragraph.para_id.clone(),
                paragraph_template_id: None,
                paragraph_distance: None,
                refinement_skipped: fallback,
                windows,
            };
            Ok((stylized, records, record))
        },
    )
}

/// One line-oriented conv-transfer stage. The response must keep the exact
/// line count; one retry, then fall back to the stage input with a flag.
fn conv_stage(
    backend: &dyn GenerationBackend,
    cfg: &TransferConfig,
    stage: PromptStage,
    lines: &[String],
    vars: &[(&str, &str)],
) -> Result<(Vec<String>, bool), TransferError> {
    let skeleton = prompts::skeleton_for(&cfg.prompt_templates, Variant::ConvTransfer, stage);
    let prompt = prompts::render(skeleton, vars);
    check_context(&prompt, backend.spec())?;
    let request = GenerationRequest {
        stage,
        prompt,
        meta: RequestMeta {
            source_text: "",
            sentence_template_id: None,
            paragraph_template_id: None,
            alpha: cfg.alpha,
            lines: Some(lines),
        },
    };
    for attempt in 0..2 {
        match backend.complete(&request) {
            Ok(response) => {
                let parsed = parse_lines(&response);
                if parsed.len() == lines.len() {
                    return Ok((parsed, false));
                }
                log::warn!(
                    "{stage:?} returned {} lines for {} inputs (attempt {})",
                    parsed.len(),
                    lines.len(),
                    attempt + 1
                );
            }
            Err(TransferError::BackendUnavailable(e)) => {
                log::warn!("{stage:?} backend failed: {e}; using stage input");
                return Ok((lines.to_vec(), true));
            }
            Err(other) => return Err(other),
        }
    }
    Ok((lines.to_vec(), true))
}

/// All sentence texts of the reference documents, in corpus order.
fn reference_sentences(references: &[RawDocument]) -> Result<Vec<String>, TransferError> {
    let rules = crate::corpus::SegmentationRules::default();
    let mut out = Vec::new();
    for doc in references {
        let segmented = crate::corpus::segment(doc, &rules)?;
        out.extend(segmented.sentences().map(|s| s.text.clone()));
    }
    Ok(out)
}

/// Join items with newlines until the character budget is reached; at least
/// one item is always included so the context-overflow check stays the
/// single authority on "too large".
fn take_to_budget(items: &[String], budget_chars: usize) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 && out.chars().count() + item.chars().count() + 1 > budget_chars {
            break;
        }
        if i > 0 {
            out.push('\n');
        }
        out.push_str(item);
    }
    out
}
