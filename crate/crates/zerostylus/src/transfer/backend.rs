//! Generation backends: the deterministic offline mock and a remote
//! chat-completion client. Requests carry both the rendered prompt (what a
//! remote model sees) and structured metadata (what the mock keys its
//! deterministic rules on).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::TransferError;
pub use crate::embedding::backend::BackendKind;

fn default_max_context() -> usize {
    16_000
}

/// Configuration for a generation (or extractor/refiner) backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationBackendSpec {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default = "default_max_context")]
    pub max_context_chars: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl GenerationBackendSpec {
    pub fn mock(backend_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "tagging-mock".to_string(),
            max_context_chars: default_max_context(),
            temperature: 0.0,
        api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if self.max_context_chars < 1_000 {
            return Err(TransferError::InvalidConfig(format!(
                "max_context_chars must be >= 1000, got {}",
                self.max_context_chars
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(TransferError::InvalidConfig(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(TransferError::InvalidConfig(
                "remote generation backend requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Which pipeline step a request belongs to. The mock backend keys its
/// deterministic output rules on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStage {
    /// Turn a medoid sentence into a slotted skeleton.
    AbstractPattern,
    /// Template-conditioned sentence rewrite.
    Generate,
    /// Paragraph-level coherence pass over drafts.
    Refine,
    /// Whole-document single-call transfer.
    DirectTransfer,
    /// Strip style from a window of sentences.
    Destylize,
    /// Re-style a window of style-free sentences.
    Restylize,
}

/// Structured request metadata. Remote backends ignore it; the mock derives
/// its output from it so offline runs stay deterministic and auditable.
#[derive(Debug, Clone, Copy, Default)]
pub struct RequestMeta<'a> {
    /// The text being transformed (sentence, window, or whole body).
    pub source_text: &'a str,
    pub sentence_template_id: Option<usize>,
    pub paragraph_template_id: Option<usize>,
    pub alpha: f64,
    /// Line-oriented payload for refine/destylize/restylize stages.
    pub lines: Option<&'a [String]>,
}

/// A single generation request.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub stage: PromptStage,
    /// Fully rendered prompt (sent to remote models verbatim).
    pub prompt: String,
    pub meta: RequestMeta<'a>,
}

/// Interface every generator implements. `call_count` reports how many
/// completions were issued over the backend's lifetime, which lets callers
/// assert the zero-intensity identity contract.
pub trait GenerationBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn spec(&self) -> &GenerationBackendSpec;
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransferError>;
    fn call_count(&self) -> u64;
}

/// Build a backend from its spec.
pub fn make_generation_backend(
    spec: &GenerationBackendSpec,
) -> Result<Box<dyn GenerationBackend>, TransferError> {
    spec.validate()?;
    match spec.kind {
        BackendKind::Mock => Ok(Box::new(MockGenerationBackend::new(spec.clone()))),
        BackendKind::Remote => Ok(Box::new(RemoteGenerationBackend::new(spec.clone())?)),
    }
}

fn format_alpha(alpha: f64) -> String {
    format!("{alpha}")
}

/// The mock extractor rule: every whitespace-delimited word whose
/// alphanumeric core is longer than four characters becomes `{SLOT}`,
/// keeping surrounding punctuation.
pub fn mock_abstract_pattern(text: &str) -> String {
    text.split_whitespace()
        .map(|token| {
            let core_start = token
                .char_indices()
                .find(|(_, c)| c.is_alphanumeric())
                .map(|(i, _)| i);
            let Some(start) = core_start else {
                return token.to_string();
            };
            let end = token
                .char_indices()
                .rev()
                .find(|(_, c)| c.is_alphanumeric())
                .map(|(i, c)| i + c.len_utf8())
                .expect("a start implies an end");
            let core = &token[start..end];
            if core.chars().count() > 4 {
                format!("{}{}{}", &token[..start], "{SLOT}", &token[end..])
            } else {
                token.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic offline generator. Outputs tag the conditioning signals so
/// pipeline behavior can be traced through the text itself:
///
/// - generate: `[S<id>|P<id>|a=<alpha>] <source>` (`P` omitted without a
///   paragraph template, `TO` when no template at all)
/// - refine: first line prefixed `[R<id>] `
/// - direct transfer: `[DIRECT] <source>`
/// - destylize / restylize: every line prefixed `[D] ` / `[C|a=<alpha>] `
pub struct MockGenerationBackend {
    spec: GenerationBackendSpec,
    calls: AtomicU64,
}

impl MockGenerationBackend {
    pub fn new(spec: GenerationBackendSpec) -> Self {
        Self {
            spec,
            calls: AtomicU64::new(0),
        }
    }
}

impl GenerationBackend for MockGenerationBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn spec(&self) -> &GenerationBackendSpec {
        &self.spec
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, TransferError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let meta = &request.meta;
        let a = format_alpha(meta.alpha);
        let out = match request.stage {
            PromptStage::AbstractPattern => mock_abstract_pattern(meta.source_text),
            PromptStage::Generate => match (meta.sentence_template_id, meta.paragraph_template_id)
            {
                (Some(s), Some(p)) => format!("[S{s}|P{p}|a={a}] {}", meta.source_text),
                (Some(s), None) => format!("[S{s}|a={a}] {}", meta.source_text),
                (None, _) => format!("[TO|a={a}] {}", meta.source_text),
            },
            PromptStage::Refine => {
                let lines = meta.lines.unwrap_or_default();
                let pid = meta
                    .paragraph_template_id
                    .map(|p| p.to_string())
                    .unwrap_or_default();
                lines
                    .iter()
                    .enumerate()
                    .map(|(i, line)| {
                        if i == 0 {
                            format!("[R{pid}] {line}")
                        } else {
                            line.clone()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            PromptStage::DirectTransfer => format!("[DIRECT] {}", meta.source_text),
            PromptStage::Destylize => meta
                .lines
                .unwrap_or_default()
                .iter()
                .map(|line| format!("[D] {line}"))
                .collect::<Vec<_>>()
                .join("\n"),
            PromptStage::Restylize => meta
                .lines
                .unwrap_or_default()
                .iter()
                .map(|line| format!("[C|a={a}] {line}"))
                .collect::<Vec<_>>()
                .join("\n"),
        };
        Ok(out)
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// Shared client for the `{"model", "messages", "temperature"}` chat wire
/// format (generation and judging use the same protocol). Transport failures
/// retry with exponential backoff; client errors do not.
pub(crate) struct ChatClient {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    max_attempts: u32,
    base_delay: Duration,
}

impl ChatClient {
    pub(crate) fn new(
        endpoint: String,
        model: String,
        temperature: f64,
        api_key_env: Option<&str>,
    ) -> Result<Self, String> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                format!("api key environment variable '{var}' is not set")
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            client,
            endpoint,
            model,
            temperature,
            api_key,
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        })
    }

    pub(crate) fn set_retry(&mut self, max_attempts: u32, base_delay: Duration) {
        self.max_attempts = max_attempts;
        self.base_delay = base_delay;
    }

    pub(crate) fn complete(&self, prompt: &str) -> Result<String, String> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
        };
        let mut last_err = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
            }
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: ChatResponse =
                        resp.json().map_err(|e| e.to_string())?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| "empty choices".to_string());
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last_err = format!("server returned {}", resp.status());
                }
                Ok(resp) => {
                    return Err(format!("server returned {}", resp.status()));
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(format!("{last_err} (after {} attempts)", self.max_attempts))
    }
}

/// Remote generation backend speaking the chat wire format.
pub struct RemoteGenerationBackend {
    spec: GenerationBackendSpec,
    chat: ChatClient,
    calls: AtomicU64,
}

impl RemoteGenerationBackend {
    pub fn new(spec: GenerationBackendSpec) -> Result<Self, TransferError> {
        spec.validate()?;
        let chat = ChatClient::new(
            spec.endpoint.clone().expect("validated"),
            spec.model_name.clone(),
            spec.temperature,
            spec.api_key_env.as_deref(),
        )
        .map_err(TransferError::BackendUnavailable)?;
        Ok(Self {
            spec,
            chat,
            calls: AtomicU64::new(0),
        })
    }

    /// Shrink the retry schedule (used by tests against local servers).
    pub fn with_retry(mut self, max_attempts: u32, base_delay: Duration) -> Self {
        self.chat.set_retry(max_attempts, base_delay);
        self
    }
}

impl GenerationBackend for RemoteGenerationBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn spec(&self) -> &GenerationBackendSpec {
        &self.spec
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, TransferError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.chat
            .complete(&request.prompt)
            .map_err(TransferError::BackendUnavailable)
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock() -> MockGenerationBackend {
        MockGenerationBackend::new(GenerationBackendSpec::mock("mock-gen"))
    }

    fn request<'a>(stage: PromptStage, meta: RequestMeta<'a>) -> GenerationRequest<'a> {
        GenerationRequest {
            stage,
            prompt: String::new(),
            meta,
        }
    }

    #[test]
    fn generate_tag_with_both_templates() {
        let m = mock();
        let out = m
            .complete(&request(
                PromptStage::Generate,
                RequestMeta {
                    source_text: "The cat sat.",
                    sentence_template_id: Some(3),
                    paragraph_template_id: Some(1),
                    alpha: 0.8,
                    lines: None,
                },
            ))
            .unwrap();
        assert_eq!(out, "[S3|P1|a=0.8] The cat sat.");
        assert_eq!(m.call_count(), 1);
    }

    #[test]
    fn generate_tag_sentence_only() {
        let out = mock()
            .complete(&request(
                PromptStage::Generate,
                RequestMeta {
                    source_text: "Text.",
                    sentence_template_id: Some(7),
                    alpha: 0.5,
                    ..RequestMeta::default()
                },
            ))
            .unwrap();
        assert_eq!(out, "[S7|a=0.5] Text.");
    }

    #[test]
    fn refine_prefixes_first_line() {
        let lines = vec!["One.".to_string(), "Two.".to_string()];
        let out = mock()
            .complete(&request(
                PromptStage::Refine,
                RequestMeta {
                    paragraph_template_id: Some(4),
                    lines: Some(&lines),
                    ..RequestMeta::default()
                },
            ))
            .unwrap();
        assert_eq!(out, "[R4] One.\nTwo.");
    }

    #[test]
    fn direct_and_conv_rules() {
        let m = mock();
        let out = m
            .complete(&request(
                PromptStage::DirectTransfer,
                RequestMeta {
                    source_text: "Whole body",
                    ..RequestMeta::default()
                },
            ))
            .unwrap();
        assert_eq!(out, "[DIRECT] Whole body");

        let lines = vec!["A.".to_string()];
        let destylized = m
            .complete(&request(
                PromptStage::Destylize,
                RequestMeta {
                    lines: Some(&lines),
                    ..RequestMeta::default()
                },
            ))
            .unwrap();
        assert_eq!(destylized, "[D] A.");
    }

    #[test]
    fn abstract_pattern_rule() {
        assert_eq!(
            mock_abstract_pattern("We propose a novel framework."),
            "We {SLOT} a {SLOT} {SLOT}."
        );
        assert_eq!(mock_abstract_pattern("A b c."), "A b c.");
        assert_eq!(mock_abstract_pattern("(parenthetical) — dash"), "({SLOT}) — dash");
    }

    #[test]
    fn spec_validation_bounds() {
        let mut spec = GenerationBackendSpec::mock("m");
        spec.max_context_chars = 999;
        assert!(spec.validate().is_err());
        spec.max_context_chars = 1_000;
        assert!(spec.validate().is_ok());
        spec.temperature = -0.1;
        assert!(spec.validate().is_err());
    }
}
