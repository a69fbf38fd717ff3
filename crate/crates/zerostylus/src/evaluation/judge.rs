//! Judge backends for pairwise preference scoring and naturalness ratings.
//! Judges share the generation wire format; the mock derives every score
//! from a stable hash so offline evaluations are reproducible.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::embedding::backend::BackendKind;
use crate::embedding::backend::{self as emb_backend};
use crate::transfer::backend::ChatClient;

/// Configuration for a judge backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeBackendSpec {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl JudgeBackendSpec {
    pub fn mock(backend_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "hash-judge".to_string(),
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(EvalError::InvalidSpec(
                "remote judge backend requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Signed margin(s) in [-5, 5] favoring the first-listed output. Per-axis
/// margins mirror the tri-axial metric for the per-dimension win-rate
/// tables; single-margin mode gives one overall preference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JudgeMargins {
    Single(f64),
    PerAxis { x: f64, y: f64, z: f64 },
}

impl JudgeMargins {
    pub fn validate(&self) -> Result<(), EvalError> {
        let check = |v: f64| -> Result<(), EvalError> {
            if !(-5.0..=5.0).contains(&v) || !v.is_finite() {
                return Err(EvalError::RangeError {
                    what: "judge margin",
                    value: v,
                    range: "[-5, 5]",
                });
            }
            Ok(())
        };
        match self {
            JudgeMargins::Single(v) => check(*v),
            JudgeMargins::PerAxis { x, y, z } => {
                check(*x)?;
                check(*y)?;
                check(*z)
            }
        }
    }
}

/// Interface every judge implements.
pub trait JudgeBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Score a pair of outputs for the same (source, reference) context.
    /// The margin favors `first`; both orderings must be queried by the
    /// caller to mitigate position bias.
    fn judge_pair(
        &self,
        source: &str,
        reference: &str,
        first: &str,
        second: &str,
        per_axis: bool,
    ) -> Result<JudgeMargins, EvalError>;

    /// Naturalness rating on a 0-10 scale.
    fn rate_naturalness(&self, text: &str) -> Result<f64, EvalError>;
}

/// Build a judge from its spec.
pub fn make_judge_backend(spec: &JudgeBackendSpec) -> Result<Box<dyn JudgeBackend>, EvalError> {
    spec.validate()?;
    match spec.kind {
        BackendKind::Mock => Ok(Box::new(MockJudgeBackend::new(spec.clone()))),
        BackendKind::Remote => Ok(Box::new(RemoteJudgeBackend::new(spec.clone())?)),
    }
}

/// Deterministic offline judge: margins and ratings are stable hashes of
/// the inputs and the backend id (so different judge ids disagree like
/// different models would).
pub struct MockJudgeBackend {
    spec: JudgeBackendSpec,
    seed: u64,
}

impl MockJudgeBackend {
    pub fn new(spec: JudgeBackendSpec) -> Self {
        let seed = emb_backend::fnv1a64(0, spec.backend_id.as_bytes());
        Self { spec, seed }
    }

    fn margin_for(&self, parts: &[&str]) -> f64 {
        let mut h = self.seed;
        for p in parts {
            h = emb_backend::fnv1a64(h, p.as_bytes());
        }
        // Map onto [-5, 5] with two decimals.
        ((h % 1001) as f64) / 100.0 - 5.0
    }
}

impl JudgeBackend for MockJudgeBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn judge_pair(
        &self,
        source: &str,
        reference: &str,
        first: &str,
        second: &str,
        per_axis: bool,
    ) -> Result<JudgeMargins, EvalError> {
        let base = [source, reference, first, second];
        if per_axis {
            Ok(JudgeMargins::PerAxis {
                x: self.margin_for(&[&base.concat(), "x"]),
                y: self.margin_for(&[&base.concat(), "y"]),
                z: self.margin_for(&[&base.concat(), "z"]),
            })
        } else {
            Ok(JudgeMargins::Single(self.margin_for(&[&base.concat()])))
        }
    }

    fn rate_naturalness(&self, text: &str) -> Result<f64, EvalError> {
        let h = emb_backend::fnv1a64(self.seed, text.as_bytes());
        Ok(((h % 1001) as f64) / 100.0)
    }
}

const PAIR_PROMPT: &str = "\
You compare two rewrites of the same source paragraph against a style \
reference.
Source paragraph:
{{source}}
Style reference:
{{reference}}
Output 1:
{{first}}
Output 2:
{{second}}
Respond with a signed margin in [-5, 5] favoring Output 1 (positive) or \
Output 2 (negative).";

const PAIR_PROMPT_AXES: &str = "\
You compare two rewrites of the same source paragraph against a style \
reference, on three axes: style consistency (x), content preservation (y), \
expression quality (z).
Source paragraph:
{{source}}
Style reference:
{{reference}}
Output 1:
{{first}}
Output 2:
{{second}}
Respond with JSON {\"x\": .., \"y\": .., \"z\": ..}, each a signed margin in \
[-5, 5] favoring Output 1 (positive) or Output 2 (negative).";

const NATURALNESS_PROMPT: &str = "\
Rate the naturalness of the following text on a 0-10 scale (10 = fully \
fluent and natural). Respond with the number only.
Text:
{{text}}";

/// Remote judge speaking the generation wire format.
pub struct RemoteJudgeBackend {
    spec: JudgeBackendSpec,
    chat: ChatClient,
}

impl RemoteJudgeBackend {
    pub fn new(spec: JudgeBackendSpec) -> Result<Self, EvalError> {
        spec.validate()?;
        let chat = ChatClient::new(
            spec.endpoint.clone().expect("validated"),
            spec.model_name.clone(),
            0.0,
            spec.api_key_env.as_deref(),
        )
        .map_err(EvalError::BackendUnavailable)?;
        Ok(Self { spec, chat })
    }

    /// Shrink the retry schedule (used by tests against local servers).
    pub fn with_retry(mut self, max_attempts: u32, base_delay: std::time::Duration) -> Self {
        self.chat.set_retry(max_attempts, base_delay);
        self
    }
}

impl JudgeBackend for RemoteJudgeBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn judge_pair(
        &self,
        source: &str,
        reference: &str,
        first: &str,
        second: &str,
        per_axis: bool,
    ) -> Result<JudgeMargins, EvalError> {
        let skeleton = if per_axis { PAIR_PROMPT_AXES } else { PAIR_PROMPT };
        let prompt = crate::transfer::prompts::render(
            skeleton,
            &[
                ("source", source),
                ("reference", reference),
                ("first", first),
                ("second", second),
            ],
        );
        let content = self
            .chat
            .complete(&prompt)
            .map_err(EvalError::BackendUnavailable)?;
        let content = content.trim();
        let margins = if per_axis {
            #[derive(Deserialize)]
            struct Axes {
                x: f64,
                y: f64,
                z: f64,
            }
            let axes: Axes = serde_json::from_str(content).map_err(|e| {
                EvalError::BackendUnavailable(format!("unparseable per-axis response: {e}"))
            })?;
            JudgeMargins::PerAxis {
                x: axes.x,
                y: axes.y,
                z: axes.z,
            }
        } else {
            let v: f64 = content.parse().map_err(|_| {
                EvalError::BackendUnavailable(format!("unparseable margin '{content}'"))
            })?;
            JudgeMargins::Single(v)
        };
        margins.validate()?;
        Ok(margins)
    }

    fn rate_naturalness(&self, text: &str) -> Result<f64, EvalError> {
        let prompt = crate::transfer::prompts::render(NATURALNESS_PROMPT, &[("text", text)]);
        let content = self
            .chat
            .complete(&prompt)
            .map_err(EvalError::BackendUnavailable)?;
        content.trim().parse().map_err(|_| {
            EvalError::BackendUnavailable(format!("unparseable rating '{}'", content.trim()))
        })
    }
}
