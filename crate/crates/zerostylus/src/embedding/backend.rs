//! Encoder backends: a deterministic offline mock and a remote HTTP client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingError};
use crate::Scalar;

/// Disambiguates a mock backend from a remote model endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock,
}

fn default_job_limit() -> usize {
    100_000
}

fn default_max_batch() -> usize {
    64
}

/// Configuration for an embedding backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingBackendSpec {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub model_name: String,
    pub dim: usize,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    /// Environment variable holding the API key (remote only; keys never
    /// live in config files).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Seed for the mock's trigram hash.
    #[serde(default)]
    pub hash_seed: u64,
    /// Upper bound on texts per [`embed_sentences`] call.
    #[serde(default = "default_job_limit")]
    pub job_limit: usize,
}

impl EmbeddingBackendSpec {
    /// A mock spec with the given id and dimension.
    pub fn mock(backend_id: impl Into<String>, dim: usize) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "trigram-hash".to_string(),
            dim,
            max_batch: default_max_batch(),
            api_key_env: None,
            hash_seed: 0,
            job_limit: default_job_limit(),
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim < 1 {
            return Err(EmbeddingError::InvalidSpec("dim must be >= 1".into()));
        }
        if self.max_batch < 1 {
            return Err(EmbeddingError::InvalidSpec("max_batch must be >= 1".into()));
        }
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(EmbeddingError::InvalidSpec(
                "remote embedding backend requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Interface every encoder implements. Implementations must preserve input
/// order and cardinality.
pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError>;
}

/// Embed a batch of sentences through `backend`, rejecting empty texts and
/// oversized jobs up front.
pub fn embed_sentences(
    backend: &dyn EmbeddingBackend,
    texts: &[&str],
    job_limit: usize,
) -> Result<Vec<Embedding>, EmbeddingError> {
    if texts.len() > job_limit {
        return Err(EmbeddingError::JobTooLarge {
            got: texts.len(),
            limit: job_limit,
        });
    }
    if texts.iter().any(|t| t.is_empty()) {
        return Err(EmbeddingError::EmptyText);
    }
    let out = backend.embed(texts)?;
    debug_assert_eq!(out.len(), texts.len());
    Ok(out)
}

/// Build a backend from its spec.
pub fn make_embedding_backend(
    spec: &EmbeddingBackendSpec,
) -> Result<Box<dyn EmbeddingBackend>, EmbeddingError> {
    spec.validate()?;
    match spec.kind {
        BackendKind::Mock => Ok(Box::new(MockEmbeddingBackend::new(spec.clone()))),
        BackendKind::Remote => Ok(Box::new(RemoteEmbeddingBackend::new(spec.clone())?)),
    }
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

// Sentinels marking text boundaries so prefix and suffix trigrams differ
// from interior ones ("ab" and "ba" hash differently).
const PAD_START: char = '\u{2}';
const PAD_END: char = '\u{3}';

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded FNV-1a. Stable across platforms and rustc versions, which keeps
/// mock pipeline artifacts byte-reproducible.
pub(crate) fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic offline encoder: character trigrams (with boundary padding)
/// hashed into `dim` buckets, counts L2-normalized.
pub struct MockEmbeddingBackend {
    spec: EmbeddingBackendSpec,
}

impl MockEmbeddingBackend {
    pub fn new(spec: EmbeddingBackendSpec) -> Self {
        Self { spec }
    }

    fn embed_one(&self, text: &str) -> Embedding {
        let mut counts = vec![0.0 as Scalar; self.spec.dim];
        let padded: Vec<char> = std::iter::once(PAD_START)
            .chain(text.chars())
            .chain(std::iter::once(PAD_END))
            .collect();
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let bucket = (fnv1a64(self.spec.hash_seed, &buf[..len]) % self.spec.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = crate::numeric::norm(&counts);
        if norm > 0.0 {
            crate::numeric::scale(&mut counts, 1.0 / norm);
        }
        Embedding {
            values: counts,
            backend_id: self.spec.backend_id.clone(),
        }
    }
}

impl EmbeddingBackend for MockEmbeddingBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<Scalar>,
}

/// HTTP client for an order-preserving `{"model", "input"}` embedding
/// endpoint. Requests are chunked at `max_batch`; transport failures retry
/// with exponential backoff.
pub struct RemoteEmbeddingBackend {
    spec: EmbeddingBackendSpec,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    max_attempts: u32,
    base_delay: Duration,
}

impl RemoteEmbeddingBackend {
    pub fn new(spec: EmbeddingBackendSpec) -> Result<Self, EmbeddingError> {
        spec.validate()?;
        let api_key = match &spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                EmbeddingError::BackendUnavailable(format!(
                    "api key environment variable '{var}' is not set"
                ))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            spec,
            client,
            api_key,
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        })
    }

    /// Shrink the retry schedule (used by tests against local servers).
    pub fn with_retry(mut self, max_attempts: u32, base_delay: Duration) -> Self {
        self.max_attempts = max_attempts;
        self.base_delay = base_delay;
        self
    }

    fn post_chunk(&self, chunk: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        let endpoint = self.spec.endpoint.as_deref().expect("validated");
        let body = EmbedRequest {
            model: &self.spec.model_name,
            input: chunk,
        };
        let mut last_err = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
            }
            let mut req = self.client.post(endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: EmbedResponse = resp
                        .json()
                        .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
                    return self.convert(chunk.len(), parsed);
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last_err = format!("server returned {}", resp.status());
                }
                Ok(resp) => {
                    // Client errors are not retriable.
                    return Err(EmbeddingError::BackendUnavailable(format!(
                        "server returned {}",
                        resp.status()
                    )));
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(EmbeddingError::BackendUnavailable(format!(
            "{last_err} (after {} attempts)",
            self.max_attempts
        )))
    }

    fn convert(
        &self,
        expected_len: usize,
        resp: EmbedResponse,
    ) -> Result<Vec<Embedding>, EmbeddingError> {
        if resp.data.len() != expected_len {
            return Err(EmbeddingError::BackendUnavailable(format!(
                "server returned {} embeddings for {expected_len} inputs",
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|item| {
                if item.embedding.len() != self.spec.dim {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.spec.dim,
                        actual: item.embedding.len(),
                    });
                }
                Embedding::new(item.embedding, self.spec.backend_id.clone())
            })
            .collect()
    }
}

impl EmbeddingBackend for RemoteEmbeddingBackend {
    fn backend_id(&self) -> &str {
        &self.spec.backend_id
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.spec.max_batch) {
            out.extend(self.post_chunk(chunk)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock(dim: usize) -> MockEmbeddingBackend {
        MockEmbeddingBackend::new(EmbeddingBackendSpec::mock("mock", dim))
    }

    #[test]
    fn deterministic_for_same_text() {
        let m = mock(16);
        let out = m.embed(&["hello world", "hello world"]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn output_is_unit_norm() {
        let m = mock(32);
        for text in ["a", "ab", "a longer sentence with words."] {
            let e = &m.embed(&[text]).unwrap()[0];
            let norm = crate::numeric::norm(e.values());
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm} for {text:?}");
        }
    }

    #[test]
    fn order_sensitive_trigram_buckets() {
        // Independent oracle: recompute the expected bucket histogram with a
        // from-scratch FNV-1a and compare elementwise.
        fn reference(text: &str, dim: usize, seed: u64) -> Vec<f64> {
            let padded: Vec<char> = std::iter::once('\u{2}')
                .chain(text.chars())
                .chain(std::iter::once('\u{3}'))
                .collect();
            let mut counts = vec![0.0; dim];
            for w in padded.windows(3) {
                let s: String = w.iter().collect();
                let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
                for b in s.as_bytes() {
                    h ^= *b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                counts[(h % dim as u64) as usize] += 1.0;
            }
            let norm: f64 = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
            counts.iter().map(|c| c / norm).collect()
        }

        let m = mock(8);
        let out = m.embed(&["ab", "ba"]).unwrap();
        assert_ne!(out[0], out[1], "prefix/suffix trigrams must differ");
        assert_eq!(out[0].values(), reference("ab", 8, 0).as_slice());
        assert_eq!(out[1].values(), reference("ba", 8, 0).as_slice());
    }

    #[test]
    fn hash_seed_changes_vectors() {
        let mut spec = EmbeddingBackendSpec::mock("mock", 16);
        spec.hash_seed = 1;
        let a = mock(16).embed(&["text"]).unwrap();
        let b = MockEmbeddingBackend::new(spec).embed(&["text"]).unwrap();
        assert_ne!(a[0].values(), b[0].values());
    }

    #[test]
    fn embed_sentences_guards() {
        let m = mock(8);
        assert!(matches!(
            embed_sentences(&m, &["ok", ""], 100),
            Err(EmbeddingError::EmptyText)
        ));
        assert!(matches!(
            embed_sentences(&m, &["a", "b", "c"], 2),
            Err(EmbeddingError::JobTooLarge { got: 3, limit: 2 })
        ));
        let out = embed_sentences(&m, &["a", "b", "c"], 3).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn spec_validation() {
        let mut spec = EmbeddingBackendSpec::mock("m", 0);
        assert!(spec.validate().is_err());
        spec.dim = 4;
        spec.max_batch = 0;
        assert!(spec.validate().is_err());
        spec.max_batch = 1;
        assert!(spec.validate().is_ok());
        spec.kind = BackendKind::Remote;
        assert!(spec.validate().is_err()); // endpoint missing
    }
}
