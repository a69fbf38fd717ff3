//! Document ingestion, segmentation and reference-set sampling.
//!
//! Documents are segmented losslessly: every byte of the original body is
//! accounted for either by a sentence's text or by a recorded separator, so
//! [`SegmentedDocument::reconstruct`] reproduces the input exactly.

mod sample;
mod segment;

pub use sample::{sample_reference_set, ReferenceSample};
pub use segment::{segment, SegmentationRules};

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document '{doc_id}' has a whitespace-only body")]
    EmptyDocument { doc_id: String },
    #[error("duplicate doc_id '{doc_id}' in corpus")]
    DuplicateDocId { doc_id: String },
    #[error("no author has at least {n_exp} documents")]
    NoEligibleAuthor { n_exp: usize },
    #[error("invalid sampling parameters: {0}")]
    InvalidSamplingParams(String),
    #[error("corpus io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus parse error at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// An unprocessed input document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub body: String,
}

impl RawDocument {
    pub fn new(doc_id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            author_id: None,
            title: None,
            body: body.into(),
        }
    }

    pub fn with_author(mut self, author_id: impl Into<String>) -> Self {
        self.author_id = Some(author_id.into());
        self
    }

    /// Body length in characters (the unit used for sampling ratios).
    pub fn char_len(&self) -> usize {
        self.body.chars().count()
    }
}

/// One sentence unit with its byte span in the original body and the
/// whitespace that followed it inside its paragraph (empty for the last
/// sentence of a paragraph).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub sent_id: String,
    pub text: String,
    /// Byte offsets `(start, end)` of `text` in the document body.
    pub char_span: (usize, usize),
    pub separator_after: String,
}

/// An ordered run of sentences plus the separator (blank lines, trailing
/// whitespace) between this paragraph and the next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub sentences: Vec<SentenceUnit>,
    pub separator_after: String,
}

impl Paragraph {
    /// The paragraph text exactly as it appeared in the body.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.text);
            out.push_str(&s.separator_after);
        }
        out
    }
}

/// A document decomposed into paragraphs and sentence units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    /// Whitespace preceding the first sentence of the document.
    pub leading: String,
    pub paragraphs: Vec<Paragraph>,
}

impl SegmentedDocument {
    /// Rebuild the original body byte-for-byte from sentences and separators.
    pub fn reconstruct(&self) -> String {
        let mut out = String::from(&self.leading);
        for p in &self.paragraphs {
            for s in &p.sentences {
                out.push_str(&s.text);
                out.push_str(&s.separator_after);
            }
            out.push_str(&p.separator_after);
        }
        out
    }

    /// All sentence units in document order.
    pub fn sentences(&self) -> impl Iterator<Item = &SentenceUnit> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }

    pub fn sentence_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.sentences.len()).sum()
    }
}

/// Load a JSON-lines corpus (one document object per line). Blank lines are
/// skipped. Rejects duplicate ids and whitespace-only bodies.
pub fn load_corpus_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawDocument>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut docs = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
                line: idx + 1,
                source,
            })?;
        if doc.body.trim().is_empty() {
            return Err(CorpusError::EmptyDocument { doc_id: doc.doc_id });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId { doc_id: doc.doc_id });
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let docs = vec![
            RawDocument::new("a", "Alpha body.").with_author("x"),
            RawDocument::new("b", "Beta body."),
        ];
        let mut text = String::new();
        for d in &docs {
            text.push_str(&serde_json::to_string(d).unwrap());
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();
        let loaded = load_corpus_jsonl(&path).unwrap();
        assert_eq!(loaded, docs);
    }

    #[test]
    fn jsonl_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"doc_id\":\"a\",\"body\":\"x.\"}\n{\"doc_id\":\"a\",\"body\":\"y.\"}\n",
        )
        .unwrap();
        assert!(matches!(
            load_corpus_jsonl(&path),
            Err(CorpusError::DuplicateDocId { .. })
        ));
    }

    #[test]
    fn jsonl_rejects_blank_body() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, "{\"doc_id\":\"a\",\"body\":\"  \\n \"}\n").unwrap();
        assert!(matches!(
            load_corpus_jsonl(&path),
            Err(CorpusError::EmptyDocument { .. })
        ));
    }
}
