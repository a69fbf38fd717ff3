//! Per-paragraph checkpointing so long transfers survive interruption and
//! flaky remote backends.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParagraphTraceRecord, SentenceTraceRecord, StylizedParagraph, TransferError, Variant};

/// Everything recorded for one completed paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedParagraph {
    pub stylized: StylizedParagraph,
    pub sentences: Vec<SentenceTraceRecord>,
    pub record: ParagraphTraceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Hash of the resolved configuration and inputs; a mismatch means the
    /// checkpoint belongs to a different run and is ignored.
    pub fingerprint: String,
    pub doc_id: String,
    pub variant: Variant,
    pub completed: Vec<CompletedParagraph>,
}

/// Where to persist progress. `fingerprint` ties the file to one
/// (config, inputs) combination.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint_path: Option<PathBuf>,
    pub fingerprint: String,
}

impl RunOptions {
    pub fn with_checkpoint(path: impl Into<PathBuf>, fingerprint: impl Into<String>) -> Self {
        Self {
            checkpoint_path: Some(path.into()),
            fingerprint: fingerprint.into(),
        }
    }
}

/// Load a resumable checkpoint if one matches this run. Stale or unreadable
/// checkpoints are discarded with a warning rather than failing the run.
pub fn load_matching(
    options: &RunOptions,
    doc_id: &str,
    variant: Variant,
) -> Vec<CompletedParagraph> {
    let Some(path) = &options.checkpoint_path else {
        return Vec::new();
    };
    if !path.exists() {
        return Vec::new();
    }
    let parsed: Result<Checkpoint, _> = std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|raw| serde_json::from_str(&raw).map_err(|e| e.to_string()));
    match parsed {
        Ok(ckpt)
            if ckpt.fingerprint == options.fingerprint
                && ckpt.doc_id == doc_id
                && ckpt.variant == variant =>
        {
            log::info!(
                "resuming '{doc_id}' from checkpoint: {} paragraphs done",
                ckpt.completed.len()
            );
            ckpt.completed
        }
        Ok(_) => {
            log::warn!("checkpoint at {} belongs to a different run; starting fresh", path.display());
            Vec::new()
        }
        Err(e) => {
            log::warn!("unreadable checkpoint at {}: {e}; starting fresh", path.display());
            Vec::new()
        }
    }
}

/// Persist progress after a completed paragraph (atomic write).
pub fn save(
    options: &RunOptions,
    doc_id: &str,
    variant: Variant,
    completed: &[CompletedParagraph],
) -> Result<(), TransferError> {
    let Some(path) = &options.checkpoint_path else {
        return Ok(());
    };
    let ckpt = Checkpoint {
        fingerprint: options.fingerprint.clone(),
        doc_id: doc_id.to_string(),
        variant,
        completed: completed.to_vec(),
    };
    let json = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    crate::fsutil::write_atomic(path, &json).map_err(TransferError::Io)
}

/// Remove the checkpoint after a successful run.
pub fn clear(options: &RunOptions) {
    if let Some(path) = &options.checkpoint_path {
        if path.exists() {
            if let Err(e) = std::fs::remove_file(path) {
                log::warn!("could not remove checkpoint {}: {e}", path.display());
            }
        }
    }
}

/// Fingerprint arbitrary components into a hex digest (SHA-256).
pub fn fingerprint(parts: &[&str]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[allow(dead_code)]
fn path_display(path: &Path) -> String {
    path.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn completed(n: usize) -> Vec<CompletedParagraph> {
        (0..n)
            .map(|i| CompletedParagraph {
                stylized: StylizedParagraph {
                    para_id: format!("d#p{i}"),
                    text: format!("Paragraph {i}."),
                    separator_after: "\n\n".to_string(),
                },
                sentences: vec![],
                record: ParagraphTraceRecord {
                    para_id: format!("d#p{i}"),
                    paragraph_template_id: None,
                    paragraph_distance: None,
                    refinement_skipped: false,
                    windows: 1,
                },
            })
            .collect()
    }

    #[test]
    fn save_load_clear_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let options = RunOptions::with_checkpoint(&path, "fp");
        save(&options, "d", Variant::StructuredRewritten, &completed(2)).unwrap();
        let loaded = load_matching(&options, "d", Variant::StructuredRewritten);
        assert_eq!(loaded.len(), 2);

        // Fingerprint mismatch discards.
        let other = RunOptions::with_checkpoint(&path, "other-fp");
        assert!(load_matching(&other, "d", Variant::StructuredRewritten).is_empty());
        // Different doc or variant discards.
        assert!(load_matching(&options, "e", Variant::StructuredRewritten).is_empty());
        assert!(load_matching(&options, "d", Variant::SentencePattern).is_empty());

        clear(&options);
        assert!(!path.exists());
    }

    #[test]
    fn fingerprint_is_order_sensitive() {
        assert_ne!(fingerprint(&["a", "b"]), fingerprint(&["b", "a"]));
        assert_eq!(fingerprint(&["a", "b"]), fingerprint(&["a", "b"]));
        // Length prefixing keeps ["ab", ""] distinct from ["a", "b"].
        assert_ne!(fingerprint(&["ab", ""]), fingerprint(&["a", "b"]));
    }
}
