//! Repository persistence: versioned JSON files with full-precision vectors,
//! re-validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_separation, ClusteringParams, ParagraphRepo, ParagraphTemplate, SentenceRepo,
    SentenceTemplate, TemplateError,
};
use crate::embedding::Embedding;
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SentenceRepoFile {
    format_version: u32,
    kind: String,
    backend_id: String,
    dim: usize,
    clustering_params: ClusteringParams,
    templates: Vec<SentenceTemplateRow>,
}

#[derive(Serialize, Deserialize)]
struct SentenceTemplateRow {
    template_id: usize,
    centroid: Vec<Scalar>,
    medoid_text: String,
    member_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abstracted_pattern: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ParagraphRepoFile {
    format_version: u32,
    kind: String,
    backend_id: String,
    dim: usize,
    epsilon: Scalar,
    templates: Vec<ParagraphTemplateRow>,
}

#[derive(Serialize, Deserialize)]
struct ParagraphTemplateRow {
    template_id: usize,
    vector: Vec<Scalar>,
    exemplar_para_id: String,
    sentence_template_ids: Vec<usize>,
    member_count: usize,
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), TemplateError> {
    crate::fsutil::write_atomic(path, contents).map_err(TemplateError::Io)
}

/// Parse the version/kind envelope before the full payload, so version skew
/// is reported as such instead of as a parse failure.
fn check_envelope(raw: &str, expected_kind: &str) -> Result<(), TemplateError> {
    #[derive(Deserialize)]
    struct Envelope {
        format_version: u32,
        kind: String,
    }
    let env: Envelope = serde_json::from_str(raw)
        .map_err(|e| TemplateError::CorruptFile(format!("unreadable header: {e}")))?;
    if env.format_version != FORMAT_VERSION {
        return Err(TemplateError::VersionMismatch {
            found: env.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if env.kind != expected_kind {
        return Err(TemplateError::CorruptFile(format!(
            "expected a {expected_kind} repository, found kind '{}'",
            env.kind
        )));
    }
    Ok(())
}

fn check_backend(found: &str, expected: Option<&str>) -> Result<(), TemplateError> {
    if let Some(expected) = expected {
        if found != expected {
            return Err(TemplateError::BackendMismatch {
                expected: expected.to_string(),
                actual: found.to_string(),
            });
        }
    }
    Ok(())
}

fn restore_vector(
    raw: Vec<Scalar>,
    dim: usize,
    backend_id: &str,
    what: &str,
) -> Result<Embedding, TemplateError> {
    if raw.len() != dim {
        return Err(TemplateError::CorruptFile(format!(
            "{what} has {} components, expected {dim}",
            raw.len()
        )));
    }
    Embedding::new(raw, backend_id)
        .map_err(|e| TemplateError::CorruptFile(format!("{what}: {e}")))
}

fn check_ids_dense(ids: &[usize]) -> Result<(), TemplateError> {
    for (i, &id) in ids.iter().enumerate() {
        if id != i {
            return Err(TemplateError::CorruptFile(format!(
                "template ids are not dense: position {i} holds id {id}"
            )));
        }
    }
    Ok(())
}

pub fn save_sentence_repo(repo: &SentenceRepo, path: impl AsRef<Path>) -> Result<(), TemplateError> {
    let dim = repo.dim().unwrap_or(0);
    let file = SentenceRepoFile {
        format_version: FORMAT_VERSION,
        kind: "sentence".to_string(),
        backend_id: repo.backend_id.clone(),
        dim,
        clustering_params: repo.clustering_params,
        templates: repo
            .templates
            .iter()
            .map(|t| SentenceTemplateRow {
                template_id: t.template_id,
                centroid: t.centroid.values().to_vec(),
                medoid_text: t.medoid_text.clone(),
                member_count: t.member_count,
                abstracted_pattern: t.abstracted_pattern.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("repo serializes");
    write_atomic(path.as_ref(), &json)
}

pub fn load_sentence_repo(
    path: impl AsRef<Path>,
    expected_backend: Option<&str>,
) -> Result<SentenceRepo, TemplateError> {
    let raw = std::fs::read_to_string(path)?;
    check_envelope(&raw, "sentence")?;
    let file: SentenceRepoFile = serde_json::from_str(&raw)
        .map_err(|e| TemplateError::CorruptFile(e.to_string()))?;
    check_backend(&file.backend_id, expected_backend)?;

    let ids: Vec<usize> = file.templates.iter().map(|t| t.template_id).collect();
    check_ids_dense(&ids)?;
    let mut templates = Vec::with_capacity(file.templates.len());
    for row in file.templates {
        if row.member_count < 1 {
            return Err(TemplateError::CorruptFile(format!(
                "template {} has member_count 0",
                row.template_id
            )));
        }
        let centroid = restore_vector(
            row.centroid,
            file.dim,
            &file.backend_id,
            &format!("centroid of template {}", row.template_id),
        )?;
        templates.push(SentenceTemplate {
            template_id: row.template_id,
            centroid,
            medoid_text: row.medoid_text,
            member_count: row.member_count,
            abstracted_pattern: row.abstracted_pattern,
        });
    }
    for (i, a) in templates.iter().enumerate() {
        for b in templates.iter().skip(i + 1) {
            if a.centroid == b.centroid {
                return Err(TemplateError::CorruptFile(format!(
                    "templates {} and {} share a centroid",
                    a.template_id, b.template_id
                )));
            }
        }
    }
    Ok(SentenceRepo {
        templates,
        backend_id: file.backend_id,
        clustering_params: file.clustering_params,
    })
}

pub fn save_paragraph_repo(
    repo: &ParagraphRepo,
    path: impl AsRef<Path>,
) -> Result<(), TemplateError> {
    let dim = repo.dim().unwrap_or(0);
    let file = ParagraphRepoFile {
        format_version: FORMAT_VERSION,
        kind: "paragraph".to_string(),
        backend_id: repo.backend_id.clone(),
        dim,
        epsilon: repo.epsilon,
        templates: repo
            .templates
            .iter()
            .map(|t| ParagraphTemplateRow {
                template_id: t.template_id,
                vector: t.vector.values().to_vec(),
                exemplar_para_id: t.exemplar_para_id.clone(),
                sentence_template_ids: t.sentence_template_ids.clone(),
                member_count: t.member_count,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("repo serializes");
    write_atomic(path.as_ref(), &json)
}

pub fn load_paragraph_repo(
    path: impl AsRef<Path>,
    expected_backend: Option<&str>,
) -> Result<ParagraphRepo, TemplateError> {
    let raw = std::fs::read_to_string(path)?;
    check_envelope(&raw, "paragraph")?;
    let file: ParagraphRepoFile = serde_json::from_str(&raw)
        .map_err(|e| TemplateError::CorruptFile(e.to_string()))?;
    check_backend(&file.backend_id, expected_backend)?;
    if !(file.epsilon > 0.0) {
        return Err(TemplateError::CorruptFile(format!(
            "epsilon must be positive, found {}",
            file.epsilon
        )));
    }

    let ids: Vec<usize> = file.templates.iter().map(|t| t.template_id).collect();
    check_ids_dense(&ids)?;
    let mut templates = Vec::with_capacity(file.templates.len());
    for row in file.templates {
        if row.member_count < 1 {
            return Err(TemplateError::CorruptFile(format!(
                "template {} has member_count 0",
                row.template_id
            )));
        }
        let vector = restore_vector(
            row.vector,
            file.dim,
            &file.backend_id,
            &format!("vector of template {}", row.template_id),
        )?;
        templates.push(ParagraphTemplate {
            template_id: row.template_id,
            vector,
            exemplar_para_id: row.exemplar_para_id,
            sentence_template_ids: row.sentence_template_ids,
            member_count: row.member_count,
        });
    }
    let repo = ParagraphRepo {
        templates,
        epsilon: file.epsilon,
        backend_id: file.backend_id,
    };
    check_separation(&repo)?;
    Ok(repo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;
    use proptest::prelude::*;

    fn emb(values: &[Scalar]) -> Embedding {
        Embedding::new(values.to_vec(), "test").unwrap()
    }

    fn sample_sentence_repo() -> SentenceRepo {
        SentenceRepo {
            templates: vec![
                SentenceTemplate {
                    template_id: 0,
                    centroid: emb(&[0.123456789012345, -0.987654321098765]),
                    medoid_text: "First medoid.".to_string(),
                    member_count: 3,
                    abstracted_pattern: Some("First {SLOT}.".to_string()),
                },
                SentenceTemplate {
                    template_id: 1,
                    centroid: emb(&[1.0 / 3.0, 2.0 / 7.0]),
                    medoid_text: "Second medoid.".to_string(),
                    member_count: 1,
                    abstracted_pattern: None,
                },
            ],
            backend_id: "test".to_string(),
            clustering_params: ClusteringParams {
                eps: 0.4,
                min_pts: 3,
            },
        }
    }

    fn sample_paragraph_repo() -> ParagraphRepo {
        ParagraphRepo {
            templates: vec![
                ParagraphTemplate {
                    template_id: 0,
                    vector: emb(&[0.0, 0.0]),
                    exemplar_para_id: "d#p0".to_string(),
                    sentence_template_ids: vec![0, 1],
                    member_count: 2,
                },
                ParagraphTemplate {
                    template_id: 1,
                    vector: emb(&[1.0, 1.0]),
                    exemplar_para_id: "d#p1".to_string(),
                    sentence_template_ids: vec![1],
                    member_count: 1,
                },
            ],
            epsilon: 0.3,
            backend_id: "test".to_string(),
        }
    }

    #[test]
    fn sentence_repo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_s.json");
        let repo = sample_sentence_repo();
        save_sentence_repo(&repo, &path).unwrap();
        let loaded = load_sentence_repo(&path, Some("test")).unwrap();
        assert_eq!(loaded, repo);
    }

    #[test]
    fn paragraph_repo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_p.json");
        let repo = sample_paragraph_repo();
        save_paragraph_repo(&repo, &path).unwrap();
        let loaded = load_paragraph_repo(&path, Some("test")).unwrap();
        assert_eq!(loaded, repo);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_s.json");
        save_sentence_repo(&sample_sentence_repo(), &path).unwrap();
        let raw = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(
            load_sentence_repo(&path, None),
            Err(TemplateError::VersionMismatch {
                found: 99,
                expected: 1
            })
        ));
    }

    #[test]
    fn wrong_backend_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_s.json");
        save_sentence_repo(&sample_sentence_repo(), &path).unwrap();
        assert!(matches!(
            load_sentence_repo(&path, Some("other")),
            Err(TemplateError::BackendMismatch { .. })
        ));
        assert!(load_sentence_repo(&path, None).is_ok());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_s.json");
        save_sentence_repo(&sample_sentence_repo(), &path).unwrap();
        assert!(matches!(
            load_paragraph_repo(&path, None),
            Err(TemplateError::CorruptFile(_))
        ));
    }

    #[test]
    fn separation_violation_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_p.json");
        let mut repo = sample_paragraph_repo();
        // Force two vectors within epsilon.
        repo.templates[1].vector = emb(&[0.1, 0.0]);
        save_paragraph_repo(&repo, &path).unwrap();
        assert!(matches!(
            load_paragraph_repo(&path, None),
            Err(TemplateError::CorruptFile(_))
        ));
    }

    #[test]
    fn garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma_s.json");
        std::fs::write(&path, "not json at all").unwrap();
        assert!(matches!(
            load_sentence_repo(&path, None),
            Err(TemplateError::CorruptFile(_))
        ));
    }

    proptest! {
        #[test]
        fn random_repo_round_trip(
            vals in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..12),
            eps in 0.001f64..10.0,
            min_pts in 1usize..6,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("repo.json");
            let templates: Vec<SentenceTemplate> = vals
                .iter()
                .enumerate()
                .map(|(i, (x, y))| SentenceTemplate {
                    template_id: i,
                    // Offset by index so centroids stay distinct.
                    centroid: Embedding::new(vec![*x + i as f64 * 1e7, *y], "prop").unwrap(),
                    medoid_text: format!("medoid {i}"),
                    member_count: i + 1,
                    abstracted_pattern: if i % 2 == 0 { Some(format!("{{SLOT}} {i}")) } else { None },
                })
                .collect();
            let repo = SentenceRepo {
                templates,
                backend_id: "prop".to_string(),
                clustering_params: ClusteringParams { eps, min_pts },
            };
            save_sentence_repo(&repo, &path).unwrap();
            let loaded = load_sentence_repo(&path, Some("prop")).unwrap();
            prop_assert_eq!(loaded, repo);
        }
    }
}
