//! Cohort-level tri-axial evaluation and report rendering.

use serde::{Deserialize, Serialize};

use super::adversarial::AdversarialReport;
use super::judge::JudgeBackend;
use super::{
    average_score, normalize_and_fuse, score_content_preservation, score_expression_quality,
    score_style_consistency, AxisProvenance, EvalError, KeywordExtractor, SemanticScorer,
    TriAxialScore,
};
use crate::embedding::EmbeddingBackend;

/// One evaluated sample (an output paragraph of one system).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub system: String,
    pub raw: TriAxialScore,
    pub normalized: TriAxialScore,
    pub average: f64,
    pub flags: Vec<String>,
}

/// Per-system means of the normalized axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAggregate {
    pub system: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub average: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriAxialReport {
    pub samples: Vec<SampleRow>,
    pub systems: Vec<SystemAggregate>,
}

/// The scorer bundle one tri-axial run needs.
pub struct TriAxialScorers<'a> {
    pub embedder: &'a dyn EmbeddingBackend,
    pub semantic: &'a dyn SemanticScorer,
    pub keyworder: &'a dyn KeywordExtractor,
    pub judge: &'a dyn JudgeBackend,
    pub content_weight: f64,
    pub keyword_top_k: usize,
}

/// Score every system's outputs against the shared source and reference
/// paragraphs, then min-max normalize over the pooled cohort so systems are
/// directly comparable. Outputs whose paragraph count differs from the
/// source (the single-call variant) are folded into one document-level
/// sample and flagged.
pub fn triaxial_run(
    source_paras: &[String],
    reference_paras: &[String],
    systems: &[(String, Vec<String>)],
    scorers: &TriAxialScorers,
) -> Result<TriAxialReport, EvalError> {
    if systems.is_empty() {
        return Err(EvalError::EmptyCohort);
    }
    let ref_refs: Vec<&str> = reference_paras.iter().map(|s| s.as_str()).collect();

    struct Pending {
        sample_id: String,
        system: String,
        raw: TriAxialScore,
        flags: Vec<String>,
    }
    let mut pending: Vec<Pending> = Vec::new();

    for (system, outputs) in systems {
        let aligned = outputs.len() == source_paras.len();
        let pairs: Vec<(String, String, String, Vec<String>)> = if aligned {
            outputs
                .iter()
                .zip(source_paras.iter())
                .enumerate()
                .map(|(i, (out, src))| {
                    (format!("{system}:p{i}"), out.clone(), src.clone(), Vec::new())
                })
                .collect()
        } else {
            vec![(
                format!("{system}:doc"),
                outputs.join("\n\n"),
                source_paras.join("\n\n"),
                vec!["paragraph_count_mismatch".to_string()],
            )]
        };

        for (sample_id, output, source, mut flags) in pairs {
            let x = score_style_consistency(&output, &ref_refs, scorers.embedder)?;
            let content = score_content_preservation(
                &output,
                &source,
                scorers.semantic,
                scorers.keyworder,
                scorers.content_weight,
                scorers.keyword_top_k,
            );
            flags.extend(content.flags);
            let z = match score_expression_quality(&output, scorers.judge) {
                Ok((z, z_flags)) => {
                    flags.extend(z_flags);
                    z
                }
                Err(e) => {
                    log::warn!("expression judge failed on {sample_id}: {e}");
                    flags.push(format!("expression_judge_failed: {e}"));
                    0.0
                }
            };
            pending.push(Pending {
                sample_id,
                system: system.clone(),
                raw: TriAxialScore {
                    x,
                    y: content.value,
                    z,
                    provenance: AxisProvenance {
                        style: scorers.embedder.backend_id().to_string(),
                        content: format!("{}+{}", scorers.semantic.id(), scorers.keyworder.id()),
                        expression: scorers.judge.backend_id().to_string(),
                    },
                },
                flags,
            });
        }
    }

    let raw: Vec<TriAxialScore> = pending.iter().map(|p| p.raw.clone()).collect();
    let normalized = normalize_and_fuse(&raw)?;

    let samples: Vec<SampleRow> = pending
        .into_iter()
        .zip(normalized)
        .map(|(p, norm)| SampleRow {
            average: average_score(&norm),
            sample_id: p.sample_id,
            system: p.system,
            raw: p.raw,
            normalized: norm,
            flags: p.flags,
        })
        .collect();

    let mut aggregates: Vec<SystemAggregate> = Vec::new();
    for (system, _) in systems {
        let rows: Vec<&SampleRow> = samples.iter().filter(|s| &s.system == system).collect();
        let n = rows.len() as f64;
        let mean = |f: fn(&TriAxialScore) -> f64| -> f64 {
            rows.iter().map(|r| f(&r.normalized)).sum::<f64>() / n
        };
        let (x, y, z) = (mean(|s| s.x), mean(|s| s.y), mean(|s| s.z));
        aggregates.push(SystemAggregate {
            system: system.clone(),
            x,
            y,
            z,
            average: (x + y + z) / 3.0,
            samples: rows.len() as u64,
        });
    }

    Ok(TriAxialReport {
        samples,
        systems: aggregates,
    })
}

/// CSV in the benchmark-table layout: one row per system, columns X/Y/Z and
/// the fused average.
pub fn triaxial_csv(report: &TriAxialReport) -> String {
    let mut out = String::from("system,style_consistency_x,content_preservation_y,expression_quality_z,average\n");
    for s in &report.systems {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4}\n",
            s.system, s.x, s.y, s.z, s.average
        ));
    }
    out
}

/// CSV in the win-rate-table layout: one row per axis, one column per judge,
/// values are win-rate percentages for output A.
pub fn adversarial_csv(report: &AdversarialReport) -> String {
    let judges: Vec<&str> = report.judges.iter().map(|j| j.judge_id.as_str()).collect();
    let mut out = String::from("axis");
    for j in &judges {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    let axes: Vec<&String> = report
        .judges
        .first()
        .map(|j| j.axes.keys().collect())
        .unwrap_or_default();
    for axis in axes {
        out.push_str(axis);
        for j in &report.judges {
            match j.axes.get(axis) {
                Some(tally) => out.push_str(&format!(",{:.1}", tally.counts.win_rate() * 100.0)),
                None => out.push_str(","),
            }
        }
        out.push('\n');
    }
    out
}
