//! Pairwise adversarial evaluation: positional-robust preferences through a
//! sigmoid over both orderings, and δ-margin win/loss/tie rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::judge::{JudgeBackend, JudgeMargins};
use super::EvalError;
use crate::numeric;

/// Positional-robust preference for the output listed first in the `s_ab`
/// ordering: `0.5 * (sigmoid(s_ab) + 1 - sigmoid(s_ba))`.
pub fn pairwise_preference(s_ab: f64, s_ba: f64) -> f64 {
    0.5 * (numeric::sigmoid(s_ab) + 1.0 - numeric::sigmoid(s_ba))
}

/// One judged pair: the raw margins from both orderings and the fused
/// preference for A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRecord {
    pub sample_id: String,
    /// Margin with A listed first.
    pub s_ab: f64,
    /// Margin with B listed first.
    pub s_ba: f64,
    pub pref_a: f64,
}

impl PairwiseRecord {
    pub fn new(sample_id: impl Into<String>, s_ab: f64, s_ba: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            s_ab,
            s_ba,
            pref_a: pairwise_preference(s_ab, s_ba),
        }
    }
}

/// Win/loss/tie tallies with exact integer counts; rates are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinLossTie {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
}

impl WinLossTie {
    pub fn total(&self) -> u64 {
        self.wins + self.losses + self.ties
    }

    pub fn win_rate(&self) -> f64 {
        self.rate(self.wins)
    }

    pub fn loss_rate(&self) -> f64 {
        self.rate(self.losses)
    }

    pub fn tie_rate(&self) -> f64 {
        self.rate(self.ties)
    }

    fn rate(&self, count: u64) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            count as f64 / n as f64
        }
    }
}

/// Classify preferences against the δ margin: win iff `pref > 0.5 + δ`,
/// loss iff `pref < 0.5 - δ`, tie otherwise (boundaries included in the
/// tie band).
pub fn win_rate(prefs: &[f64], delta: f64) -> Result<WinLossTie, EvalError> {
    if prefs.is_empty() {
        return Err(EvalError::EmptyCohort);
    }
    if !(0.0..0.5).contains(&delta) {
        return Err(EvalError::RangeError {
            what: "delta",
            value: delta,
            range: "[0, 0.5)",
        });
    }
    let mut counts = WinLossTie {
        wins: 0,
        losses: 0,
        ties: 0,
    };
    for &p in prefs {
        if !(0.0..=1.0).contains(&p) {
            return Err(EvalError::RangeError {
                what: "preference",
                value: p,
                range: "[0, 1]",
            });
        }
        if p > 0.5 + delta {
            counts.wins += 1;
        } else if p < 0.5 - delta {
            counts.losses += 1;
        } else {
            counts.ties += 1;
        }
    }
    Ok(counts)
}

/// One sample of the adversarial input tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSample {
    pub sample_id: String,
    pub source: String,
    pub reference: String,
    pub output_a: String,
    pub output_b: String,
}

/// Per-axis tally for one judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTally {
    pub records: Vec<PairwiseRecord>,
    pub counts: WinLossTie,
}

/// One judge's results over the sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub judge_id: String,
    /// Samples dropped for this judge after a judging failure (never
    /// imputed).
    pub excluded: u64,
    /// Keyed by axis: `x`/`y`/`z` in per-axis mode, `overall` otherwise.
    pub axes: BTreeMap<String, AxisTally>,
}

/// The adversarial comparison report for A versus B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub delta: f64,
    pub per_axis: bool,
    pub n_samples: u64,
    pub judges: Vec<JudgeReport>,
}

fn margins_map(margins: JudgeMargins, per_axis: bool) -> Vec<(&'static str, f64)> {
    match (per_axis, margins) {
        (true, JudgeMargins::PerAxis { x, y, z }) => vec![("x", x), ("y", y), ("z", z)],
        (_, JudgeMargins::Single(v)) => vec![("overall", v)],
        // A single-mode run with a per-axis response collapses to the mean.
        (false, JudgeMargins::PerAxis { x, y, z }) => vec![("overall", (x + y + z) / 3.0)],
    }
}

/// Judge every sample under both orderings with every judge. A judge failure
/// on either ordering excludes that sample from that judge's tally (logged,
/// counted, never imputed).
pub fn adversarial_run(
    samples: &[AdversarialSample],
    judges: &[&dyn JudgeBackend],
    delta: f64,
    per_axis: bool,
) -> Result<AdversarialReport, EvalError> {
    if judges.is_empty() {
        return Err(EvalError::NoJudgesConfigured);
    }
    if samples.is_empty() {
        return Err(EvalError::EmptyCohort);
    }

    let mut judge_reports = Vec::with_capacity(judges.len());
    for judge in judges {
        let mut excluded = 0u64;
        let mut per_axis_records: BTreeMap<String, Vec<PairwiseRecord>> = BTreeMap::new();
        for sample in samples {
            let forward = judge.judge_pair(
                &sample.source,
                &sample.reference,
                &sample.output_a,
                &sample.output_b,
                per_axis,
            );
            let backward = judge.judge_pair(
                &sample.source,
                &sample.reference,
                &sample.output_b,
                &sample.output_a,
                per_axis,
            );
            let (forward, backward) = match (forward, backward) {
                (Ok(f), Ok(b)) => (f, b),
                (f, b) => {
                    let err = f.err().or(b.err()).expect("at least one failed");
                    log::warn!(
                        "judge {} failed on sample {}: {err}; excluding",
                        judge.backend_id(),
                        sample.sample_id
                    );
                    excluded += 1;
                    continue;
                }
            };
            if let Err(e) = forward.validate().and_then(|_| backward.validate()) {
                log::warn!(
                    "judge {} returned out-of-range margins on {}: {e}; excluding",
                    judge.backend_id(),
                    sample.sample_id
                );
                excluded += 1;
                continue;
            }
            let fwd = margins_map(forward, per_axis);
            let bwd = margins_map(backward, per_axis);
            for ((axis, s_ab), (_, s_ba)) in fwd.into_iter().zip(bwd) {
                per_axis_records
                    .entry(axis.to_string())
                    .or_default()
                    .push(PairwiseRecord::new(sample.sample_id.clone(), s_ab, s_ba));
            }
        }
        let mut axes = BTreeMap::new();
        for (axis, records) in per_axis_records {
            let prefs: Vec<f64> = records.iter().map(|r| r.pref_a).collect();
            let counts = win_rate(&prefs, delta)?;
            axes.insert(axis, AxisTally { records, counts });
        }
        judge_reports.push(JudgeReport {
            judge_id: judge.backend_id().to_string(),
            excluded,
            axes,
        });
    }

    Ok(AdversarialReport {
        delta,
        per_axis,
        n_samples: samples.len() as u64,
        judges: judge_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::judge::{JudgeBackendSpec, MockJudgeBackend};
    use proptest::prelude::*;

    #[test]
    fn neutral_judge_gives_half() {
        assert_eq!(pairwise_preference(0.0, 0.0), 0.5);
    }

    #[test]
    fn strong_consistent_preference() {
        let p = pairwise_preference(2.0, -2.0);
        assert!((p - 0.880_797).abs() < 1e-6);
    }

    #[test]
    fn pure_position_bias_cancels() {
        for c in [-4.0, -1.0, 0.3, 2.5, 5.0] {
            let p = pairwise_preference(c, c);
            assert!((p - 0.5).abs() < 1e-12, "bias {c} leaked: {p}");
        }
    }

    #[test]
    fn record_invariant_holds() {
        let r = PairwiseRecord::new("s", 1.7, -0.4);
        let expected = 0.5 * (1.0 / (1.0 + (-1.7f64).exp()) + 1.0 - 1.0 / (1.0 + 0.4f64.exp()));
        assert!((r.pref_a - expected).abs() < 1e-12);
    }

    #[test]
    fn win_rate_example() {
        let counts = win_rate(&[0.9, 0.55, 0.3], 0.1).unwrap();
        assert_eq!((counts.wins, counts.losses, counts.ties), (1, 1, 1));
        assert!((counts.win_rate() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundaries_are_ties() {
        let counts = win_rate(&[0.6, 0.4, 0.5], 0.1).unwrap();
        assert_eq!((counts.wins, counts.losses, counts.ties), (0, 0, 3));
    }

    #[test]
    fn delta_zero_is_strict() {
        let counts = win_rate(&[0.5, 0.500001, 0.499999], 0.0).unwrap();
        assert_eq!((counts.wins, counts.losses, counts.ties), (1, 1, 1));
    }

    #[test]
    fn empty_prefs_rejected() {
        assert!(matches!(win_rate(&[], 0.1), Err(EvalError::EmptyCohort)));
    }

    #[test]
    fn invalid_delta_rejected() {
        assert!(win_rate(&[0.5], 0.5).is_err());
        assert!(win_rate(&[0.5], -0.01).is_err());
    }

    fn samples(n: usize) -> Vec<AdversarialSample> {
        (0..n)
            .map(|i| AdversarialSample {
                sample_id: format!("s{i}"),
                source: format!("Source paragraph {i}."),
                reference: "Reference style.".to_string(),
                output_a: format!("Output A {i}."),
                output_b: format!("Output B {i}."),
            })
            .collect()
    }

    #[test]
    fn biased_judge_yields_all_ties() {
        // A judge that always returns +1 for whichever output is listed
        // first carries pure position bias: every preference is 0.5.
        struct FirstBiased;
        impl JudgeBackend for FirstBiased {
            fn backend_id(&self) -> &str {
                "first-biased"
            }
            fn judge_pair(
                &self,
                _: &str,
                _: &str,
                _: &str,
                _: &str,
                _: bool,
            ) -> Result<JudgeMargins, EvalError> {
                Ok(JudgeMargins::Single(1.0))
            }
            fn rate_naturalness(&self, _: &str) -> Result<f64, EvalError> {
                Ok(5.0)
            }
        }
        let report = adversarial_run(&samples(7), &[&FirstBiased], 0.1, false).unwrap();
        let tally = &report.judges[0].axes["overall"];
        assert_eq!(tally.counts.ties, 7);
        assert!(tally.records.iter().all(|r| (r.pref_a - 0.5).abs() < 1e-12));
    }

    #[test]
    fn single_strong_sample_is_a_win() {
        struct Decisive;
        impl JudgeBackend for Decisive {
            fn backend_id(&self) -> &str {
                "decisive"
            }
            fn judge_pair(
                &self,
                _: &str,
                _: &str,
                first: &str,
                _: &str,
                _: bool,
            ) -> Result<JudgeMargins, EvalError> {
                // +2 when A is listed first, -2 when B is listed first.
                Ok(JudgeMargins::Single(if first.starts_with("Output A") {
                    2.0
                } else {
                    -2.0
                }))
            }
            fn rate_naturalness(&self, _: &str) -> Result<f64, EvalError> {
                Ok(5.0)
            }
        }
        let report = adversarial_run(&samples(1), &[&Decisive], 0.1, false).unwrap();
        let tally = &report.judges[0].axes["overall"];
        assert_eq!(tally.counts.wins, 1);
        assert!((tally.records[0].pref_a - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn zero_judges_is_a_config_error() {
        assert!(matches!(
            adversarial_run(&samples(1), &[], 0.1, true),
            Err(EvalError::NoJudgesConfigured)
        ));
    }

    #[test]
    fn failing_judge_excludes_samples() {
        struct Flaky;
        impl JudgeBackend for Flaky {
            fn backend_id(&self) -> &str {
                "flaky"
            }
            fn judge_pair(
                &self,
                source: &str,
                _: &str,
                _: &str,
                _: &str,
                _: bool,
            ) -> Result<JudgeMargins, EvalError> {
                if source.contains("1") {
                    Err(EvalError::BackendUnavailable("down".into()))
                } else {
                    Ok(JudgeMargins::Single(0.0))
                }
            }
            fn rate_naturalness(&self, _: &str) -> Result<f64, EvalError> {
                Ok(5.0)
            }
        }
        let report = adversarial_run(&samples(3), &[&Flaky], 0.1, false).unwrap();
        let judge = &report.judges[0];
        assert_eq!(judge.excluded, 1);
        let tally = &judge.axes["overall"];
        assert_eq!(tally.counts.total() + judge.excluded, 3);
    }

    #[test]
    fn per_axis_mode_produces_three_tallies() {
        let judge = MockJudgeBackend::new(JudgeBackendSpec::mock("j1"));
        let report = adversarial_run(&samples(5), &[&judge], 0.1, true).unwrap();
        let axes = &report.judges[0].axes;
        assert_eq!(axes.len(), 3);
        for key in ["x", "y", "z"] {
            assert_eq!(axes[key].counts.total(), 5);
        }
    }

    proptest! {
        // Antisymmetry: pref(A over B) + pref(B over A) == 1.
        #[test]
        fn preference_antisymmetry(s_ab in -5.0f64..5.0, s_ba in -5.0f64..5.0) {
            let ab = pairwise_preference(s_ab, s_ba);
            let ba = pairwise_preference(s_ba, s_ab);
            prop_assert!((ab + ba - 1.0).abs() < 1e-9);
        }

        // The sign of (pref - 0.5) depends only on the true signal, never on
        // a shared constant offset.
        #[test]
        fn shared_offset_never_flips_direction(s in -4.0f64..4.0, b in -3.0f64..3.0) {
            let p = pairwise_preference(s + b, -s + b);
            if s > 0.0 {
                prop_assert!(p > 0.5);
            } else if s < 0.0 {
                prop_assert!(p < 0.5);
            } else {
                prop_assert!((p - 0.5).abs() < 1e-12);
            }
        }

        // Rates partition exactly at the level of counts.
        #[test]
        fn rates_partition(prefs in prop::collection::vec(0.0f64..=1.0, 1..200), delta in 0.0f64..0.49) {
            let counts = win_rate(&prefs, delta).unwrap();
            prop_assert_eq!(counts.total() as usize, prefs.len());
            let sum = counts.win_rate() + counts.loss_rate() + counts.tie_rate();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
