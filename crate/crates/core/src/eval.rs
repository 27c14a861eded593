//! Scoring: confusion-matrix metrics against labels, multi-run aggregation,
//! and format-failure audits over decision logs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{Decision, FormatClass};
use crate::model::Verdict;

/// Confusion-matrix counts and the derived metrics. Counts are stored as
/// floats so multi-run means stay field-wise exact; single-run values are
/// always whole numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: f64,
    pub false_pos: f64,
    pub true_neg: f64,
    pub false_neg: f64,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_count: u64) -> Metrics {
        let total = (tp + fp + tn + fn_count) as f64;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_count > 0 {
            tp as f64 / (tp + fn_count) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: if total > 0.0 {
                (tp + tn) as f64 / total
            } else {
                0.0
            },
            precision,
            recall,
            f1,
            true_pos: tp as f64,
            false_pos: fp as f64,
            true_neg: tn as f64,
            false_neg: fn_count as f64,
        }
    }
}

/// Decision counts per format class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FormatAudit {
    pub well_formatted: u64,
    pub badly_formatted: u64,
    pub eliminated: u64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("decision {0:?} has no label")]
    MissingLabel(String),
    #[error("cannot aggregate zero runs")]
    NoRuns,
}

/// Score decisions against the label map.
pub fn score(decisions: &[Decision], labels: &HashMap<String, bool>) -> Result<Metrics, EvalError> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut tn = 0u64;
    let mut fn_count = 0u64;
    for decision in decisions {
        let label = *labels
            .get(&decision.pair_id)
            .ok_or_else(|| EvalError::MissingLabel(decision.pair_id.clone()))?;
        let predicted = decision.final_verdict == Verdict::Yes;
        match (predicted, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_count += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_count))
}

/// How to combine the metrics of repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// The run with the highest F1 (ties keep the earliest run).
    BestF1,
    /// Field-wise mean over runs.
    Mean,
}

/// Combine per-run metrics. `BestF1` also reports which run was selected.
pub fn aggregate_runs(
    runs: &[Metrics],
    mode: AggregateMode,
) -> Result<(Metrics, Option<usize>), EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoRuns);
    }
    match mode {
        AggregateMode::BestF1 => {
            let mut best = 0;
            for (i, run) in runs.iter().enumerate() {
                if run.f1 > runs[best].f1 {
                    best = i;
                }
            }
            Ok((runs[best].clone(), Some(best)))
        }
        AggregateMode::Mean => {
            let n = runs.len() as f64;
            let mean = |get: fn(&Metrics) -> f64| runs.iter().map(get).sum::<f64>() / n;
            Ok((
                Metrics {
                    accuracy: mean(|m| m.accuracy),
                    precision: mean(|m| m.precision),
                    recall: mean(|m| m.recall),
                    f1: mean(|m| m.f1),
                    true_pos: mean(|m| m.true_pos),
                    false_pos: mean(|m| m.false_pos),
                    true_neg: mean(|m| m.true_neg),
                    false_neg: mean(|m| m.false_neg),
                },
                None,
            ))
        }
    }
}

/// Count decisions per format class.
pub fn audit(decisions: &[Decision]) -> FormatAudit {
    let mut out = FormatAudit::default();
    for decision in decisions {
        match decision.format_class {
            FormatClass::WellFormatted => out.well_formatted += 1,
            FormatClass::BadlyFormatted => out.badly_formatted += 1,
            FormatClass::Eliminated => out.eliminated += 1,
        }
    }
    out
}

/// One run's summary inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub audit: FormatAudit,
}

/// The JSON report written after a matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub audit: FormatAudit,
    pub runs: Vec<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_run: Option<usize>,
    pub aggregation: AggregateMode,
}

impl Report {
    /// Plain-text table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("run   accuracy  precision  recall    f1        well/elim/bad\n");
        for run in &self.runs {
            let marker = if self.selected_run == Some(run.run) {
                "*"
            } else {
                " "
            };
            out.push_str(&format!(
                "{}{:<4} {:<9.4} {:<10.4} {:<9.4} {:<9.4} {}/{}/{}\n",
                marker,
                run.run,
                run.accuracy,
                run.precision,
                run.recall,
                run.f1,
                run.audit.well_formatted,
                run.audit.eliminated,
                run.audit.badly_formatted,
            ));
        }
        out.push_str(&format!(
            "final accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}\n",
            self.accuracy, self.precision, self.recall, self.f1
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{SourceVote, VoteOutcome};

    fn decision(id: &str, verdict: Verdict, class: FormatClass) -> Decision {
        Decision {
            pair_id: id.into(),
            votes: vec![SourceVote {
                source: "null".into(),
                outcome: VoteOutcome::Yes,
            }],
            final_verdict: verdict,
            format_class: class,
            prompt_digests: vec![],
        }
    }

    #[test]
    fn closed_form_confusion_matrix() {
        // tp=2 fp=1 fn=1 tn=6
        let mut decisions = Vec::new();
        let mut labels = HashMap::new();
        for (i, (pred, label)) in [(true, true), (true, true), (true, false), (false, true)]
            .iter()
            .chain(std::iter::repeat(&(false, false)).take(6))
            .enumerate()
        {
            let id = format!("p{i}");
            decisions.push(decision(
                &id,
                Verdict::from_bool(*pred),
                FormatClass::WellFormatted,
            ));
            labels.insert(id, *label);
        }
        let metrics = score(&decisions, &labels).unwrap();
        assert!((metrics.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((metrics.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((metrics.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((metrics.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(metrics.true_pos, 2.0);
        assert_eq!(metrics.false_neg, 1.0);
    }

    #[test]
    fn all_correct_scores_one() {
        let decisions = vec![
            decision("a", Verdict::Yes, FormatClass::WellFormatted),
            decision("b", Verdict::No, FormatClass::WellFormatted),
        ];
        let labels: HashMap<String, bool> =
            [("a".to_string(), true), ("b".to_string(), false)].into();
        let metrics = score(&decisions, &labels).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(metrics.f1, 1.0);
    }

    #[test]
    fn all_negative_predictor_has_zero_f1() {
        let decisions: Vec<Decision> = (0..10)
            .map(|i| decision(&format!("p{i}"), Verdict::No, FormatClass::WellFormatted))
            .collect();
        let labels: HashMap<String, bool> =
            (0..10).map(|i| (format!("p{i}"), i == 0)).collect();
        let metrics = score(&decisions, &labels).unwrap();
        assert_eq!(metrics.f1, 0.0);
        assert_eq!(metrics.precision, 0.0);
        assert_eq!(metrics.accuracy, 0.9);
    }

    #[test]
    fn missing_label_is_an_error() {
        let decisions = vec![decision("a", Verdict::Yes, FormatClass::WellFormatted)];
        let labels = HashMap::new();
        assert!(matches!(
            score(&decisions, &labels),
            Err(EvalError::MissingLabel(id)) if id == "a"
        ));
    }

    #[test]
    fn score_is_permutation_invariant() {
        let mut decisions = vec![
            decision("a", Verdict::Yes, FormatClass::WellFormatted),
            decision("b", Verdict::No, FormatClass::WellFormatted),
            decision("c", Verdict::Yes, FormatClass::WellFormatted),
        ];
        let labels: HashMap<String, bool> = [
            ("a".to_string(), true),
            ("b".to_string(), true),
            ("c".to_string(), false),
        ]
        .into();
        let forward = score(&decisions, &labels).unwrap();
        decisions.reverse();
        assert_eq!(score(&decisions, &labels).unwrap(), forward);
    }

    #[test]
    fn best_f1_picks_the_argmax_and_first_on_ties() {
        let runs = vec![
            Metrics::from_counts(1, 4, 5, 0), // f1 = 2*0.2*1/(1.2)
            Metrics::from_counts(3, 1, 5, 1),
            Metrics::from_counts(2, 2, 5, 1),
        ];
        let (best, selected) = aggregate_runs(&runs, AggregateMode::BestF1).unwrap();
        assert_eq!(selected, Some(1));
        assert_eq!(best, runs[1]);

        let tied = vec![runs[1].clone(), runs[1].clone()];
        let (_, selected) = aggregate_runs(&tied, AggregateMode::BestF1).unwrap();
        assert_eq!(selected, Some(0));
    }

    #[test]
    fn single_run_aggregates_to_itself() {
        let runs = vec![Metrics::from_counts(2, 1, 6, 1)];
        let (best, _) = aggregate_runs(&runs, AggregateMode::BestF1).unwrap();
        assert_eq!(best, runs[0]);
        let (mean, _) = aggregate_runs(&runs, AggregateMode::Mean).unwrap();
        assert_eq!(mean, runs[0]);
    }

    #[test]
    fn mean_averages_each_field() {
        let runs = vec![
            Metrics::from_counts(2, 0, 8, 0), // acc 1.0, f1 1.0
            Metrics::from_counts(0, 2, 8, 0), // acc 0.8, f1 0.0
        ];
        let (mean, selected) = aggregate_runs(&runs, AggregateMode::Mean).unwrap();
        assert_eq!(selected, None);
        assert!((mean.accuracy - 0.9).abs() < 1e-12);
        assert!((mean.f1 - 0.5).abs() < 1e-12);
        assert_eq!(mean.true_pos, 1.0);
        assert_eq!(mean.false_pos, 1.0);
    }

    #[test]
    fn empty_aggregation_errors() {
        assert!(matches!(
            aggregate_runs(&[], AggregateMode::Mean),
            Err(EvalError::NoRuns)
        ));
    }

    #[test]
    fn audit_partitions_by_format_class() {
        let decisions = vec![
            decision("a", Verdict::Yes, FormatClass::WellFormatted),
            decision("b", Verdict::Yes, FormatClass::Eliminated),
            decision("c", Verdict::No, FormatClass::Eliminated),
            decision("d", Verdict::No, FormatClass::BadlyFormatted),
        ];
        let audit = audit(&decisions);
        assert_eq!(audit.well_formatted, 1);
        assert_eq!(audit.eliminated, 2);
        assert_eq!(audit.badly_formatted, 1);
    }

    #[test]
    fn audit_of_empty_input_is_zero() {
        assert_eq!(audit(&[]), FormatAudit::default());
    }
}
