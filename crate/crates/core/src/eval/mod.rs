//! Scoring of predicted tactic sets against gold sets.
//!
//! Per-sample precision/recall/F1 use the set-intersection definitions with
//! the 0/0 -> 0 convention; the headline aggregate is the samples average
//! (mean of per-sample scores), which down-weights tactics with many
//! procedures and procedures with many labels. Per-tactic rows treat each
//! tactic as an independent binary label across samples.

mod report;

pub use report::{parse_report_csv, render_report_csv, render_report_markdown, MarkdownLayout};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::Prediction;
use crate::tactic::Tactic;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample {procedure_id} has an empty gold set; corpus invariant violated")]
    EmptyGold { procedure_id: String },
    #[error("cannot aggregate an empty result list")]
    EmptyResults,
    #[error("report csv parse failed at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
}

/// A precision/recall/F1 triple, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf { precision: 0.0, recall: 0.0, f1: 0.0 };

    fn from_counts(tp: f64, predicted: f64, gold: f64) -> Prf {
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if gold > 0.0 { tp / gold } else { 0.0 };
        Prf { precision, recall, f1: harmonic_f1(precision, recall) }
    }
}

/// F1 with the 0/0 -> 0 convention.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One scored sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResult {
    pub procedure_id: String,
    pub gold: BTreeSet<Tactic>,
    pub predicted: BTreeSet<Tactic>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-sample precision/recall/F1.
///
/// Precision is 0 when the prediction is empty (the convention penalizes
/// refusals); an empty gold set is a corpus-invariant violation and surfaces
/// as an error rather than a score.
pub fn sample_prf(gold: &BTreeSet<Tactic>, predicted: &BTreeSet<Tactic>) -> Result<Prf, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold { procedure_id: String::new() });
    }
    let tp = gold.intersection(predicted).count() as f64;
    Ok(Prf::from_counts(tp, predicted.len() as f64, gold.len() as f64))
}

/// Score one (gold, predicted) pair into a [`SampleResult`].
pub fn score_sample(
    procedure_id: &str,
    gold: &BTreeSet<Tactic>,
    predicted: &BTreeSet<Tactic>,
) -> Result<SampleResult, EvalError> {
    let prf = sample_prf(gold, predicted).map_err(|_| EvalError::EmptyGold {
        procedure_id: procedure_id.to_string(),
    })?;
    Ok(SampleResult {
        procedure_id: procedure_id.to_string(),
        gold: gold.clone(),
        predicted: predicted.clone(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
    })
}

/// Arithmetic means of the per-sample scores. Note the F1 column is the mean
/// of per-sample F1 values, not the harmonic mean of the averaged P and R.
pub fn samples_average(results: &[SampleResult]) -> Result<Prf, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let n = results.len() as f64;
    Ok(Prf {
        precision: results.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: results.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: results.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}

/// One row of the per-tactic table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TacticRow {
    pub tactic: Tactic,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Binary P/R/F1 per tactic across samples, rows in table order. Support is
/// the number of samples whose gold set contains the tactic; a tactic with
/// zero predicted positives reports precision 0.
pub fn per_tactic_prf(results: &[SampleResult]) -> Vec<TacticRow> {
    let mut rows = Vec::with_capacity(Tactic::COUNT);
    for tactic in Tactic::TABLE_ORDER {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for r in results {
            let in_gold = r.gold.contains(&tactic);
            let in_pred = r.predicted.contains(&tactic);
            match (in_gold, in_pred) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let prf = Prf::from_counts(tp as f64, (tp + fp) as f64, (tp + fn_) as f64);
        rows.push(TacticRow {
            tactic,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            support: tp + fn_,
        });
    }
    rows
}

/// Which slice of the evaluated procedures a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subgroup {
    All,
    MatchedUrl,
    UnmatchedUrl,
}

impl Subgroup {
    pub fn label(self) -> &'static str {
        match self {
            Subgroup::All => "all",
            Subgroup::MatchedUrl => "matched-url",
            Subgroup::UnmatchedUrl => "unmatched-url",
        }
    }

    pub fn from_label(s: &str) -> Option<Subgroup> {
        match s {
            "all" => Some(Subgroup::All),
            "matched-url" => Some(Subgroup::MatchedUrl),
            "unmatched-url" => Some(Subgroup::UnmatchedUrl),
            _ => None,
        }
    }
}

/// The full scoring product for one prediction set (or subgroup of one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subgroup: Subgroup,
    pub n_samples: u64,
    pub samples_avg: Prf,
    /// Supplementary aggregates for diagnostics; the samples average is the
    /// headline number.
    pub micro_avg: Prf,
    pub macro_avg: Prf,
    pub weighted_avg: Prf,
    pub per_tactic: Vec<TacticRow>,
    pub total_support: u64,
}

/// Score a full result list into a report.
pub fn build_report(results: &[SampleResult], subgroup: Subgroup) -> Result<EvalReport, EvalError> {
    let samples_avg = samples_average(results)?;
    let per_tactic = per_tactic_prf(results);
    let total_support: u64 = per_tactic.iter().map(|r| r.support).sum();

    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for r in results {
        let inter = r.gold.intersection(&r.predicted).count() as u64;
        tp += inter;
        fp += r.predicted.len() as u64 - inter;
        fn_ += r.gold.len() as u64 - inter;
    }
    let micro_avg = Prf::from_counts(tp as f64, (tp + fp) as f64, (tp + fn_) as f64);

    let k = per_tactic.len() as f64;
    let macro_avg = Prf {
        precision: per_tactic.iter().map(|r| r.precision).sum::<f64>() / k,
        recall: per_tactic.iter().map(|r| r.recall).sum::<f64>() / k,
        f1: per_tactic.iter().map(|r| r.f1).sum::<f64>() / k,
    };
    let weighted_avg = if total_support == 0 {
        Prf::ZERO
    } else {
        let w = total_support as f64;
        Prf {
            precision: per_tactic.iter().map(|r| r.precision * r.support as f64).sum::<f64>() / w,
            recall: per_tactic.iter().map(|r| r.recall * r.support as f64).sum::<f64>() / w,
            f1: per_tactic.iter().map(|r| r.f1 * r.support as f64).sum::<f64>() / w,
        }
    };

    Ok(EvalReport {
        subgroup,
        n_samples: results.len() as u64,
        samples_avg,
        micro_avg,
        macro_avg,
        weighted_avg,
        per_tactic,
        total_support,
    })
}

/// Partition predictions by their `url_matched` flag. The two partitions
/// always sum to the input size.
pub fn subgroup_split(predictions: &[Prediction]) -> (Vec<Prediction>, Vec<Prediction>) {
    predictions.iter().cloned().partition(|p| p.url_matched)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tactics: &[Tactic]) -> BTreeSet<Tactic> {
        tactics.iter().copied().collect()
    }

    #[test]
    fn overprediction_worked_example() {
        // gold {Credential Access}, four predicted -> P 0.25, R 1.0, F1 0.4
        let gold = set(&[Tactic::CredentialAccess]);
        let pred = set(&[
            Tactic::CredentialAccess,
            Tactic::DefenseEvasion,
            Tactic::Discovery,
            Tactic::LateralMovement,
        ]);
        let prf = sample_prf(&gold, &pred).unwrap();
        assert_eq!(prf.precision, 0.25);
        assert_eq!(prf.recall, 1.0);
        assert!((prf.f1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn exact_match_scores_one() {
        let gold = set(&[Tactic::Discovery, Tactic::Impact]);
        let prf = sample_prf(&gold, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gold = set(&[Tactic::Discovery]);
        let prf = sample_prf(&gold, &BTreeSet::new()).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_gold_is_an_error() {
        let err = sample_prf(&BTreeSet::new(), &set(&[Tactic::Impact]));
        assert!(err.is_err());
    }

    #[test]
    fn samples_average_is_arithmetic() {
        let a = score_sample("p1", &set(&[Tactic::Impact]), &set(&[Tactic::Impact])).unwrap();
        let b = score_sample(
            "p2",
            &set(&[Tactic::CredentialAccess]),
            &set(&[
                Tactic::CredentialAccess,
                Tactic::DefenseEvasion,
                Tactic::Discovery,
                Tactic::LateralMovement,
            ]),
        )
        .unwrap();
        let avg = samples_average(&[a, b]).unwrap();
        assert!((avg.f1 - 0.7).abs() < 1e-15);
        assert!(samples_average(&[]).is_err());
    }

    #[test]
    fn per_tactic_single_sample() {
        let r = score_sample("p", &set(&[Tactic::Collection]), &set(&[Tactic::Collection])).unwrap();
        let rows = per_tactic_prf(&[r]);
        for row in &rows {
            if row.tactic == Tactic::Collection {
                assert_eq!((row.precision, row.recall, row.f1, row.support), (1.0, 1.0, 1.0, 1));
            } else {
                assert_eq!(row.support, 0);
                assert_eq!((row.precision, row.recall, row.f1), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn per_tactic_miss_and_false_positive() {
        let r = score_sample("p", &set(&[Tactic::Impact]), &set(&[Tactic::Discovery])).unwrap();
        let rows = per_tactic_prf(&[r]);
        let impact = rows.iter().find(|r| r.tactic == Tactic::Impact).unwrap();
        let discovery = rows.iter().find(|r| r.tactic == Tactic::Discovery).unwrap();
        assert_eq!(impact.recall, 0.0);
        assert_eq!(impact.support, 1);
        assert_eq!(discovery.precision, 0.0);
        assert_eq!(discovery.support, 0);
    }

    #[test]
    fn f1_bounds_hold() {
        let cases = [
            (set(&[Tactic::Impact]), set(&[Tactic::Impact, Tactic::Discovery])),
            (set(&[Tactic::Impact, Tactic::Execution]), set(&[Tactic::Impact])),
            (set(&[Tactic::Impact]), BTreeSet::new()),
        ];
        for (gold, pred) in cases {
            let prf = sample_prf(&gold, &pred).unwrap();
            assert!(prf.f1 >= 0.0 && prf.f1 <= 1.0);
            let inter = gold.intersection(&pred).count();
            assert_eq!(prf.f1 == 0.0, inter == 0);
            assert!(prf.f1 >= prf.precision.min(prf.recall) - 1e-15);
            assert!(prf.f1 <= prf.precision.max(prf.recall) + 1e-15);
        }
    }

    #[test]
    fn average_of_identical_triples_is_that_triple() {
        let r = score_sample("p", &set(&[Tactic::Impact, Tactic::Discovery]), &set(&[Tactic::Impact]))
            .unwrap();
        let avg = samples_average(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert_eq!((avg.precision, avg.recall, avg.f1), (r.precision, r.recall, r.f1));
    }

    #[test]
    fn report_supports_sum() {
        let results = vec![
            score_sample("a", &set(&[Tactic::Impact, Tactic::Discovery]), &set(&[Tactic::Impact]))
                .unwrap(),
            score_sample("b", &set(&[Tactic::Discovery]), &BTreeSet::new()).unwrap(),
        ];
        let report = build_report(&results, Subgroup::All).unwrap();
        assert_eq!(report.total_support, 3);
        assert_eq!(report.n_samples, 2);
        assert_eq!(report.per_tactic.len(), 14);
    }
}
