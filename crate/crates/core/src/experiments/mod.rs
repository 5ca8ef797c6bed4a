//! Deterministic replays of the two navigation experiments, the naive
//! match-distance threshold baselines and the shared metrics.
//!
//! * Experiment 1 ([`exp1`]): goal-zone missions with single-query
//!   localization. The robot declares arrival at the first acted-upon
//!   estimate past `goal - arrival_margin`.
//! * Experiment 2 ([`exp2`]): continuous history-of-queries localization.

pub mod exp1;
pub mod exp2;
pub mod report;
pub mod threshold;

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;
use crate::mlp::PredictionRecord;
use crate::types::{MatchRecord, QueryStream, Traverse};

pub use exp1::{run_exp1, Exp1Config, Exp1Output, MissionRecord};
pub use exp2::{run_exp2, Exp2Config, Exp2Output};
pub use threshold::{calibrate_threshold, ThresholdBaseline, ThresholdKind};

/// How a localization system decides which VPR estimates to use.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Use every estimate, no verification.
    Baseline,
    /// Use estimates whose best-match distance is at most `max_distance`.
    Threshold { name: String, max_distance: f64 },
    /// Use estimates predicted in tolerance; one prediction per query.
    Verified { name: String, predictions: Vec<bool> },
}

impl Method {
    pub fn verified(name: impl Into<String>, predictions: &[PredictionRecord]) -> Self {
        Method::Verified {
            name: name.into(),
            predictions: predictions.iter().map(|p| p.binary).collect(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Method::Baseline => "baseline",
            Method::Threshold { name, .. } | Method::Verified { name, .. } => name,
        }
    }

    /// Whether the method filters estimates at all.
    pub fn is_verifying(&self) -> bool {
        !matches!(self, Method::Baseline)
    }

    /// Verification outcome for one match.
    pub fn accepts(&self, record: &MatchRecord) -> bool {
        match self {
            Method::Baseline => true,
            Method::Threshold { max_distance, .. } => record.best_distance() <= *max_distance,
            Method::Verified { predictions, .. } => predictions[record.query_index],
        }
    }

    fn check(&self, query_count: usize) -> Result<(), ExperimentError> {
        if let Method::Verified { predictions, .. } = self {
            if predictions.len() != query_count {
                return Err(ExperimentError::InvalidInput(format!(
                    "{} predictions for {} queries",
                    predictions.len(),
                    query_count
                )));
            }
        }
        Ok(())
    }
}

/// Checks shared by both experiments.
pub(crate) fn check_inputs(
    traverse: &Traverse,
    queries: &QueryStream,
    records: &[MatchRecord],
    method: &Method,
) -> Result<(), ExperimentError> {
    if records.len() != queries.len() {
        return Err(ExperimentError::InvalidInput(format!(
            "{} match records for {} queries",
            records.len(),
            queries.len()
        )));
    }
    for (k, r) in records.iter().enumerate() {
        if r.query_index != k {
            return Err(ExperimentError::InvalidInput(format!(
                "match record {} carries query index {}",
                k + 1,
                r.query_index + 1
            )));
        }
        if r.best_index >= traverse.len() || r.distance_vector.len() != traverse.len() {
            return Err(ExperimentError::InvalidInput(format!(
                "match record {} does not fit the traverse",
                k + 1
            )));
        }
    }
    method.check(queries.len())
}

/// Along-track ground-truth position of every query.
pub fn ground_truth_along_track(traverse: &Traverse, queries: &QueryStream) -> Vec<f64> {
    queries
        .ground_truth_poses()
        .iter()
        .map(|p| traverse.along_track(p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStatus {
    /// An estimate was produced and used.
    Emitted,
    /// The single-query estimate was rejected by verification.
    Rejected,
    /// HoQ found no verified entry in its window.
    Declined,
    /// History still initializing.
    Warmup,
}

impl QueryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryStatus::Emitted => "emitted",
            QueryStatus::Rejected => "rejected",
            QueryStatus::Declined => "declined",
            QueryStatus::Warmup => "warmup",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "emitted" => Some(QueryStatus::Emitted),
            "rejected" => Some(QueryStatus::Rejected),
            "declined" => Some(QueryStatus::Declined),
            "warmup" => Some(QueryStatus::Warmup),
            _ => None,
        }
    }
}

/// Per-query outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub method: String,
    pub status: QueryStatus,
    /// Position error of the emitted estimate.
    pub error: Option<f64>,
}

impl QueryRecord {
    pub fn in_tolerance(&self, tolerance: f64) -> bool {
        self.status == QueryStatus::Emitted && self.error.is_some_and(|e| e <= tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Some(Self {
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            max: s[n - 1],
        })
    }
}

/// Aggregate experiment metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub tolerance: f64,
    pub missions: usize,
    pub missions_completed: usize,
    pub mission_completion: Option<f64>,
    /// Over all missions; failed missions contribute their overshoot.
    pub goal_error: Option<Summary>,
    pub queries: usize,
    pub emitted: usize,
    pub emitted_in_tolerance: usize,
    pub declined: usize,
    pub rejected: usize,
    pub warmup: usize,
    /// In-tolerance share of emitted estimates; 0 when nothing was emitted.
    pub precision: f64,
    /// In-tolerance emitted estimates over all non-warmup queries.
    pub recall: f64,
    /// Denominator used for `recall`.
    pub recall_denominator: usize,
    pub localization_error: Option<Summary>,
}

/// Aggregate mission and query records. Either slice may be empty, not both.
pub fn compute_metrics(
    missions: &[MissionRecord],
    queries: &[QueryRecord],
    tolerance: f64,
) -> Result<MetricsReport, ExperimentError> {
    if missions.is_empty() && queries.is_empty() {
        return Err(ExperimentError::EmptyRecords);
    }
    let method = missions
        .first()
        .map(|m| m.method.clone())
        .or_else(|| queries.first().map(|q| q.method.clone()))
        .unwrap_or_default();

    let completed = missions.iter().filter(|m| m.completed).count();
    let goal_errors: Vec<f64> = missions.iter().map(|m| m.goal_error).collect();

    let count = |s: QueryStatus| queries.iter().filter(|q| q.status == s).count();
    let emitted = count(QueryStatus::Emitted);
    let warmup = count(QueryStatus::Warmup);
    let in_tol = queries.iter().filter(|q| q.in_tolerance(tolerance)).count();
    let opportunities = queries.len() - warmup;
    let errors: Vec<f64> = queries
        .iter()
        .filter(|q| q.status == QueryStatus::Emitted)
        .filter_map(|q| q.error)
        .collect();

    Ok(MetricsReport {
        method,
        tolerance,
        missions: missions.len(),
        missions_completed: completed,
        mission_completion: (!missions.is_empty()).then(|| completed as f64 / missions.len() as f64),
        goal_error: Summary::of(&goal_errors),
        queries: queries.len(),
        emitted,
        emitted_in_tolerance: in_tol,
        declined: count(QueryStatus::Declined),
        rejected: count(QueryStatus::Rejected),
        warmup,
        precision: if emitted == 0 { 0.0 } else { in_tol as f64 / emitted as f64 },
        recall: if opportunities == 0 { 0.0 } else { in_tol as f64 / opportunities as f64 },
        recall_denominator: opportunities,
        localization_error: Summary::of(&errors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(status: QueryStatus, error: Option<f64>) -> QueryRecord {
        QueryRecord {
            query: 0,
            method: "m".into(),
            status,
            error,
        }
    }

    #[test]
    fn all_in_tolerance() {
        let recs: Vec<_> = (0..10).map(|_| q(QueryStatus::Emitted, Some(0.1))).collect();
        let m = compute_metrics(&[], &recs, 0.5).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn ninety_seven_of_hundred() {
        let mut recs: Vec<_> = (0..97).map(|_| q(QueryStatus::Emitted, Some(0.2))).collect();
        recs.extend((0..3).map(|_| q(QueryStatus::Emitted, Some(4.0))));
        let m = compute_metrics(&[], &recs, 0.5).unwrap();
        assert_eq!(m.precision, 0.97);
        assert_eq!(m.localization_error.unwrap().max, 4.0);
    }

    #[test]
    fn warmup_is_excluded_and_declines_count_against_recall() {
        let recs = vec![
            q(QueryStatus::Warmup, None),
            q(QueryStatus::Emitted, Some(0.5)),
            q(QueryStatus::Declined, None),
            q(QueryStatus::Emitted, Some(0.6)),
        ];
        let m = compute_metrics(&[], &recs, 0.5).unwrap();
        assert_eq!(m.precision, 0.5);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((m.declined, m.warmup), (1, 1));
    }

    #[test]
    fn empty_records_error() {
        assert!(matches!(compute_metrics(&[], &[], 0.5), Err(ExperimentError::EmptyRecords)));
    }

    #[test]
    fn summary_median() {
        assert_eq!(Summary::of(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert_eq!(Summary::of(&[4.0, 1.0, 2.0, 3.0]).unwrap().median, 2.5);
        assert!(Summary::of(&[]).is_none());
    }
}
