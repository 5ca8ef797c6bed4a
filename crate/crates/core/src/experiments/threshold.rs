//! Naive integrity baselines that accept a match when its best distance is
//! at or below a fixed threshold.

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;
use crate::types::MatchRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdKind {
    /// Largest threshold that still reaches a target precision.
    #[serde(rename = "np")]
    Precision,
    /// Smallest threshold that reaches a target recall.
    #[serde(rename = "nr")]
    Recall,
}

impl ThresholdKind {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdKind::Precision => "np",
            ThresholdKind::Recall => "nr",
        }
    }
}

/// Precision and recall of accepting every match with distance `<= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// A calibrated threshold and the operating point it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBaseline {
    pub kind: ThresholdKind,
    pub target: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// False when no threshold reaches the target; the closest point is used.
    pub attained: bool,
}

/// Reported precision/recall of a VPR technique's integrity monitor, used as
/// targets for the matching threshold baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub technique: String,
    pub precision: f64,
    pub recall: f64,
}

pub fn reference_operating_points() -> Vec<OperatingPoint> {
    [("AP-GeM", 0.916, 0.213), ("NetVLAD", 0.882, 0.293), ("SALAD", 0.986, 0.636)]
        .into_iter()
        .map(|(t, p, r)| OperatingPoint {
            technique: t.to_string(),
            precision: p,
            recall: r,
        })
        .collect()
}

/// Both baselines calibrated against one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub target: OperatingPoint,
    pub np: ThresholdBaseline,
    pub nr: ThresholdBaseline,
}

/// Every distinct best-match distance as a threshold, ascending.
pub fn sweep(records: &[MatchRecord]) -> Vec<SweepPoint> {
    let mut pairs: Vec<(f64, bool)> = records.iter().map(|r| (r.best_distance(), r.label)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = pairs.iter().filter(|p| p.1).count();
    let mut points = Vec::new();
    let (mut tp, mut accepted) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            accepted += 1;
            tp += pairs[i].1 as usize;
            i += 1;
        }
        points.push(SweepPoint {
            threshold: t,
            precision: tp as f64 / accepted as f64,
            recall: if positives == 0 { 0.0 } else { tp as f64 / positives as f64 },
        });
    }
    points
}

/// Calibrate a threshold on labeled matches.
pub fn calibrate_threshold(
    records: &[MatchRecord],
    kind: ThresholdKind,
    target: f64,
) -> Result<ThresholdBaseline, ExperimentError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(ExperimentError::InvalidInput(format!("target {target} outside [0, 1]")));
    }
    if records.iter().any(|r| !r.best_distance().is_finite()) {
        return Err(ExperimentError::InvalidInput("non-finite match distance".into()));
    }
    let points = sweep(records);
    if points.is_empty() {
        return Err(ExperimentError::EmptyRecords);
    }
    if !records.iter().any(|r| r.label) {
        return Err(ExperimentError::InvalidInput("no in-tolerance matches to calibrate on".into()));
    }
    let hit = match kind {
        ThresholdKind::Precision => points.iter().rev().find(|p| p.precision >= target),
        ThresholdKind::Recall => points.iter().find(|p| p.recall >= target),
    };
    let (point, attained) = match hit {
        Some(p) => (*p, true),
        None => {
            // Closest achievable: best value of the targeted metric, ties to
            // the larger threshold for precision and the smaller for recall.
            let p = match kind {
                ThresholdKind::Precision => points
                    .iter()
                    .fold(points[0], |b, p| if p.precision >= b.precision { *p } else { b }),
                ThresholdKind::Recall => points
                    .iter()
                    .fold(points[0], |b, p| if p.recall > b.recall { *p } else { b }),
            };
            (p, false)
        }
    };
    Ok(ThresholdBaseline {
        kind,
        target,
        threshold: point.threshold,
        precision: point.precision,
        recall: point.recall,
        attained,
    })
}

/// Calibrate both baselines for an operating point.
pub fn calibrate_pair(records: &[MatchRecord], target: &OperatingPoint) -> Result<ThresholdReport, ExperimentError> {
    Ok(ThresholdReport {
        target: target.clone(),
        np: calibrate_threshold(records, ThresholdKind::Precision, target.precision)?,
        nr: calibrate_threshold(records, ThresholdKind::Recall, target.recall)?,
    })
}
