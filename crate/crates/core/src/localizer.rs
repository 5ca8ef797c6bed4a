//! Verified localization: single-query acceptance and history-of-queries
//! (HoQ) odometry extrapolation.
//!
//! HoQ keeps the matches of the last `window_d` meters. It picks the entry
//! with the lowest match distance (optionally only among entries predicted in
//! tolerance), measures the odometer travel since that entry and walks the
//! same distance forward along the reference poses from the matched
//! reference. All argmins break ties on the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::LocalizerError;
use crate::mlp::PredictionRecord;
use crate::types::{MatchRecord, Pose2D, Traverse};

/// Default history length in meters.
pub const DEFAULT_WINDOW: f64 = 1.5;

/// Outcome of single-query verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingleQueryDecision {
    Accepted { reference: usize, pose: Pose2D },
    Rejected,
}

impl SingleQueryDecision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, SingleQueryDecision::Accepted { .. })
    }
}

/// Accept the match's pose estimate iff the monitor predicts it in tolerance.
pub fn verify_single(record: &MatchRecord, prediction: &PredictionRecord) -> SingleQueryDecision {
    if prediction.binary {
        SingleQueryDecision::Accepted {
            reference: record.best_index,
            pose: record.pose_estimate,
        }
    } else {
        SingleQueryDecision::Rejected
    }
}

/// One match held in the history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Best-match reference index.
    pub match_index: usize,
    /// Best-match distance.
    pub match_distance: f64,
    /// Odometer reading when the query was taken.
    pub odometer: f64,
    /// Monitor prediction, `true` = in tolerance.
    pub prediction: bool,
    pub pose: Pose2D,
}

/// Matches from the last `window_d` meters of travel, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    entries: Vec<HistoryEntry>,
    window_d: f64,
}

impl HistoryWindow {
    pub fn new(window_d: f64) -> Result<Self, LocalizerError> {
        if !(window_d >= 0.0 && window_d.is_finite()) {
            return Err(LocalizerError::InvalidValue(format!("window length {window_d}")));
        }
        Ok(Self {
            entries: Vec::new(),
            window_d,
        })
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn window_d(&self) -> f64 {
        self.window_d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append `entry` and evict everything more than `window_d` meters behind
    /// it. The boundary is inclusive.
    pub fn push(&mut self, entry: HistoryEntry) -> Result<(), LocalizerError> {
        if !entry.odometer.is_finite() || !entry.match_distance.is_finite() {
            return Err(LocalizerError::InvalidValue("non-finite history entry".into()));
        }
        if let Some(last) = self.entries.last() {
            if entry.odometer < last.odometer {
                return Err(LocalizerError::OdometerRegression {
                    previous: last.odometer,
                    current: entry.odometer,
                });
            }
        }
        let now = entry.odometer;
        self.entries.push(entry);
        let window = self.window_d;
        self.entries.retain(|e| now - e.odometer <= window);
        Ok(())
    }
}

/// Pure variant of [`HistoryWindow::push`].
pub fn update_history(
    history: &HistoryWindow,
    entry: HistoryEntry,
) -> Result<HistoryWindow, LocalizerError> {
    let mut next = history.clone();
    next.push(entry)?;
    Ok(next)
}

/// Entry chosen as the extrapolation anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoqChoice {
    /// Position in history order (oldest = 0).
    Best(usize),
    Declined,
}

/// Lowest-distance history entry. In verified mode entries predicted out of
/// tolerance are replaced by `1 + max(D)`; if the winner still carries that
/// sentinel the system declines.
pub fn hoq_best(history: &HistoryWindow, verified: bool) -> Result<HoqChoice, LocalizerError> {
    let entries = history.entries();
    if entries.is_empty() {
        return Err(LocalizerError::EmptyHistory);
    }
    let max_d = entries
        .iter()
        .map(|e| e.match_distance)
        .fold(f64::NEG_INFINITY, f64::max);
    let sentinel = 1.0 + max_d;
    let masked = |e: &HistoryEntry| {
        if !verified || e.prediction {
            e.match_distance
        } else {
            sentinel
        }
    };
    let mut best = 0;
    let mut best_d = masked(&entries[0]);
    for (i, e) in entries.iter().enumerate().skip(1) {
        let d = masked(e);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    if verified && best_d > max_d {
        return Ok(HoqChoice::Declined);
    }
    Ok(HoqChoice::Best(best))
}

/// Reference index reached by travelling `delta` meters forward from
/// reference `start`, following Euclidean gaps between consecutive poses.
/// Clamps to the last reference when the track runs out.
pub fn extrapolate_index(traverse: &Traverse, start: usize, delta: f64) -> usize {
    let poses = traverse.poses();
    let mut running = 0.0;
    let mut best_j = 0;
    let mut best_gap = delta.abs();
    for j in 1..poses.len() - start {
        running += poses[start + j].distance(&poses[start + j - 1]);
        let gap = (delta - running).abs();
        if gap < best_gap {
            best_gap = gap;
            best_j = j;
        }
    }
    start + best_j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalizationStatus {
    Estimate { reference: usize, pose: Pose2D },
    Declined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationResult {
    pub status: LocalizationStatus,
    /// Anchor entry (history order), absent when declined.
    pub anchor: Option<usize>,
    /// Odometer travel since the anchor entry.
    pub delta: Option<f64>,
    pub verified: bool,
}

impl LocalizationResult {
    pub fn reference(&self) -> Option<usize> {
        match self.status {
            LocalizationStatus::Estimate { reference, .. } => Some(reference),
            LocalizationStatus::Declined => None,
        }
    }
}

/// HoQ position estimate at `current_odometer`.
pub fn hoq_localize(
    history: &HistoryWindow,
    current_odometer: f64,
    traverse: &Traverse,
    verified: bool,
) -> Result<LocalizationResult, LocalizerError> {
    let anchor = match hoq_best(history, verified)? {
        HoqChoice::Declined => {
            return Ok(LocalizationResult {
                status: LocalizationStatus::Declined,
                anchor: None,
                delta: None,
                verified,
            })
        }
        HoqChoice::Best(i) => i,
    };
    let entry = history.entries()[anchor];
    if current_odometer < entry.odometer {
        return Err(LocalizerError::OdometerRegression {
            previous: entry.odometer,
            current: current_odometer,
        });
    }
    if entry.match_index >= traverse.len() {
        return Err(LocalizerError::IndexOutOfRange {
            index: entry.match_index,
            len: traverse.len(),
        });
    }
    let delta = (current_odometer - entry.odometer).abs();
    let reference = extrapolate_index(traverse, entry.match_index, delta);
    Ok(LocalizationResult {
        status: LocalizationStatus::Estimate {
            reference,
            pose: traverse.pose(reference),
        },
        anchor: Some(anchor),
        delta: Some(delta),
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Traverse {
        let poses = (0..n).map(|i| Pose2D::new(i as f64 * spacing, 0.0, 0.0)).collect();
        Traverse::new(poses, None, vec![0.0; n], 1, "line").unwrap()
    }

    fn entry(match_index: usize, d: f64, odo: f64, p: bool) -> HistoryEntry {
        HistoryEntry {
            match_index,
            match_distance: d,
            odometer: odo,
            prediction: p,
            pose: Pose2D::new(match_index as f64, 0.0, 0.0),
        }
    }

    fn window(entries: &[HistoryEntry]) -> HistoryWindow {
        let mut h = HistoryWindow::new(100.0).unwrap();
        for e in entries {
            h.push(*e).unwrap();
        }
        h
    }

    #[test]
    fn best_entry_examples() {
        let all = window(&[entry(0, 0.3, 0.0, true), entry(1, 0.1, 0.1, true), entry(2, 0.2, 0.2, true)]);
        assert_eq!(hoq_best(&all, true), Ok(HoqChoice::Best(1)));
        let masked = window(&[entry(0, 0.3, 0.0, true), entry(1, 0.1, 0.1, false), entry(2, 0.2, 0.2, true)]);
        assert_eq!(hoq_best(&masked, true), Ok(HoqChoice::Best(2)));
        assert_eq!(hoq_best(&masked, false), Ok(HoqChoice::Best(1)));
        let none = window(&[entry(0, 0.3, 0.0, false), entry(1, 0.1, 0.1, false)]);
        assert_eq!(hoq_best(&none, true), Ok(HoqChoice::Declined));
        assert_eq!(hoq_best(&none, false), Ok(HoqChoice::Best(1)));
        let empty = HistoryWindow::new(1.5).unwrap();
        assert_eq!(hoq_best(&empty, true), Err(LocalizerError::EmptyHistory));
    }

    #[test]
    fn straight_line_extrapolation() {
        let t = line(20, 1.0);
        let h = window(&[entry(4, 0.1, 10.0, true)]);
        let r = hoq_localize(&h, 12.4, &t, true).unwrap();
        assert_eq!(r.reference(), Some(6));
        let r0 = hoq_localize(&h, 10.0, &t, true).unwrap();
        assert_eq!(r0.reference(), Some(4));
        assert_eq!(r0.status, LocalizationStatus::Estimate { reference: 4, pose: t.pose(4) });
    }

    #[test]
    fn extrapolation_clamps_at_track_end() {
        let t = line(10, 1.0);
        let h = window(&[entry(7, 0.1, 0.0, true)]);
        assert_eq!(hoq_localize(&h, 50.0, &t, false).unwrap().reference(), Some(9));
    }

    #[test]
    fn half_way_ties_resolve_backwards() {
        let t = line(10, 1.0);
        let h = window(&[entry(2, 0.1, 0.0, true)]);
        assert_eq!(hoq_localize(&h, 1.5, &t, false).unwrap().reference(), Some(3));
    }

    #[test]
    fn backward_odometer_is_an_error() {
        let t = line(10, 1.0);
        let h = window(&[entry(2, 0.1, 5.0, true)]);
        assert!(matches!(
            hoq_localize(&h, 4.0, &t, false),
            Err(LocalizerError::OdometerRegression { .. })
        ));
    }

    #[test]
    fn eviction_examples() {
        let mut h = HistoryWindow::new(1.5).unwrap();
        for odo in [0.0, 0.7, 1.4, 2.0] {
            h.push(entry(0, 0.1, odo, true)).unwrap();
        }
        let kept: Vec<f64> = h.entries().iter().map(|e| e.odometer).collect();
        assert_eq!(kept, vec![0.7, 1.4, 2.0]);

        let one = update_history(&HistoryWindow::new(1.5).unwrap(), entry(0, 0.1, 3.0, true)).unwrap();
        assert_eq!(one.len(), 1);

        let mut zero = HistoryWindow::new(0.0).unwrap();
        for odo in [0.0, 1.0, 1.0] {
            zero.push(entry(0, 0.1, odo, true)).unwrap();
        }
        assert_eq!(zero.len(), 2);
        assert!(zero.entries().iter().all(|e| e.odometer == 1.0));
    }

    #[test]
    fn odometer_regression_rejected() {
        let h = window(&[entry(0, 0.1, 2.0, true)]);
        assert!(matches!(
            update_history(&h, entry(0, 0.1, 1.0, true)),
            Err(LocalizerError::OdometerRegression { .. })
        ));
    }

    #[test]
    fn single_query_decisions() {
        let rec = MatchRecord {
            query_index: 0,
            distance_vector: vec![0.5, 0.1],
            best_index: 1,
            pose_estimate: Pose2D::new(1.0, 0.0, 0.0),
            gt_error: 0.0,
            label: true,
        };
        let yes = verify_single(&rec, &PredictionRecord { raw: 0.9, binary: true });
        assert_eq!(yes, SingleQueryDecision::Accepted { reference: 1, pose: rec.pose_estimate });
        let no = verify_single(&rec, &PredictionRecord { raw: 0.1, binary: false });
        assert_eq!(no, SingleQueryDecision::Rejected);
    }
}
