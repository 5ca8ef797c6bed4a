//! Continuous history-of-queries localization.

use serde::{Deserialize, Serialize};

use super::{check_inputs, compute_metrics, ground_truth_along_track, Method, MetricsReport, QueryRecord, QueryStatus};
use crate::error::{ConfigError, ExperimentError};
use crate::localizer::{hoq_localize, HistoryEntry, HistoryWindow, LocalizationStatus, DEFAULT_WINDOW};
use crate::types::{MatchRecord, QueryStream, Traverse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Config {
    /// History window, meters of odometer travel.
    pub window_d: f64,
    /// No estimates until the odometer has advanced this far.
    pub warmup: f64,
    /// In-tolerance threshold on the along-track localization error.
    pub tolerance: f64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            window_d: DEFAULT_WINDOW,
            warmup: DEFAULT_WINDOW,
            tolerance: 0.5,
        }
    }
}

impl Exp2Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.window_d.is_finite() && self.window_d >= 0.0) {
            return Err(ConfigError(format!("window must be non-negative, got {}", self.window_d)));
        }
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(ConfigError(format!("warmup must be non-negative, got {}", self.warmup)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(ConfigError(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Exp2Output {
    pub queries: Vec<QueryRecord>,
    /// Estimated reference index per query, `None` for warmup and declines.
    pub estimates: Vec<Option<usize>>,
    pub metrics: MetricsReport,
}

/// Replay the query stream through HoQ localization.
pub fn run_exp2(
    traverse: &Traverse,
    queries: &QueryStream,
    records: &[MatchRecord],
    method: &Method,
    cfg: &Exp2Config,
) -> Result<Exp2Output, ExperimentError> {
    cfg.validate()?;
    check_inputs(traverse, queries, records, method)?;
    let gt_along = ground_truth_along_track(traverse, queries);
    let odometer = queries.odometer();
    let odom = traverse.odom();
    let verified = method.is_verifying();
    let mut history = HistoryWindow::new(cfg.window_d)?;
    let mut out = Vec::with_capacity(records.len());
    let mut estimates = Vec::with_capacity(records.len());

    for (k, r) in records.iter().enumerate() {
        history.push(HistoryEntry {
            match_index: r.best_index,
            match_distance: r.best_distance(),
            odometer: odometer[k],
            prediction: method.accepts(r),
            pose: r.pose_estimate,
        })?;
        let (status, error, estimate) = if odometer[k] - odometer[0] < cfg.warmup {
            (QueryStatus::Warmup, None, None)
        } else {
            let result = hoq_localize(&history, odometer[k], traverse, verified)?;
            match result.status {
                LocalizationStatus::Estimate { reference, .. } => (
                    QueryStatus::Emitted,
                    Some((odom[reference] - gt_along[k]).abs()),
                    Some(reference),
                ),
                LocalizationStatus::Declined => (QueryStatus::Declined, None, None),
            }
        };
        out.push(QueryRecord {
            query: k,
            method: method.name().to_string(),
            status,
            error,
        });
        estimates.push(estimate);
    }
    let metrics = compute_metrics(&[], &out, cfg.tolerance)?;
    Ok(Exp2Output {
        queries: out,
        estimates,
        metrics,
    })
}
