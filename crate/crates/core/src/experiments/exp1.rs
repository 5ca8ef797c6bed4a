//! Goal-zone missions with single-query localization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, compute_metrics, ground_truth_along_track, Method, MetricsReport, QueryRecord, QueryStatus};
use crate::error::{ConfigError, ExperimentError};
use crate::types::{MatchRecord, QueryStream, Traverse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Config {
    pub n_starts: usize,
    pub goal_distances: Vec<f64>,
    pub assessment_tolerance: f64,
    pub arrival_margin: f64,
    pub seed: u64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            n_starts: 50,
            goal_distances: vec![5.0, 10.0, 25.0, 50.0],
            assessment_tolerance: 0.5,
            arrival_margin: 0.10,
            seed: 0,
        }
    }
}

impl Exp1Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_starts == 0 || self.goal_distances.is_empty() {
            return Err(ConfigError("need at least one start and one goal distance".into()));
        }
        if self.goal_distances.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(ConfigError("goal distances must be positive".into()));
        }
        if !(self.assessment_tolerance > 0.0 && self.arrival_margin > 0.0) {
            return Err(ConfigError("tolerance and arrival margin must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one (start, goal) mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    /// Start reference index.
    pub start: usize,
    /// Goal distance ahead of the start, meters.
    pub goal: f64,
    pub method: String,
    pub arrived: bool,
    /// Query at which arrival was declared.
    pub arrival_query: Option<usize>,
    /// Along-track distance between the goal and where the robot stopped
    /// (or the end of the stream when it never declared arrival).
    pub goal_error: f64,
    pub completed: bool,
}

#[derive(Debug, Clone)]
pub struct Exp1Output {
    pub missions: Vec<MissionRecord>,
    /// Single-query outcome for every query of the stream.
    pub queries: Vec<QueryRecord>,
    pub metrics: MetricsReport,
    /// Skipped missions and other notes.
    pub diagnostics: Vec<String>,
}

/// Start references sampled uniformly among those with room for the largest
/// goal distance.
pub fn sample_starts(traverse: &Traverse, cfg: &Exp1Config) -> Vec<usize> {
    let max_goal = cfg.goal_distances.iter().cloned().fold(0.0, f64::max);
    let length = traverse.length();
    let eligible: Vec<usize> = (0..traverse.len())
        .filter(|&i| traverse.odom()[i] + max_goal <= length)
        .collect();
    let pool: Vec<usize> = if eligible.is_empty() {
        (0..traverse.len()).collect()
    } else {
        eligible
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_starts)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect()
}

/// Replay all missions for one method.
pub fn run_exp1(
    traverse: &Traverse,
    queries: &QueryStream,
    records: &[MatchRecord],
    method: &Method,
    cfg: &Exp1Config,
) -> Result<Exp1Output, ExperimentError> {
    cfg.validate()?;
    check_inputs(traverse, queries, records, method)?;
    let gt_along = ground_truth_along_track(traverse, queries);
    let odom = traverse.odom();
    let acts: Vec<bool> = records.iter().map(|r| method.accepts(r)).collect();
    let mut diagnostics = Vec::new();
    let mut missions = Vec::new();

    for start in sample_starts(traverse, cfg) {
        let start_pos = odom[start];
        let Some(first) = gt_along.iter().position(|&a| a >= start_pos) else {
            diagnostics.push(format!("start {}: no query at or beyond start", start + 1));
            continue;
        };
        for &goal in &cfg.goal_distances {
            let goal_pos = start_pos + goal;
            if goal_pos > traverse.length() {
                diagnostics.push(format!(
                    "start {} goal {goal}: goal beyond traverse end, skipped",
                    start + 1
                ));
                continue;
            }
            let trigger = goal_pos - cfg.arrival_margin;
            let arrival = (first..queries.len()).find(|&k| acts[k] && odom[records[k].best_index] >= trigger);
            let (arrived, stop) = match arrival {
                Some(k) => (true, k),
                None => (false, queries.len() - 1),
            };
            let goal_error = (gt_along[stop] - goal_pos).abs();
            missions.push(MissionRecord {
                start,
                goal,
                method: method.name().to_string(),
                arrived,
                arrival_query: arrival,
                goal_error,
                completed: arrived && goal_error <= cfg.assessment_tolerance,
            });
        }
    }

    let query_records: Vec<QueryRecord> = records
        .iter()
        .zip(&acts)
        .map(|(r, &acted)| QueryRecord {
            query: r.query_index,
            method: method.name().to_string(),
            status: if acted { QueryStatus::Emitted } else { QueryStatus::Rejected },
            error: acted.then_some(r.gt_error),
        })
        .collect();
    let metrics = compute_metrics(&missions, &query_records, cfg.assessment_tolerance)?;
    Ok(Exp1Output {
        missions,
        queries: query_records,
        metrics,
        diagnostics,
    })
}
