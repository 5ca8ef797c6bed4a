//! Domain types: poses, reference traverses, query streams and match records.
//!
//! Indices are 0-based in memory. Everything written to result files is
//! converted to 1-based ordinals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DatasetError};

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Planar pose in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Euclidean distance between the positions, heading ignored.
    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Sum of consecutive Euclidean gaps, starting at zero.
pub fn cumulative_path_length(poses: &[Pose2D]) -> Vec<f64> {
    let mut odom = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            acc += poses[i - 1].distance(p);
        }
        odom.push(acc);
    }
    odom
}

/// Index of the pose closest (Euclidean) to `target`, first occurrence on ties.
pub fn nearest_pose_index(poses: &[Pose2D], target: &Pose2D) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in poses.iter().enumerate() {
        let d = p.distance(target);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn check_features(features: &[f32], rows: usize, dim: usize) -> Result<(), DatasetError> {
    if dim == 0 {
        return Err(DatasetError::Inconsistent("feature dimension must be >= 1".into()));
    }
    if features.len() != rows * dim {
        return Err(DatasetError::Inconsistent(format!(
            "{} feature values for {} rows of dimension {}",
            features.len(),
            rows,
            dim
        )));
    }
    if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
        return Err(DatasetError::NonFinite { row: pos / dim });
    }
    Ok(())
}

fn check_odometry(odom: &[f64]) -> Result<(), DatasetError> {
    for (i, w) in odom.iter().enumerate() {
        if !w.is_finite() {
            return Err(DatasetError::NonFinite { row: i });
        }
        if i > 0 && *w < odom[i - 1] {
            return Err(DatasetError::NonMonotoneOdometry {
                row: i,
                previous: odom[i - 1],
                current: *w,
            });
        }
    }
    Ok(())
}

fn check_poses(poses: &[Pose2D]) -> Result<(), DatasetError> {
    match poses.iter().position(|p| !p.is_finite()) {
        Some(row) => Err(DatasetError::NonFinite { row }),
        None => Ok(()),
    }
}

/// Ordered reference map: one pose, one cumulative odometry value and one
/// feature vector per reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct Traverse {
    poses: Vec<Pose2D>,
    odom: Vec<f64>,
    features: Vec<f32>,
    dim: usize,
    label: String,
}

impl Traverse {
    /// Build and validate a traverse. When `odom` is `None` it is derived from
    /// the pose gaps; when given it is trusted but rebased so the first entry
    /// is zero.
    pub fn new(
        poses: Vec<Pose2D>,
        odom: Option<Vec<f64>>,
        features: Vec<f32>,
        dim: usize,
        label: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let n = poses.len();
        if n < 2 {
            return Err(DatasetError::Inconsistent(format!(
                "a traverse needs at least 2 references, got {n}"
            )));
        }
        check_poses(&poses)?;
        check_features(&features, n, dim)?;
        let odom = match odom {
            None => cumulative_path_length(&poses),
            Some(o) => {
                if o.len() != n {
                    return Err(DatasetError::Inconsistent(format!(
                        "{} odometry values for {} poses",
                        o.len(),
                        n
                    )));
                }
                check_odometry(&o)?;
                let base = o[0];
                o.into_iter().map(|w| w - base).collect()
            }
        };
        Ok(Self {
            poses,
            odom,
            features,
            dim,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn pose(&self, i: usize) -> Pose2D {
        self.poses[i]
    }

    pub fn odom(&self) -> &[f64] {
        &self.odom
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features_flat(&self) -> &[f32] {
        &self.features
    }

    /// Reference index nearest to `pose`.
    pub fn nearest_index(&self, pose: &Pose2D) -> usize {
        nearest_pose_index(&self.poses, pose)
    }

    /// Along-track position of `pose`: cumulative odometry of its nearest reference.
    pub fn along_track(&self, pose: &Pose2D) -> f64 {
        self.odom[self.nearest_index(pose)]
    }

    /// Total along-track length.
    pub fn length(&self) -> f64 {
        self.odom[self.odom.len() - 1]
    }
}

/// Ordered query observations with ground truth and odometer readings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryStream {
    poses: Vec<Pose2D>,
    odometer: Vec<f64>,
    features: Vec<f32>,
    dim: usize,
    /// Nominal sampling rate in Hz. Informational only.
    pub rate_hint: f64,
}

impl QueryStream {
    pub fn new(
        poses: Vec<Pose2D>,
        odometer: Option<Vec<f64>>,
        features: Vec<f32>,
        dim: usize,
        rate_hint: f64,
    ) -> Result<Self, DatasetError> {
        let n = poses.len();
        if n == 0 {
            return Err(DatasetError::Inconsistent("empty query stream".into()));
        }
        check_poses(&poses)?;
        check_features(&features, n, dim)?;
        let odometer = match odometer {
            None => cumulative_path_length(&poses),
            Some(o) => {
                if o.len() != n {
                    return Err(DatasetError::Inconsistent(format!(
                        "{} odometer values for {} queries",
                        o.len(),
                        n
                    )));
                }
                check_odometry(&o)?;
                o
            }
        };
        Ok(Self {
            poses,
            odometer,
            features,
            dim,
            rate_hint,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ground_truth(&self, i: usize) -> Pose2D {
        self.poses[i]
    }

    pub fn ground_truth_poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn odometer(&self) -> &[f64] {
        &self.odometer
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features_flat(&self) -> &[f32] {
        &self.features
    }
}

/// How the position error of a match is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    #[default]
    AlongTrack,
    Euclidean,
}

impl std::str::FromStr for DistanceMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "along-track" | "along_track" | "alongtrack" => Ok(Self::AlongTrack),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(ConfigError(format!("unknown distance mode '{other}'"))),
        }
    }
}

/// Label threshold for in-tolerance matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub tolerance: f64,
    pub distance_mode: DistanceMode,
}

impl ToleranceConfig {
    /// Indoor tolerance used for the synthetic fixtures.
    pub const INDOOR: f64 = 0.5;
    pub const OUTDOOR: f64 = 1.0;

    pub fn new(tolerance: f64, distance_mode: DistanceMode) -> Result<Self, ConfigError> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(ConfigError(format!("tolerance must be > 0, got {tolerance}")));
        }
        Ok(Self {
            tolerance,
            distance_mode,
        })
    }
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tolerance: Self::INDOOR,
            distance_mode: DistanceMode::AlongTrack,
        }
    }
}

/// Outcome of matching one query against the reference traverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub query_index: usize,
    pub distance_vector: Vec<f64>,
    pub best_index: usize,
    pub pose_estimate: Pose2D,
    pub gt_error: f64,
    /// `true` when the match is in tolerance.
    pub label: bool,
}

impl MatchRecord {
    /// Distance of the best match.
    pub fn best_distance(&self) -> f64 {
        self.distance_vector[self.best_index]
    }
}
