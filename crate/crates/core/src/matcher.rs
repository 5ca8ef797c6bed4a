//! Query-to-reference matching and ground-truth labeling.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, MatchError};
use crate::types::{DistanceMode, MatchRecord, Pose2D, QueryStream, ToleranceConfig, Traverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// `1 - cos(q, r)`, clamped at zero.
    Cosine,
}

impl std::str::FromStr for DistanceMetric {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(ConfigError(format!("unknown metric '{other}'"))),
        }
    }
}

impl DistanceMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
            }
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Scale to unit L2 norm; the zero vector is returned unchanged.
pub fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / norm).collect()
}

/// Distances from `query` to every reference feature of `traverse`.
pub fn distance_vector(
    query: &[f64],
    traverse: &Traverse,
    metric: DistanceMetric,
) -> Result<Vec<f64>, MatchError> {
    if query.len() != traverse.dim() {
        return Err(MatchError::DimensionMismatch {
            query: query.len(),
            reference: traverse.dim(),
        });
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(MatchError::NonFinite);
    }
    Ok((0..traverse.len())
        .map(|i| metric.distance(query, &widen(traverse.feature(i))))
        .collect())
}

/// First index achieving the minimum distance.
pub fn best_match(distances: &[f64]) -> Result<usize, MatchError> {
    if distances.is_empty() {
        return Err(MatchError::Empty);
    }
    let mut best = 0;
    for (i, d) in distances.iter().enumerate().skip(1) {
        if *d < distances[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Position error of an estimate and its in-tolerance label (`error <= tolerance`).
pub fn label_match(
    estimate: &Pose2D,
    ground_truth: &Pose2D,
    traverse: &Traverse,
    cfg: &ToleranceConfig,
) -> (f64, bool) {
    let error = match cfg.distance_mode {
        DistanceMode::AlongTrack => {
            (traverse.along_track(estimate) - traverse.along_track(ground_truth)).abs()
        }
        DistanceMode::Euclidean => estimate.distance(ground_truth),
    };
    (error, error <= cfg.tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub metric: DistanceMetric,
    /// L2-normalize query and reference features before measuring distance.
    pub normalize: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::Euclidean,
            normalize: true,
        }
    }
}

/// Reference features prepared once for repeated matching.
#[derive(Debug, Clone)]
pub struct Matcher<'a> {
    traverse: &'a Traverse,
    config: MatcherConfig,
    references: Vec<Vec<f64>>,
}

impl<'a> Matcher<'a> {
    pub fn new(traverse: &'a Traverse, config: MatcherConfig) -> Self {
        let references = (0..traverse.len())
            .map(|i| {
                let f = widen(traverse.feature(i));
                if config.normalize {
                    l2_normalized(&f)
                } else {
                    f
                }
            })
            .collect();
        Self {
            traverse,
            config,
            references,
        }
    }

    pub fn traverse(&self) -> &Traverse {
        self.traverse
    }

    pub fn config(&self) -> MatcherConfig {
        self.config
    }

    /// Query feature as seen by the matcher.
    pub fn prepare_query(&self, query: &[f32]) -> Vec<f64> {
        let q = widen(query);
        if self.config.normalize {
            l2_normalized(&q)
        } else {
            q
        }
    }

    /// Reference feature as seen by the matcher.
    pub fn reference(&self, i: usize) -> &[f64] {
        &self.references[i]
    }

    pub fn distances(&self, query: &[f64]) -> Result<Vec<f64>, MatchError> {
        if query.len() != self.traverse.dim() {
            return Err(MatchError::DimensionMismatch {
                query: query.len(),
                reference: self.traverse.dim(),
            });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(MatchError::NonFinite);
        }
        Ok(self
            .references
            .iter()
            .map(|r| self.config.metric.distance(query, r))
            .collect())
    }

    /// Match every query of the stream and label the outcome.
    pub fn match_stream(
        &self,
        queries: &QueryStream,
        tolerance: &ToleranceConfig,
    ) -> Result<Vec<MatchRecord>, MatchError> {
        (0..queries.len())
            .map(|k| {
                let q = self.prepare_query(queries.feature(k));
                let distance_vector = self.distances(&q)?;
                let best_index = best_match(&distance_vector)?;
                let pose_estimate = self.traverse.pose(best_index);
                let (gt_error, label) = label_match(
                    &pose_estimate,
                    &queries.ground_truth(k),
                    self.traverse,
                    tolerance,
                );
                Ok(MatchRecord {
                    query_index: k,
                    distance_vector,
                    best_index,
                    pose_estimate,
                    gt_error,
                    label,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, dim: usize) -> Traverse {
        let poses = (0..n).map(|i| Pose2D::new(i as f64, 0.0, 0.0)).collect();
        let feats = (0..n * dim).map(|i| (i % 7) as f32 * 0.5 + (i / dim) as f32).collect();
        Traverse::new(poses, None, feats, dim, "line").unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let t = line(5, 3);
        let q = widen(t.feature(2));
        let d = distance_vector(&q, &t, DistanceMetric::Euclidean).unwrap();
        assert_eq!(d[2], 0.0);
        assert!(d.iter().enumerate().all(|(i, v)| i == 2 || *v > 0.0));
    }

    #[test]
    fn orthonormal_cosine_distance_is_one() {
        let m = DistanceMetric::Cosine;
        assert!((m.distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!(m.distance(&[1.0, 1.0], &[2.0, 2.0]).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_typed() {
        let t = line(3, 3);
        assert_eq!(
            distance_vector(&[1.0, 2.0], &t, DistanceMetric::Euclidean),
            Err(MatchError::DimensionMismatch { query: 2, reference: 3 })
        );
    }

    #[test]
    fn best_match_first_occurrence() {
        assert_eq!(best_match(&[3.0, 1.0, 2.0]), Ok(1));
        assert_eq!(best_match(&[1.0, 1.0, 2.0]), Ok(0));
        assert_eq!(best_match(&[]), Err(MatchError::Empty));
    }

    #[test]
    fn label_on_straight_line() {
        let t = line(10, 2);
        let cfg = ToleranceConfig::new(0.5, DistanceMode::AlongTrack).unwrap();
        let (e, l) = label_match(&t.pose(5), &t.pose(2), &t, &cfg);
        assert_eq!((e, l), (3.0, false));
        let (e, l) = label_match(&t.pose(2), &t.pose(2), &t, &cfg);
        assert_eq!((e, l), (0.0, true));
        let exact = ToleranceConfig::new(3.0, DistanceMode::AlongTrack).unwrap();
        assert_eq!(label_match(&t.pose(5), &t.pose(2), &t, &exact), (3.0, true));
    }

    #[test]
    fn euclidean_mode_uses_planar_distance() {
        let t = line(4, 2);
        let cfg = ToleranceConfig::new(1.0, DistanceMode::Euclidean).unwrap();
        let (e, l) = label_match(&Pose2D::new(0.0, 0.6, 0.0), &Pose2D::new(0.0, 0.0, 0.0), &t, &cfg);
        assert!((e - 0.6).abs() < 1e-15);
        assert!(l);
    }
}
