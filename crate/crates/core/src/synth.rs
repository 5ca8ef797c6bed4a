//! Seeded synthetic traverses with injected perceptual aliasing.
//!
//! References lie along a gently curving path with constant spacing. Each
//! reference gets a random unit feature vector. There is one query per
//! reference, captured at the reference pose; its feature is the reference
//! feature plus isotropic Gaussian noise. A fixed fraction of queries are
//! aliased: their feature is built from a wrong reference at least
//! [`MIN_ALIAS_OFFSET`] indices away, so VPR returns a confidently wrong match.
//!
//! An aliased query keeps a residual `aliasing_blend` share of its true
//! place before noise is added (`normalize((1 - b) * f_wrong + b * f_true)`).
//! With `aliasing_blend = 0` the wrong feature is copied verbatim.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::QueryProvenance;
use crate::error::ConfigError;
use crate::types::{Pose2D, QueryStream, Traverse};

/// Minimum index offset between an aliased query and the reference it copies.
pub const MIN_ALIAS_OFFSET: usize = 5;

/// Heading random-walk intensity in radians per square-root meter.
const HEADING_WANDER: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub m: usize,
    pub spacing: f64,
    pub aliasing_rate: f64,
    pub noise_sigma: f64,
    pub aliasing_blend: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 1024,
            spacing: 0.3,
            aliasing_rate: 0.2,
            noise_sigma: 0.05,
            aliasing_blend: 0.25,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError(format!("n must be >= 2, got {}", self.n)));
        }
        if self.m < 2 {
            return Err(ConfigError(format!("m must be >= 2, got {}", self.m)));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(ConfigError(format!("spacing must be > 0, got {}", self.spacing)));
        }
        if !(0.0..=1.0).contains(&self.aliasing_rate) {
            return Err(ConfigError(format!(
                "aliasing rate must be in [0, 1], got {}",
                self.aliasing_rate
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ConfigError(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..0.5).contains(&self.aliasing_blend) {
            return Err(ConfigError(format!(
                "aliasing blend must be in [0, 0.5), got {}",
                self.aliasing_blend
            )));
        }
        if self.aliased_count() > 0 && self.n <= MIN_ALIAS_OFFSET {
            return Err(ConfigError(format!(
                "aliasing needs more than {MIN_ALIAS_OFFSET} references"
            )));
        }
        Ok(())
    }

    /// Number of aliased queries: `floor(rate * n)`.
    pub fn aliased_count(&self) -> usize {
        (self.aliasing_rate * self.n as f64).floor() as usize
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub reference: Traverse,
    pub queries: QueryStream,
    pub provenance: Vec<QueryProvenance>,
    pub config: SynthConfig,
}

fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Generate a reference traverse and its query stream. Pure function of `config`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticDataset, ConfigError> {
    config.validate()?;
    let n = config.n;
    let m = config.m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let wander = Normal::new(0.0, HEADING_WANDER * config.spacing.sqrt())
        .map_err(|e| ConfigError(e.to_string()))?;
    let mut poses = Vec::with_capacity(n);
    let (mut x, mut y, mut heading) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        if i > 0 {
            x += config.spacing * heading.cos();
            y += config.spacing * heading.sin();
        }
        poses.push(Pose2D::new(x, y, heading));
        heading += wander.sample(&mut rng);
    }

    let refs: Vec<Vec<f64>> = (0..n).map(|_| random_unit(&mut rng, m)).collect();

    let mut aliased_sources: Vec<Option<usize>> = vec![None; n];
    let mut picked = sample(&mut rng, n, config.aliased_count()).into_vec();
    picked.sort_unstable();
    for k in picked {
        let candidates: Vec<usize> = (0..n).filter(|j| j.abs_diff(k) >= MIN_ALIAS_OFFSET).collect();
        if candidates.is_empty() {
            return Err(ConfigError(format!(
                "no reference at least {MIN_ALIAS_OFFSET} indices away from query {}",
                k + 1
            )));
        }
        aliased_sources[k] = Some(candidates[rng.gen_range(0..candidates.len())]);
    }

    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| ConfigError(e.to_string()))?;
    let mut query_features = Vec::with_capacity(n * m);
    let mut provenance = Vec::with_capacity(n);
    for k in 0..n {
        let base = match aliased_sources[k] {
            Some(j) => {
                let b = config.aliasing_blend;
                normalized(
                    refs[j]
                        .iter()
                        .zip(&refs[k])
                        .map(|(w, t)| (1.0 - b) * w + b * t)
                        .collect(),
                )
            }
            None => refs[k].clone(),
        };
        for v in base {
            let e = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            query_features.push((v + e) as f32);
        }
        provenance.push(QueryProvenance {
            gt_index: k,
            aliased: aliased_sources[k].is_some(),
            source_index: aliased_sources[k].unwrap_or(k),
        });
    }

    let ref_features: Vec<f32> = refs.iter().flatten().map(|&v| v as f32).collect();
    let label = format!("synthetic-seed{}", config.seed);
    let reference = Traverse::new(poses.clone(), None, ref_features, m, label)
        .map_err(|e| ConfigError(e.to_string()))?;
    let odometer = reference.odom().to_vec();
    let queries = QueryStream::new(poses, Some(odometer), query_features, m, 10.0)
        .map_err(|e| ConfigError(e.to_string()))?;

    Ok(SyntheticDataset {
        reference,
        queries,
        provenance,
        config: config.clone(),
    })
}
