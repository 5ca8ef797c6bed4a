//! Integrity monitoring for visual place recognition (VPR).
//!
//! A small MLP predicts, from 192 hand-crafted statistics of a query's match
//! output, whether the best VPR match lies within a position tolerance. Two
//! localization pipelines consume those predictions: single-query rejection
//! and history-of-queries odometry extrapolation. The [`experiments`] module
//! replays both on recorded or synthetic data.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod featurizer;
pub mod localizer;
pub mod matcher;
pub mod mlp;
pub mod model_io;
pub mod pipeline;
pub mod synth;
pub mod types;

pub use error::{
    ConfigError, DatasetError, ExperimentError, FeatureError, LocalizerError, MatchError,
    ModelError, ModelFileError,
};
pub use featurizer::{featurize, extract_stats, FeatureBundle, StatCatalogue};
pub use localizer::{hoq_best, hoq_localize, update_history, verify_single, HistoryEntry, HistoryWindow};
pub use matcher::{best_match, distance_vector, label_match, DistanceMetric, Matcher, MatcherConfig};
pub use mlp::{choose_alpha_default, train, weighted_mse, MlpModel, PredictionRecord, TrainConfig};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};
pub use types::{DistanceMode, MatchRecord, Pose2D, QueryStream, ToleranceConfig, Traverse};
