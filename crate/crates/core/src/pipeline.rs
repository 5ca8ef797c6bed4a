//! Glue from raw datasets to labeled matches and monitor inputs.

use crate::error::{FeatureError, MatchError, ModelError};
use crate::featurizer::{featurize, FeatureBundle, StatCatalogue};
use crate::matcher::Matcher;
use crate::mlp::{MlpModel, PredictionRecord};
use crate::types::{MatchRecord, QueryStream, ToleranceConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A matched query with its monitor input.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub record: MatchRecord,
    pub input: Vec<f64>,
}

/// Match every query and compute its 192-dimensional monitor input.
pub fn prepare_queries(
    matcher: &Matcher<'_>,
    queries: &QueryStream,
    tolerance: &ToleranceConfig,
    catalogue: &StatCatalogue,
) -> Result<Vec<PreparedQuery>, PipelineError> {
    let records = matcher.match_stream(queries, tolerance)?;
    records
        .into_iter()
        .map(|record| {
            let q = matcher.prepare_query(queries.feature(record.query_index));
            let r = matcher.reference(record.best_index).to_vec();
            let bundle = FeatureBundle::new(record.distance_vector.clone(), q, r)?;
            let input = featurize(&bundle, catalogue)?;
            Ok(PreparedQuery { record, input })
        })
        .collect()
}

/// Training pairs `(input, label)`.
pub fn training_set(prepared: &[PreparedQuery]) -> Vec<(Vec<f64>, bool)> {
    prepared
        .iter()
        .map(|p| (p.input.clone(), p.record.label))
        .collect()
}

/// Fraction of matches that are out of tolerance.
pub fn out_of_tolerance_fraction(records: &[MatchRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| !r.label).count() as f64 / records.len() as f64
}

/// Monitor predictions for prepared queries.
pub fn predict_all(
    model: &MlpModel,
    prepared: &[PreparedQuery],
    catalogue: &StatCatalogue,
) -> Result<Vec<PredictionRecord>, ModelError> {
    if model.catalogue_version() != catalogue.version {
        return Err(ModelError::CatalogueVersion {
            expected: model.catalogue_version(),
            found: catalogue.version,
        });
    }
    prepared.iter().map(|p| model.predict(&p.input)).collect()
}

/// Predictions that copy the ground-truth labels.
pub fn oracle_predictions(records: &[MatchRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| PredictionRecord {
            raw: if r.label { 1.0 } else { 0.0 },
            binary: r.label,
        })
        .collect()
}
