//! Missing-aware gradient-boosted decision trees for unit price, one model
//! per property type.
//!
//! A prediction is `inverse(base_score + learning_rate * sum(tree outputs))`
//! where `inverse` undoes the target transform (`exp` by default). Missing
//! feature values follow each split's learned default branch, so a model can
//! score a property with any subset of features present.

mod encoding;
mod format;
mod train;
mod tree;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::{FeatureSchema, Property, PropertyType};
use crate::ingest::Dataset;

pub use encoding::{EncodedFeature, FeatureEncoder, MAX_CATEGORIES};
pub use format::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{SplitCondition, Tree, TreeNode};

#[derive(Debug, thiserror::Error)]
pub enum AvmError {
    #[error("dataset has {records} records; training needs at least {required}")]
    TooSmall { records: usize, required: usize },
    #[error("invalid training parameter: {0}")]
    InvalidParams(String),
    #[error("schema hash mismatch: model expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetTransform {
    Identity,
    #[default]
    Log,
}

impl TargetTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log => y.ln(),
        }
    }

    pub fn inverse(self, score: f64) -> f64 {
        match self {
            TargetTransform::Identity => score,
            TargetTransform::Log => score.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub num_trees: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub feature_histogram_bins: usize,
    /// Fraction of rows each tree is grown on; 1.0 uses every row.
    pub row_subsample: f64,
    pub target_transform: TargetTransform,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_trees: 200,
            max_leaves: 31,
            min_samples_leaf: 20,
            learning_rate: 0.05,
            feature_histogram_bins: 64,
            row_subsample: 1.0,
            target_transform: TargetTransform::Log,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), AvmError> {
        let bad = |what: &str| Err(AvmError::InvalidParams(what.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be at least 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(2..=u16::MAX as usize - 1).contains(&self.feature_histogram_bins) {
            return bad("feature_histogram_bins must lie in [2, 65534]");
        }
        if !(self.row_subsample > 0.0 && self.row_subsample <= 1.0) {
            return bad("row_subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub(crate) property_type: PropertyType,
    pub(crate) schema_hash: String,
    pub(crate) base_score: f64,
    pub(crate) learning_rate: f64,
    pub(crate) target_transform: TargetTransform,
    pub(crate) encoder: FeatureEncoder,
    pub(crate) trees: Vec<Tree>,
    pub(crate) params: TrainParams,
}

/// Trains a model on every record of the dataset.
///
/// A constant target yields a zero-tree model whose base score is that
/// constant, stored untransformed.
pub fn train(dataset: &Dataset, params: &TrainParams) -> Result<GbdtModel, AvmError> {
    train::train(dataset, params)
}

impl GbdtModel {
    pub fn property_type(&self) -> PropertyType {
        self.property_type
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn target_transform(&self) -> TargetTransform {
        self.target_transform
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn encoder(&self) -> &FeatureEncoder {
        &self.encoder
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), AvmError> {
        let found = schema.hash();
        if found != self.schema_hash {
            return Err(AvmError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Score in transformed space using the first `n_trees` trees.
    pub fn raw_score(&self, row: &[Option<f64>], n_trees: usize) -> f64 {
        let sum: f64 = self
            .trees
            .iter()
            .take(n_trees)
            .map(|t| t.predict(row))
            .sum();
        self.base_score + self.learning_rate * sum
    }

    /// Unit price for an encoded row, using the first `n_trees` trees.
    pub fn predict_row(&self, row: &[Option<f64>], n_trees: usize) -> f64 {
        self.target_transform.inverse(self.raw_score(row, n_trees))
    }

    /// Unit price in thousand NTD per square meter.
    pub fn predict(&self, schema: &FeatureSchema, property: &Property) -> Result<f64, AvmError> {
        self.check_schema(schema)?;
        Ok(self.predict_row(&self.encoder.encode(property), self.trees.len()))
    }
}
