use serde::{Deserialize, Serialize};

use crate::domain::{FeatureKind, FeatureSchema, FeatureValue, Property};
use crate::stats::NormalizationStats;

/// Most frequent labels kept per categorical feature; the rest share one
/// pooled code.
pub const MAX_CATEGORIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncodedFeature {
    Numeric { name: String },
    /// Code `i` is `labels[i]`; code `labels.len()` is the pooled remainder,
    /// including labels never seen in training.
    Categorical { name: String, labels: Vec<String> },
    /// Enters the model through its value; the date is ignored.
    Temporal { name: String },
}

impl EncodedFeature {
    pub fn name(&self) -> &str {
        match self {
            EncodedFeature::Numeric { name }
            | EncodedFeature::Categorical { name, .. }
            | EncodedFeature::Temporal { name } => name,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, EncodedFeature::Categorical { .. })
    }

    pub fn other_code(&self) -> u32 {
        match self {
            EncodedFeature::Categorical { labels, .. } => labels.len() as u32,
            _ => 0,
        }
    }
}

/// Maps properties to model rows: one `Option<f64>` per schema feature,
/// with categorical labels replaced by their integer code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    features: Vec<EncodedFeature>,
}

impl FeatureEncoder {
    pub fn new(schema: &FeatureSchema, stats: &NormalizationStats) -> Self {
        let features = schema
            .features()
            .iter()
            .map(|decl| {
                let name = decl.name.clone();
                match decl.kind {
                    FeatureKind::Numeric => EncodedFeature::Numeric { name },
                    FeatureKind::Temporal => EncodedFeature::Temporal { name },
                    FeatureKind::Categorical => {
                        let labels = stats
                            .categorical(&decl.name)
                            .map(|c| {
                                c.labels_by_frequency()
                                    .into_iter()
                                    .take(MAX_CATEGORIES)
                                    .map(str::to_string)
                                    .collect()
                            })
                            .unwrap_or_default();
                        EncodedFeature::Categorical { name, labels }
                    }
                }
            })
            .collect();
        Self { features }
    }

    pub fn features(&self) -> &[EncodedFeature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Values of the wrong kind are treated as Missing.
    pub fn encode(&self, p: &Property) -> Vec<Option<f64>> {
        self.features
            .iter()
            .map(|f| match (f, p.feature(f.name())) {
                (EncodedFeature::Numeric { .. }, FeatureValue::Numeric(v)) => Some(*v),
                (EncodedFeature::Temporal { .. }, FeatureValue::Temporal { value, .. }) => {
                    Some(*value)
                }
                (EncodedFeature::Categorical { labels, .. }, FeatureValue::Categorical(s)) => {
                    let code = labels
                        .iter()
                        .position(|l| l == s)
                        .unwrap_or(labels.len());
                    Some(code as f64)
                }
                _ => None,
            })
            .collect()
    }
}

pub(crate) const MISSING_BIN: u16 = u16::MAX;

/// Bin boundaries for one feature. A value falls in the first bin whose
/// upper edge is at least the value; categorical codes are their own bins.
#[derive(Debug, Clone)]
pub(crate) enum BinMap {
    Numeric { edges: Vec<f64> },
    Categorical { bins: usize },
}

impl BinMap {
    pub(crate) fn numeric(values: &mut Vec<f64>, max_bins: usize) -> Self {
        values.sort_by(f64::total_cmp);
        values.dedup();
        let edges = if values.len() <= max_bins {
            values.clone()
        } else {
            let mut edges: Vec<f64> = (1..=max_bins)
                .map(|j| {
                    let pos = (j * values.len()).div_ceil(max_bins) - 1;
                    values[pos.min(values.len() - 1)]
                })
                .collect();
            edges.dedup();
            edges
        };
        BinMap::Numeric { edges }
    }

    pub(crate) fn bins(&self) -> usize {
        match self {
            BinMap::Numeric { edges } => edges.len(),
            BinMap::Categorical { bins } => *bins,
        }
    }

    pub(crate) fn bin(&self, value: Option<f64>) -> u16 {
        match (self, value) {
            (_, None) => MISSING_BIN,
            (BinMap::Numeric { edges }, Some(v)) => {
                let idx = edges.partition_point(|e| *e < v);
                idx.min(edges.len().saturating_sub(1)) as u16
            }
            (BinMap::Categorical { .. }, Some(code)) => code as u16,
        }
    }

    /// Upper edge of a numeric bin, used as the split threshold.
    pub(crate) fn threshold(&self, bin: usize) -> f64 {
        match self {
            BinMap::Numeric { edges } => edges[bin],
            BinMap::Categorical { .. } => unreachable!("categorical bins have no threshold"),
        }
    }
}
