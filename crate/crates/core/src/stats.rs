//! Per-feature corpus statistics computed once at ingest.
//!
//! Search uses the numeric min/max for normalization; average imputation
//! uses means, modal labels and latest temporal values; explanations use
//! ranges to scale differences.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{FeatureKind, FeatureSchema, FeatureValue, Property};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl NumericStats {
    fn from_values(mut values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                min: 0.0,
                max: 0.0,
                mean: 0.0,
                std: 0.0,
            };
        }
        // Sorted summation makes the result independent of record order.
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = (values.iter().sum::<f64>() / n).clamp(values[0], values[values.len() - 1]);
        let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        sq.sort_by(f64::total_cmp);
        let std = (sq.iter().sum::<f64>() / n).sqrt();
        Self {
            count: values.len(),
            min: values[0],
            max: values[values.len() - 1],
            mean,
            std,
        }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalStats {
    pub count: usize,
    pub frequencies: BTreeMap<String, usize>,
}

impl CategoricalStats {
    /// Most frequent label; ties go to the lexicographically smallest.
    pub fn modal_label(&self) -> Option<&str> {
        let mut best: Option<(&str, usize)> = None;
        for (label, &n) in &self.frequencies {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((label, n));
            }
        }
        best.map(|(l, _)| l)
    }

    /// Labels ordered by descending frequency, then lexicographically.
    pub fn labels_by_frequency(&self) -> Vec<&str> {
        let mut labels: Vec<(&str, usize)> = self
            .frequencies
            .iter()
            .map(|(l, &n)| (l.as_str(), n))
            .collect();
        labels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        labels.into_iter().map(|(l, _)| l).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatedValue {
    pub date: NaiveDate,
    pub value: f64,
}

impl DatedValue {
    /// Later date wins; equal dates fall back to the larger value so the
    /// choice never depends on iteration order.
    pub fn is_newer_than(&self, other: &DatedValue) -> bool {
        self.date
            .cmp(&other.date)
            .then_with(|| self.value.total_cmp(&other.value))
            .is_gt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalStats {
    pub count: usize,
    /// The latest date observed, paired with the mean of all values.
    pub latest: Option<DatedValue>,
    /// Summary of the values irrespective of date.
    pub values: NumericStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureStats {
    Numeric(NumericStats),
    Categorical(CategoricalStats),
    Temporal(TemporalStats),
}

impl FeatureStats {
    pub fn count(&self) -> usize {
        match self {
            FeatureStats::Numeric(s) => s.count,
            FeatureStats::Categorical(s) => s.count,
            FeatureStats::Temporal(s) => s.count,
        }
    }

    /// Spread of real values, used to scale differences into [0, 1].
    pub fn value_range(&self) -> Option<f64> {
        match self {
            FeatureStats::Numeric(s) if s.count > 0 => Some(s.range()),
            FeatureStats::Temporal(s) if s.count > 0 => Some(s.values.range()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub schema_hash: String,
    pub record_count: usize,
    pub features: BTreeMap<String, FeatureStats>,
}

impl NormalizationStats {
    pub fn get(&self, feature: &str) -> Option<&FeatureStats> {
        self.features.get(feature)
    }

    pub fn numeric(&self, feature: &str) -> Option<&NumericStats> {
        match self.features.get(feature) {
            Some(FeatureStats::Numeric(s)) => Some(s),
            _ => None,
        }
    }

    pub fn categorical(&self, feature: &str) -> Option<&CategoricalStats> {
        match self.features.get(feature) {
            Some(FeatureStats::Categorical(s)) => Some(s),
            _ => None,
        }
    }

    pub fn temporal(&self, feature: &str) -> Option<&TemporalStats> {
        match self.features.get(feature) {
            Some(FeatureStats::Temporal(s)) => Some(s),
            _ => None,
        }
    }

    /// Features with no observed value in the corpus.
    pub fn unobserved_features(&self) -> Vec<&str> {
        self.features
            .iter()
            .filter(|(_, s)| s.count() == 0)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// The value average imputation substitutes for a Missing feature.
    pub fn average_value(&self, feature: &str) -> Option<FeatureValue> {
        match self.features.get(feature)? {
            FeatureStats::Numeric(s) if s.count > 0 => Some(FeatureValue::Numeric(s.mean)),
            FeatureStats::Categorical(s) => s
                .modal_label()
                .map(|l| FeatureValue::Categorical(l.to_string())),
            FeatureStats::Temporal(s) => s.latest.map(|d| FeatureValue::Temporal {
                date: d.date,
                value: d.value,
            }),
            _ => None,
        }
    }
}

/// Computes statistics over non-Missing values only. Values whose kind does
/// not match the schema are ignored.
pub fn compute_stats(schema: &FeatureSchema, records: &[Property]) -> NormalizationStats {
    let mut features = BTreeMap::new();
    for decl in schema.features() {
        let values = records.iter().map(|r| r.feature(&decl.name));
        let stats = match decl.kind {
            FeatureKind::Numeric => FeatureStats::Numeric(NumericStats::from_values(
                values
                    .filter_map(|v| match v {
                        FeatureValue::Numeric(x) => Some(*x),
                        _ => None,
                    })
                    .collect(),
            )),
            FeatureKind::Categorical => {
                let mut frequencies = BTreeMap::new();
                let mut count = 0;
                for v in values {
                    if let FeatureValue::Categorical(label) = v {
                        *frequencies.entry(label.clone()).or_insert(0) += 1;
                        count += 1;
                    }
                }
                FeatureStats::Categorical(CategoricalStats { count, frequencies })
            }
            FeatureKind::Temporal => {
                let dated: Vec<DatedValue> = values
                    .filter_map(|v| match v {
                        FeatureValue::Temporal { date, value } => Some(DatedValue {
                            date: *date,
                            value: *value,
                        }),
                        _ => None,
                    })
                    .collect();
                let values = NumericStats::from_values(dated.iter().map(|d| d.value).collect());
                let latest = dated.iter().map(|d| d.date).max().map(|date| DatedValue {
                    date,
                    value: values.mean,
                });
                FeatureStats::Temporal(TemporalStats {
                    count: dated.len(),
                    latest,
                    values,
                })
            }
        };
        features.insert(decl.name.clone(), stats);
    }
    NormalizationStats {
        schema_hash: schema.hash(),
        record_count: records.len(),
        features,
    }
}
