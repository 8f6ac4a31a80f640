//! Configuration filtering and k-nearest-neighbor ranking.
//!
//! Candidates are first filtered by the user's [`PropertyConfiguration`],
//! then ranked by a Minkowski distance over min-max normalized numeric
//! features. Categorical features only take part in filtering.
//!
//! When either side has missing entries the distance is computed over the
//! jointly observed coordinates and rescaled by `n / m`, where `n` is the
//! number of numeric features and `m` the number observed on both sides:
//!
//! ```text
//! D(x, y) = ( (n / m) * sum_i |x_i - y_i|^p )^(1/p)
//! ```
//!
//! With nothing missing this is the plain Minkowski distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::domain::{FeatureSchema, FeatureValue, Property, PropertyConfiguration};
use crate::ingest::Dataset;
use crate::stats::NormalizationStats;

pub const DEFAULT_EXPONENT: f64 = 2.0;

/// Normalized numeric features in schema order; `None` is Missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<Option<f64>>);

impl FeatureVector {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self(values)
    }

    /// Min-max normalizes the property's numeric features, clamping to
    /// [0, 1]. Features with no corpus observations, or a zero range, map
    /// to 0 when present.
    pub fn from_property(p: &Property, schema: &FeatureSchema, stats: &NormalizationStats) -> Self {
        let values = schema
            .numeric_features()
            .map(|decl| match p.feature(&decl.name) {
                FeatureValue::Numeric(v) => {
                    let scaled = match stats.numeric(&decl.name) {
                        Some(s) if s.count > 0 && s.max > s.min => {
                            ((v - s.min) / (s.max - s.min)).clamp(0.0, 1.0)
                        }
                        _ => 0.0,
                    };
                    Some(scaled)
                }
                _ => None,
            })
            .collect();
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.0
    }

    pub fn observed_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }
}

/// Minkowski distance of exponent `p` with jointly-observed rescaling.
/// Returns `None` when no coordinate is observed on both sides.
///
/// # Panics
///
/// Panics if the vectors differ in length.
pub fn minkowski_distance(x: &FeatureVector, y: &FeatureVector, p: f64) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "feature vectors from different schemas");
    let n = x.len();
    let mut m = 0usize;
    let mut sum = 0.0;
    for (a, b) in x.0.iter().zip(&y.0) {
        if let (Some(a), Some(b)) = (a, b) {
            m += 1;
            let d = (a - b).abs();
            sum += if p == 2.0 { d * d } else { d.powf(p) };
        }
    }
    if m == 0 {
        return None;
    }
    let scaled = if m == n { sum } else { sum * n as f64 / m as f64 };
    Some(if p == 2.0 { scaled.sqrt() } else { scaled.powf(1.0 / p) })
}

/// Whether `p` satisfies every constraint in the configuration.
pub fn passes_filter(config: &PropertyConfiguration, p: &Property) -> bool {
    config
        .constraints
        .iter()
        .all(|(name, c)| c.accepts(p.feature(name)))
}

/// Records that satisfy every constraint, in corpus order.
pub fn filter_candidates<'a>(config: &PropertyConfiguration, dataset: &'a Dataset) -> Vec<&'a Property> {
    dataset
        .records()
        .iter()
        .filter(|p| passes_filter(config, p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    pub neighbor: Property,
    pub distance: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchStatus {
    Complete,
    /// Fewer comparable candidates than requested.
    Shortfall { found: usize, requested: usize },
    NoNeighborsMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSearch {
    pub neighbors: Vec<NeighborResult>,
    /// Records that survived the configuration filter.
    pub candidates: usize,
    pub status: SearchStatus,
}

impl NeighborSearch {
    pub fn found(&self) -> usize {
        self.neighbors.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.neighbors.iter().map(|n| n.neighbor.id.as_str()).collect()
    }

    pub fn properties(&self) -> Vec<&Property> {
        self.neighbors.iter().map(|n| &n.neighbor).collect()
    }
}

/// Heap entry ordered by (distance, id); the max-heap keeps the worst of the
/// current best k on top.
struct Ranked<'a> {
    distance: f64,
    id: &'a str,
    index: usize,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

/// A dataset with its normalized vectors precomputed for repeated queries.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dataset: Dataset,
    vectors: Vec<FeatureVector>,
    exponent: f64,
}

impl NeighborIndex {
    pub fn new(dataset: Dataset) -> Self {
        Self::with_exponent(dataset, DEFAULT_EXPONENT)
    }

    pub fn with_exponent(dataset: Dataset, exponent: f64) -> Self {
        assert!(exponent >= 1.0, "Minkowski exponent must be at least 1");
        let vectors = dataset
            .records()
            .iter()
            .map(|r| FeatureVector::from_property(r, dataset.schema(), dataset.stats()))
            .collect();
        Self {
            dataset,
            vectors,
            exponent,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn vector_for(&self, p: &Property) -> FeatureVector {
        FeatureVector::from_property(p, self.dataset.schema(), self.dataset.stats())
    }

    /// The `config.k` nearest filtered candidates, excluding any record that
    /// shares the target's id. Ties are broken by ascending id.
    pub fn find(&self, target: &Property, config: &PropertyConfiguration) -> NeighborSearch {
        let k = config.k.max(1);
        let query = self.vector_for(target);
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        let mut candidates = 0;
        for (index, (record, vector)) in self.dataset.records().iter().zip(&self.vectors).enumerate() {
            if record.id == target.id || !passes_filter(config, record) {
                continue;
            }
            candidates += 1;
            let Some(distance) = minkowski_distance(&query, vector, self.exponent) else {
                continue;
            };
            let entry = Ranked {
                distance,
                id: &record.id,
                index,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if heap.peek().is_some_and(|worst| entry < *worst) {
                heap.pop();
                heap.push(entry);
            }
        }
        let neighbors: Vec<NeighborResult> = heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(i, r)| NeighborResult {
                neighbor: self.dataset.records()[r.index].clone(),
                distance: r.distance,
                rank: i + 1,
            })
            .collect();
        let status = match neighbors.len() {
            0 => SearchStatus::NoNeighborsMatched,
            n if n < k => SearchStatus::Shortfall {
                found: n,
                requested: k,
            },
            _ => SearchStatus::Complete,
        };
        NeighborSearch {
            neighbors,
            candidates,
            status,
        }
    }
}

/// One-off search that normalizes the corpus on the fly. Prefer a
/// [`NeighborIndex`] when serving repeated queries.
pub fn find_neighbors(target: &Property, config: &PropertyConfiguration, dataset: &Dataset) -> NeighborSearch {
    NeighborIndex::new(dataset.clone()).find(target, config)
}
