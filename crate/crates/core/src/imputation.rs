//! Filling a target property's missing features.
//!
//! Three strategies:
//!
//! * **neighbor**: numeric features take the mean of the neighbors' values,
//!   categorical features the most frequent label, temporal features the
//!   value with the latest date. A feature no neighbor carries falls back to
//!   the average strategy.
//! * **average**: corpus mean, modal label, or mean value stamped with the latest date.
//! * **none**: the property is passed through untouched and the model deals
//!   with the gaps.
//!
//! Values are imputed in native units, never in normalized space.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{FeatureKind, FeatureSchema, FeatureValue, Property};
use crate::stats::{DatedValue, NormalizationStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationStrategy {
    None,
    Average,
    Neighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ids", rename_all = "snake_case")]
pub enum ImputationSource {
    Neighbors(Vec<String>),
    CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedFeature {
    pub feature: String,
    pub value: FeatureValue,
    /// The strategy that actually produced the value.
    pub strategy: ImputationStrategy,
    pub source: ImputationSource,
    /// Number of observations the value was derived from.
    pub support: usize,
    /// Set when neighbor imputation had to fall back to corpus statistics.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub entries: Vec<ImputedFeature>,
    /// Features still Missing after imputation.
    pub unresolved: Vec<String>,
    /// Neighbor imputation was requested with no neighbors at all.
    pub full_fallback: bool,
}

impl ImputationReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.unresolved.is_empty() && !self.full_fallback
    }

    pub fn get(&self, feature: &str) -> Option<&ImputedFeature> {
        self.entries.iter().find(|e| e.feature == feature)
    }

    pub fn fallback_count(&self) -> usize {
        self.entries.iter().filter(|e| e.fallback).count()
    }
}

/// Leaves the target as is. The report stays empty: nothing was attempted,
/// so nothing is listed as unresolved either.
pub fn impute_none(target: &Property) -> (Property, ImputationReport) {
    (target.clone(), ImputationReport::default())
}

fn average_entry(feature: &str, stats: &NormalizationStats, fallback: bool) -> Option<ImputedFeature> {
    let value = stats.average_value(feature)?;
    let support = stats.get(feature).map_or(0, |s| s.count());
    Some(ImputedFeature {
        feature: feature.to_string(),
        value,
        strategy: ImputationStrategy::Average,
        source: ImputationSource::CorpusStats,
        support,
        fallback,
    })
}

/// Substitutes corpus-wide statistics for every Missing schema feature.
pub fn impute_average(
    target: &Property,
    stats: &NormalizationStats,
    schema: &FeatureSchema,
) -> (Property, ImputationReport) {
    let mut out = target.clone();
    let mut report = ImputationReport::default();
    for name in target.missing_features(schema) {
        match average_entry(name, stats, false) {
            Some(entry) => {
                out.set(name, entry.value.clone());
                report.entries.push(entry);
            }
            None => report.unresolved.push(name.to_string()),
        }
    }
    (out, report)
}

/// Most frequent label; ties go to the label carried by the most recently
/// transacted neighbor, then to the lexicographically smallest label.
pub fn modal_label<'a, I>(labels: I) -> Option<String>
where
    I: IntoIterator<Item = (&'a str, Option<NaiveDate>)>,
{
    let mut tally: BTreeMap<&str, (usize, Option<NaiveDate>)> = BTreeMap::new();
    for (label, date) in labels {
        let e = tally.entry(label).or_insert((0, None));
        e.0 += 1;
        e.1 = e.1.max(date);
    }
    // BTreeMap iterates labels in ascending order, so strict comparisons
    // keep the smallest label among full ties.
    let mut best: Option<(&str, usize, Option<NaiveDate>)> = None;
    for (label, (count, latest)) in tally {
        let better = match best {
            None => true,
            Some((_, c, d)) => count > c || (count == c && latest > d),
        };
        if better {
            best = Some((label, count, latest));
        }
    }
    best.map(|(l, _, _)| l.to_string())
}

/// Fills Missing features from the given neighbors, in rank order.
pub fn impute_neighbor(
    target: &Property,
    neighbors: &[&Property],
    schema: &FeatureSchema,
    stats: &NormalizationStats,
) -> (Property, ImputationReport) {
    if neighbors.is_empty() {
        let (out, mut report) = impute_average(target, stats, schema);
        for e in &mut report.entries {
            e.fallback = true;
        }
        report.full_fallback = true;
        return (out, report);
    }

    let mut out = target.clone();
    let mut report = ImputationReport::default();
    for name in target.missing_features(schema) {
        let decl = schema.get(name).expect("name comes from the schema");
        let values: Vec<(&Property, &FeatureValue)> = neighbors
            .iter()
            .map(|n| (*n, n.feature(name)))
            .filter(|(_, v)| v.kind() == Some(decl.kind))
            .collect();
        let imputed = match decl.kind {
            _ if values.is_empty() => None,
            FeatureKind::Numeric => {
                let mut xs: Vec<f64> = values.iter().filter_map(|(_, v)| v.as_real()).collect();
                xs.sort_by(f64::total_cmp);
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                // Rounding cannot push the mean outside the observed span.
                Some(FeatureValue::Numeric(mean.clamp(xs[0], xs[xs.len() - 1])))
            }
            FeatureKind::Categorical => modal_label(
                values
                    .iter()
                    .filter_map(|(p, v)| v.as_label().map(|l| (l, p.transaction_date))),
            )
            .map(FeatureValue::Categorical),
            FeatureKind::Temporal => values
                .iter()
                .filter_map(|(_, v)| match v {
                    FeatureValue::Temporal { date, value } => Some(DatedValue {
                        date: *date,
                        value: *value,
                    }),
                    _ => None,
                })
                .reduce(|best, d| if d.is_newer_than(&best) { d } else { best })
                .map(|d| FeatureValue::Temporal {
                    date: d.date,
                    value: d.value,
                }),
        };
        match imputed {
            Some(value) => {
                out.set(name, value.clone());
                report.entries.push(ImputedFeature {
                    feature: name.to_string(),
                    value,
                    strategy: ImputationStrategy::Neighbor,
                    source: ImputationSource::Neighbors(
                        values.iter().map(|(p, _)| p.id.clone()).collect(),
                    ),
                    support: values.len(),
                    fallback: false,
                });
            }
            None => match average_entry(name, stats, true) {
                Some(entry) => {
                    out.set(name, entry.value.clone());
                    report.entries.push(entry);
                }
                None => report.unresolved.push(name.to_string()),
            },
        }
    }
    (out, report)
}

/// Dispatches on the strategy. `neighbors` is ignored except for
/// [`ImputationStrategy::Neighbor`].
pub fn impute(
    strategy: ImputationStrategy,
    target: &Property,
    neighbors: &[&Property],
    schema: &FeatureSchema,
    stats: &NormalizationStats,
) -> (Property, ImputationReport) {
    match strategy {
        ImputationStrategy::None => impute_none(target),
        ImputationStrategy::Average => impute_average(target, stats, schema),
        ImputationStrategy::Neighbor => impute_neighbor(target, neighbors, schema, stats),
    }
}
