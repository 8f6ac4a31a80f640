//! Independent reference implementations, written from the definitions
//! rather than from the library code.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use valuate::domain::FeatureKind;
use valuate::{Constraint, Dataset, FeatureValue, Property, PropertyConfiguration};

/// Textbook constraint check: Missing never satisfies a constraint.
pub fn satisfies(config: &PropertyConfiguration, p: &Property) -> bool {
    config.constraints.iter().all(|(name, c)| match (c, p.feature(name)) {
        (Constraint::Range { lower, upper }, FeatureValue::Numeric(v)) => {
            lower.is_none_or(|l| *v >= l) && upper.is_none_or(|u| *v <= u)
        }
        (Constraint::Range { lower, upper }, FeatureValue::Temporal { value, .. }) => {
            lower.is_none_or(|l| *value >= l) && upper.is_none_or(|u| *value <= u)
        }
        (Constraint::Labels { labels }, FeatureValue::Categorical(l)) => labels.contains(l),
        _ => false,
    })
}

/// Per-feature (min, max) over the records' numeric values.
pub fn bounds(dataset: &Dataset) -> Vec<Option<(f64, f64)>> {
    dataset
        .schema()
        .features()
        .iter()
        .filter(|d| d.kind == FeatureKind::Numeric)
        .map(|d| {
            let values: Vec<f64> = dataset
                .records()
                .iter()
                .filter_map(|r| match r.feature(&d.name) {
                    FeatureValue::Numeric(x) => Some(*x),
                    _ => None,
                })
                .collect();
            let lo = values.iter().cloned().reduce(f64::min)?;
            let hi = values.iter().cloned().reduce(f64::max)?;
            Some((lo, hi))
        })
        .collect()
}

/// Min-max scaled numeric features, clamped; a degenerate or empty range
/// maps to 0.
pub fn scaled_with(p: &Property, dataset: &Dataset, bounds: &[Option<(f64, f64)>]) -> Vec<Option<f64>> {
    dataset
        .schema()
        .features()
        .iter()
        .filter(|d| d.kind == FeatureKind::Numeric)
        .zip(bounds)
        .map(|(d, b)| {
            let FeatureValue::Numeric(v) = p.feature(&d.name) else {
                return None;
            };
            Some(match b {
                Some((lo, hi)) if hi > lo => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
                _ => 0.0,
            })
        })
        .collect()
}

pub fn scaled(p: &Property, dataset: &Dataset) -> Vec<Option<f64>> {
    scaled_with(p, dataset, &bounds(dataset))
}

/// ((n/m) * sum over jointly observed |x - y|^p)^(1/p).
pub fn distance(x: &[Option<f64>], y: &[Option<f64>], p: f64) -> Option<f64> {
    let n = x.len() as f64;
    let pairs: Vec<f64> = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let m = pairs.len() as f64;
    let sum: f64 = pairs.iter().map(|d| d.powf(p)).sum();
    Some((n / m * sum).powf(1.0 / p))
}

/// Exhaustive filter, score and sort by (distance, id); top k.
pub fn knn(target: &Property, config: &PropertyConfiguration, dataset: &Dataset, p: f64) -> Vec<(String, f64)> {
    let b = bounds(dataset);
    let t = scaled_with(target, dataset, &b);
    let mut scored: Vec<(String, f64)> = dataset
        .records()
        .iter()
        .filter(|r| r.id != target.id && satisfies(config, r))
        .filter_map(|r| distance(&t, &scaled_with(r, dataset, &b), p).map(|d| (r.id.clone(), d)))
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(config.k);
    scored
}

/// Mode with ties broken by the latest transaction date among the label's
/// carriers, then by the smallest label.
pub fn mode(entries: &[(String, Option<NaiveDate>)]) -> Option<String> {
    let mut tally: BTreeMap<&str, (usize, Option<NaiveDate>)> = BTreeMap::new();
    for (label, date) in entries {
        let e = tally.entry(label).or_default();
        e.0 += 1;
        e.1 = e.1.max(*date);
    }
    let best_count = tally.values().map(|v| v.0).max()?;
    let best_date = tally.values().filter(|v| v.0 == best_count).map(|v| v.1).max()?;
    tally
        .into_iter()
        .find(|(_, v)| v.0 == best_count && v.1 == best_date)
        .map(|(l, _)| l.to_string())
}

/// Mean absolute percentage error, written out directly.
pub fn mape(actual: &[f64], predicted: &[f64]) -> f64 {
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| ((a - p) / a).abs())
        .sum();
    100.0 * total / actual.len() as f64
}
