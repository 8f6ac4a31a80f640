//! Shared fixtures for the integration tests: a small mixed schema, seeded
//! random corpora and proptest strategies over them.

#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use valuate::domain::{FeatureDecl, FeatureKind};
use valuate::{Dataset, FeatureSchema, FeatureValue, Property, PropertyType};

pub const NUMERIC: [&str; 3] = ["f0", "f1", "f2"];
pub const ZONE: &str = "zone";
pub const LAND: &str = "land";
pub const LABELS: [&str; 4] = ["A", "B", "C", "D"];

pub fn mixed_schema() -> FeatureSchema {
    let mut decls: Vec<FeatureDecl> = NUMERIC
        .iter()
        .map(|n| FeatureDecl::new(n, FeatureKind::Numeric, "", true))
        .collect();
    decls.push(FeatureDecl::new(ZONE, FeatureKind::Categorical, "", true));
    decls.push(FeatureDecl::new(LAND, FeatureKind::Temporal, "", true));
    FeatureSchema::new(decls).unwrap()
}

pub fn day(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(offset)
}

/// A seeded corpus over [`mixed_schema`]; each feature is Missing with
/// probability `missing`. Values are coarse so that ties happen.
pub fn random_corpus(seed: u64, n: usize, missing: f64) -> Vec<Property> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| random_property(&mut rng, format!("r{i:05}"), missing, true))
        .collect()
}

pub fn random_property(rng: &mut ChaCha8Rng, id: String, missing: f64, priced: bool) -> Property {
    let mut p = Property::new(id, PropertyType::House);
    for name in NUMERIC {
        if !rng.random_bool(missing) {
            p.set(name, FeatureValue::Numeric(rng.random_range(0..40) as f64 / 4.0));
        }
    }
    if !rng.random_bool(missing) {
        p.set(ZONE, FeatureValue::Categorical(LABELS[rng.random_range(0..LABELS.len())].into()));
    }
    if !rng.random_bool(missing) {
        p.set(
            LAND,
            FeatureValue::Temporal {
                date: day(rng.random_range(0..20)),
                value: rng.random_range(1..9) as f64,
            },
        );
    }
    p.transaction_date = Some(day(rng.random_range(0..30)));
    if priced {
        p.unit_price = Some(rng.random_range(10.0..50.0));
    }
    p
}

pub fn random_dataset(seed: u64, n: usize, missing: f64) -> Dataset {
    Dataset::new(mixed_schema(), PropertyType::House, random_corpus(seed, n, missing)).unwrap()
}

/// Optional value strategies for each feature of [`mixed_schema`].
pub fn numeric_value() -> impl Strategy<Value = FeatureValue> {
    prop_oneof![
        1 => Just(FeatureValue::Missing),
        4 => (0u32..40).prop_map(|v| FeatureValue::Numeric(v as f64 / 4.0)),
    ]
}

pub fn zone_value() -> impl Strategy<Value = FeatureValue> {
    prop_oneof![
        1 => Just(FeatureValue::Missing),
        4 => prop::sample::select(LABELS.to_vec()).prop_map(|l| FeatureValue::Categorical(l.into())),
    ]
}

pub fn land_value() -> impl Strategy<Value = FeatureValue> {
    prop_oneof![
        1 => Just(FeatureValue::Missing),
        4 => (0i64..20, 1u32..9).prop_map(|(d, v)| FeatureValue::Temporal { date: day(d), value: v as f64 }),
    ]
}

/// A property over [`mixed_schema`] with random missingness.
pub fn property(id: String) -> impl Strategy<Value = Property> {
    (
        prop::collection::vec(numeric_value(), NUMERIC.len()),
        zone_value(),
        land_value(),
        0i64..30,
        prop::option::of(1.0f64..100.0),
    )
        .prop_map(move |(nums, zone, land, tx, price)| {
            let mut p = Property::new(id.clone(), PropertyType::House);
            for (name, v) in NUMERIC.iter().zip(nums) {
                if !v.is_missing() {
                    p.set(name, v);
                }
            }
            if !zone.is_missing() {
                p.set(ZONE, zone);
            }
            if !land.is_missing() {
                p.set(LAND, land);
            }
            p.transaction_date = Some(day(tx));
            p.unit_price = price;
            p
        })
}

/// `n` properties with distinct ids.
pub fn properties(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Property>> {
    n.prop_flat_map(|len| (0..len).map(|i| property(format!("n{i:03}"))).collect::<Vec<_>>())
}
