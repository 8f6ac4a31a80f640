mod common;

use common::checks;
use common::*;
use valuate::imputation::{impute, impute_average, impute_none, ImputationStrategy};
use valuate::stats::compute_stats;
use valuate::FeatureValue;

#[test]
fn neighbor_imputation_is_bounded() {
    checks::imputation_boundedness(1_000).unwrap();
}

#[test]
fn imputed_values_come_from_observed_ones() {
    checks::imputation_membership(1_000).unwrap();
}

#[test]
fn imputation_is_idempotent_and_reported() {
    checks::imputation_idempotence(1_000).unwrap();
}

#[test]
fn ties_break_deterministically() {
    checks::imputation_tie_breaks(1_000).unwrap();
}

#[test]
fn per_feature_fallback_is_flagged() {
    checks::imputation_fallback(1_000).unwrap();
}

#[test]
fn none_leaves_missing_values_alone() {
    let corpus = random_corpus(9, 40, 0.5);
    for p in &corpus {
        let (out, report) = impute_none(p);
        assert_eq!(&out, p);
        assert!(report.is_empty());
    }
}

#[test]
fn average_uses_corpus_statistics() {
    let schema = mixed_schema();
    let corpus = random_corpus(4, 200, 0.3);
    let stats = compute_stats(&schema, &corpus);
    let target = valuate::Property::new("t", valuate::PropertyType::House);
    let (out, report) = impute_average(&target, &stats, &schema);
    assert!(report.unresolved.is_empty());

    let xs: Vec<f64> = corpus.iter().filter_map(|p| p.feature("f0").as_real()).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((out.feature("f0").as_real().unwrap() - mean).abs() < 1e-9);

    let labels: Vec<(String, Option<chrono::NaiveDate>)> = corpus
        .iter()
        .filter_map(|p| p.feature(ZONE).as_label().map(|l| (l.to_string(), None)))
        .collect();
    let counts = |l: &str| labels.iter().filter(|(x, _)| x == l).count();
    let got = out.feature(ZONE).as_label().unwrap();
    assert_eq!(counts(got), LABELS.iter().map(|l| counts(l)).max().unwrap());

    let dated: Vec<(chrono::NaiveDate, f64)> = corpus
        .iter()
        .filter_map(|p| match p.feature(LAND) {
            FeatureValue::Temporal { date, value } => Some((*date, *value)),
            _ => None,
        })
        .collect();
    let latest = dated.iter().map(|d| d.0).max().unwrap();
    let mean_land = dated.iter().map(|d| d.1).sum::<f64>() / dated.len() as f64;
    match out.feature(LAND) {
        FeatureValue::Temporal { date, value } => {
            assert_eq!(*date, latest);
            assert!((value - mean_land).abs() < 1e-9);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dispatch_matches_direct_calls() {
    let schema = mixed_schema();
    let corpus = random_corpus(2, 30, 0.4);
    let stats = compute_stats(&schema, &corpus);
    let neighbors: Vec<&valuate::Property> = corpus.iter().take(5).collect();
    let target = &corpus[20];
    assert_eq!(impute(ImputationStrategy::None, target, &neighbors, &schema, &stats), impute_none(target));
    assert_eq!(
        impute(ImputationStrategy::Average, target, &neighbors, &schema, &stats),
        impute_average(target, &stats, &schema)
    );
}
