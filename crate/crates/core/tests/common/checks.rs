//! Property suites shared by the per-module tests and the acceptance run.
//! Each returns `Err` with proptest's minimal counterexample on failure.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle;
use super::*;
use valuate::imputation::{impute, impute_neighbor, ImputationReport, ImputationSource, ImputationStrategy};
use valuate::neighbors::{minkowski_distance, FeatureVector, NeighborIndex};
use valuate::stats::{compute_stats, NormalizationStats};
use valuate::{Constraint, Dataset, FeatureValue, Property, PropertyConfiguration, PropertyType};

/// Runs `test` over `cases` deterministic draws of `strategy`.
pub fn run_cases<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

// ---- distance -------------------------------------------------------------

fn unit_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

fn observed(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.iter().map(|x| Some(*x)).collect())
}

/// Non-negativity, symmetry, identity and the triangle inequality on fully
/// observed vectors, within `tol`.
pub fn metric_suite(cases: u32, tol: f64) -> Result<(), String> {
    let strategy = (1usize..12).prop_flat_map(|n| (unit_vector(n), unit_vector(n), unit_vector(n)));
    run_cases(cases, strategy, |(x, y, z)| {
        let (x, y, z) = (observed(&x), observed(&y), observed(&z));
        let d = |a: &FeatureVector, b: &FeatureVector| minkowski_distance(a, b, 2.0).unwrap();
        let (xy, yx, xz, yz) = (d(&x, &y), d(&y, &x), d(&x, &z), d(&y, &z));
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() <= tol, "asymmetric: {xy} vs {yx}");
        prop_assert!(d(&x, &x).abs() <= tol);
        prop_assert!(xz <= xy + yz + tol, "triangle: {xz} > {xy} + {yz}");
        Ok(())
    })
}

/// The closed-form cases: the 3-4-5 triangle and the rescaled partial case.
pub fn distance_spot_values(tol: f64) -> Result<(), String> {
    let cases = [
        (vec![Some(0.0), Some(0.0)], vec![Some(0.3), Some(0.4)], 0.5),
        (vec![Some(0.2), Some(0.7)], vec![Some(0.2), Some(0.7)], 0.0),
        (vec![Some(0.0), None], vec![Some(0.3), Some(0.9)], (2.0f64 * 0.09).sqrt()),
    ];
    for (x, y, want) in cases {
        let got = minkowski_distance(&FeatureVector::new(x.clone()), &FeatureVector::new(y.clone()), 2.0)
            .ok_or("unexpectedly incomparable")?;
        if (got - want).abs() > tol {
            return Err(format!("{x:?} vs {y:?}: got {got}, want {want}"));
        }
    }
    let none = minkowski_distance(
        &FeatureVector::new(vec![Some(0.1), None]),
        &FeatureVector::new(vec![None, Some(0.1)]),
        2.0,
    );
    if none.is_some() {
        return Err("disjoint observations must be incomparable".into());
    }
    Ok(())
}

// ---- neighbor search -----------------------------------------------------

/// Corpus with continuous values, 15% missingness and some exact feature
/// duplicates (under fresh ids) so that distance ties occur.
pub fn knn_corpus(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<Property> = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("k{i:05}");
        if i > 0 && rng.random_bool(0.05) {
            let mut copy = records[rng.random_range(0..i)].clone();
            copy.id = id;
            records.push(copy);
            continue;
        }
        let mut p = Property::new(id, PropertyType::House);
        for name in NUMERIC {
            if !rng.random_bool(0.15) {
                p.set(name, FeatureValue::Numeric(rng.random_range(0.0..100.0)));
            }
        }
        if !rng.random_bool(0.15) {
            p.set(ZONE, FeatureValue::Categorical(LABELS[rng.random_range(0..LABELS.len())].into()));
        }
        p.transaction_date = Some(day(rng.random_range(0..100)));
        p.unit_price = Some(rng.random_range(10.0..60.0));
        records.push(p);
    }
    Dataset::new(mixed_schema(), PropertyType::House, records).unwrap()
}

fn random_config(rng: &mut ChaCha8Rng) -> PropertyConfiguration {
    let mut config = PropertyConfiguration::unconstrained(rng.random_range(1..=20));
    for name in NUMERIC {
        if rng.random_bool(0.3) {
            let a = rng.random_range(0.0..100.0);
            let b = rng.random_range(a..=100.0);
            let c = match rng.random_range(0..3) {
                0 => Constraint::Range { lower: Some(a), upper: None },
                1 => Constraint::Range { lower: None, upper: Some(b) },
                _ => Constraint::range(a, b),
            };
            config = config.with(name, c);
        }
    }
    if rng.random_bool(0.3) {
        let labels: Vec<&str> = LABELS.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
        config = config.with(ZONE, Constraint::labels(labels));
    }
    config
}

fn random_target(rng: &mut ChaCha8Rng, dataset: &Dataset, case: usize) -> Property {
    let records = dataset.records();
    match case % 4 {
        // Exact duplicate of a corpus record under a new id.
        0 => {
            let mut p = records[rng.random_range(0..records.len())].clone();
            p.id = format!("target{case}");
            p
        }
        // A corpus record itself; it must exclude itself.
        1 => records[rng.random_range(0..records.len())].clone(),
        _ => {
            let mut p = Property::new(format!("target{case}"), PropertyType::House);
            for name in NUMERIC {
                if rng.random_bool(0.8) {
                    p.set(name, FeatureValue::Numeric(rng.random_range(-10.0..110.0)));
                }
            }
            p
        }
    }
}

/// Compares `NeighborIndex::find` with the exhaustive oracle on `cases`
/// random (target, config, k) draws. Returns the number of mismatches and
/// the first one, if any.
pub fn knn_oracle_mismatches(seed: u64, corpus_size: usize, cases: usize) -> (usize, Option<String>) {
    let dataset = knn_corpus(seed, corpus_size);
    let index = NeighborIndex::new(dataset.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut mismatches = 0;
    let mut first = None;
    for case in 0..cases {
        let target = random_target(&mut rng, &dataset, case);
        let config = random_config(&mut rng);
        let got: Vec<String> = index.find(&target, &config).ids().into_iter().map(String::from).collect();
        let want: Vec<String> = oracle::knn(&target, &config, &dataset, 2.0).into_iter().map(|(id, _)| id).collect();
        if got != want {
            mismatches += 1;
            first.get_or_insert_with(|| format!("case {case}: got {got:?}, oracle {want:?}"));
        }
    }
    (mismatches, first)
}

// ---- imputation ----------------------------------------------------------

/// Target, neighbors and corpus statistics (the corpus contains the
/// neighbors plus a few random extra records, possibly none).
#[derive(Debug, Clone)]
pub struct ImputationCase {
    pub target: Property,
    pub neighbors: Vec<Property>,
    pub stats: NormalizationStats,
}

pub fn imputation_case() -> impl Strategy<Value = ImputationCase> {
    (property("target".into()), properties(0..9), any::<u64>(), 0usize..4).prop_map(
        |(target, neighbors, seed, extra)| {
            let mut corpus = neighbors.clone();
            corpus.extend(random_corpus(seed, extra, 0.6));
            ImputationCase {
                stats: compute_stats(&mixed_schema(), &corpus),
                target,
                neighbors,
            }
        },
    )
}

fn refs(ps: &[Property]) -> Vec<&Property> {
    ps.iter().collect()
}

fn run_neighbor(c: &ImputationCase) -> (Property, ImputationReport) {
    impute_neighbor(&c.target, &refs(&c.neighbors), &mixed_schema(), &c.stats)
}

fn neighbor_values<'a>(c: &'a ImputationCase, name: &str) -> Vec<&'a FeatureValue> {
    c.neighbors
        .iter()
        .map(|n| n.feature(name))
        .filter(|v| !v.is_missing())
        .collect()
}

/// Neighbor-imputed numerics lie within the contributing values' span, and
/// equal their mean; average-imputed ones lie within the corpus span.
pub fn imputation_boundedness(cases: u32) -> Result<(), String> {
    run_cases(cases, imputation_case(), |c| {
        let (_, report) = run_neighbor(&c);
        for e in &report.entries {
            let Some(v) = e.value.as_real().filter(|_| NUMERIC.contains(&e.feature.as_str())) else {
                continue;
            };
            if e.fallback {
                let s = c.stats.numeric(&e.feature).unwrap();
                prop_assert!(s.min <= v && v <= s.max, "{} = {v} outside corpus span", e.feature);
            } else {
                let xs: Vec<f64> = neighbor_values(&c, &e.feature).iter().filter_map(|v| v.as_real()).collect();
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= v && v <= hi, "{} = {v} outside [{lo}, {hi}]", e.feature);
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                prop_assert!((v - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            }
        }
        Ok(())
    })
}

/// Imputed labels and dated values come from the neighbors (or, under
/// fallback, from the corpus).
pub fn imputation_membership(cases: u32) -> Result<(), String> {
    run_cases(cases, imputation_case(), |c| {
        let (_, report) = run_neighbor(&c);
        for e in &report.entries {
            match &e.value {
                FeatureValue::Categorical(label) => {
                    let pool: BTreeSet<&str> = if e.fallback {
                        c.stats.categorical(&e.feature).unwrap().frequencies.keys().map(String::as_str).collect()
                    } else {
                        neighbor_values(&c, &e.feature).iter().filter_map(|v| v.as_label()).collect()
                    };
                    prop_assert!(pool.contains(label.as_str()), "{label} not among {pool:?}");
                }
                v @ FeatureValue::Temporal { .. } if !e.fallback => {
                    prop_assert!(neighbor_values(&c, &e.feature).contains(&v), "{v:?} not a neighbor entry");
                }
                _ => {}
            }
        }
        Ok(())
    })
}

/// Re-imputing an output changes nothing, a complete property is left as
/// is by every strategy, and observed values are never overwritten.
pub fn imputation_idempotence(cases: u32) -> Result<(), String> {
    let schema = mixed_schema();
    run_cases(cases, imputation_case(), |c| {
        let (once, report) = run_neighbor(&c);
        for (name, v) in &c.target.features {
            if !v.is_missing() {
                prop_assert_eq!(once.feature(name), v);
            }
        }
        let (twice, again) = impute_neighbor(&once, &refs(&c.neighbors), &schema, &c.stats);
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(again.entries.len(), 0);
        prop_assert_eq!(&again.unresolved, &report.unresolved);
        if once.missing_features(&schema).is_empty() {
            for s in [ImputationStrategy::None, ImputationStrategy::Average, ImputationStrategy::Neighbor] {
                let (out, r) = impute(s, &once, &refs(&c.neighbors), &schema, &c.stats);
                prop_assert_eq!(&out, &once);
                prop_assert!(r.entries.is_empty() && r.unresolved.is_empty());
            }
        }
        // Report completeness: entries are exactly the features filled in.
        let filled: BTreeSet<String> = c
            .target
            .missing_features(&schema)
            .into_iter()
            .filter(|n| !once.feature(n).is_missing())
            .map(String::from)
            .collect();
        let reported: BTreeSet<String> = report.entries.iter().map(|e| e.feature.clone()).collect();
        prop_assert_eq!(filled, reported);
        Ok(())
    })
}

/// The outcome does not depend on neighbor order, and ties resolve as the
/// oracle says: label count, then recency, then label; latest date, then
/// larger value.
pub fn imputation_tie_breaks(cases: u32) -> Result<(), String> {
    let schema = mixed_schema();
    let strategy = (imputation_case(), any::<u64>());
    run_cases(cases, strategy, |(c, shuffle_seed)| {
        let (base, _) = run_neighbor(&c);
        let mut shuffled = c.neighbors.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (other, _) = impute_neighbor(&c.target, &refs(&shuffled), &schema, &c.stats);
        prop_assert_eq!(&base, &other);

        if c.target.feature(ZONE).is_missing() {
            let entries: Vec<(String, Option<chrono::NaiveDate>)> = c
                .neighbors
                .iter()
                .filter_map(|n| n.feature(ZONE).as_label().map(|l| (l.to_string(), n.transaction_date)))
                .collect();
            if let Some(want) = oracle::mode(&entries) {
                prop_assert_eq!(base.feature(ZONE).as_label(), Some(want.as_str()));
            }
        }
        if c.target.feature(LAND).is_missing() {
            let latest = c
                .neighbors
                .iter()
                .filter_map(|n| match n.feature(LAND) {
                    FeatureValue::Temporal { date, value } => Some((*date, *value)),
                    _ => None,
                })
                .max_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            if let Some((date, value)) = latest {
                prop_assert_eq!(base.feature(LAND), &FeatureValue::Temporal { date, value });
            }
        }
        Ok(())
    })
}

/// A Missing feature no neighbor carries takes the corpus average and is
/// flagged; one a neighbor carries is never a fallback. No neighbors at all
/// sets the full-fallback flag.
pub fn imputation_fallback(cases: u32) -> Result<(), String> {
    run_cases(cases, imputation_case(), |c| {
        let (out, report) = run_neighbor(&c);
        prop_assert_eq!(report.full_fallback, c.neighbors.is_empty());
        let by_feature: BTreeMap<&str, _> = report.entries.iter().map(|e| (e.feature.as_str(), e)).collect();
        for name in c.target.missing_features(&mixed_schema()) {
            let carried = !neighbor_values(&c, name).is_empty();
            match (carried, by_feature.get(name)) {
                (true, Some(e)) => {
                    prop_assert!(!e.fallback);
                    prop_assert_eq!(&e.strategy, &ImputationStrategy::Neighbor);
                    let ids: Vec<String> = c
                        .neighbors
                        .iter()
                        .filter(|n| !n.feature(name).is_missing())
                        .map(|n| n.id.clone())
                        .collect();
                    prop_assert_eq!(&e.source, &ImputationSource::Neighbors(ids));
                }
                (true, None) => prop_assert!(false, "{name} carried by a neighbor but not imputed"),
                (false, Some(e)) => {
                    prop_assert!(e.fallback, "{name} should be a fallback");
                    prop_assert_eq!(&e.source, &ImputationSource::CorpusStats);
                    prop_assert_eq!(Some(out.feature(name).clone()), c.stats.average_value(name));
                }
                (false, None) => {
                    prop_assert!(c.stats.average_value(name).is_none());
                    prop_assert!(report.unresolved.iter().any(|u| u == name));
                }
            }
        }
        Ok(())
    })
}

// ---- GBDT ----------------------------------------------------------------

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use valuate::avm::{self, GbdtModel, TrainParams};
use valuate::explain::{
    default_priors, generate_explanation, ExplanationInputs, LlmBackend, LlmClient, LlmError, PromptOptions, Renderer,
};
use valuate::synth::{synth_generate, SynthConfig};

/// Mean squared error in the model's transformed space using the first
/// `n_trees` trees.
pub fn training_loss(model: &GbdtModel, dataset: &Dataset, n_trees: usize) -> f64 {
    let transform = model.target_transform();
    let total: f64 = dataset
        .records()
        .iter()
        .map(|r| {
            let row = model.encoder().encode(r);
            let y = transform.forward(r.unit_price.unwrap());
            (model.raw_score(&row, n_trees) - y).powi(2)
        })
        .sum();
    total / dataset.len() as f64
}

/// Loss at every 10-tree checkpoint never goes up.
pub fn gbdt_monotone_loss() -> Result<(), String> {
    let dataset = synth_generate(SynthConfig::new(17, 2_000, 0.8), PropertyType::House);
    let model = avm::train(&dataset, &TrainParams::default()).map_err(|e| e.to_string())?;
    let n = model.trees().len();
    let mut previous = training_loss(&model, &dataset, 0);
    for checkpoint in (10..=n).step_by(10) {
        let loss = training_loss(&model, &dataset, checkpoint);
        if loss > previous {
            return Err(format!("loss rose to {loss} at {checkpoint} trees (was {previous})"));
        }
        previous = loss;
    }
    Ok(())
}

/// 2,000 rows of y = 50 + 3a - 2b with no noise; returns training MAPE.
pub fn gbdt_noiseless_mape() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<Property> = (0..2_000)
        .map(|i| {
            let a: f64 = rng.random_range(0.0..10.0);
            let b: f64 = rng.random_range(0.0..10.0);
            let mut p = Property::new(format!("r{i}"), PropertyType::House)
                .with("f0", FeatureValue::Numeric(a))
                .with("f1", FeatureValue::Numeric(b));
            p.unit_price = Some(50.0 + 3.0 * a - 2.0 * b);
            p
        })
        .collect();
    let dataset = Dataset::new(mixed_schema(), PropertyType::House, records).map_err(|e| e.to_string())?;
    let model = avm::train(&dataset, &TrainParams::default()).map_err(|e| e.to_string())?;
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for r in dataset.records() {
        actual.push(r.unit_price.unwrap());
        predicted.push(model.predict(dataset.schema(), r).map_err(|e| e.to_string())?);
    }
    Ok(oracle::mape(&actual, &predicted))
}

/// Saves and reloads a model, then compares predictions bit for bit on a
/// 1,000-row probe with random masking.
pub fn gbdt_round_trip() -> Result<(), String> {
    let dataset = synth_generate(SynthConfig::new(23, 1_500, 0.8), PropertyType::Apartment);
    let params = TrainParams {
        num_trees: 80,
        row_subsample: 0.8,
        ..TrainParams::default()
    };
    let model = avm::train(&dataset, &params).map_err(|e| e.to_string())?;
    let back = GbdtModel::from_json(&model.to_json(), dataset.schema()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let names: Vec<String> = dataset.schema().features().iter().map(|d| d.name.clone()).collect();
    for i in 0..1_000 {
        let mut probe = dataset.records()[i % dataset.len()].clone();
        for name in &names {
            if rng.random_bool(0.3) {
                probe.features.remove(name);
            }
        }
        let a = model.predict(dataset.schema(), &probe).map_err(|e| e.to_string())?;
        let b = back.predict(dataset.schema(), &probe).map_err(|e| e.to_string())?;
        if a.to_bits() != b.to_bits() {
            return Err(format!("probe {i}: {a} != {b}"));
        }
    }
    Ok(())
}

// ---- MAPE ----------------------------------------------------------------

/// Identity, the hand-computed two-point case and scale invariance.
pub fn mape_checks() -> Result<(), String> {
    use valuate::eval::mape;
    let actual = [12.5, 40.0, 33.3, 7.0];
    let identity = mape(&actual, &actual).map_err(|e| e.to_string())?;
    if identity != 0.0 {
        return Err(format!("identity gave {identity}"));
    }
    // |100 - 110| / 100 = 0.1 and |200 - 180| / 200 = 0.1, so 10%.
    let two_point = mape(&[100.0, 200.0], &[110.0, 180.0]).map_err(|e| e.to_string())?;
    if two_point != 10.0 {
        return Err(format!("two-point case gave {two_point}"));
    }
    let predicted = [11.0, 43.5, 30.0, 9.25];
    let base = mape(&actual, &predicted).map_err(|e| e.to_string())?;
    for c in [1e-3, 0.5, 3.0, 1e4] {
        let a: Vec<f64> = actual.iter().map(|x| x * c).collect();
        let p: Vec<f64> = predicted.iter().map(|x| x * c).collect();
        let scaled = mape(&a, &p).map_err(|e| e.to_string())?;
        if (scaled - base).abs() > 1e-12 {
            return Err(format!("scale {c}: {scaled} vs {base}"));
        }
    }
    let direct = oracle::mape(&actual, &predicted);
    if (direct - base).abs() > 1e-12 {
        return Err(format!("oracle {direct} vs {base}"));
    }
    Ok(())
}

// ---- explanation ---------------------------------------------------------

/// An LLM that never answers within any reasonable timeout.
pub struct SleepingLlm(pub Duration);

impl LlmClient for SleepingLlm {
    fn complete(&self, _prompt: &str, _timeout: Duration) -> Result<String, LlmError> {
        std::thread::sleep(self.0);
        Ok("too late".into())
    }
}

/// With a hung LLM, the template is used and the call returns within the
/// timeout plus 100 ms. Returns the elapsed time.
pub fn explanation_fallback(timeout: Duration) -> Result<Duration, String> {
    let dataset = synth_generate(SynthConfig::new(3, 400, 0.8), PropertyType::House);
    let index = NeighborIndex::new(dataset.clone());
    let mut target = dataset.records()[0].clone();
    target.id = "probe".into();
    let search = index.find(&target, &PropertyConfiguration::unconstrained(6));
    let priors = default_priors();
    let inputs = ExplanationInputs {
        target: &target,
        neighbors: &search.neighbors,
        prediction: 42.0,
        schema: dataset.schema(),
        stats: dataset.stats(),
        priors: &priors,
        prompt: PromptOptions::default(),
    };
    let backend = LlmBackend::new(Arc::new(SleepingLlm(timeout * 20)), timeout);
    let start = Instant::now();
    let bundle = generate_explanation(&inputs, Some(&backend));
    let elapsed = start.elapsed();
    if bundle.renderer != Renderer::Template {
        return Err("expected the template renderer".into());
    }
    if bundle.text.is_empty() || bundle.fallback_reason.is_none() {
        return Err("fallback bundle lacks text or reason".into());
    }
    if elapsed > timeout + Duration::from_millis(100) {
        return Err(format!("took {elapsed:?} with a {timeout:?} timeout"));
    }
    Ok(elapsed)
}

// ---- offline end to end --------------------------------------------------

pub fn run_cli(bin: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin)
        .args(args)
        .env_remove("LLM_ENDPOINT")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// synth, train, then predict on a copy of a training record with a blank
/// configuration: rank 1 must be that record at distance 0, the imputation
/// report must account for everything, and the template text must exist.
pub fn offline_end_to_end(bin: &Path, dir: &Path) -> Result<(), String> {
    let data = dir.join("data");
    let data_s = data.to_str().unwrap();
    run_cli(bin, &["synth", "--out", data_s, "--size", "400", "--seed", "7", "--type", "house"])?;
    run_cli(bin, &["train", "--data", data_s, "--type", "house", "--num-trees", "40"])?;

    let data_dir = valuate::DataDir::new(&data);
    let schema = data_dir.load_schema().map_err(|e| e.to_string())?;
    let (dataset, _) = data_dir.load_dataset(PropertyType::House, &schema).map_err(|e| e.to_string())?;
    let record = &dataset.records()[123];
    let input = dir.join("request.json");
    std::fs::write(&input, record.to_canonical_json()).map_err(|e| e.to_string())?;

    let stdout = run_cli(bin, &["predict", "--data", data_s, "--input", input.to_str().unwrap()])?;
    let report: valuate::service::ValuationReport = serde_json::from_str(&stdout).map_err(|e| e.to_string())?;
    let first = report.neighbors.first().ok_or("no neighbors returned")?;
    if first.rank != 1 || first.id != record.id || first.distance != 0.0 {
        return Err(format!("rank 1 is {} at {} (rank {})", first.id, first.distance, first.rank));
    }
    let missing_after = report.target.missing_features(&schema);
    if !missing_after.is_empty() || !report.imputation.unresolved.is_empty() {
        return Err(format!("features left missing: {missing_after:?}"));
    }
    let before: BTreeSet<&str> = record.missing_features(&schema).into_iter().collect();
    let reported: BTreeSet<&str> = report.imputation.entries.iter().map(|e| e.feature.as_str()).collect();
    if before != reported {
        return Err(format!("report lists {reported:?}, input lacked {before:?}"));
    }
    let explanation = report.explanation.ok_or("no explanation")?;
    if explanation.renderer != Renderer::Template || explanation.text.trim().is_empty() {
        return Err("expected a non-empty template explanation".into());
    }
    if !(report.predicted_unit_price.is_finite() && report.predicted_unit_price > 0.0) {
        return Err(format!("bad prediction {}", report.predicted_unit_price));
    }
    Ok(())
}
