//! MAPE, the feature-masking protocol and the imputation ablation.
//!
//! The ablation simulates a user who supplies only a few features. For each
//! property type and seed the corpus is shuffled into an 80/20 train/test
//! split, a model is trained on the train split, and every test instance is
//! scored four ways:
//!
//! | arm      | input to the model                                   |
//! |----------|------------------------------------------------------|
//! | ideal    | the unmasked instance                                |
//! | none     | the masked instance as is                            |
//! | average  | masked, then filled from train-split statistics      |
//! | neighbor | masked, then filled from its train-split neighbors   |
//!
//! All arms see the same masked instances.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avm::{self, AvmError, TrainParams};
use crate::domain::{FeatureValue, Property, PropertyConfiguration, PropertyType, HOUSE_AGE, LATITUDE, LONGITUDE};
use crate::imputation::{impute_average, impute_neighbor};
use crate::ingest::{Dataset, IngestError};
use crate::neighbors::NeighborIndex;

pub const DEFAULT_MASK_RATE: f64 = 0.5;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Features a simulated user always supplies.
pub fn default_keep_always() -> BTreeSet<String> {
    [LATITUDE, LONGITUDE, HOUSE_AGE]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("mape needs equal, non-empty inputs (got {actual} actual, {predicted} predicted)")]
    Length { actual: usize, predicted: usize },
    #[error("actual value at index {index} is {value}; MAPE needs strictly positive actuals")]
    NonPositive { index: usize, value: f64 },
    #[error("no seeds given")]
    NoSeeds,
    #[error("{0} split leaves no test instances")]
    EmptySplit(PropertyType),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Avm(#[from] AvmError),
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(EvalError::Length {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if let Some((index, &value)) = actual.iter().enumerate().find(|(_, a)| a.partial_cmp(&&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(EvalError::NonPositive { index, value });
    }
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| ((a - p) / a).abs())
        .sum();
    Ok(100.0 * total / actual.len() as f64)
}

/// Hides each feature outside `keep_always` independently with probability
/// `mask_rate`. Features are visited in name order, so a given seed always
/// produces the same mask.
pub fn mask_features(property: &Property, mask_rate: f64, keep_always: &BTreeSet<String>, seed: u64) -> Property {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = property.clone();
    for (name, value) in out.features.iter_mut() {
        let draw: f64 = rng.random();
        if !keep_always.contains(name) && draw < mask_rate {
            *value = FeatureValue::Missing;
        }
    }
    out
}

fn instance_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded shuffle into (train, test); the test share is rounded and kept
/// at least one record.
pub fn split_train_test(dataset: &Dataset, seed: u64, test_fraction: f64) -> Result<(Dataset, Vec<Property>), EvalError> {
    let mut records = dataset.records().to_vec();
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((records.len() as f64 * test_fraction).round() as usize).max(1);
    if n_test >= records.len() {
        return Err(EvalError::EmptySplit(dataset.property_type()));
    }
    let train = records.split_off(n_test);
    let train = Dataset::new(dataset.schema().clone(), dataset.property_type(), train)?;
    Ok((train, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationArm {
    None,
    Average,
    Neighbor,
    Ideal,
}

impl AblationArm {
    pub const ALL: [AblationArm; 4] = [
        AblationArm::None,
        AblationArm::Average,
        AblationArm::Neighbor,
        AblationArm::Ideal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationArm::None => "none",
            AblationArm::Average => "average",
            AblationArm::Neighbor => "neighbor",
            AblationArm::Ideal => "ideal",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AblationArm::None => "No Imputation",
            AblationArm::Average => "Average Imputation",
            AblationArm::Neighbor => "Neighbor Imputation",
            AblationArm::Ideal => "Ideal",
        }
    }
}

impl fmt::Display for AblationArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub train_params: TrainParams,
    /// Neighbor filter; the default is the blank configuration with k = 6.
    pub configuration: PropertyConfiguration,
    pub mask_rate: f64,
    pub keep_always: BTreeSet<String>,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train_params: TrainParams::default(),
            configuration: PropertyConfiguration::default(),
            mask_rate: DEFAULT_MASK_RATE,
            keep_always: default_keep_always(),
            seeds: vec![1, 2, 3, 4, 5],
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

/// One run of one property type under one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub property_type: PropertyType,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// MAPE per arm, in [`AblationArm::ALL`] order.
    pub mape: [f64; 4],
    /// Test instances whose neighbor search matched nothing.
    pub neighbor_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub property_type: PropertyType,
    pub arm: AblationArm,
    pub mape_mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub mape_std: f64,
    /// Test instances per seed.
    pub n_test: usize,
    /// Summed over seeds; only the neighbor arm has fallbacks.
    pub fallback_count: usize,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub mask_rate: f64,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub runs: Vec<SeedRun>,
    pub cells: Vec<AblationCell>,
}

fn run_one(dataset: &Dataset, config: &AblationConfig, seed: u64) -> Result<SeedRun, EvalError> {
    let (train, test) = split_train_test(dataset, seed, config.test_fraction)?;
    let params = TrainParams {
        seed,
        ..config.train_params.clone()
    };
    let model = avm::train(&train, &params)?;
    let schema = train.schema().clone();
    let stats = train.stats().clone();
    let n_train = train.len();
    let index = NeighborIndex::new(train);

    let mut actual = Vec::with_capacity(test.len());
    let mut predicted: [Vec<f64>; 4] = Default::default();
    let mut neighbor_fallbacks = 0;
    for (i, instance) in test.iter().enumerate() {
        actual.push(instance.unit_price.expect("dataset records carry a price"));
        let masked = mask_features(instance, config.mask_rate, &config.keep_always, instance_seed(seed, i));

        let search = index.find(&masked, &config.configuration);
        if search.neighbors.is_empty() {
            neighbor_fallbacks += 1;
        }
        let (by_neighbor, _) = impute_neighbor(&masked, &search.properties(), &schema, &stats);
        let (by_average, _) = impute_average(&masked, &stats, &schema);

        let inputs = [&masked, &by_average, &by_neighbor, instance];
        for (slot, input) in predicted.iter_mut().zip(inputs) {
            slot.push(model.predict(&schema, input)?);
        }
    }
    let mut mape_by_arm = [0.0; 4];
    for (m, p) in mape_by_arm.iter_mut().zip(&predicted) {
        *m = mape(&actual, p)?;
    }
    Ok(SeedRun {
        property_type: dataset.property_type(),
        seed,
        n_train,
        n_test: test.len(),
        mape: mape_by_arm,
        neighbor_fallbacks,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (dataset, seed) pair, in parallel, and aggregates per cell.
/// Results do not depend on scheduling: each run is a pure function of its
/// dataset and seed, and aggregation walks them in a fixed order.
pub fn run_ablation(datasets: &[Dataset], config: &AblationConfig) -> Result<AblationResult, EvalError> {
    if config.seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let jobs: Vec<(&Dataset, u64)> = datasets
        .iter()
        .flat_map(|d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(d, s)| run_one(d, config, *s))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    for d in datasets {
        let ty = d.property_type();
        let mine: Vec<&SeedRun> = runs.iter().filter(|r| r.property_type == ty).collect();
        for (a, arm) in AblationArm::ALL.into_iter().enumerate() {
            let per_seed: Vec<f64> = mine.iter().map(|r| r.mape[a]).collect();
            let (mape_mean, mape_std) = mean_std(&per_seed);
            cells.push(AblationCell {
                property_type: ty,
                arm,
                mape_mean,
                mape_std,
                n_test: mine[0].n_test,
                fallback_count: if arm == AblationArm::Neighbor {
                    mine.iter().map(|r| r.neighbor_fallbacks).sum()
                } else {
                    0
                },
                per_seed,
            });
        }
    }
    Ok(AblationResult {
        mask_rate: config.mask_rate,
        seeds: config.seeds.clone(),
        k: config.configuration.k,
        runs,
        cells,
    })
}

impl AblationResult {
    pub fn cell(&self, ty: PropertyType, arm: AblationArm) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.property_type == ty && c.arm == arm)
    }

    pub fn property_types(&self) -> Vec<PropertyType> {
        let mut types: Vec<PropertyType> = self.cells.iter().map(|c| c.property_type).collect();
        types.dedup();
        types
    }

    /// `property_type,strategy,mape_mean,mape_std,n_test,fallback_count`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("property_type,strategy,mape_mean,mape_std,n_test,fallback_count\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                c.property_type, c.arm, c.mape_mean, c.mape_std, c.n_test, c.fallback_count
            );
        }
        out
    }

    /// Aligned table: one row per strategy, one column per property type,
    /// each cell `mean ± std` MAPE.
    pub fn to_table(&self) -> String {
        let types = self.property_types();
        let width = 18;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "MAPE (%) by imputation strategy; mask rate {}, k = {}, seeds {:?}",
            self.mask_rate, self.k, self.seeds
        );
        let _ = write!(out, "{:<22}", "Strategy");
        for t in &types {
            let _ = write!(out, "{:>width$}", t.label());
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(22 + width * types.len()));
        for arm in AblationArm::ALL {
            let _ = write!(out, "{:<22}", arm.title());
            for t in &types {
                let text = self
                    .cell(*t, arm)
                    .map(|c| format!("{:.2} ± {:.2}", c.mape_mean, c.mape_std))
                    .unwrap_or_default();
                let _ = write!(out, "{text:>width$}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<22}", "Neighbor − Ideal");
        for t in &types {
            let gap = match (self.cell(*t, AblationArm::Neighbor), self.cell(*t, AblationArm::Ideal)) {
                (Some(n), Some(i)) => format!("{:+.2}", n.mape_mean - i.mape_mean),
                _ => String::new(),
            };
            let _ = write!(out, "{gap:>width$}");
        }
        out.push('\n');
        out
    }
}
