//! Leaf-wise histogram gradient boosting on squared error.
//!
//! Each round fits one tree to the current residuals. Leaves are split
//! best-first by gain until `max_leaves` is reached or no split improves the
//! loss. Every split also learns where Missing values go: both sides are
//! scored and the better one kept. A node that saw no Missing values in
//! training sends them where a zero would go (numeric) or with the unseen
//! labels (categorical).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{BinMap, EncodedFeature, FeatureEncoder, MISSING_BIN};
use super::tree::{SplitCondition, Tree, TreeNode};
use super::{AvmError, GbdtModel, TargetTransform, TrainParams};
use crate::ingest::Dataset;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default)]
struct Bucket {
    grad: f64,
    count: u32,
}

impl Bucket {
    fn add(&mut self, g: f64) {
        self.grad += g;
        self.count += 1;
    }

    fn minus(self, other: Bucket) -> Bucket {
        Bucket {
            grad: self.grad - other.grad,
            count: self.count - other.count,
        }
    }

    fn plus(self, other: Bucket) -> Bucket {
        Bucket {
            grad: self.grad + other.grad,
            count: self.count + other.count,
        }
    }

    /// Loss reduction contributed by fitting this bucket's mean.
    fn score(self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.grad * self.grad / self.count as f64
        }
    }
}

/// Per-feature gradient histograms for one leaf.
#[derive(Debug, Clone)]
struct Histogram {
    bins: Vec<Vec<Bucket>>,
    missing: Vec<Bucket>,
    total: Bucket,
}

impl Histogram {
    fn build(data: &BinnedData, rows: &[u32], grad: &[f64]) -> Self {
        let mut bins: Vec<Vec<Bucket>> = data
            .maps
            .iter()
            .map(|m| vec![Bucket::default(); m.bins()])
            .collect();
        let mut missing = vec![Bucket::default(); data.maps.len()];
        let mut total = Bucket::default();
        for &r in rows {
            total.add(grad[r as usize]);
        }
        for (f, column) in data.columns.iter().enumerate() {
            let hist = &mut bins[f];
            let miss = &mut missing[f];
            for &r in rows {
                let g = grad[r as usize];
                match column[r as usize] {
                    MISSING_BIN => miss.add(g),
                    b => hist[b as usize].add(g),
                }
            }
        }
        Self {
            bins,
            missing,
            total,
        }
    }

    fn subtract(&self, child: &Histogram) -> Histogram {
        Histogram {
            bins: self
                .bins
                .iter()
                .zip(&child.bins)
                .map(|(p, c)| p.iter().zip(c).map(|(a, b)| a.minus(*b)).collect())
                .collect(),
            missing: self
                .missing
                .iter()
                .zip(&child.missing)
                .map(|(a, b)| a.minus(*b))
                .collect(),
            total: self.total.minus(child.total),
        }
    }
}

#[derive(Debug, Clone)]
enum Partition {
    /// Bins `<= bin` go left.
    UpTo(usize),
    /// Listed category codes go left.
    Codes(Vec<u32>),
}

#[derive(Debug, Clone)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    partition: Partition,
    default_left: bool,
}

struct BinnedData {
    maps: Vec<BinMap>,
    /// Column-major bin indices.
    columns: Vec<Vec<u16>>,
}

impl BinnedData {
    fn new(encoder: &FeatureEncoder, rows: &[Vec<Option<f64>>], max_bins: usize) -> Self {
        let mut maps = Vec::with_capacity(encoder.len());
        let mut columns = Vec::with_capacity(encoder.len());
        for (f, feature) in encoder.features().iter().enumerate() {
            let map = match feature {
                EncodedFeature::Categorical { .. } => BinMap::Categorical {
                    bins: feature.other_code() as usize + 1,
                },
                _ => {
                    let mut values: Vec<f64> = rows.iter().filter_map(|r| r[f]).collect();
                    BinMap::numeric(&mut values, max_bins)
                }
            };
            columns.push(rows.iter().map(|r| map.bin(r[f])).collect());
            maps.push(map);
        }
        Self { maps, columns }
    }

    fn goes_left(&self, feature: usize, partition: &Partition, default_left: bool, row: u32) -> bool {
        match self.columns[feature][row as usize] {
            MISSING_BIN => default_left,
            b => match partition {
                Partition::UpTo(t) => (b as usize) <= *t,
                Partition::Codes(codes) => codes.contains(&(b as u32)),
            },
        }
    }
}

struct SplitSearch<'a> {
    data: &'a BinnedData,
    encoder: &'a FeatureEncoder,
    min_leaf: u32,
}

impl SplitSearch<'_> {
    fn best(&self, hist: &Histogram) -> Option<SplitCandidate> {
        let parent = hist.total.score();
        let mut best: Option<SplitCandidate> = None;
        let mut consider = |cand: SplitCandidate| {
            if cand.gain > MIN_GAIN && best.as_ref().is_none_or(|b| cand.gain > b.gain) {
                best = Some(cand);
            }
        };
        for (f, feature) in self.encoder.features().iter().enumerate() {
            let missing = hist.missing[f];
            let observed = hist.total.minus(missing);
            match feature {
                EncodedFeature::Categorical { .. } => {
                    let mut cats: Vec<(u32, Bucket)> = hist.bins[f]
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| b.count > 0)
                        .map(|(c, b)| (c as u32, *b))
                        .collect();
                    if cats.len() < 2 {
                        continue;
                    }
                    cats.sort_by(|a, b| {
                        let ma = a.1.grad / a.1.count as f64;
                        let mb = b.1.grad / b.1.count as f64;
                        ma.total_cmp(&mb).then(a.0.cmp(&b.0))
                    });
                    let mut left = Bucket::default();
                    for k in 0..cats.len() - 1 {
                        left = left.plus(cats[k].1);
                        let right = observed.minus(left);
                        let codes = || {
                            let mut c: Vec<u32> = cats[..=k].iter().map(|c| c.0).collect();
                            c.sort_unstable();
                            c
                        };
                        for default_left in self.directions(missing, false) {
                            if let Some(gain) = self.gain(parent, left, right, missing, default_left) {
                                consider(SplitCandidate {
                                    gain,
                                    feature: f,
                                    partition: Partition::Codes(codes()),
                                    default_left,
                                });
                            }
                        }
                    }
                }
                _ => {
                    let map = &self.data.maps[f];
                    let mut left = Bucket::default();
                    for b in 0..map.bins().saturating_sub(1) {
                        left = left.plus(hist.bins[f][b]);
                        let right = observed.minus(left);
                        if left.count == 0 || right.count == 0 {
                            continue;
                        }
                        let zero_left = 0.0 <= map.threshold(b);
                        for default_left in self.directions(missing, zero_left) {
                            if let Some(gain) = self.gain(parent, left, right, missing, default_left) {
                                consider(SplitCandidate {
                                    gain,
                                    feature: f,
                                    partition: Partition::UpTo(b),
                                    default_left,
                                });
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Directions to score for Missing: both when the node has Missing
    /// rows, otherwise only the fixed convention.
    fn directions(&self, missing: Bucket, fallback_left: bool) -> Vec<bool> {
        if missing.count > 0 {
            vec![true, false]
        } else {
            vec![fallback_left]
        }
    }

    fn gain(&self, parent: f64, left: Bucket, right: Bucket, missing: Bucket, default_left: bool) -> Option<f64> {
        let (l, r) = if default_left {
            (left.plus(missing), right)
        } else {
            (left, right.plus(missing))
        };
        if l.count < self.min_leaf || r.count < self.min_leaf {
            return None;
        }
        Some(l.score() + r.score() - parent)
    }
}

struct OpenLeaf {
    node: usize,
    rows: Vec<u32>,
    hist: Histogram,
    split: Option<SplitCandidate>,
}

struct Candidate {
    gain: f64,
    order: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest gain first; earlier leaves win ties.
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.order.cmp(&self.order))
    }
}

fn grow_tree(
    data: &BinnedData,
    encoder: &FeatureEncoder,
    rows: Vec<u32>,
    grad: &[f64],
    params: &TrainParams,
) -> Tree {
    let search = SplitSearch {
        data,
        encoder,
        min_leaf: params.min_samples_leaf as u32,
    };
    let hist = Histogram::build(data, &rows, grad);
    let split = search.best(&hist);
    let mut nodes = vec![TreeNode::Leaf { value: 0.0, count: 0 }];
    let mut leaves = vec![Some(OpenLeaf {
        node: 0,
        rows,
        hist,
        split,
    })];
    let mut heap = BinaryHeap::new();
    if let Some(s) = &leaves[0].as_ref().unwrap().split {
        heap.push(Candidate { gain: s.gain, order: 0 });
    }
    let mut leaf_total = 1;

    while leaf_total < params.max_leaves {
        let Some(Candidate { order, .. }) = heap.pop() else {
            break;
        };
        let leaf = leaves[order].take().expect("queued leaf is open");
        let split = leaf.split.expect("queued leaf has a split");
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| data.goes_left(split.feature, &split.partition, split.default_left, r));

        let (small, small_is_left) = if left_rows.len() <= right_rows.len() {
            (&left_rows, true)
        } else {
            (&right_rows, false)
        };
        let small_hist = Histogram::build(data, small, grad);
        let large_hist = leaf.hist.subtract(&small_hist);
        let (left_hist, right_hist) = if small_is_left {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        let condition = match &split.partition {
            Partition::UpTo(b) => SplitCondition::Threshold(data.maps[split.feature].threshold(*b)),
            Partition::Codes(codes) => SplitCondition::Categories(codes.clone()),
        };
        let left_node = nodes.len();
        let right_node = left_node + 1;
        nodes.push(TreeNode::Leaf { value: 0.0, count: 0 });
        nodes.push(TreeNode::Leaf { value: 0.0, count: 0 });
        nodes[leaf.node] = TreeNode::Split {
            feature: split.feature,
            condition,
            default_left: split.default_left,
            left: left_node,
            right: right_node,
        };
        leaf_total += 1;

        for (node, rows, hist) in [
            (left_node, left_rows, left_hist),
            (right_node, right_rows, right_hist),
        ] {
            let split = search.best(&hist);
            let order = leaves.len();
            if let Some(s) = &split {
                heap.push(Candidate { gain: s.gain, order });
            }
            leaves.push(Some(OpenLeaf {
                node,
                rows,
                hist,
                split,
            }));
        }
    }

    for leaf in leaves.into_iter().flatten() {
        let total = leaf.hist.total;
        // Leaf value is the mean residual: gradients are prediction - target.
        let value = if total.count == 0 {
            0.0
        } else {
            -total.grad / total.count as f64
        };
        nodes[leaf.node] = TreeNode::Leaf {
            value,
            count: total.count as usize,
        };
    }
    Tree { nodes }
}

pub(super) fn train(dataset: &Dataset, params: &TrainParams) -> Result<GbdtModel, AvmError> {
    params.validate()?;
    let required = 2 * params.min_samples_leaf;
    if dataset.len() < required {
        return Err(AvmError::TooSmall {
            records: dataset.len(),
            required,
        });
    }
    let schema = dataset.schema();
    let encoder = FeatureEncoder::new(schema, dataset.stats());
    let raw_targets = dataset.targets();

    let first = raw_targets[0];
    if raw_targets.iter().all(|&t| t == first) {
        return Ok(GbdtModel {
            property_type: dataset.property_type(),
            schema_hash: schema.hash(),
            base_score: first,
            learning_rate: params.learning_rate,
            target_transform: TargetTransform::Identity,
            encoder,
            trees: Vec::new(),
            params: params.clone(),
        });
    }

    let transform = params.target_transform;
    let targets: Vec<f64> = raw_targets.iter().map(|&t| transform.forward(t)).collect();
    let mut sorted = targets.clone();
    sorted.sort_by(f64::total_cmp);
    let base_score = sorted.iter().sum::<f64>() / sorted.len() as f64;

    let rows: Vec<Vec<Option<f64>>> = dataset.records().iter().map(|r| encoder.encode(r)).collect();
    let data = BinnedData::new(&encoder, &rows, params.feature_histogram_bins);

    let n = rows.len();
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sample_size = ((params.row_subsample * n as f64).round() as usize).clamp(required.min(n), n);
    let mut trees = Vec::with_capacity(params.num_trees);
    for _ in 0..params.num_trees {
        for i in 0..n {
            grad[i] = scores[i] - targets[i];
        }
        let active: Vec<u32> = if sample_size == n {
            (0..n as u32).collect()
        } else {
            let mut idx: Vec<u32> = sample(&mut rng, n, sample_size)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            idx.sort_unstable();
            idx
        };
        let tree = grow_tree(&data, &encoder, active, &grad, params);
        for (score, row) in scores.iter_mut().zip(&rows) {
            *score += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        property_type: dataset.property_type(),
        schema_hash: schema.hash(),
        base_score,
        learning_rate: params.learning_rate,
        target_transform: transform,
        encoder,
        trees,
        params: params.clone(),
    })
}
