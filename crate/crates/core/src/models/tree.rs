//! Histogram-based regression trees grown leaf-wise with Newton gains.
//!
//! Numeric features are pre-binned into quantile bins (bin 0 is reserved
//! for missing markers and routes left); categorical features use one bin
//! per level and are split by sorting the levels present in a leaf by their
//! gradient/hessian ratio and scanning prefixes of that order.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset, FeatureKind, FeatureMeta, FeatureValue};
use crate::error::{Error, Result};
use crate::models::loss::Objective;

/// Sentinel threshold for a split that sends only missing markers left.
pub const MISSING_ONLY_THRESHOLD: f64 = f64::MIN;

// ---------------------------------------------------------------------------
// Serializable tree structures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitCondition {
    /// Goes left when `value <= threshold`, or when the value is a missing
    /// marker (`NaN`). `MISSING_ONLY_THRESHOLD` admits only markers.
    Numeric { threshold: f64 },
    /// Goes left when the level code is in `left_levels` (sorted).
    Categorical { left_levels: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        condition: SplitCondition,
        /// Routing for level codes absent from the training split: toward
        /// the child that saw more training rows.
        default_left: bool,
        left: usize,
        right: usize,
    },
}

/// One regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

/// A boosted ensemble over a fixed feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub features: Vec<FeatureMeta>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    /// Raw boosted score `base + rate * sum(leaf values)` for one row.
    pub fn score_row(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        if row.len() != self.features.len() {
            return Err(Error::data(format!(
                "feature row has {} values but the model expects {}",
                row.len(),
                self.features.len()
            )));
        }
        let mut total = 0.0;
        for tree in &self.trees {
            total += self.route(tree, row)?;
        }
        Ok(self.base_score + self.learning_rate * total)
    }

    pub(crate) fn route(&self, tree: &Tree, row: &[FeatureValue<'_>]) -> Result<f64> {
        let mut idx = 0usize;
        loop {
            match &tree.nodes[idx] {
                Node::Leaf { value } => return Ok(*value),
                Node::Split {
                    feature,
                    condition,
                    default_left,
                    left,
                    right,
                } => {
                    let go_left = match (condition, &row[*feature]) {
                        (SplitCondition::Numeric { threshold }, FeatureValue::Numeric(v)) => {
                            v.is_nan() || *v <= *threshold
                        }
                        (SplitCondition::Categorical { left_levels }, FeatureValue::Categorical(s)) => {
                            let FeatureKind::Categorical { levels } = &self.features[*feature].kind else {
                                return Err(Error::data(format!(
                                    "feature '{}' is not categorical in the model schema",
                                    self.features[*feature].name
                                )));
                            };
                            match levels.iter().position(|l| l == s) {
                                Some(code) => left_levels.binary_search(&(code as u32)).is_ok(),
                                // Unseen level: follow the heavier child.
                                None => *default_left,
                            }
                        }
                        (_, value) => {
                            return Err(Error::data(format!(
                                "feature '{}' has value '{}' of the wrong type",
                                self.features[*feature].name, value
                            )))
                        }
                    };
                    idx = if go_left { *left } else { *right };
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

enum FeatureBins {
    /// Quantile cut points; bin 0 = missing, bin b covers
    /// `(edges[b-2], edges[b-1]]` with open ends.
    Numeric { edges: Vec<f64> },
    Categorical { n_levels: u16 },
}

pub(crate) struct BinnedData {
    bins: Vec<FeatureBins>,
    /// `codes[feature][row]`.
    codes: Vec<Vec<u16>>,
    n_rows: usize,
}

impl BinnedData {
    fn n_bins(&self, feature: usize) -> u16 {
        match &self.bins[feature] {
            FeatureBins::Numeric { edges } => edges.len() as u16 + 2,
            FeatureBins::Categorical { n_levels } => *n_levels,
        }
    }
}

pub(crate) fn bin_dataset(ds: &Dataset, max_bins: usize) -> Result<BinnedData> {
    if max_bins < 2 {
        return Err(Error::parameter(format!("bin count must be at least 2, got {max_bins}")));
    }
    let n = ds.n_rows();
    let mut bins = Vec::with_capacity(ds.n_features());
    let mut codes = Vec::with_capacity(ds.n_features());
    for col in ds.columns() {
        match &col.data {
            ColumnData::Numeric(values) => {
                let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut edges = Vec::new();
                if !sorted.is_empty() {
                    for k in 1..max_bins {
                        let pos = k * sorted.len() / max_bins;
                        if pos == 0 || pos >= sorted.len() {
                            continue;
                        }
                        let edge = sorted[pos - 1];
                        if edges.last().map(|&e| edge > e).unwrap_or(true) && edge < sorted[sorted.len() - 1] {
                            edges.push(edge);
                        }
                    }
                }
                let feature_codes: Vec<u16> = values
                    .iter()
                    .map(|&v| {
                        if v.is_nan() {
                            0
                        } else {
                            1 + edges.partition_point(|&e| e < v) as u16
                        }
                    })
                    .collect();
                bins.push(FeatureBins::Numeric { edges });
                codes.push(feature_codes);
            }
            ColumnData::Categorical { codes: level_codes, levels } => {
                bins.push(FeatureBins::Categorical {
                    n_levels: levels.len() as u16,
                });
                codes.push(level_codes.iter().map(|&c| c as u16).collect());
            }
        }
    }
    Ok(BinnedData { bins, codes, n_rows: n })
}

// ---------------------------------------------------------------------------
// Leaf-wise growth
// ---------------------------------------------------------------------------

/// Growth limits and regularization for one tree.
pub(crate) struct GrowthParams {
    pub max_leaves: usize,
    pub min_leaf_count: usize,
    pub leaf_l2: f64,
}

/// Per-feature importance accumulators, updated at every split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceAccumulators {
    pub gain: Vec<f64>,
    pub cover: Vec<f64>,
    pub frequency: Vec<u64>,
}

impl ImportanceAccumulators {
    pub fn new(n_features: usize) -> Self {
        Self {
            gain: vec![0.0; n_features],
            cover: vec![0.0; n_features],
            frequency: vec![0; n_features],
        }
    }

    pub fn total_splits(&self) -> u64 {
        self.frequency.iter().sum()
    }
}

#[derive(Clone)]
struct CandidateSplit {
    feature: usize,
    gain: f64,
    kind: CandidateKind,
}

#[derive(Clone)]
enum CandidateKind {
    /// Bins `<= split_bin` go left.
    Numeric { split_bin: u16 },
    /// Level codes (bins) going left.
    Categorical { left_bins: Vec<u16> },
}

struct LeafState {
    node_id: usize,
    rows: Vec<u32>,
    grad_sum: f64,
    hess_sum: f64,
    best: Option<CandidateSplit>,
}

fn leaf_value(grad_sum: f64, hess_sum: f64, leaf_l2: f64) -> f64 {
    -grad_sum / (hess_sum + leaf_l2)
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, leaf_l2: f64) -> f64 {
    gl * gl / (hl + leaf_l2) + gr * gr / (hr + leaf_l2)
        - (gl + gr) * (gl + gr) / (hl + hr + leaf_l2)
}

/// Histogram of one leaf: per feature, per bin (grad sum, hess sum, count).
struct LeafHistogram {
    per_feature: Vec<Vec<(f64, f64, u32)>>,
}

fn build_histogram(data: &BinnedData, rows: &[u32], grad: &[f64], hess: &[f64]) -> LeafHistogram {
    let per_feature = (0..data.codes.len())
        .map(|f| {
            let mut hist = vec![(0.0, 0.0, 0u32); data.n_bins(f) as usize];
            let codes = &data.codes[f];
            for &r in rows {
                let b = codes[r as usize] as usize;
                let cell = &mut hist[b];
                cell.0 += grad[r as usize];
                cell.1 += hess[r as usize];
                cell.2 += 1;
            }
            hist
        })
        .collect();
    LeafHistogram { per_feature }
}

fn best_split_for_leaf(data: &BinnedData, hist: &LeafHistogram, params: &GrowthParams) -> Option<CandidateSplit> {
    let mut best: Option<CandidateSplit> = None;
    let mut consider = |cand: CandidateSplit| {
        if cand.gain > best.as_ref().map(|b| b.gain).unwrap_or(1e-12) {
            best = Some(cand);
        }
    };

    for (f, bins) in hist.per_feature.iter().enumerate() {
        let (g_total, h_total, c_total) = bins.iter().fold((0.0, 0.0, 0u32), |acc, &(g, h, c)| {
            (acc.0 + g, acc.1 + h, acc.2 + c)
        });
        if c_total < 2 * params.min_leaf_count as u32 {
            continue;
        }
        match &data.bins[f] {
            FeatureBins::Numeric { .. } => {
                // Prefix scan over the ordered bins (missing bin 0 first,
                // so markers always route left).
                let mut gl = 0.0;
                let mut hl = 0.0;
                let mut cl = 0u32;
                for (b, &(g, h, c)) in bins.iter().enumerate().take(bins.len() - 1) {
                    gl += g;
                    hl += h;
                    cl += c;
                    if cl < params.min_leaf_count as u32 {
                        continue;
                    }
                    let cr = c_total - cl;
                    if cr < params.min_leaf_count as u32 {
                        break;
                    }
                    let gain = split_gain(gl, hl, g_total - gl, h_total - hl, params.leaf_l2);
                    consider(CandidateSplit {
                        feature: f,
                        gain,
                        kind: CandidateKind::Numeric { split_bin: b as u16 },
                    });
                }
            }
            FeatureBins::Categorical { .. } => {
                // Sort levels present in this leaf by grad/hess ratio, then
                // scan prefixes of that order (one-vs-rest partitioning).
                let mut present: Vec<(u16, f64, f64, u32)> = bins
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, _, c))| c > 0)
                    .map(|(b, &(g, h, c))| (b as u16, g, h, c))
                    .collect();
                if present.len() < 2 {
                    continue;
                }
                present.sort_by(|a, b| {
                    let ra = a.1 / a.2;
                    let rb = b.1 / b.2;
                    ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal)
                });
                let mut gl = 0.0;
                let mut hl = 0.0;
                let mut cl = 0u32;
                let mut prefix: Vec<u16> = Vec::new();
                for &(b, g, h, c) in present.iter().take(present.len() - 1) {
                    gl += g;
                    hl += h;
                    cl += c;
                    prefix.push(b);
                    if cl < params.min_leaf_count as u32 {
                        continue;
                    }
                    let cr = c_total - cl;
                    if cr < params.min_leaf_count as u32 {
                        break;
                    }
                    let gain = split_gain(gl, hl, g_total - gl, h_total - hl, params.leaf_l2);
                    consider(CandidateSplit {
                        feature: f,
                        gain,
                        kind: CandidateKind::Categorical {
                            left_bins: prefix.clone(),
                        },
                    });
                }
            }
        }
    }
    best
}

fn row_goes_left(data: &BinnedData, kind: &CandidateKind, feature: usize, row: u32) -> bool {
    let bin = data.codes[feature][row as usize];
    match kind {
        CandidateKind::Numeric { split_bin } => bin <= *split_bin,
        CandidateKind::Categorical { left_bins } => left_bins.contains(&bin),
    }
}

/// Grow one tree against the current gradients. Returns the tree (without
/// the learning rate applied) and the per-row leaf assignment, or `None`
/// when no split clears the gain threshold.
pub(crate) fn grow_tree(
    data: &BinnedData,
    grad: &[f64],
    hess: &[f64],
    params: &GrowthParams,
    importance: &mut ImportanceAccumulators,
) -> Option<(Tree, Vec<f64>)> {
    let all_rows: Vec<u32> = (0..data.n_rows as u32).collect();
    let g_sum: f64 = grad.iter().sum();
    let h_sum: f64 = hess.iter().sum();

    let mut nodes: Vec<Node> = vec![Node::Leaf {
        value: leaf_value(g_sum, h_sum, params.leaf_l2),
    }];
    let root_hist = build_histogram(data, &all_rows, grad, hess);
    let root_best = best_split_for_leaf(data, &root_hist, params);
    root_best.as_ref()?;

    let mut leaves: Vec<LeafState> = vec![LeafState {
        node_id: 0,
        rows: all_rows,
        grad_sum: g_sum,
        hess_sum: h_sum,
        best: root_best,
    }];

    let mut n_leaves = 1usize;
    let mut any_split = false;

    while n_leaves < params.max_leaves {
        // Best-gain-first expansion.
        let Some(pick) = leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.best.is_some())
            .max_by(|a, b| {
                let ga = a.1.best.as_ref().unwrap().gain;
                let gb = b.1.best.as_ref().unwrap().gain;
                ga.partial_cmp(&gb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
        else {
            break;
        };

        let leaf = leaves.swap_remove(pick);
        let split = leaf.best.expect("filtered on is_some");

        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| row_goes_left(data, &split.kind, split.feature, r));

        let stats = |rows: &[u32]| -> (f64, f64) {
            rows.iter().fold((0.0, 0.0), |acc, &r| {
                (acc.0 + grad[r as usize], acc.1 + hess[r as usize])
            })
        };
        let (gl, hl) = stats(&left_rows);
        let (gr, hr) = stats(&right_rows);

        let left_id = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(gl, hl, params.leaf_l2),
        });
        let right_id = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(gr, hr, params.leaf_l2),
        });

        let condition = match &split.kind {
            CandidateKind::Numeric { split_bin } => {
                let FeatureBins::Numeric { edges } = &data.bins[split.feature] else {
                    unreachable!("numeric split on categorical feature")
                };
                let threshold = if *split_bin == 0 {
                    MISSING_ONLY_THRESHOLD
                } else {
                    edges[*split_bin as usize - 1]
                };
                SplitCondition::Numeric { threshold }
            }
            CandidateKind::Categorical { left_bins } => {
                let mut left_levels: Vec<u32> = left_bins.iter().map(|&b| b as u32).collect();
                left_levels.sort_unstable();
                SplitCondition::Categorical { left_levels }
            }
        };
        nodes[leaf.node_id] = Node::Split {
            feature: split.feature,
            condition,
            default_left: left_rows.len() >= right_rows.len(),
            left: left_id,
            right: right_id,
        };

        importance.gain[split.feature] += split.gain;
        importance.cover[split.feature] += leaf.rows.len() as f64;
        importance.frequency[split.feature] += 1;
        any_split = true;
        n_leaves += 1;

        for (node_id, rows, g, h) in [(left_id, left_rows, gl, hl), (right_id, right_rows, gr, hr)] {
            let best = if n_leaves < params.max_leaves && rows.len() >= 2 * params.min_leaf_count {
                let hist = build_histogram(data, &rows, grad, hess);
                best_split_for_leaf(data, &hist, params)
            } else {
                None
            };
            leaves.push(LeafState {
                node_id,
                rows,
                grad_sum: g,
                hess_sum: h,
                best,
            });
        }
    }

    if !any_split {
        return None;
    }

    // Per-row contribution of this tree.
    let mut contributions = vec![0.0; data.n_rows];
    for leaf in &leaves {
        let value = leaf_value(leaf.grad_sum, leaf.hess_sum, params.leaf_l2);
        for &r in &leaf.rows {
            contributions[r as usize] = value;
        }
    }
    Some((Tree { nodes }, contributions))
}

/// Fit a boosted ensemble with the given objective.
///
/// Stops early when a round produces no split with positive gain. When the
/// very first round cannot split, the result is a constant predictor at the
/// base score. Returns the ensemble, importance accumulators, and the
/// training loss after each round.
pub(crate) fn fit_ensemble(
    ds: &Dataset,
    targets: &[f64],
    objective: Objective,
    max_leaves: usize,
    learning_rate: f64,
    num_rounds: usize,
    min_leaf_count: usize,
    leaf_l2: f64,
    max_bins: usize,
) -> Result<(TreeEnsemble, ImportanceAccumulators, Vec<f64>)> {
    let n = ds.n_rows();
    if targets.len() != n {
        return Err(Error::data(format!("{} targets for {} rows", targets.len(), n)));
    }
    if n < 2 * min_leaf_count {
        return Err(Error::data(format!(
            "need at least {} rows (2 * min_leaf_count), got {n}",
            2 * min_leaf_count
        )));
    }
    for &y in targets {
        if !y.is_finite() {
            return Err(Error::data(format!("target value {y} is not finite")));
        }
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::parameter(format!("learning rate must be positive, got {learning_rate}")));
    }
    if max_leaves < 2 {
        return Err(Error::parameter(format!("max_leaves must be at least 2, got {max_leaves}")));
    }

    let data = bin_dataset(ds, max_bins)?;
    let params = GrowthParams {
        max_leaves,
        min_leaf_count,
        leaf_l2,
    };
    let mut importance = ImportanceAccumulators::new(ds.n_features());

    let base_score = objective.init_score(targets);
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::new();
    let mut loss_curve = Vec::with_capacity(num_rounds);

    for _round in 0..num_rounds {
        for i in 0..n {
            let (g, h) = objective.grad_hess(targets[i], scores[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let Some((tree, contributions)) = grow_tree(&data, &grad, &hess, &params, &mut importance) else {
            break;
        };
        for i in 0..n {
            scores[i] += learning_rate * contributions[i];
        }
        trees.push(tree);
        let loss = targets
            .iter()
            .zip(&scores)
            .map(|(&y, &s)| objective.loss(y, s))
            .sum::<f64>()
            / n as f64;
        loss_curve.push(loss);
    }

    Ok((
        TreeEnsemble {
            features: ds.feature_meta(),
            base_score,
            learning_rate,
            trees,
        },
        importance,
        loss_curve,
    ))
}
