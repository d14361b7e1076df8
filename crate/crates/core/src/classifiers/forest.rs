//! Random forest of CART trees with Gini impurity.
//!
//! Each tree sees a bootstrap sample and, at every node, a random subset of
//! features. A split sends `x <= threshold` left; thresholds are midpoints
//! between consecutive distinct values. Leaves keep raw class counts and the
//! forest score is the mean of the per-tree leaf distributions.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, Hyperparameters, ModelParams, TrainedModel};
use crate::error::{domain, Result};
use crate::matrix::FeatureMatrix;
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Defaults to `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: Some(20),
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

const LEAF: u32 = u32::MAX;

/// Flat node arena. For a leaf, `feature` is `u32::MAX` and `left` indexes
/// the leaf's block of `class_count` entries in `leaf_counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub leaf_counts: Vec<u32>,
}

impl Tree {
    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            deepest = deepest.max(depth);
            if self.feature[node] != LEAF {
                stack.push((self.left[node] as usize, depth + 1));
                stack.push((self.right[node] as usize, depth + 1));
            }
        }
        deepest
    }

    /// Class counts of the leaf `row` falls into.
    pub fn leaf(&self, row: &[f64], class_count: usize) -> &[u32] {
        let mut node = 0;
        while self.feature[node] != LEAF {
            node = if row[self.feature[node] as usize] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        let start = self.left[node] as usize * class_count;
        &self.leaf_counts[start..start + class_count]
    }

    fn push_node(&mut self) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.feature.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub class_count: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn score_row(&self, row: &[f64]) -> Vec<f64> {
        let mut scores = vec![0.0; self.class_count];
        for tree in &self.trees {
            let counts = tree.leaf(row, self.class_count);
            let total: u32 = counts.iter().sum();
            for (s, &c) in scores.iter_mut().zip(counts) {
                *s += c as f64 / total as f64;
            }
        }
        scores.iter_mut().for_each(|s| *s /= self.trees.len() as f64);
        scores
    }
}

/// `1 - sum p_k^2`.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted Gini of a two-way partition.
pub fn weighted_gini(left: &[usize], right: &[usize]) -> f64 {
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = (nl + nr) as f64;
    nl as f64 / n * gini(left) + nr as f64 / n * gini(right)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted Gini of the two children.
    pub impurity: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) * 0.5;
    if t < b {
        t
    } else {
        a
    }
}

/// Lowest weighted-Gini split of `rows` over `features`, each side holding at
/// least `min_leaf` rows. Candidates are visited feature by feature in the
/// given order, thresholds ascending; the first minimum wins.
pub fn best_split(
    data: &FeatureMatrix,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let k = data.class_count();
    let labels = data.labels();
    let mut total = vec![0usize; k];
    for &r in rows {
        total[labels[r]] += 1;
    }
    let mut best: Option<Split> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for &feature in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (data.row(r)[feature], labels[r])));
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0usize; k];
        let mut right = total.clone();
        for i in 0..sorted.len() - 1 {
            let (v, y) = sorted[i];
            left[y] += 1;
            right[y] -= 1;
            let next = sorted[i + 1].0;
            if next == v || i + 1 < min_leaf || sorted.len() - i - 1 < min_leaf {
                continue;
            }
            let impurity = weighted_gini(&left, &right);
            if best.is_none_or(|b| impurity < b.impurity) {
                best = Some(Split { feature, threshold: midpoint(v, next), impurity });
            }
        }
    }
    best
}

fn grow_tree(data: &FeatureMatrix, params: &ForestParams, m_try: usize, seed: u64, index: u64) -> Tree {
    let mut rng = derived_rng(seed, "tree", index);
    let n = data.n_rows();
    let k = data.class_count();
    let d = data.n_cols();
    let mut samples: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut tree = Tree { feature: vec![], threshold: vec![], left: vec![], right: vec![], leaf_counts: vec![] };
    let root = tree.push_node();
    // (node, sample range, depth)
    let mut stack = vec![(root, 0, n, 0usize)];
    let mut features: Vec<usize> = (0..d).collect();
    while let Some((node, lo, hi, depth)) = stack.pop() {
        let rows = &samples[lo..hi];
        let mut counts = vec![0usize; k];
        for &r in rows {
            counts[data.labels()[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let stop = pure || params.max_depth.is_some_and(|m| depth >= m) || rows.len() < 2 * params.min_leaf;
        let split = if stop {
            None
        } else {
            // draw m_try features; if none of them can split, keep drawing
            features.shuffle(&mut rng);
            best_split(data, rows, &features[..m_try], params.min_leaf).or_else(|| {
                features[m_try..]
                    .iter()
                    .find_map(|&f| best_split(data, rows, &[f], params.min_leaf))
            })
        };
        match split {
            None => {
                tree.left[node] = (tree.leaf_counts.len() / k) as u32;
                tree.leaf_counts.extend(counts.iter().map(|&c| c as u32));
            }
            Some(s) => {
                let slice = &mut samples[lo..hi];
                let mut mid = 0;
                for i in 0..slice.len() {
                    if data.row(slice[i])[s.feature] <= s.threshold {
                        slice.swap(i, mid);
                        mid += 1;
                    }
                }
                let (l, r) = (tree.push_node(), tree.push_node());
                tree.feature[node] = s.feature as u32;
                tree.threshold[node] = s.threshold;
                tree.left[node] = l as u32;
                tree.right[node] = r as u32;
                stack.push((r, lo + mid, hi, depth + 1));
                stack.push((l, lo, lo + mid, depth + 1));
            }
        }
    }
    tree
}

pub fn train_forest(data: &FeatureMatrix, params: &ForestParams, seed: u64) -> Result<TrainedModel> {
    check_training_data(data)?;
    if params.n_trees == 0 {
        return Err(domain!("a forest needs at least one tree"));
    }
    if params.min_leaf == 0 {
        return Err(domain!("min_leaf must be at least 1"));
    }
    let d = data.n_cols();
    let m_try = params.features_per_split.unwrap_or((d as f64).sqrt().ceil() as usize);
    if m_try == 0 || m_try > d {
        return Err(domain!("features_per_split = {m_try} must lie in 1..={d}"));
    }
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(data, params, m_try, seed, t as u64))
        .collect();
    log::debug!(
        "forest: {} trees, mean {} nodes",
        trees.len(),
        trees.iter().map(Tree::node_count).sum::<usize>() / trees.len()
    );
    let model = ForestModel { class_count: data.class_count(), trees };
    Ok(TrainedModel::new(data, Hyperparameters::Forest(*params), seed, ModelParams::Forest(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(values: Vec<f64>, d: usize, labels: Vec<usize>, k: usize) -> FeatureMatrix {
        FeatureMatrix::new((0..d).map(|j| format!("x{j}")).collect(), values, labels, k).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[2, 2]), 0.5);
        assert_eq!(gini(&[4, 0]), 0.0);
    }

    #[test]
    fn four_point_split() {
        let data = matrix(vec![1., 2., 3., 4.], 1, vec![0, 0, 1, 1], 2);
        let s = best_split(&data, &[0, 1, 2, 3], &[0], 1).unwrap();
        assert_eq!((s.feature, s.threshold, s.impurity), (0, 2.5, 0.0));
    }

    #[test]
    fn min_leaf_restricts_thresholds() {
        let data = matrix(vec![1., 2., 3., 4.], 1, vec![0, 1, 1, 1], 2);
        assert_eq!(best_split(&data, &[0, 1, 2, 3], &[0], 1).unwrap().threshold, 1.5);
        assert_eq!(best_split(&data, &[0, 1, 2, 3], &[0], 2).unwrap().threshold, 2.5);
        assert!(best_split(&data, &[0, 1, 2, 3], &[0], 3).is_none());
    }

    #[test]
    fn single_unbounded_tree_memorizes() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let labels: Vec<usize> = (0..100).map(|i| (i * 31 % 7) % 3).collect();
        let data = matrix(values, 2, labels, 3);
        let p = ForestParams { n_trees: 1, max_depth: None, bootstrap: false, ..Default::default() };
        let model = train_forest(&data, &p, 9).unwrap();
        assert_eq!(model.predict(&data).unwrap(), data.labels());
    }

    #[test]
    fn same_seed_same_trees() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 613) % 97) as f64).collect();
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let data = matrix(values, 3, labels, 4);
        let p = ForestParams { n_trees: 8, ..Default::default() };
        let a = train_forest(&data, &p, 1).unwrap();
        let b = train_forest(&data, &p, 1).unwrap();
        let c = train_forest(&data, &p, 2).unwrap();
        assert_eq!(crate::classifiers::model_to_bytes(&a).unwrap(), crate::classifiers::model_to_bytes(&b).unwrap());
        assert_ne!(a.params, c.params);
        for s in a.score(&data).unwrap() {
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_limit_holds() {
        let values: Vec<f64> = (0..400).map(|i| ((i * 7919) % 211) as f64).collect();
        let labels: Vec<usize> = (0..200).map(|i| (i * 13) % 2).collect();
        let data = matrix(values, 2, labels, 2);
        let p = ForestParams { n_trees: 3, max_depth: Some(3), ..Default::default() };
        let ModelParams::Forest(f) = train_forest(&data, &p, 0).unwrap().params else { unreachable!() };
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
    }

    proptest! {
        #[test]
        fn best_split_is_exhaustive_minimum(
            rows in prop::collection::vec((0u8..6, 0u8..6, 0usize..3), 2..25),
            min_leaf in 1usize..3,
        ) {
            let n = rows.len();
            let values = rows.iter().flat_map(|&(a, b, _)| [a as f64, b as f64]).collect();
            let data = matrix(values, 2, rows.iter().map(|r| r.2).collect(), 3);
            let all: Vec<usize> = (0..n).collect();
            let got = best_split(&data, &all, &[0, 1], min_leaf);

            let mut oracle: Option<(f64, usize, f64)> = None;
            for f in 0..2 {
                let mut vals: Vec<f64> = all.iter().map(|&r| data.row(r)[f]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    let t = (w[0] + w[1]) / 2.0;
                    let mut l = vec![0; 3];
                    let mut r = vec![0; 3];
                    for &i in &all {
                        if data.row(i)[f] <= t { l[data.labels()[i]] += 1 } else { r[data.labels()[i]] += 1 }
                    }
                    if l.iter().sum::<usize>() < min_leaf || r.iter().sum::<usize>() < min_leaf {
                        continue;
                    }
                    let g = weighted_gini(&l, &r);
                    if oracle.is_none_or(|o| g < o.0) {
                        oracle = Some((g, f, t));
                    }
                }
            }
            match (got, oracle) {
                (None, None) => {}
                (Some(s), Some((g, f, t))) => {
                    prop_assert!((s.impurity - g).abs() < 1e-12);
                    prop_assert_eq!((s.feature, s.threshold), (f, t));
                }
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
