//! k-nearest neighbours with Euclidean distance. Queries go through a
//! kd-tree built at scoring time; [`KnnModel::neighbors_brute_force`] is the
//! reference scan it must agree with.
//!
//! Neighbours are ordered by `(distance, training row index)`, so equal
//! distances favour the earlier row. Scores are vote fractions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_training_data, Hyperparameters, ModelParams, TrainedModel};
use crate::error::{domain, Result};
use crate::matrix::FeatureMatrix;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub class_count: usize,
    pub n_features: usize,
    pub points: Vec<f64>,
    pub labels: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn closer(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == Ordering::Less
}

/// The `k` best `(distance², index)` pairs seen so far, ascending.
struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn offer(&mut self, cand: (f64, usize)) {
        if self.items.len() == self.k {
            if !closer(cand, self.items[self.k - 1]) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.iter().position(|&x| closer(cand, x)).unwrap_or(self.items.len());
        self.items.insert(pos, cand);
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }
}

impl KnnModel {
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n_features..(i + 1) * self.n_features]
    }

    fn votes(&self, neighbors: &[usize]) -> Vec<f64> {
        let mut scores = vec![0.0; self.class_count];
        for &i in neighbors {
            scores[self.labels[i]] += 1.0;
        }
        scores.iter_mut().for_each(|s| *s /= neighbors.len() as f64);
        scores
    }

    /// Training row indices of the `k` nearest neighbours by a full scan.
    pub fn neighbors_brute_force(&self, query: &[f64]) -> Vec<usize> {
        let mut best = Best { k: self.k, items: Vec::with_capacity(self.k + 1) };
        for i in 0..self.labels.len() {
            best.offer((sq_dist(self.point(i), query), i));
        }
        best.items.into_iter().map(|(_, i)| i).collect()
    }

    pub fn score_row_brute_force(&self, query: &[f64]) -> Vec<f64> {
        self.votes(&self.neighbors_brute_force(query))
    }

    pub fn index(&self) -> KdTree<'_> {
        KdTree::build(self)
    }
}

/// Implicit kd-tree: each range of `order` is split at its middle element
/// along the axis of widest spread.
pub struct KdTree<'a> {
    model: &'a KnnModel,
    order: Vec<usize>,
    axis: Vec<usize>,
}

impl<'a> KdTree<'a> {
    fn build(model: &'a KnnModel) -> Self {
        let n = model.labels.len();
        let mut tree = KdTree { model, order: (0..n).collect(), axis: vec![0; n] };
        let mut stack = vec![(0, n)];
        while let Some((lo, hi)) = stack.pop() {
            if hi - lo <= LEAF_SIZE {
                continue;
            }
            let axis = tree.widest_axis(lo, hi);
            let mid = lo + (hi - lo) / 2;
            let pts = &model.points;
            let d = model.n_features;
            tree.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                pts[a * d + axis].total_cmp(&pts[b * d + axis]).then(a.cmp(&b))
            });
            tree.axis[mid] = axis;
            stack.push((lo, mid));
            stack.push((mid + 1, hi));
        }
        tree
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let d = self.model.n_features;
        (0..d)
            .map(|j| {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for &i in &self.order[lo..hi] {
                    let v = self.model.points[i * d + j];
                    min = min.min(v);
                    max = max.max(v);
                }
                (j, max - min)
            })
            .fold((0, f64::NEG_INFINITY), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc })
            .0
    }

    fn search(&self, lo: usize, hi: usize, query: &[f64], best: &mut Best) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                best.offer((sq_dist(self.model.point(i), query), i));
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let axis = self.axis[mid];
        best.offer((sq_dist(self.model.point(pivot), query), pivot));
        let diff = query[axis] - self.model.point(pivot)[axis];
        let (near, far) = if diff <= 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, query, best);
        // equal distances may still hold a lower index, so only prune strictly
        if diff * diff <= best.worst() {
            self.search(far.0, far.1, query, best);
        }
    }

    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut best = Best { k: self.model.k, items: Vec::with_capacity(self.model.k + 1) };
        self.search(0, self.order.len(), query, &mut best);
        best.items.into_iter().map(|(_, i)| i).collect()
    }

    pub fn score_row(&self, query: &[f64]) -> Vec<f64> {
        self.model.votes(&self.neighbors(query))
    }
}

pub fn train_knn(data: &FeatureMatrix, params: &KnnParams, seed: u64) -> Result<TrainedModel> {
    check_training_data(data)?;
    if params.k == 0 || params.k > data.n_rows() {
        return Err(domain!("k = {} must lie in 1..={}", params.k, data.n_rows()));
    }
    let model = KnnModel {
        k: params.k,
        class_count: data.class_count(),
        n_features: data.n_cols(),
        points: data.values().to_vec(),
        labels: data.labels().to_vec(),
    };
    Ok(TrainedModel::new(data, Hyperparameters::Knn(*params), seed, ModelParams::Knn(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(values: Vec<f64>, d: usize, labels: Vec<usize>, k: usize) -> FeatureMatrix {
        FeatureMatrix::new((0..d).map(|j| format!("x{j}")).collect(), values, labels, k).unwrap()
    }

    fn knn(data: &FeatureMatrix, k: usize) -> KnnModel {
        match train_knn(data, &KnnParams { k }, 0).unwrap().params {
            ModelParams::Knn(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn hand_built_six_points() {
        // class 0 near the origin, class 1 near (3, 3)
        let data = matrix(vec![0., 0., 1., 0., 0., 1., 3., 3., 2., 3., 3., 2.], 2, vec![0, 0, 0, 1, 1, 1], 2);
        let m = knn(&data, 3);
        // distances² from (1.8, 1.8): 6.48, 3.88, 3.88, 2.88, 1.48, 1.48
        assert_eq!(m.index().neighbors(&[1.8, 1.8]), vec![4, 5, 3]);
        assert_eq!(m.index().score_row(&[1.8, 1.8]), vec![0.0, 1.0]);
        assert_eq!(m.neighbors_brute_force(&[0.4, 0.4]), vec![0, 1, 2]);
    }

    #[test]
    fn distance_ties_favour_lower_index_and_votes_lower_class() {
        let data = matrix(vec![1., -1., 1., -1.], 1, vec![1, 0, 0, 1], 2);
        let m = knn(&data, 2);
        assert_eq!(m.index().neighbors(&[0.0]), vec![0, 1]);
        assert_eq!(TrainedModel::new(&data, Hyperparameters::Knn(KnnParams { k: 2 }), 0, ModelParams::Knn(m.clone()))
            .predict(&matrix(vec![0.0], 1, vec![0], 2)).unwrap(), vec![0]);
    }

    #[test]
    fn k_bounds() {
        let data = matrix(vec![0., 1.], 1, vec![0, 1], 2);
        assert!(train_knn(&data, &KnnParams { k: 3 }, 0).is_err());
        assert!(train_knn(&data, &KnnParams { k: 0 }, 0).is_err());
    }

    #[test]
    fn one_neighbour_recovers_training_labels() {
        let values: Vec<f64> = (0..60).map(|i| ((i * 37) % 23) as f64 + 0.01 * i as f64).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let data = matrix(values, 2, labels, 3);
        let model = train_knn(&data, &KnnParams { k: 1 }, 0).unwrap();
        assert_eq!(model.predict(&data).unwrap(), data.labels());
    }

    proptest! {
        #[test]
        fn tree_matches_scan(
            pts in prop::collection::vec((-3i32..3, -3i32..3, -3i32..3), 10..120),
            queries in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 1..20),
            k in 1usize..8,
        ) {
            // integer lattice points produce plenty of exact distance ties
            let n = pts.len();
            let values = pts.iter().flat_map(|&(a, b, c)| [a as f64, b as f64, c as f64]).collect();
            let data = matrix(values, 3, (0..n).map(|i| i % 4).collect(), 4);
            let m = knn(&data, k.min(n));
            let tree = m.index();
            for &(a, b, c) in &queries {
                let q = [a.round(), b, c];
                prop_assert_eq!(tree.neighbors(&q), m.neighbors_brute_force(&q));
            }
        }
    }
}
