//! One-vs-rest soft-margin SVM trained by SMO.
//!
//! Each binary problem is solved on the dual
//! `min 1/2 a'Qa - e'a, 0 <= a_i <= C, y'a = 0` with pairwise updates. The
//! pair is chosen by maximal KKT violation with second-order selection of
//! the partner (as in libsvm), and recently used kernel rows are cached.
//! Class scores are raw decision margins.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, Hyperparameters, ModelParams, TrainedModel};
use crate::error::{domain, Result};
use crate::matrix::FeatureMatrix;
use crate::seed::derived_rng;

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c_penalty: f64,
    pub kernel: Kernel,
    /// RBF width; defaults to `1 / (d * mean feature variance)`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    /// Iteration budget per binary problem, in multiples of its row count.
    pub max_passes: usize,
    /// Stratified row cap for training; `None` uses every row.
    pub subsample_cap: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c_penalty: 1.0,
            kernel: Kernel::Rbf,
            gamma: None,
            tolerance: 1e-3,
            max_passes: 10,
            subsample_cap: Some(20_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub kernel: Kernel,
    pub gamma: f64,
}

impl KernelFn {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// False when the budget ran out with violations above tolerance.
    pub converged: bool,
}

struct KernelRows<'a> {
    x: &'a [f64],
    d: usize,
    kernel: KernelFn,
    capacity: usize,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    clock: u64,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [f64], d: usize, kernel: KernelFn) -> Self {
        let n = x.len() / d;
        KernelRows {
            x,
            d,
            kernel,
            capacity: (CACHE_BYTES / (8 * n.max(1))).max(2),
            rows: HashMap::new(),
            clock: 0,
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = *self.rows.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k).unwrap();
                self.rows.remove(&oldest);
            }
            let n = self.x.len() / self.d;
            let xi = self.point(i);
            let values = (0..n).map(|j| self.kernel.eval(xi, self.point(j))).collect();
            self.rows.insert(i, (clock, values));
        }
        let entry = self.rows.get_mut(&i).unwrap();
        entry.0 = clock;
        &entry.1
    }
}

/// Solve one binary problem. `y` holds `+1` / `-1`.
pub fn solve_smo(
    x: &[f64],
    d: usize,
    y: &[f64],
    c: f64,
    kernel: KernelFn,
    tolerance: f64,
    max_iterations: usize,
) -> SmoSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelRows::new(x, d, kernel);
    let diag: Vec<f64> = (0..n).map(|i| kernel.eval(cache.point(i), cache.point(i))).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        // i: maximal violator in I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        // j: second-order choice in I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            let k_i = cache.row(i).to_vec();
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                g_max2 = g_max2.max(v);
                let b = g_max + v;
                if b > 0.0 {
                    let a = diag[i] + diag[t] - 2.0 * k_i[t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max + g_max2 < tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let k_ij = cache.row(i)[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let a = diag[i] + diag[j] - 2.0 * k_ij;
            if a > 0.0 { a } else { TAU }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let k_i = cache.row(i).to_vec();
        let k_j = cache.row(j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k_i[t] * di + y[j] * k_j[t] * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 { free_sum / free_count as f64 } else { (ub + lb) / 2.0 };
    SmoSolution { alpha, bias: -rho, iterations, converged }
}

/// One binary machine: support vectors with coefficients `alpha_i * y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_vectors: Vec<f64>,
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, kernel: &KernelFn, row: &[f64]) -> f64 {
        let d = row.len();
        self.dual_coef
            .iter()
            .enumerate()
            .map(|(s, &a)| a * kernel.eval(&self.support_vectors[s * d..(s + 1) * d], row))
            .sum::<f64>()
            + self.bias
    }

    /// `|sum_i alpha_i y_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.dual_coef.iter().sum::<f64>().abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelFn,
    pub c_penalty: f64,
    /// Rows the machines were fitted on, after subsampling.
    pub training_rows: usize,
    /// One machine per class, that class against the rest.
    pub machines: Vec<BinarySvm>,
}

impl SvmModel {
    pub fn score_row(&self, row: &[f64]) -> Vec<f64> {
        self.machines.iter().map(|m| m.decision(&self.kernel, row)).collect()
    }
}

/// `cap` rows drawn per class in proportion to class size, ascending.
pub fn stratified_subsample(labels: &[usize], class_count: usize, cap: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= cap {
        return (0..labels.len()).collect();
    }
    let mut picked = Vec::with_capacity(cap);
    for class in 0..class_count {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let take = ((cap as f64 * rows.len() as f64 / labels.len() as f64).round() as usize).min(rows.len());
        rows.shuffle(&mut derived_rng(seed, "svm-subsample", class as u64));
        picked.extend_from_slice(&rows[..take]);
    }
    picked.sort_unstable();
    picked
}

fn default_gamma(data: &FeatureMatrix) -> Result<f64> {
    let n = data.n_rows() as f64;
    let d = data.n_cols();
    let mut total = 0.0;
    for j in 0..d {
        let mean = data.column(j).sum::<f64>() / n;
        total += data.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    let mean_var = total / d as f64;
    if !(mean_var > 0.0) {
        return Err(domain!("all features are constant; gamma is undefined"));
    }
    Ok(1.0 / (d as f64 * mean_var))
}

pub fn train_svm(data: &FeatureMatrix, params: &SvmParams, seed: u64) -> Result<TrainedModel> {
    check_training_data(data)?;
    if !(params.c_penalty > 0.0) || !(params.tolerance > 0.0) {
        return Err(domain!("C and the tolerance must be positive"));
    }
    if params.max_passes == 0 {
        return Err(domain!("max_passes must be at least 1"));
    }
    let rows = match params.subsample_cap {
        Some(cap) if cap < 2 => return Err(domain!("subsample cap must be at least 2")),
        Some(cap) => stratified_subsample(data.labels(), data.class_count(), cap, seed),
        None => (0..data.n_rows()).collect(),
    };
    let train = data.select(&rows);
    let gamma = match (params.kernel, params.gamma) {
        (Kernel::Linear, _) => 0.0,
        (Kernel::Rbf, Some(g)) if g > 0.0 => g,
        (Kernel::Rbf, Some(g)) => return Err(domain!("gamma must be positive, got {g}")),
        (Kernel::Rbf, None) => default_gamma(&train)?,
    };
    let kernel = KernelFn { kernel: params.kernel, gamma };
    let d = train.n_cols();
    let n = train.n_rows();
    let budget = params.max_passes.saturating_mul(n.max(1000));

    let machines: Vec<BinarySvm> = (0..data.class_count())
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = train.labels().iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let sol = solve_smo(train.values(), d, &y, params.c_penalty, kernel, params.tolerance, budget);
            let mut support_vectors = Vec::new();
            let mut dual_coef = Vec::new();
            for (i, &a) in sol.alpha.iter().enumerate() {
                if a > 0.0 {
                    support_vectors.extend_from_slice(train.row(i));
                    dual_coef.push(a * y[i]);
                }
            }
            BinarySvm { support_vectors, dual_coef, bias: sol.bias, iterations: sol.iterations, converged: sol.converged }
        })
        .collect();

    let mut model = TrainedModel::new(
        data,
        Hyperparameters::Svm(SvmParams { gamma: Some(gamma), ..*params }),
        seed,
        ModelParams::Svm(SvmModel { kernel, c_penalty: params.c_penalty, training_rows: n, machines: vec![] }),
    );
    if n < data.n_rows() {
        model.manifest.warnings.push(format!("trained on a stratified subsample of {n} of {} rows", data.n_rows()));
    }
    for (class, m) in machines.iter().enumerate() {
        if !m.converged {
            let msg = format!("class {class}: SMO stopped after {} iterations with KKT violations above tolerance", m.iterations);
            log::warn!("svm {msg}");
            model.manifest.warnings.push(msg);
        }
    }
    if let ModelParams::Svm(s) = &mut model.params {
        s.machines = machines;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn matrix(values: Vec<f64>, d: usize, labels: Vec<usize>, k: usize) -> FeatureMatrix {
        FeatureMatrix::new((0..d).map(|j| format!("x{j}")).collect(), values, labels, k).unwrap()
    }

    fn assert_dual_feasible(sol: &SmoSolution, y: &[f64], c: f64) {
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let eq: f64 = sol.alpha.iter().zip(y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-8, "{eq}");
    }

    #[test]
    fn two_points_give_the_bisector() {
        let x = [0.0, 0.0, 2.0, 4.0];
        let y = [1.0, -1.0];
        let k = KernelFn { kernel: Kernel::Linear, gamma: 0.0 };
        let sol = solve_smo(&x, 2, &y, 10.0, k, 1e-9, 1000);
        assert!(sol.converged);
        assert!(sol.alpha.iter().all(|&a| a > 0.0));
        assert_dual_feasible(&sol, &y, 10.0);
        let f = |p: [f64; 2]| {
            (0..2).map(|i| sol.alpha[i] * y[i] * k.eval(&x[2 * i..2 * i + 2], &p)).sum::<f64>() + sol.bias
        };
        assert!(f([1.0, 2.0]).abs() < 1e-9);
        assert!(f([3.0, 1.0]).abs() < 1e-9);
        assert!(f([-1.0, 3.0]).abs() < 1e-9);
        assert!((f([0.0, 0.0]) - 1.0).abs() < 1e-9);
        assert!((f([2.0, 4.0]) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn xor_with_rbf() {
        let pts = [[0., 0.], [0.1, 0.1], [1., 1.], [0.9, 0.9], [0., 1.], [0.1, 0.9], [1., 0.], [0.9, 0.1]];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let data = matrix(pts.iter().flatten().copied().collect(), 2, labels, 2);
        let p = SvmParams { c_penalty: 10.0, gamma: Some(1.0), ..Default::default() };
        let model = train_svm(&data, &p, 0).unwrap();
        assert_eq!(model.predict(&data).unwrap(), data.labels());
        let ModelParams::Svm(s) = &model.params else { unreachable!() };
        // the grid of decision values keeps the XOR sign pattern
        for (p, want) in [([0.05, 0.05], 0), ([0.95, 0.95], 0), ([0.05, 0.95], 1), ([0.95, 0.05], 1)] {
            assert_eq!(crate::classifiers::argmax(&s.score_row(&p)), want);
        }
        for m in &s.machines {
            assert!(m.equality_residual() < 1e-8);
            assert!(m.dual_coef.iter().all(|a| a.abs() <= 10.0));
        }
    }

    #[test]
    fn subsample_is_stratified() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 4).collect();
        let rows = stratified_subsample(&labels, 4, 200, 3);
        assert_eq!(rows.len(), 200);
        for c in 0..4 {
            assert_eq!(rows.iter().filter(|&&i| labels[i] == c).count(), 50);
        }
        assert_eq!(rows, stratified_subsample(&labels, 4, 200, 3));
    }

    #[test]
    fn budget_exhaustion_is_a_warning() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..200).map(|i| i % 2).collect();
        let data = matrix(values, 2, labels, 2);
        let p = SvmParams { max_passes: 1, tolerance: 1e-12, ..Default::default() };
        let model = train_svm(&data, &p, 0).unwrap();
        let ModelParams::Svm(s) = &model.params else { unreachable!() };
        let stalled = s.machines.iter().filter(|m| !m.converged).count();
        assert_eq!(model.manifest.warnings.iter().filter(|w| w.contains("SMO stopped")).count(), stalled);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dual_constraints_hold(seed in 0u64..10_000, c in 0.1f64..10.0, linear in any::<bool>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| if x[2 * i] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 { 1.0 } else { -1.0 }).collect();
            prop_assume!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
            let kernel = KernelFn { kernel: if linear { Kernel::Linear } else { Kernel::Rbf }, gamma: 0.5 };
            let sol = solve_smo(&x, 2, &y, c, kernel, 1e-3, 100_000);
            prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            prop_assert!(eq.abs() < 1e-8, "{}", eq);
        }
    }
}
