use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{domain, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitOptions {
    pub train_fraction: f64,
    pub stratified: bool,
    /// Keep all rows of one `(oil, z)` trace on the same side.
    pub trace_grouped: bool,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_fraction: 0.8,
            stratified: true,
            trace_grouped: false,
            seed: 0,
        }
    }
}

/// Row indices of each side, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(data: &FeatureMatrix) -> Result<Scaler> {
        if data.n_rows() == 0 {
            return Err(domain!("cannot fit a scaler on an empty matrix"));
        }
        let n = data.n_rows() as f64;
        let d = data.n_cols();
        let mut mean = vec![0.0; d];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        if let Some(j) = std.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::ZeroVariance(data.columns()[j].clone()));
        }
        Ok(Scaler {
            columns: data.columns().to_vec(),
            mean,
            std,
        })
    }

    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        data.check_columns(self.mean.len())?;
        Ok(data.map_values(|j, v| (v - self.mean[j]) / self.std[j]))
    }
}

/// Standardized train and test matrices plus the provenance of the split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub scaler: Scaler,
    pub indices: SplitIndices,
}

impl SplitDataset {
    /// Raw records of each side, for export.
    pub fn partition(&self, dataset: &Dataset) -> (Dataset, Dataset) {
        let pick = |idx: &[usize]| Dataset {
            records: idx.iter().map(|&i| dataset.records[i]).collect(),
            schema_version: dataset.schema_version.clone(),
            manifest: dataset.manifest.clone(),
        };
        (pick(&self.indices.train), pick(&self.indices.test))
    }
}

/// Shuffle-split row indices.
///
/// With `groups`, whole groups are assigned to one side; a group's stratum is
/// the label of its first row. Each stratum of `n` units sends
/// `round(fraction * n)` units to train, clamped so both sides get at least
/// one unit when `n >= 2`.
pub fn split_indices(
    labels: &[usize],
    groups: Option<&[u64]>,
    options: &SplitOptions,
) -> Result<SplitIndices> {
    let fraction = options.train_fraction;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(domain!("train fraction must lie in (0, 1), got {fraction}"));
    }
    if labels.len() < 2 {
        return Err(domain!("need at least two rows to split"));
    }
    if let Some(g) = groups {
        if g.len() != labels.len() {
            return Err(domain!("group ids do not match the row count"));
        }
    }

    // unit id -> rows, in first-appearance order
    let mut unit_rows: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut unit_order = Vec::new();
    for i in 0..labels.len() {
        let unit = groups.map_or(i as u64, |g| g[i]);
        unit_rows
            .entry(unit)
            .or_insert_with(|| {
                unit_order.push(unit);
                Vec::new()
            })
            .push(i);
    }

    let mut strata: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for &unit in &unit_order {
        let stratum = if options.stratified {
            labels[unit_rows[&unit][0]]
        } else {
            0
        };
        strata.entry(stratum).or_default().push(unit);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (stratum, mut units) in strata {
        let n = units.len();
        if options.stratified && n < 2 {
            return Err(domain!(
                "class {stratum} has {n} split unit(s); stratification needs at least 2"
            ));
        }
        let mut rng = derived_rng(options.seed, "split", stratum as u64);
        units.shuffle(&mut rng);
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
        for (k, unit) in units.iter().enumerate() {
            let side = if k < n_train { &mut train } else { &mut test };
            side.extend_from_slice(&unit_rows[unit]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Split `data`, fit the scaler on the training side only, and standardize
/// both sides with it.
pub fn split_standardize_matrix(
    data: &FeatureMatrix,
    groups: Option<&[u64]>,
    options: &SplitOptions,
) -> Result<SplitDataset> {
    let indices = split_indices(data.labels(), groups, options)?;
    let train_raw = data.select(&indices.train);
    let test_raw = data.select(&indices.test);
    let scaler = Scaler::fit(&train_raw)?;
    Ok(SplitDataset {
        train: scaler.transform(&train_raw)?,
        test: scaler.transform(&test_raw)?,
        scaler,
        indices,
    })
}

/// Raw-mode split over `(height, frequency, s21)`.
pub fn split_standardize(dataset: &Dataset, options: &SplitOptions) -> Result<SplitDataset> {
    let matrix = dataset.to_matrix()?;
    let groups = options.trace_grouped.then(|| dataset.trace_groups());
    split_standardize_matrix(&matrix, groups.as_deref(), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SweepRecord;

    fn balanced(n_per_class: usize, classes: usize) -> Dataset {
        let records = (0..classes)
            .flat_map(|c| {
                (0..n_per_class).map(move |i| SweepRecord {
                    height_mm: (i % 10) as f64,
                    frequency_hz: 1e9 + i as f64 * 1e6,
                    s21_db: -(c as f64) - (i as f64) * 0.01,
                    label: Some(c),
                })
            })
            .collect();
        Dataset::from_records(records)
    }

    #[test]
    fn stratified_counts_are_exact() {
        let d = balanced(250, 4);
        let s = split_standardize(&d, &SplitOptions::default()).unwrap();
        assert_eq!(s.train.n_rows(), 800);
        assert_eq!(s.test.n_rows(), 200);
        assert_eq!(s.train.class_counts(), vec![200; 4]);
        assert_eq!(s.test.class_counts(), vec![50; 4]);
    }

    #[test]
    fn train_is_standardized_and_test_uses_train_stats() {
        let d = balanced(250, 4);
        let s = split_standardize(&d, &SplitOptions::default()).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = s.train.column(j).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
        let refit = Scaler::fit(&d.to_matrix().unwrap().select(&s.indices.test)).unwrap();
        assert_ne!(refit.mean, s.scaler.mean);
    }

    #[test]
    fn split_is_seed_deterministic_and_disjoint() {
        let d = balanced(40, 3);
        let opts = SplitOptions { seed: 11, ..Default::default() };
        let a = split_standardize(&d, &opts).unwrap();
        let b = split_standardize(&d, &opts).unwrap();
        assert_eq!(a.indices, b.indices);
        let c = split_standardize(&d, &SplitOptions { seed: 12, ..opts }).unwrap();
        assert_ne!(a.indices, c.indices);
        let mut all: Vec<usize> = a.indices.train.iter().chain(&a.indices.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..120).collect::<Vec<_>>());
    }

    #[test]
    fn grouped_split_keeps_traces_together() {
        let d = balanced(100, 2);
        let opts = SplitOptions { trace_grouped: true, ..Default::default() };
        let s = split_standardize(&d, &opts).unwrap();
        let groups = d.trace_groups();
        let train_groups: std::collections::HashSet<_> = s.indices.train.iter().map(|&i| groups[i]).collect();
        assert!(s.indices.test.iter().all(|&i| !train_groups.contains(&groups[i])));
        // 10 heights per class -> 8 train traces per class
        assert_eq!(s.train.n_rows(), 160);
    }

    #[test]
    fn zero_variance_names_the_feature() {
        let records = (0..10)
            .map(|i| SweepRecord {
                height_mm: 1.0,
                frequency_hz: i as f64,
                s21_db: -(i as f64),
                label: Some(i % 2),
            })
            .collect();
        let err = split_standardize(&Dataset::from_records(records), &SplitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(ref f) if f == "height_mm"), "{err}");
    }

    #[test]
    fn stratification_needs_two_rows_per_class() {
        let mut d = balanced(5, 2);
        d.records.push(SweepRecord { height_mm: 3.0, frequency_hz: 2e9, s21_db: -1.0, label: Some(2) });
        assert!(split_standardize(&d, &SplitOptions::default()).is_err());
        let loose = SplitOptions { stratified: false, ..Default::default() };
        assert!(split_standardize(&d, &loose).is_ok());
    }
}
