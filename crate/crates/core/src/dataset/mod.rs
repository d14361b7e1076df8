//! Sweep dataset: generation from the resonator surrogate, cleaning,
//! stratified splitting with standardization, and CSV persistence.
//!
//! One record is one `(height, frequency, S21, label)` row. Labels are the
//! alphabetical index of the oil name.

pub(crate) mod io;
mod split;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dielectric::MaterialModel;
use crate::error::{domain, Result};
use crate::matrix::FeatureMatrix;
use crate::resonator::{check_frequency_grid, ResonatorModel};
use crate::seed::derive_seed;

pub use io::{
    export_csv, import_csv, manifest_path_for, read_manifest, write_manifest, CSV_HEADER,
};
pub use split::{
    split_indices, split_standardize, split_standardize_matrix, Scaler, SplitDataset,
    SplitIndices, SplitOptions,
};

pub const SCHEMA_VERSION: &str = "oilsense-sweep/1";

/// Names of the three raw feature columns, in matrix order.
pub const RAW_FEATURES: [&str; 3] = ["height_mm", "frequency_hz", "s21_db"];

/// One swept sample. Numeric fields are NaN and the label is `None` when the
/// value is missing (only possible for imported files).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub height_mm: f64,
    pub frequency_hz: f64,
    pub s21_db: f64,
    pub label: Option<usize>,
}

impl SweepRecord {
    pub fn is_complete(&self) -> bool {
        self.height_mm.is_finite()
            && self.frequency_hz.is_finite()
            && self.s21_db.is_finite()
            && self.label.is_some()
    }

    fn key(&self) -> (u64, u64, u64, Option<usize>) {
        // + 0.0 folds -0.0 onto 0.0
        (
            (self.height_mm + 0.0).to_bits(),
            (self.frequency_hz + 0.0).to_bits(),
            (self.s21_db + 0.0).to_bits(),
            self.label,
        )
    }
}

/// Everything needed to regenerate a dataset bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationManifest {
    pub schema_version: String,
    pub seed: u64,
    pub noise_sigma_db: f64,
    pub resonator: ResonatorModel,
    /// Sorted by name; position is the class label.
    pub materials: Vec<MaterialModel>,
    pub z_grid_mm: Vec<f64>,
    pub f_grid_hz: Vec<f64>,
    pub record_count: usize,
    pub dataset_sha256: String,
    /// Hash of the run configuration that produced this file, when known.
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl GenerationManifest {
    pub fn labels(&self) -> Vec<String> {
        self.materials.iter().map(|m| m.name.clone()).collect()
    }

    /// Re-run the generator from the echoed parameters.
    pub fn regenerate(&self) -> Result<Dataset> {
        generate(
            &self.resonator,
            &self.materials,
            &self.z_grid_mm,
            &self.f_grid_hz,
            self.noise_sigma_db,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SweepRecord>,
    pub schema_version: String,
    pub manifest: Option<GenerationManifest>,
}

impl Dataset {
    pub fn from_records(records: Vec<SweepRecord>) -> Self {
        Dataset {
            records,
            schema_version: SCHEMA_VERSION.to_owned(),
            manifest: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of classes: from the manifest when present, otherwise the
    /// largest label plus one.
    pub fn class_count(&self) -> usize {
        match &self.manifest {
            Some(m) => m.materials.len(),
            None => self
                .records
                .iter()
                .filter_map(|r| r.label)
                .max()
                .map_or(0, |l| l + 1),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for label in self.records.iter().filter_map(|r| r.label) {
            if label >= counts.len() {
                counts.resize(label + 1, 0);
            }
            counts[label] += 1;
        }
        counts
    }

    /// SHA-256 over the little-endian bit patterns of every record.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            hasher.update(r.height_mm.to_bits().to_le_bytes());
            hasher.update(r.frequency_hz.to_bits().to_le_bytes());
            hasher.update(r.s21_db.to_bits().to_le_bytes());
            hasher.update(r.label.map_or(u64::MAX, |l| l as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Raw `(height, frequency, s21)` features. Fails on incomplete rows, so
    /// call [`clean`] first on imported data.
    pub fn to_matrix(&self) -> Result<FeatureMatrix> {
        let mut values = Vec::with_capacity(self.records.len() * 3);
        let mut labels = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            let label = match r.label {
                Some(l) if r.is_complete() => l,
                _ => return Err(domain!("record {i} has missing fields; clean the dataset first")),
            };
            values.extend_from_slice(&[r.height_mm, r.frequency_hz, r.s21_db]);
            labels.push(label);
        }
        FeatureMatrix::new(
            RAW_FEATURES.iter().map(|s| s.to_string()).collect(),
            values,
            labels,
            self.class_count(),
        )
    }

    /// Trace identity of each record: label and height together.
    pub fn trace_groups(&self) -> Vec<u64> {
        let mut ids = std::collections::HashMap::new();
        self.records
            .iter()
            .map(|r| {
                let next = ids.len() as u64;
                *ids.entry((r.label, (r.height_mm + 0.0).to_bits())).or_insert(next)
            })
            .collect()
    }
}

/// `n` points from `start` to `stop` with constant ratio; both endpoints exact.
pub fn geometric_grid(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start) || n < 2 {
        return Err(domain!("geometric grid needs 0 < start < stop and n >= 2"));
    }
    let ratio = (stop / start).ln();
    let mut grid: Vec<f64> = (0..n)
        .map(|i| start * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = start;
    grid[n - 1] = stop;
    Ok(grid)
}

/// `n` evenly spaced points from `start` to `stop`; both endpoints exact.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if !(stop > start) || n < 2 {
        return Err(domain!("linear grid needs start < stop and n >= 2"));
    }
    let step = (stop - start) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
    grid[n - 1] = stop;
    Ok(grid)
}

/// Sort materials by name and reject empty or duplicated sets.
pub(crate) fn labelled_materials(materials: &[MaterialModel]) -> Result<Vec<MaterialModel>> {
    if materials.is_empty() {
        return Err(domain!("at least one material is required"));
    }
    let mut sorted = materials.to_vec();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = sorted.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(domain!("material `{}` listed twice", w[0].name));
    }
    for m in &sorted {
        m.validate()?;
    }
    Ok(sorted)
}

pub(crate) fn check_z_grid(z_grid_mm: &[f64]) -> Result<()> {
    if z_grid_mm.is_empty() {
        return Err(domain!("z grid is empty"));
    }
    if z_grid_mm.iter().any(|z| !(*z >= 0.0) || !z.is_finite()) {
        return Err(domain!("z grid values must be finite and >= 0"));
    }
    Ok(())
}

/// Seed of the noise stream for trace `(oil, z)`.
pub fn trace_seed(seed: u64, oil_index: usize, z_index: usize, n_z: usize) -> u64 {
    derive_seed(seed, "trace", (oil_index * n_z + z_index) as u64)
}

/// One record per `(oil, z, f)`, ordered by oil name, then z, then f.
pub fn generate(
    resonator: &ResonatorModel,
    materials: &[MaterialModel],
    z_grid_mm: &[f64],
    f_grid_hz: &[f64],
    noise_sigma_db: f64,
    seed: u64,
) -> Result<Dataset> {
    resonator.validate()?;
    let materials = labelled_materials(materials)?;
    check_z_grid(z_grid_mm)?;
    check_frequency_grid(f_grid_hz, resonator.band_hz)?;

    let n_z = z_grid_mm.len();
    let jobs: Vec<(usize, usize)> = (0..materials.len())
        .flat_map(|o| (0..n_z).map(move |z| (o, z)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(o, zi)| {
            let z = z_grid_mm[zi];
            let trace = resonator.s21_response(
                &materials[o],
                z,
                f_grid_hz,
                noise_sigma_db,
                trace_seed(seed, o, zi, n_z),
            )?;
            Ok(trace
                .into_iter()
                .map(|(f, s)| SweepRecord {
                    height_mm: z,
                    frequency_hz: f,
                    s21_db: s,
                    label: Some(o),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<SweepRecord> = traces.into_iter().flatten().collect();

    let mut dataset = Dataset::from_records(records);
    dataset.manifest = Some(GenerationManifest {
        schema_version: SCHEMA_VERSION.to_owned(),
        seed,
        noise_sigma_db,
        resonator: resonator.clone(),
        materials,
        z_grid_mm: z_grid_mm.to_vec(),
        f_grid_hz: f_grid_hz.to_vec(),
        record_count: dataset.records.len(),
        dataset_sha256: dataset.sha256(),
        config_hash: None,
    });
    Ok(dataset)
}

/// Drop rows with a missing field, then exact duplicates (first occurrence
/// wins). Order is otherwise preserved.
pub fn clean(dataset: &Dataset) -> Dataset {
    let mut seen = HashSet::with_capacity(dataset.records.len());
    let records = dataset
        .records
        .iter()
        .filter(|r| r.is_complete() && seen.insert(r.key()))
        .copied()
        .collect();
    Dataset {
        records,
        schema_version: dataset.schema_version.clone(),
        manifest: dataset.manifest.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dielectric::default_material_library;

    fn rec(h: f64, f: f64, s: f64, l: Option<usize>) -> SweepRecord {
        SweepRecord {
            height_mm: h,
            frequency_hz: f,
            s21_db: s,
            label: l,
        }
    }

    #[test]
    fn grids_have_exact_endpoints() {
        let z = geometric_grid(0.001, 50.0, 100).unwrap();
        assert_eq!(z.len(), 100);
        assert_eq!((z[0], z[99]), (0.001, 50.0));
        let ratios: Vec<f64> = z.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|r| (r / ratios[0] - 1.0).abs() < 1e-12));
        let f = linear_grid(1e9, 4e9, 301).unwrap();
        assert_eq!((f[0], f[300]), (1e9, 4e9));
        assert!((f[1] - f[0] - 1e7).abs() < 1e-3);
    }

    #[test]
    fn cardinality_and_labels() {
        let z = geometric_grid(0.001, 50.0, 100).unwrap();
        let f = linear_grid(1e9, 4e9, 301).unwrap();
        let d = generate(&ResonatorModel::default(), &default_material_library(), &z, &f, 0.05, 1).unwrap();
        assert_eq!(d.len(), 120_400);
        assert_eq!(d.class_counts(), vec![30_100; 4]);
        assert_eq!(d.manifest.as_ref().unwrap().labels(), ["coconut", "olive", "peanut", "soybean"]);
    }

    #[test]
    fn labels_follow_name_order_not_input_order() {
        let mut oils = default_material_library();
        oils.reverse();
        let d = generate(&ResonatorModel::default(), &oils, &[0.0], &[1.5e9], 0.0, 0).unwrap();
        let labels: Vec<_> = d.records.iter().map(|r| r.label.unwrap()).collect();
        assert_eq!(labels, [0, 1, 2, 3]);
        let m = d.manifest.unwrap();
        assert_eq!(m.materials[0].name, "coconut");
    }

    #[test]
    fn generation_errors() {
        let r = ResonatorModel::default();
        let oils = default_material_library();
        assert!(generate(&r, &[], &[1.0], &[2e9], 0.0, 0).is_err());
        assert!(generate(&r, &oils, &[], &[2e9], 0.0, 0).is_err());
        assert!(generate(&r, &oils, &[-1.0], &[2e9], 0.0, 0).is_err());
        assert!(generate(&r, &oils, &[1.0], &[], 0.0, 0).is_err());
        let twice = vec![oils[0].clone(), oils[0].clone()];
        assert!(generate(&r, &twice, &[1.0], &[2e9], 0.0, 0).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let z = geometric_grid(0.001, 50.0, 7).unwrap();
        let f = linear_grid(1e9, 4e9, 31).unwrap();
        let d = generate(&ResonatorModel::default(), &default_material_library(), &z, &f, 0.05, 5).unwrap();
        let again = d.manifest.as_ref().unwrap().regenerate().unwrap();
        assert_eq!(again.sha256(), d.sha256());
        assert_eq!(again.sha256(), d.manifest.unwrap().dataset_sha256);
    }

    #[test]
    fn clean_removes_repeats_and_missing() {
        let a = rec(1.0, 2.0, -3.0, Some(0));
        let b = rec(1.0, 2.5, -3.0, Some(1));
        let d = Dataset::from_records(vec![
            a,
            a,
            rec(1.0, 2.0, f64::NAN, Some(0)),
            b,
            a,
            rec(1.0, 2.0, -3.0, None),
            rec(-0.0, 2.0, -3.0, Some(0)),
            rec(0.0, 2.0, -3.0, Some(0)),
        ]);
        let c = clean(&d);
        assert_eq!(c.records, vec![a, b, rec(-0.0, 2.0, -3.0, Some(0))]);
        assert_eq!(clean(&c), c);
    }

    #[test]
    fn trace_groups_identify_oil_and_height() {
        let d = Dataset::from_records(vec![
            rec(1.0, 1.0, 0.0, Some(0)),
            rec(1.0, 2.0, 0.0, Some(0)),
            rec(1.0, 1.0, 0.0, Some(1)),
            rec(2.0, 1.0, 0.0, Some(0)),
        ]);
        assert_eq!(d.trace_groups(), vec![0, 0, 1, 2]);
    }
}
