//! Per-harmonic resonance descriptors extracted from a swept trace.
//!
//! For every notch: resonant frequency (parabolic refinement of the sampled
//! minimum), shift relative to the unloaded resonance, depth below the trace
//! median, and quality factor `f_res / FWHM`, where the width is taken at
//! half the notch depth.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, GenerationManifest};
use crate::dielectric::MaterialModel;
use crate::error::{domain, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::resonator::{check_frequency_grid, ResonatorModel};

pub const RESONANCE_SCHEMA_VERSION: &str = "oilsense-resonance/1";

pub const FEATURE_CSV_HEADER: [&str; 10] = [
    "height_mm",
    "f1_hz",
    "shift1",
    "depth1_db",
    "q1",
    "f2_hz",
    "shift2",
    "depth2_db",
    "q2",
    "label",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFeatures {
    pub f_res_hz: f64,
    /// `(f_res - f0) / f0`.
    pub normalized_shift: f64,
    /// Positive, in dB.
    pub depth_db: f64,
    pub q_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFeatures {
    pub modes: [ModeFeatures; 2],
}

impl ResonanceFeatures {
    /// The eight descriptors in CSV column order.
    pub fn to_array(&self) -> [f64; 8] {
        let [a, b] = self.modes;
        [
            a.f_res_hz,
            a.normalized_shift,
            a.depth_db,
            a.q_factor,
            b.f_res_hz,
            b.normalized_shift,
            b.depth_db,
            b.q_factor,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        let mode = |o: usize| ModeFeatures {
            f_res_hz: v[o],
            normalized_shift: v[o + 1],
            depth_db: v[o + 2],
            q_factor: v[o + 3],
        };
        ResonanceFeatures {
            modes: [mode(0), mode(4)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionOptions {
    /// Minimum excursion below the baseline for a notch to count, in dB.
    pub prominence_db: f64,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions { prominence_db: 3.0 }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Index ranges `[start, end)` where the trace sits below `threshold`.
/// Neighbouring runs are merged when the gap between them never climbs back
/// above `rejoin`, so noise near the threshold does not split a notch.
fn dip_runs(values: &[f64], threshold: f64, rejoin: f64) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i] < threshold {
            let start = i;
            while i < values.len() && values[i] < threshold {
                i += 1;
            }
            match runs.last_mut() {
                Some(last) if values[last.1..start].iter().all(|&v| v < rejoin) => last.1 = i,
                _ => runs.push((start, i)),
            }
        } else {
            i += 1;
        }
    }
    runs
}

/// Vertex of the parabola through three samples, `(x, y)`. Falls back to the
/// middle sample when the points are not convex.
fn parabolic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let (u0, u2) = (p0.0 - p1.0, p2.0 - p1.0);
    let (d0, d2) = (p0.1 - p1.1, p2.1 - p1.1);
    let det = u0 * u2 * (u0 - u2);
    let a = (d0 * u2 - d2 * u0) / det;
    let b = (d2 * u0 * u0 - d0 * u2 * u2) / det;
    if !(a > 0.0) {
        return p1;
    }
    let u = (-b / (2.0 * a)).clamp(u0, u2);
    (p1.0 + u, p1.1 + a * u * u + b * u)
}

fn crossing(f: &[f64], s: &[f64], inside: usize, outside: usize, level: f64) -> f64 {
    let t = (level - s[inside]) / (s[outside] - s[inside]);
    f[inside] + t * (f[outside] - f[inside])
}

struct Dip {
    f_res: f64,
    depth: f64,
    q: f64,
}

fn measure_dip(f: &[f64], s: &[f64], run: (usize, usize), baseline: f64) -> Result<Dip> {
    let k = (run.0..run.1)
        .min_by(|&a, &b| s[a].total_cmp(&s[b]))
        .expect("runs are non-empty");
    if k == 0 || k + 1 == s.len() {
        return Err(Error::BandEdge { frequency_hz: f[k] });
    }
    let (f_res, s_min) = parabolic_vertex((f[k - 1], s[k - 1]), (f[k], s[k]), (f[k + 1], s[k + 1]));
    let depth = baseline - s_min;
    let level = s_min + 0.5 * depth;
    let left = (0..k)
        .rev()
        .find(|&j| s[j] >= level)
        .map(|j| crossing(f, s, j + 1, j, level));
    let right = (k + 1..s.len())
        .find(|&j| s[j] >= level)
        .map(|j| crossing(f, s, j - 1, j, level));
    match (left, right) {
        (Some(lo), Some(hi)) if hi > lo => Ok(Dip {
            f_res,
            depth,
            q: f_res / (hi - lo),
        }),
        _ => Err(Error::BandEdge { frequency_hz: f_res }),
    }
}

/// Extract both harmonics' descriptors from `trace` (`(Hz, dB)` pairs with
/// strictly increasing frequency).
pub fn extract(
    trace: &[(f64, f64)],
    unloaded_f0s: [f64; 2],
    options: &ExtractionOptions,
) -> Result<ResonanceFeatures> {
    if trace.len() < 5 {
        return Err(domain!("trace has {} points; at least 5 are needed", trace.len()));
    }
    let (f, s): (Vec<f64>, Vec<f64>) = trace.iter().copied().unzip();
    if f.windows(2).any(|w| !(w[1] > w[0])) || s.iter().any(|v| !v.is_finite()) {
        return Err(domain!("trace must be finite with strictly increasing frequency"));
    }
    if !(options.prominence_db > 0.0) {
        return Err(domain!("prominence threshold must be positive"));
    }
    let baseline = median(&s);
    let runs = dip_runs(
        &s,
        baseline - options.prominence_db,
        baseline - 0.5 * options.prominence_db,
    );
    if runs.len() != 2 {
        return Err(Error::DipCount(runs.len()));
    }
    let dips = [
        measure_dip(&f, &s, runs[0], baseline)?,
        measure_dip(&f, &s, runs[1], baseline)?,
    ];

    // pick the dip-to-mode assignment closest to the unloaded resonances
    let cost = |a: usize, b: usize| {
        (dips[a].f_res - unloaded_f0s[0]).abs() + (dips[b].f_res - unloaded_f0s[1]).abs()
    };
    let order = if cost(1, 0) < cost(0, 1) { [1, 0] } else { [0, 1] };
    let mode = |m: usize| {
        let d = &dips[order[m]];
        ModeFeatures {
            f_res_hz: d.f_res,
            normalized_shift: (d.f_res - unloaded_f0s[m]) / unloaded_f0s[m],
            depth_db: d.depth,
            q_factor: d.q,
        }
    };
    Ok(ResonanceFeatures {
        modes: [mode(0), mode(1)],
    })
}

/// One row of the resonance-feature dataset: one `(oil, z)` trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub height_mm: f64,
    pub features: ResonanceFeatures,
    pub label: Option<usize>,
}

impl FeatureRecord {
    fn values(&self) -> [f64; 9] {
        let mut v = [0.0; 9];
        v[0] = self.height_mm;
        v[1..].copy_from_slice(&self.features.to_array());
        v
    }

    pub fn is_complete(&self) -> bool {
        self.label.is_some() && self.values().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub records: Vec<FeatureRecord>,
    pub manifest: Option<GenerationManifest>,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

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
        for l in self.records.iter().filter_map(|r| r.label) {
            if l >= counts.len() {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        counts
    }

    /// Drop incomplete rows and exact repeats, keeping first occurrences.
    pub fn clean(&self) -> FeatureDataset {
        let mut seen = HashSet::new();
        let records = self
            .records
            .iter()
            .filter(|r| {
                let key: Vec<u64> = r.values().iter().map(|v| (v + 0.0).to_bits()).collect();
                r.is_complete() && seen.insert((key, r.label))
            })
            .copied()
            .collect();
        FeatureDataset {
            records,
            manifest: self.manifest.clone(),
        }
    }

    pub fn to_matrix(&self) -> Result<FeatureMatrix> {
        let mut values = Vec::with_capacity(self.records.len() * 9);
        let mut labels = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            match r.label {
                Some(l) if r.is_complete() => labels.push(l),
                _ => return Err(domain!("record {i} has missing fields; clean the dataset first")),
            }
            values.extend_from_slice(&r.values());
        }
        FeatureMatrix::new(
            FEATURE_CSV_HEADER[..9].iter().map(|s| s.to_string()).collect(),
            values,
            labels,
            self.class_count(),
        )
    }

    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for r in &self.records {
            for v in r.values() {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update(r.label.map_or(u64::MAX, |l| l as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Generate one trace per `(oil, z)` on `f_grid_hz` and reduce each to its
/// resonance descriptors. The noise streams match [`dataset::generate`].
pub fn generate_feature_dataset(
    resonator: &ResonatorModel,
    materials: &[MaterialModel],
    z_grid_mm: &[f64],
    f_grid_hz: &[f64],
    noise_sigma_db: f64,
    seed: u64,
    options: &ExtractionOptions,
) -> Result<FeatureDataset> {
    resonator.validate()?;
    let materials = dataset::labelled_materials(materials)?;
    dataset::check_z_grid(z_grid_mm)?;
    check_frequency_grid(f_grid_hz, resonator.band_hz)?;
    let n_z = z_grid_mm.len();
    let f0s = resonator.unloaded_f0s();
    let jobs: Vec<(usize, usize)> = (0..materials.len())
        .flat_map(|o| (0..n_z).map(move |z| (o, z)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(o, zi)| {
            let z = z_grid_mm[zi];
            let trace = resonator.s21_response(
                &materials[o],
                z,
                f_grid_hz,
                noise_sigma_db,
                dataset::trace_seed(seed, o, zi, n_z),
            )?;
            let features = extract(&trace, f0s, options).map_err(|e| {
                domain!("feature extraction failed for {} at z = {z} mm: {e}", materials[o].name)
            })?;
            Ok(FeatureRecord {
                height_mm: z,
                features,
                label: Some(o),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = FeatureDataset {
        records,
        manifest: None,
    };
    data.manifest = Some(GenerationManifest {
        schema_version: RESONANCE_SCHEMA_VERSION.to_owned(),
        seed,
        noise_sigma_db,
        resonator: resonator.clone(),
        materials,
        z_grid_mm: z_grid_mm.to_vec(),
        f_grid_hz: f_grid_hz.to_vec(),
        record_count: data.records.len(),
        dataset_sha256: data.sha256(),
        config_hash: None,
    });
    Ok(data)
}

pub fn export_feature_csv(data: &FeatureDataset, path: &Path) -> Result<()> {
    let mut out = dataset::io::create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", FEATURE_CSV_HEADER.join(",")).map_err(io)?;
    for r in &data.records {
        let cells: Vec<String> = r.values().iter().map(|&v| dataset::io::format_f64(v)).collect();
        writeln!(
            out,
            "{},{}",
            cells.join(","),
            r.label.map(|l| l.to_string()).unwrap_or_default()
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn import_feature_csv(path: &Path) -> Result<FeatureDataset> {
    let rows = dataset::io::read_rows(path, &FEATURE_CSV_HEADER)?;
    let records = rows
        .iter()
        .map(|(line, row)| {
            let mut v = [0.0; 9];
            for (j, cell) in v.iter_mut().enumerate() {
                *cell = dataset::io::parse_f64(&row[j], *line, FEATURE_CSV_HEADER[j])?;
            }
            let mut features = [0.0; 8];
            features.copy_from_slice(&v[1..]);
            Ok(FeatureRecord {
                height_mm: v[0],
                features: ResonanceFeatures::from_array(features),
                label: dataset::io::parse_label(&row[9], *line)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest_path = dataset::manifest_path_for(path);
    let manifest = if manifest_path.exists() {
        Some(dataset::read_manifest(&manifest_path)?)
    } else {
        None
    };
    Ok(FeatureDataset { records, manifest })
}
