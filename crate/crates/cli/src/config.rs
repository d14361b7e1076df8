//! Run configuration: a TOML file where every key is optional, plus
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oilsense_core::classifiers::{ModelConfig, ModelKind};
use oilsense_core::dataset::{geometric_grid, linear_grid, SplitOptions};
use oilsense_core::dielectric::{default_material_library, MaterialModel};
use oilsense_core::features::ExtractionOptions;
use oilsense_core::resonator::ResonatorModel;
use oilsense_core::seed::derive_seed;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One `(height, frequency, S21)` row per sample.
    Raw,
    /// One row of resonance descriptors per trace.
    Resonance,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Raw => "raw",
            FeatureMode::Resonance => "resonance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn values(&self) -> oilsense_core::Result<Vec<f64>> {
        match self.spacing {
            Spacing::Linear => linear_grid(self.start, self.stop, self.points),
            Spacing::Geometric => geometric_grid(self.start, self.stop, self.points),
        }
    }
}

/// Debye parameters of one oil; the table key is its name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub eps_static: f64,
    pub eps_inf: f64,
    /// Seconds.
    pub tau: f64,
    #[serde(default)]
    pub sigma_dc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratified: bool,
    pub trace_grouped: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitOptions::default();
        SplitConfig {
            train_fraction: d.train_fraction,
            stratified: d.stratified,
            trace_grouped: d.trace_grouped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub materials: BTreeMap<String, MaterialEntry>,
    pub resonator: ResonatorModel,
    /// Standoff heights in mm.
    pub z_grid: GridSpec,
    /// Sweep frequencies in Hz for the raw dataset.
    pub f_grid: GridSpec,
    /// Sweep used when traces are reduced to resonance descriptors; it must
    /// resolve each notch with several points per linewidth.
    pub resonance_f_grid: GridSpec,
    pub noise_sigma_db: f64,
    pub feature_mode: FeatureMode,
    pub extraction: ExtractionOptions,
    pub split: SplitConfig,
    /// Models trained and evaluated by default.
    pub train_models: Vec<ModelKind>,
    pub models: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            materials: default_material_library()
                .into_iter()
                .map(|m| {
                    let entry = MaterialEntry {
                        eps_static: m.eps_static,
                        eps_inf: m.eps_inf,
                        tau: m.tau,
                        sigma_dc: m.sigma_dc,
                    };
                    (m.name, entry)
                })
                .collect(),
            resonator: ResonatorModel::default(),
            z_grid: GridSpec { start: 0.001, stop: 50.0, points: 100, spacing: Spacing::Geometric },
            f_grid: GridSpec { start: 1e9, stop: 4e9, points: 301, spacing: Spacing::Linear },
            resonance_f_grid: GridSpec { start: 1e9, stop: 4e9, points: 3001, spacing: Spacing::Linear },
            noise_sigma_db: 0.05,
            feature_mode: FeatureMode::Raw,
            extraction: ExtractionOptions::default(),
            split: SplitConfig::default(),
            train_models: ModelKind::ALL.to_vec(),
            models: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Keep only the named oils.
    pub fn restrict_oils(&mut self, names: &[String]) -> Result<(), CliError> {
        let mut kept = BTreeMap::new();
        for name in names {
            let name = name.trim();
            let entry = self
                .materials
                .get(name)
                .ok_or_else(|| CliError::Config(format!("oil `{name}` is not in the material table")))?;
            kept.insert(name.to_owned(), *entry);
        }
        self.materials = kept;
        Ok(())
    }

    pub fn material_models(&self) -> Vec<MaterialModel> {
        self.materials
            .iter()
            .map(|(name, m)| MaterialModel {
                name: name.clone(),
                eps_static: m.eps_static,
                eps_inf: m.eps_inf,
                tau: m.tau,
                sigma_dc: m.sigma_dc,
            })
            .collect()
    }

    pub fn split_options(&self) -> SplitOptions {
        SplitOptions {
            train_fraction: self.split.train_fraction,
            stratified: self.split.stratified,
            trace_grouped: self.split.trace_grouped,
            seed: derive_seed(self.seed, "split", 0),
        }
    }

    pub fn model_seed(&self, kind: ModelKind) -> u64 {
        derive_seed(self.seed, "model", kind as u64)
    }

    /// SHA-256 of everything that shapes the artifacts. The output directory
    /// and the list of models to run are left out, so moving a run or
    /// training a subset keeps the hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
            map.remove("train_models");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.out_dir.join(match self.feature_mode {
            FeatureMode::Raw => "dataset.csv",
            FeatureMode::Resonance => "features.csv",
        })
    }

    pub fn split_path(&self) -> PathBuf {
        self.out_dir.join("split.json")
    }

    pub fn model_path(&self, kind: ModelKind) -> PathBuf {
        self.out_dir.join("models").join(format!("{kind}.model"))
    }
}
