//! Four classifiers behind one train / score / predict interface.
//!
//! Every model scores a row with one real per class; prediction is the
//! argmax of those scores with ties going to the lower class index.

pub mod forest;
pub mod knn;
pub mod logistic;
mod persist;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::matrix::FeatureMatrix;

pub use forest::{train_forest, ForestModel, ForestParams};
pub use knn::{train_knn, KnnModel, KnnParams};
pub use logistic::{train_logistic, LogisticModel, LogisticParams};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION};
pub use svm::{train_svm, Kernel, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Knn,
    Forest,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Logistic,
        ModelKind::Knn,
        ModelKind::Forest,
        ModelKind::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Knn => "knn",
            ModelKind::Forest => "forest",
            ModelKind::Svm => "svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| domain!("unknown model `{s}`; expected logistic, knn, forest or svm"))
    }
}

/// Hyperparameters of every model kind, each with its conventional default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub logistic: LogisticParams,
    pub knn: KnnParams,
    pub forest: ForestParams,
    pub svm: SvmParams,
}

impl ModelConfig {
    pub fn hyperparameters(&self, kind: ModelKind) -> Hyperparameters {
        match kind {
            ModelKind::Logistic => Hyperparameters::Logistic(self.logistic),
            ModelKind::Knn => Hyperparameters::Knn(self.knn),
            ModelKind::Forest => Hyperparameters::Forest(self.forest),
            ModelKind::Svm => Hyperparameters::Svm(self.svm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hyperparameters {
    Logistic(LogisticParams),
    Knn(KnnParams),
    Forest(ForestParams),
    Svm(SvmParams),
}

impl Hyperparameters {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Logistic(_) => ModelKind::Logistic,
            Hyperparameters::Knn(_) => ModelKind::Knn,
            Hyperparameters::Forest(_) => ModelKind::Forest,
            Hyperparameters::Svm(_) => ModelKind::Svm,
        }
    }
}

/// How a model was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub training_rows: usize,
    pub columns: Vec<String>,
    /// Class names by label, when known.
    #[serde(default)]
    pub labels: Vec<String>,
    /// Non-fatal training diagnostics, such as an SVM stopping early.
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelParams {
    Logistic(LogisticModel),
    Knn(KnnModel),
    Forest(ForestModel),
    Svm(SvmModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub class_count: usize,
    pub n_features: usize,
    pub manifest: TrainingManifest,
    pub params: ModelParams,
}

impl TrainedModel {
    pub(crate) fn new(data: &FeatureMatrix, hyperparameters: Hyperparameters, seed: u64, params: ModelParams) -> Self {
        TrainedModel {
            class_count: data.class_count(),
            n_features: data.n_cols(),
            manifest: TrainingManifest {
                hyperparameters,
                seed,
                training_rows: data.n_rows(),
                columns: data.columns().to_vec(),
                labels: Vec::new(),
                warnings: Vec::new(),
                config_hash: None,
            },
            params,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Logistic(_) => ModelKind::Logistic,
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::Svm(_) => ModelKind::Svm,
        }
    }

    /// One row of `class_count` scores per input row: probabilities for
    /// logistic, vote fractions for KNN and forest, raw margins for SVM.
    pub fn score(&self, data: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        data.check_columns(self.n_features)?;
        let rows = 0..data.n_rows();
        Ok(match &self.params {
            ModelParams::Logistic(m) => rows.into_par_iter().map(|i| m.score_row(data.row(i))).collect(),
            ModelParams::Knn(m) => {
                let index = m.index();
                rows.into_par_iter().map(|i| index.score_row(data.row(i))).collect()
            }
            ModelParams::Forest(m) => rows.into_par_iter().map(|i| m.score_row(data.row(i))).collect(),
            ModelParams::Svm(m) => rows.into_par_iter().map(|i| m.score_row(data.row(i))).collect(),
        })
    }

    pub fn predict(&self, data: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self.score(data)?.iter().map(|s| argmax(s)).collect())
    }
}

/// Index of the largest score; the first one wins a tie.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

pub fn train(data: &FeatureMatrix, hyperparameters: &Hyperparameters, seed: u64) -> Result<TrainedModel> {
    match hyperparameters {
        Hyperparameters::Logistic(p) => train_logistic(data, p, seed),
        Hyperparameters::Knn(p) => train_knn(data, p, seed),
        Hyperparameters::Forest(p) => train_forest(data, p, seed),
        Hyperparameters::Svm(p) => train_svm(data, p, seed),
    }
}

pub(crate) fn check_training_data(data: &FeatureMatrix) -> Result<()> {
    if data.n_rows() == 0 {
        return Err(domain!("training set is empty"));
    }
    Ok(())
}
