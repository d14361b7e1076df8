use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use oilsense_core::classifiers::{self, load_model, save_model, ModelKind, TrainedModel};
use oilsense_core::dataset::{
    self, export_csv, import_csv, manifest_path_for, split_standardize_matrix, write_manifest, GenerationManifest,
    Scaler, SplitOptions,
};
use oilsense_core::evaluation::{self, compare, metrics_svg, roc_svg, write_report, write_roc_csv, ComparisonTable, EvalReport};
use oilsense_core::features::{export_feature_csv, generate_feature_dataset, import_feature_csv};
use oilsense_core::{Error, FeatureMatrix};

use crate::config::{FeatureMode, RunConfig};
use crate::{CliError, Context};

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub path: PathBuf,
    pub rows: usize,
    pub labels: Vec<String>,
    pub class_counts: Vec<usize>,
    pub sha256: String,
}

/// Simulate every `(oil, z)` trace and write the dataset with its manifest.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateOutcome, CliError> {
    let path = cfg.dataset_path();
    let materials = cfg.material_models();
    let z = cfg.z_grid.values().context("z grid")?;
    let hash = Some(cfg.hash());
    let (manifest, rows, class_counts) = match cfg.feature_mode {
        FeatureMode::Raw => {
            let f = cfg.f_grid.values().context("frequency grid")?;
            let mut data = dataset::generate(&cfg.resonator, &materials, &z, &f, cfg.noise_sigma_db, cfg.seed)
                .context("generating the dataset")?;
            let manifest = data.manifest.as_mut().expect("generated data has a manifest");
            manifest.config_hash = hash;
            export_csv(&data, &path).context("writing the dataset")?;
            (data.manifest.clone().unwrap(), data.len(), data.class_counts())
        }
        FeatureMode::Resonance => {
            let f = cfg.resonance_f_grid.values().context("resonance frequency grid")?;
            let mut data = generate_feature_dataset(
                &cfg.resonator,
                &materials,
                &z,
                &f,
                cfg.noise_sigma_db,
                cfg.seed,
                &cfg.extraction,
            )
            .context("generating the resonance-feature dataset")?;
            data.manifest.as_mut().expect("generated data has a manifest").config_hash = hash;
            export_feature_csv(&data, &path).context("writing the dataset")?;
            (data.manifest.clone().unwrap(), data.len(), data.class_counts())
        }
    };
    write_manifest(&manifest, &manifest_path_for(&path)).context("writing the manifest")?;
    log::info!("wrote {} rows to {}", rows, path.display());
    Ok(GenerateOutcome {
        path,
        rows,
        labels: manifest.labels(),
        class_counts,
        sha256: manifest.dataset_sha256,
    })
}

/// A cleaned dataset as a feature matrix.
struct Loaded {
    matrix: FeatureMatrix,
    groups: Option<Vec<u64>>,
    manifest: Option<GenerationManifest>,
    sha256: String,
}

fn load_dataset(path: &Path, mode: FeatureMode, trace_grouped: bool) -> Result<Loaded, CliError> {
    let what = format!("loading {}", path.display());
    if !path.exists() {
        return Err(CliError::Core {
            context: format!("{what} (run `oilsense generate` first)"),
            source: Error::Io { path: path.to_owned(), source: std::io::ErrorKind::NotFound.into() },
        });
    }
    match mode {
        FeatureMode::Raw => {
            let raw = import_csv(path).context(&what)?;
            let data = dataset::clean(&raw);
            if data.len() < raw.len() {
                log::warn!("dropped {} incomplete or repeated rows", raw.len() - data.len());
            }
            Ok(Loaded {
                matrix: data.to_matrix().context(&what)?,
                groups: trace_grouped.then(|| data.trace_groups()),
                sha256: data.sha256(),
                manifest: data.manifest,
            })
        }
        FeatureMode::Resonance => {
            let raw = import_feature_csv(path).context(&what)?;
            let data = raw.clean();
            if data.len() < raw.len() {
                log::warn!("dropped {} incomplete or repeated rows", raw.len() - data.len());
            }
            // every row is its own trace, so grouping changes nothing
            Ok(Loaded { matrix: data.to_matrix().context(&what)?, groups: None, sha256: data.sha256(), manifest: data.manifest })
        }
    }
}

fn check_hash(artifact: &Path, found: Option<&str>, expected: &str, force: bool) -> Result<(), CliError> {
    match found {
        Some(found) if found != expected => {
            if force {
                log::warn!("{} comes from configuration {found}; continuing because of --force", artifact.display());
                Ok(())
            } else {
                Err(CliError::HashMismatch { artifact: artifact.to_owned(), found: found.to_owned(), expected: expected.to_owned() })
            }
        }
        Some(_) => Ok(()),
        None => {
            log::warn!("{} carries no configuration hash", artifact.display());
            Ok(())
        }
    }
}

/// Which rows went where, and the scaler fitted on the training side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config_hash: String,
    /// Relative paths are relative to the directory holding this file.
    pub dataset: PathBuf,
    /// Hash of the cleaned dataset the indices refer to.
    pub dataset_sha256: String,
    pub feature_mode: FeatureMode,
    pub options: SplitOptions,
    pub labels: Vec<String>,
    pub scaler: Scaler,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub split_path: PathBuf,
    pub model_paths: Vec<(ModelKind, PathBuf)>,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Split and standardize the dataset, then fit and save each selected model.
pub fn cmd_train(cfg: &RunConfig, dataset_path: Option<&Path>, force: bool) -> Result<TrainOutcome, CliError> {
    if cfg.train_models.is_empty() {
        return Err(CliError::Usage("no models selected".into()));
    }
    let hash = cfg.hash();
    let path = dataset_path.map_or_else(|| cfg.dataset_path(), Path::to_owned);
    let loaded = load_dataset(&path, cfg.feature_mode, cfg.split.trace_grouped)?;
    check_hash(&path, loaded.manifest.as_ref().and_then(|m| m.config_hash.as_deref()), &hash, force)?;
    let labels = loaded.manifest.as_ref().map(|m| m.labels()).unwrap_or_default();

    let options = cfg.split_options();
    let split = split_standardize_matrix(&loaded.matrix, loaded.groups.as_deref(), &options).context("splitting")?;
    log::info!("split {} train / {} test rows", split.train.n_rows(), split.test.n_rows());

    let mut model_paths = Vec::new();
    for &kind in &cfg.train_models {
        log::info!("training {kind}");
        let mut model = classifiers::train(&split.train, &cfg.models.hyperparameters(kind), cfg.model_seed(kind))
            .context(format!("training {kind}"))?;
        model.manifest.labels = labels.clone();
        model.manifest.config_hash = Some(hash.clone());
        let out = cfg.model_path(kind);
        save_model(&model, &out).context(format!("saving {kind}"))?;
        model_paths.push((kind, out));
    }

    let split_path = cfg.split_path();
    let split_dir = split_path.parent().unwrap_or(Path::new(""));
    let manifest = SplitManifest {
        config_hash: hash,
        dataset: path.strip_prefix(split_dir).map(Path::to_owned).unwrap_or_else(|_| std::path::absolute(&path).unwrap_or(path.clone())),
        dataset_sha256: loaded.sha256,
        feature_mode: cfg.feature_mode,
        options,
        labels,
        scaler: split.scaler,
        train: split.indices.train,
        test: split.indices.test,
    };
    write_json(&manifest, &split_path)?;
    Ok(TrainOutcome {
        split_path,
        model_paths,
        train_rows: split.train.n_rows(),
        test_rows: split.test.n_rows(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Core { context: "writing".into(), source: Error::Io { path: path.to_owned(), source: e } };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    std::fs::write(path, text).map_err(io)
}

fn write_text(text: &str, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Core { context: "writing".into(), source: Error::Io { path: path.to_owned(), source: e } })
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub reports: Vec<EvalReport>,
    pub table: ComparisonTable,
}

/// Score saved models on the held-out rows and write reports and charts.
/// With no explicit model files, the configured models are read from the
/// output directory.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    model_paths: &[PathBuf],
    split_path: Option<&Path>,
    force: bool,
) -> Result<EvaluateOutcome, CliError> {
    let model_paths: Vec<PathBuf> = if model_paths.is_empty() {
        cfg.train_models.iter().map(|&k| cfg.model_path(k)).collect()
    } else {
        model_paths.to_vec()
    };
    if model_paths.is_empty() {
        return Err(CliError::Usage("no models to evaluate".into()));
    }
    let hash = cfg.hash();
    let split_path = split_path.map_or_else(|| cfg.split_path(), Path::to_owned);
    if !split_path.exists() {
        return Err(CliError::Core {
            context: "no test split found; run `oilsense train` first".into(),
            source: Error::Io { path: split_path, source: std::io::ErrorKind::NotFound.into() },
        });
    }
    let text = std::fs::read_to_string(&split_path)
        .map_err(|e| CliError::Core { context: "reading the split".into(), source: Error::Io { path: split_path.clone(), source: e } })?;
    let split: SplitManifest = serde_json::from_str(&text).map_err(|e| CliError::Core {
        context: format!("reading {}", split_path.display()),
        source: Error::Schema(e.to_string()),
    })?;
    check_hash(&split_path, Some(&split.config_hash), &hash, force)?;

    let dataset_path = if split.dataset.is_relative() {
        split_path.parent().unwrap_or(Path::new("")).join(&split.dataset)
    } else {
        split.dataset.clone()
    };
    let loaded = load_dataset(&dataset_path, split.feature_mode, false)?;
    if loaded.sha256 != split.dataset_sha256 {
        return Err(CliError::Core {
            context: format!("{} changed after the split was made; rerun `oilsense train`", dataset_path.display()),
            source: Error::Schema("dataset hash mismatch".into()),
        });
    }
    let test = split.scaler.transform(&loaded.matrix.select(&split.test)).context("standardizing the test rows")?;

    let mut reports = Vec::new();
    for path in &model_paths {
        let model: TrainedModel = load_model(path).context(format!("loading {}", path.display()))?;
        check_hash(path, model.manifest.config_hash.as_deref(), &hash, force)?;
        let mut report = evaluation::evaluate(&model, &test).context(format!("evaluating {}", path.display()))?;
        if !split.labels.is_empty() {
            report.labels = split.labels.clone();
        }
        log::info!("{}: accuracy {:.4}, macro AUC {:.4}", report.model, report.accuracy, report.macro_auc);
        reports.push(report);
    }

    let out = &cfg.out_dir;
    for r in &reports {
        write_report(r, &out.join("reports").join(format!("{}.json", r.model))).context("writing a report")?;
    }
    let named: Vec<(&str, &EvalReport)> = reports.iter().map(|r| (r.model.as_str(), r)).collect();
    let table = compare(named.iter().copied());
    write_json(&table, &out.join("reports").join("comparison.json"))?;
    write_text(&table.to_text(), &out.join("reports").join("comparison.txt"))?;
    write_roc_csv(named.iter().copied(), &out.join("roc.csv")).context("writing roc.csv")?;
    write_text(&roc_svg(&named), &out.join("roc.svg"))?;
    write_text(&metrics_svg(&table), &out.join("metrics.svg"))?;
    Ok(EvaluateOutcome { reports, table })
}

/// Reported accuracy and AUC for each model, used as qualitative targets.
pub const PUBLISHED_TARGETS: [(ModelKind, &str, f64); 4] = [
    (ModelKind::Forest, "0.9941", 1.00),
    (ModelKind::Knn, "> 0.98", 0.99),
    (ModelKind::Svm, "> 0.98", 0.99),
    (ModelKind::Logistic, "0.5352", 0.68),
];

#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub generate: GenerateOutcome,
    pub train: TrainOutcome,
    pub evaluate: EvaluateOutcome,
    pub summary_path: PathBuf,
    pub summary: String,
}

pub fn summary_text(cfg: &RunConfig, generated: &GenerateOutcome, evaluated: &EvaluateOutcome) -> String {
    let mut s = String::from("# Reproduction summary\n\n");
    let _ = writeln!(s, "configuration hash: `{}`", cfg.hash());
    let _ = writeln!(s, "dataset: {} rows ({} mode), sha256 `{}`\n", generated.rows, cfg.feature_mode, generated.sha256);
    s += "Targets are the published figures from a full-wave simulated dataset. They are qualitative\n";
    s += "targets: the surrogate data here is not expected to match them numerically.\n\n";
    s += "| model | accuracy | target accuracy | macro AUC | target AUC |\n";
    s += "|---|---|---|---|---|\n";
    for row in &evaluated.table.rows {
        let target = PUBLISHED_TARGETS.iter().find(|t| t.0.name() == row.model);
        let (acc, auc) = target.map_or(("-".to_owned(), "-".to_owned()), |t| (t.1.to_owned(), format!("{:.2}", t.2)));
        let _ = writeln!(s, "| {} | {:.4} | {acc} | {:.4} | {auc} |", row.model, row.accuracy, row.macro_auc);
    }
    s += "\n```\n";
    s += &evaluated.table.to_text();
    s += "```\n";
    s
}

/// Generate, train and evaluate in one run, then write `summary.md`.
pub fn cmd_reproduce(cfg: &RunConfig) -> Result<ReproduceOutcome, CliError> {
    let generate = cmd_generate(cfg)?;
    let train = cmd_train(cfg, Some(&generate.path), false)?;
    let evaluate = cmd_evaluate(cfg, &[], Some(&train.split_path), false)?;
    let summary = summary_text(cfg, &generate, &evaluate);
    let summary_path = cfg.out_dir.join("summary.md");
    write_text(&summary, &summary_path)?;
    Ok(ReproduceOutcome { generate, train, evaluate, summary_path, summary })
}
