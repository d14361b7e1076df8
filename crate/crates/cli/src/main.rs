use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oilsense_cli::{cmd_evaluate, cmd_generate, cmd_reproduce, cmd_train, CliError, FeatureMode, RunConfig};
use oilsense_core::classifiers::ModelKind;

#[derive(Parser)]
#[command(name = "oilsense", version, about = "Classify oils from simulated resonator sweeps")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated models: logistic, knn, forest, svm.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated oil names from the material table.
    #[arg(long, global = true, value_delimiter = ',')]
    oils: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    feature_mode: Option<FeatureMode>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accept artifacts made under a different configuration.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sweep dataset and write it with its manifest.
    Generate,
    /// Split, standardize and fit the selected models.
    Train {
        /// Dataset CSV; defaults to the one in the output directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate saved models on the held-out split.
    Evaluate {
        /// Model files; defaults to the selected models in the output directory.
        #[arg(long = "model")]
        model_files: Vec<PathBuf>,
        /// Split manifest; defaults to `split.json` in the output directory.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Generate, train and evaluate, then write a summary.
    Reproduce,
    /// Print the effective configuration as TOML.
    Config,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(names) = &cli.models {
        cfg.train_models = names
            .iter()
            .filter(|n| !n.trim().is_empty())
            .map(|n| n.parse::<ModelKind>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    if let Some(oils) = &cli.oils {
        cfg.restrict_oils(oils)?;
    }
    if let Some(mode) = cli.feature_mode {
        cfg.feature_mode = mode;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let g = cmd_generate(&cfg)?;
            println!("{} rows written to {}", g.rows, g.path.display());
            for (name, count) in g.labels.iter().zip(&g.class_counts) {
                println!("  {name}: {count}");
            }
        }
        Command::Train { dataset } => {
            let t = cmd_train(&cfg, dataset.as_deref(), cli.force)?;
            println!("{} train / {} test rows; split saved to {}", t.train_rows, t.test_rows, t.split_path.display());
            for (kind, path) in &t.model_paths {
                println!("  {kind}: {}", path.display());
            }
        }
        Command::Evaluate { model_files, split } => {
            let e = cmd_evaluate(&cfg, model_files, split.as_deref(), cli.force)?;
            print!("{}", e.table.to_text());
        }
        Command::Reproduce => {
            let r = cmd_reproduce(&cfg)?;
            print!("{}", r.summary);
            println!("summary written to {}", r.summary_path.display());
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
