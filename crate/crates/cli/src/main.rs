//! `lodgeclass`: config-driven front end to the staged pipeline.
//!
//! Exit codes: 0 on success, 1 when a stage fails at runtime, 2 for usage
//! and configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lodgeclass::pipeline::{Pipeline, PipelineConfig};
use lodgeclass::Error;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "lodgeclass",
    version,
    about = "Cluster short-term rental listings into property classes"
)]
struct Cli {
    /// TOML config file; flags given on the command line override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for generation and clustering.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic property file with planted clusters.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        /// Number of planted clusters (required unless the config sets `synthetic_k`).
        #[arg(long)]
        k: Option<usize>,
        /// Center separation in within-cluster standard deviations.
        #[arg(long)]
        sep: Option<f64>,
        #[arg(long)]
        urban_fraction: Option<f64>,
    },
    /// Load, window-filter and join the property records.
    Ingest,
    /// Fit and apply the transform plan.
    Preprocess,
    /// Fit PCA and build the clustering space.
    Pca,
    /// Fit k-means and k-medoids.
    Cluster,
    /// Sweep k and pick the elbow.
    Elbow,
    /// Score both models, cross-tabulate and select one.
    Validate,
    /// Profile the selected clustering.
    Profile,
    /// Every stage in order, plus a run manifest.
    Run,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn print<T: Serialize>(stage: &str, value: &T) {
    match serde_json::to_string(value) {
        Ok(json) => println!("{stage}: {json}"),
        Err(_) => println!("{stage}: done"),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Command::Generate {
        n,
        k,
        sep,
        urban_fraction,
    } = &cli.command
    {
        config.synthetic_n = n.or(config.synthetic_n);
        config.synthetic_k = k.or(config.synthetic_k);
        config.synthetic_sep = sep.or(config.synthetic_sep);
        config.synthetic_urban_fraction = urban_fraction.or(config.synthetic_urban_fraction);
        if config.synthetic_k.is_none() {
            return Err(Failure::Usage(
                "generate needs --k (or `synthetic_k` in the config)".into(),
            ));
        }
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let pipeline = Pipeline::new(load_config(cli)?)?;
    match cli.command {
        Command::Generate { .. } => print("generate", &pipeline.generate()?),
        Command::Ingest => print("ingest", &pipeline.ingest()?),
        Command::Preprocess => print("preprocess", &pipeline.preprocess()?),
        Command::Pca => print("pca", &pipeline.pca()?),
        Command::Cluster => print("cluster", &pipeline.cluster()?),
        Command::Elbow => {
            let curve = pipeline.elbow()?;
            if !curve.knee_detected {
                eprintln!(
                    "warning: no knee detected; falling back to k = {}",
                    curve.selected_k
                );
            }
            print("elbow", &curve);
        }
        Command::Validate => print("validate", &pipeline.validate()?.selected),
        Command::Profile => print("profile", &pipeline.profile()?),
        Command::Run => {
            let (manifest, result) = pipeline.run();
            result?;
            println!(
                "run: selected {} (elbow k = {}), outputs in {}",
                manifest.selected_model.unwrap_or_default(),
                manifest
                    .elbow_selected_k
                    .map_or_else(|| "-".into(), |k| k.to_string()),
                pipeline.config().out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
