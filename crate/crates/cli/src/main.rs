use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use spectral_risk_cli::config::{resolve, Overrides, RawConfig};
use spectral_risk_cli::pipeline;

/// Relative heat-risk indexing from census features.
///
/// Verbosity is controlled by the SPECTRAL_RISK_LOG environment variable
/// (standard log filter syntax, e.g. `info` or `spectral_risk=debug`).
#[derive(Parser)]
#[command(name = "spectral-risk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; flags given here override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input census CSV
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory (default: out)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Tail rule for the exposure cluster
    #[arg(long, value_parser = ["mean", "mean_std"])]
    tail_exposure: Option<String>,
    /// Tail rule for the vulnerability cluster
    #[arg(long, value_parser = ["mean", "mean_std"])]
    tail_vulnerability: Option<String>,
    /// Solver stopping gap
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Solver iteration cap
    #[arg(long)]
    max_iter: Option<usize>,
    /// Re-check every score through the full matrix-square-root fidelity
    #[arg(long)]
    verify_fidelity: bool,
    /// Verify the solver against the brute-force grid oracle
    #[arg(long)]
    run_oracle: bool,
    /// Emit SVG histograms of indicators and similarity distributions
    #[arg(long)]
    emit_histograms: bool,
    /// GeoJSON boundary file to annotate with risk indices
    #[arg(long)]
    geojson: Option<PathBuf>,
    /// Missing-value policy for the input CSV
    #[arg(long, value_parser = ["reject", "zero"])]
    impute: Option<String>,
    /// Suppress the summary printed to standard error
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: preprocess, estimate references, score, export
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit preprocessed feature vectors for inspection
    Preprocess {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimate and export the reference matrices only
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score localities against previously estimated references
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Reference JSON (default: `<out-dir>/reference.json`)
        #[arg(long)]
        references: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<spectral_risk_cli::PipelineConfig> {
    let raw = match &common.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let overrides = Overrides {
        input: common.input.clone(),
        out_dir: common.out_dir.clone(),
        tail_exposure: common.tail_exposure.clone(),
        tail_vulnerability: common.tail_vulnerability.clone(),
        gap_tol: common.gap_tol,
        max_iter: common.max_iter,
        verify_fidelity: common.verify_fidelity,
        run_oracle: common.run_oracle,
        emit_histograms: common.emit_histograms,
        geojson: common.geojson.clone(),
        impute: common.impute.clone(),
        quiet: common.quiet,
    };
    resolve(raw, &overrides)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SPECTRAL_RISK_LOG")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { common } => {
            let config = load_config(common)?;
            pipeline::run_pipeline(&config)?;
        }
        Command::Preprocess { common } => {
            let config = load_config(common)?;
            pipeline::run_preprocess(&config)?;
        }
        Command::Estimate { common } => {
            let config = load_config(common)?;
            pipeline::run_estimate(&config)?;
        }
        Command::Score { common, references } => {
            let config = load_config(common)?;
            pipeline::run_score(&config, references.as_deref())?;
        }
    }
    Ok(())
}
