use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crisis_hedge::pipeline::fixture::{generate_fixture, FixtureKind};
use crisis_hedge::pipeline::sweep::{sensitivity_sweep, SweepOutcome};
use crisis_hedge::pipeline::{run_pipeline, validate, LoadedConfig, PipelineError};

/// Hedge-effectiveness reports for equity indices through inflation and
/// currency crises.
#[derive(Debug, Parser)]
#[command(name = "crisis-hedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline for every episode in a config file.
    Run {
        config: PathBuf,
        /// Output directory [default: `out/` next to the config].
        #[arg(long, env = "CRISIS_HEDGE_OUT")]
        out: Option<PathBuf>,
        /// Use 200 bootstrap replications instead of the configured count.
        #[arg(long)]
        fast: bool,
    },
    /// Compare hedge effectiveness and tail dependence across lower-tail
    /// quantiles.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.15, 0.20])]
        taus: Vec<f64>,
        #[arg(long, env = "CRISIS_HEDGE_OUT")]
        out: Option<PathBuf>,
        #[arg(long)]
        fast: bool,
    },
    /// Write a synthetic fixture (CSV series, manifest and config).
    Fixture {
        /// perfect_hedge, anti_hedge, clayton_coupled, independent or turkey_like.
        kind: FixtureKind,
        #[arg(long, default_value_t = 120)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config, its manifests and the feature schema without fitting.
    Validate { config: PathBuf },
}

fn load(config: &Path, fast: bool) -> Result<LoadedConfig, PipelineError> {
    let mut loaded = LoadedConfig::load(config)?;
    if fast {
        loaded.config = loaded.config.fast();
    }
    Ok(loaded)
}

fn out_dir(out: Option<PathBuf>, loaded: &LoadedConfig) -> PathBuf {
    out.unwrap_or_else(|| loaded.base_dir.join("out"))
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run { config, out, fast } => {
            let loaded = load(&config, fast)?;
            let dir = out_dir(out, &loaded);
            let result = run_pipeline(&loaded, Some(&dir))?;
            for d in &result.diagnostics {
                log::warn!("{d}");
            }
            print!("{}", crisis_hedge::hedge::table_csv(&result.reports));
            log::info!("outputs written to {}", dir.display());
        }
        Command::Sweep { config, taus, out, fast } => {
            let loaded = load(&config, fast)?;
            let dir = out_dir(out, &loaded);
            let report = sensitivity_sweep(&loaded, &taus, Some(&dir))?;
            for e in &report.entries {
                if let SweepOutcome::Infeasible { reason } = &e.outcome {
                    log::warn!("tau = {}: infeasible: {reason}", e.tau);
                }
            }
            print!("{}", report.to_csv());
        }
        Command::Fixture { kind, n, seed, out } => {
            let files = generate_fixture(kind, n, seed, &out)?;
            for f in &files.files {
                println!("{}", f.display());
            }
        }
        Command::Validate { config } => {
            let loaded = load(&config, false)?;
            for note in validate(&loaded)? {
                println!("{note}");
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
