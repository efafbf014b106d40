mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::{FitConfig, FlagOverrides, McmcOverrides};
use crate::error::CliError;

/// Bayesian projections of state-level sex ratios at birth and missing
/// female births.
#[derive(Parser)]
#[command(name = "srb-forecast", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Last year kept by `validate`.
    #[arg(long, global = true)]
    cutoff: Option<i32>,
    /// Comma-separated probabilities for summary tables.
    #[arg(long, global = true, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// DSRB estimates and sampling variances from woman-level records.
    Jackknife {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    FitDsrb,
    ProjectDsrb,
    FitSrb,
    ProjectSrb,
    /// Annual and cumulative missing female births.
    MissingBirths,
    /// States with SRB imbalance in the projection period.
    Classify,
    /// Refit without the years after the cutoff and score the refit.
    Validate,
    /// Convergence diagnostics for saved draws.
    Diagnose {
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Tidy tables behind the figures.
    PlotData,
    /// Every stage in order.
    RunAll,
    /// Write a synthetic input fixture.
    Synth {
        #[arg(long, default_value_t = 29)]
        states: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Jackknife { .. } => "jackknife",
            Command::FitDsrb => "fit-dsrb",
            Command::ProjectDsrb => "project-dsrb",
            Command::FitSrb => "fit-srb",
            Command::ProjectSrb => "project-srb",
            Command::MissingBirths => "missing-births",
            Command::Classify => "classify",
            Command::Validate => "validate",
            Command::Diagnose { .. } => "diagnose",
            Command::PlotData => "plot-data",
            Command::RunAll => "run-all",
            Command::Synth { .. } => "synth",
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SRB_FORECAST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SRB_FORECAST_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let g = cli.global;
    let flags = FlagOverrides {
        seed: g.seed,
        mcmc: McmcOverrides {
            chains: g.chains,
            iterations: g.iters,
            burn_in: g.burnin,
            thin: g.thin,
        },
        out_dir: g.out_dir,
        cutoff: g.cutoff,
        quantiles: g.quantiles,
    };
    let cfg = FitConfig::load(g.config.as_deref(), &flags)?;
    if let Command::Synth { states } = cli.command {
        return commands::synth_fixture(&cfg.out_dir, cfg.seed.unwrap_or(2017), states);
    }
    let mut ctx = Context::new(cli.command.name(), cfg)?;
    match &cli.command {
        Command::Jackknife { input, out } => commands::jackknife(&mut ctx, input, out.as_deref())?,
        Command::FitDsrb => commands::fit_dsrb_cmd(&mut ctx)?,
        Command::ProjectDsrb => commands::project_dsrb_cmd(&mut ctx)?,
        Command::FitSrb => commands::fit_srb_cmd(&mut ctx)?,
        Command::ProjectSrb => commands::project_srb_cmd(&mut ctx)?,
        Command::MissingBirths => commands::missing_births(&mut ctx)?,
        Command::Classify => commands::classify(&mut ctx)?,
        Command::Validate => commands::validate(&mut ctx)?,
        Command::Diagnose { draws } => commands::diagnose(&mut ctx, draws.as_deref())?,
        Command::PlotData => commands::plot_data(&mut ctx)?,
        Command::RunAll => commands::run_all(&mut ctx)?,
        Command::Synth { .. } => unreachable!("handled above"),
    }
    ctx.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
