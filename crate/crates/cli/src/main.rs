//! `qbm`: run master-equation and stochastic Schrödinger simulations of a
//! damped oscillator and write CSV tables with a reproducibility manifest.

mod config;
mod experiments;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Drift, ExperimentConfig, HamiltonianKind, Model, StepScheme};
use experiments::CliError;

#[derive(Parser)]
#[command(name = "qbm", version, about = "Quantum Brownian motion simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one model and write its time series.
    Run(Overrides),
    /// Harmonic relaxation of ⟨n⟩ from the LBME, the PBME and the SSE.
    Fig1(Overrides),
    /// Kerr steady-state ⟨n²⟩ against the damping rate.
    Fig2(Overrides),
    /// Check a configuration and exit.
    ValidateConfig(Overrides),
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON configuration, or a CSV written by a previous run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long, value_enum)]
    hamiltonian: Option<HamiltonianKind>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Mean thermal occupation of the bath.
    #[arg(long)]
    ntherm: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `fock:n` or `coherent:re,im`.
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    record_stride: Option<f64>,
    #[arg(long, value_enum)]
    drift: Option<Drift>,
    #[arg(long, value_enum)]
    scheme: Option<StepScheme>,
    /// Comma-separated damping rates for `fig2`.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => config::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { cfg.$target = v.clone(); })*
            };
        }
        apply!(
            model => model,
            hamiltonian => hamiltonian,
            omega => omega,
            gamma => gamma,
            ntherm => n_t,
            dim => dim,
            dt => dt,
            t_final => t_final,
            burn_in => burn_in,
            trajectories => n_traj,
            seed => seed,
            initial => initial,
            record_stride => record_stride,
            drift => drift,
            scheme => scheme,
            gammas => gammas,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

type Driver = fn(&ExperimentConfig, &Path) -> Result<Vec<PathBuf>, CliError>;

fn dispatch(command: &Command) -> Result<(), CliError> {
    let (opts, driver): (&Overrides, Option<Driver>) = match command {
        Command::Run(o) => (o, Some(experiments::run)),
        Command::Fig1(o) => (o, Some(experiments::figure1)),
        Command::Fig2(o) => (o, Some(experiments::figure2)),
        Command::ValidateConfig(o) => (o, None),
    };
    let cfg = opts.resolve()?;
    match driver {
        Some(driver) => {
            for path in driver(&cfg, &opts.out)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => eprintln!("configuration is valid"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
