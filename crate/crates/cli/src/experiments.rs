//! The `run`, `fig1` and `fig2` drivers.

use std::fmt;
use std::path::{Path, PathBuf};

use qbm_core::ensemble::{run_ensemble, steady_statistics, EnsembleConfig, EnsembleResult, SteadyStats};
use qbm_core::fock::pure_to_density;
use qbm_core::master_eq::{evolve, steady_state_direct};
use qbm_core::observables::{boltzmann_distribution, phonon_stats, physicality_report, PhononStats, ThermalSpec};
use qbm_core::sse::{step_count, BrownianSse, JointMeasurement, Stepper};
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, HamiltonianKind, Model, StepScheme};
use crate::table::{num, Table};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Simulation(qbm_core::Error),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid configuration: {e}"),
            CliError::Simulation(e) => write!(f, "simulation failed: {e}"),
            CliError::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<qbm_core::Error> for CliError {
    fn from(e: qbm_core::Error) -> Self {
        CliError::Simulation(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn manifest(command: &str, output: &str, cfg: &ExperimentConfig, extra: Value) -> Value {
    json!({
        "tool": "qbm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "output": output,
        "seed": cfg.seed,
        "config": cfg,
        "extra": extra,
    })
}

fn write(table: &Table, dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    table.write(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn record_every(cfg: &ExperimentConfig, dt: f64) -> usize {
    step_count(cfg.record_stride, dt).max(1)
}

/// Master-equation time series: `(t, ⟨n⟩, ⟨n²⟩, purity, min eigenvalue)`.
fn deterministic_series(cfg: &ExperimentConfig, model: Model) -> Result<Vec<[f64; 5]>> {
    let me = cfg.master_equation(model, cfg.hamiltonian)?;
    let rho0 = pure_to_density(&cfg.initial_state()?.build(cfg.space()?)?);
    let mut rows = Vec::new();
    evolve(&rho0, &me, cfg.dt, cfg.t_final, record_every(cfg, cfg.dt), |t, rho| {
        let stats = phonon_stats(rho);
        let report = physicality_report(rho);
        rows.push([t, stats.mean_n, stats.mean_n2, report.purity, report.min_eigenvalue]);
    })?;
    Ok(rows)
}

fn stepper(
    cfg: &ExperimentConfig,
    model: Model,
    kind: HamiltonianKind,
    gamma: f64,
    dt: f64,
) -> Result<Box<dyn Stepper>> {
    match model {
        Model::Sse => Ok(Box::new(BrownianSse::new(cfg.sse_params(kind, gamma, dt)?))),
        Model::JointMeasurement => {
            let scheme = match cfg.scheme {
                StepScheme::Split => qbm_core::sse::Scheme::SplitUnitary,
                StepScheme::Euler => qbm_core::sse::Scheme::EulerMaruyama,
            };
            let jm = JointMeasurement::new(
                cfg.space()?,
                gamma * cfg.n_t / 2.0,
                dt,
                Some(cfg.hamiltonian_operator(kind)?),
            )?
            .with_scheme(scheme);
            Ok(Box::new(jm))
        }
        _ => unreachable!("deterministic model passed to stepper"),
    }
}

fn ensemble(
    cfg: &ExperimentConfig,
    model: Model,
    kind: HamiltonianKind,
    gamma: f64,
    dt: f64,
    burn_in: f64,
    t_final: f64,
) -> Result<(EnsembleResult, SteadyStats)> {
    let stepper = stepper(cfg, model, kind, gamma, dt)?;
    let ens = EnsembleConfig {
        initial: cfg.initial_state()?,
        n_traj: cfg.n_traj,
        t_final,
        burn_in,
        record_stride: cfg.record_stride,
        master_seed: cfg.seed,
    };
    let result = run_ensemble(stepper.as_ref(), &ens)?;
    let stats = steady_statistics(&result)?;
    Ok((result, stats))
}

/// `qbm run`: one model, full time series, plus steady statistics for the
/// stochastic models.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let name = cfg.model.name();
    let mut written = Vec::new();
    if !cfg.model.is_stochastic() {
        let rows = deterministic_series(cfg, cfg.model)?;
        let file = format!("{name}.csv");
        let mut t = Table::new(
            manifest("run", &file, cfg, Value::Null),
            &["t", "mean_n", "mean_n2", "purity", "min_eigenvalue"],
        );
        rows.iter().for_each(|r| t.push_numbers(r));
        written.push(write(&t, out, &file)?);
        return Ok(written);
    }

    let (result, stats) = ensemble(
        cfg,
        cfg.model,
        cfg.hamiltonian,
        cfg.gamma,
        cfg.dt,
        cfg.burn_in,
        cfg.t_final,
    )?;
    let file = format!("{name}.csv");
    let mut t = Table::new(
        manifest("run", &file, cfg, Value::Null),
        &[
            "t",
            "mean_n",
            "std_err",
            "mean_n2",
            "std_err_n2",
            "mean_x",
            "mean_p",
            "var_x",
            "var_p",
            "cov_xp",
        ],
    );
    for ((time, m), e) in result
        .time_grid
        .iter()
        .zip(&result.mean_observables)
        .zip(&result.std_errors)
    {
        t.push_numbers(&[
            *time, m.mean_n, e.mean_n, m.mean_n2, e.mean_n2, m.mean_x, m.mean_p, m.var_x, m.var_p, m.cov_xp,
        ]);
    }
    written.push(write(&t, out, &file)?);

    let file = format!("{name}_steady.csv");
    let mut s = Table::new(
        manifest("run", &file, cfg, Value::Null),
        &["quantity", "value", "std_err"],
    );
    let mut row = |q: String, e: qbm_core::ensemble::Estimate| s.push(vec![q, num(e.value), num(e.std_error)]);
    row("mean_n".into(), stats.mean_n);
    row("mean_n2".into(), stats.mean_n2);
    row("variance_of_mean_x".into(), stats.variance_of_mean_x);
    row("variance_of_mean_p".into(), stats.variance_of_mean_p);
    for (n, p) in stats.populations.iter().enumerate() {
        row(format!("p_{n}"), *p);
    }
    written.push(write(&s, out, &file)?);
    Ok(written)
}

/// `qbm fig1`: ⟨n⟩(t) of the harmonic oscillator from the LBME, the PBME
/// and the SSE ensemble.
pub fn figure1(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig {
        hamiltonian: HamiltonianKind::Harmonic,
        ..cfg.clone()
    };
    let mut written = Vec::new();
    for model in [Model::Lbme, Model::Pbme] {
        let rows = deterministic_series(&cfg, model)?;
        let file = format!("fig1_{}.csv", model.name());
        let mut t = Table::new(manifest("fig1", &file, &cfg, Value::Null), &["t", "mean_n"]);
        rows.iter().for_each(|r| t.push_numbers(&[r[0], r[1]]));
        written.push(write(&t, out, &file)?);
    }
    let (result, _) = ensemble(
        &cfg,
        Model::Sse,
        cfg.hamiltonian,
        cfg.gamma,
        cfg.dt,
        cfg.burn_in,
        cfg.t_final,
    )?;
    let file = "fig1_sse.csv";
    let mut t = Table::new(manifest("fig1", file, &cfg, Value::Null), &["t", "mean_n", "std_err"]);
    for ((time, m), e) in result
        .time_grid
        .iter()
        .zip(&result.mean_observables)
        .zip(&result.std_errors)
    {
        t.push_numbers(&[*time, m.mean_n, e.mean_n]);
    }
    written.push(write(&t, out, file)?);
    Ok(written)
}

/// Time step, burn-in and horizon used for one damping rate of the sweep.
/// The step shrinks as `1/γ` to keep the Euler part stable; the burn-in is
/// ten momentum relaxation times.
pub fn sweep_schedule(gamma: f64) -> (f64, f64, f64) {
    let dt = (1.6e-4 / gamma).min(1e-3);
    let burn_in = 20.0 / gamma;
    (dt, burn_in, 2.0 * burn_in)
}

/// `qbm fig2`: steady `⟨n²⟩` of the Kerr oscillator against γ, with the
/// LBME and thermal references, plus level populations per γ.
pub fn figure2(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig {
        hamiltonian: HamiltonianKind::Kerr,
        ..cfg.clone()
    };
    let dim = cfg.dim;
    let thermal_pops = boltzmann_distribution(&ThermalSpec::kerr(cfg.n_t, cfg.omega, 2 * dim), dim)?;
    let thermal = PhononStats::from_populations(thermal_pops.clone());
    let schedule: Vec<Value> = cfg
        .gammas
        .iter()
        .map(|&g| {
            let (dt, burn_in, t_final) = sweep_schedule(g);
            json!({"gamma": g, "dt": dt, "burn_in": burn_in, "t_final": t_final})
        })
        .collect();
    let extra = json!({ "schedule": schedule });

    let mut written = Vec::new();
    let mut sweep = Table::new(
        manifest("fig2", "fig2_sweep.csv", &cfg, extra.clone()),
        &["gamma", "mean_n2_sse", "std_err", "mean_n2_lbme", "mean_n2_thermal"],
    );
    for &gamma in &cfg.gammas {
        let (dt, burn_in, t_final) = sweep_schedule(gamma);
        let (_, stats) = ensemble(&cfg, Model::Sse, HamiltonianKind::Kerr, gamma, dt, burn_in, t_final)?;
        let lbme = ExperimentConfig { gamma, ..cfg.clone() }.master_equation(Model::Lbme, HamiltonianKind::Kerr)?;
        let lbme_stats = phonon_stats(&steady_state_direct(&lbme)?.rho);
        sweep.push_numbers(&[
            gamma,
            stats.mean_n2.value,
            stats.mean_n2.std_error,
            lbme_stats.mean_n2,
            thermal.mean_n2,
        ]);

        let file = format!("fig2_populations_gamma_{}.csv", num(gamma));
        let mut pops = Table::new(
            manifest(
                "fig2",
                &file,
                &cfg,
                json!({"gamma": gamma, "dt": dt, "burn_in": burn_in, "t_final": t_final}),
            ),
            &["n", "p_sse", "std_err", "p_thermal", "p_lbme"],
        );
        for n in 0..dim {
            let p = stats.populations[n];
            pops.push(vec![
                n.to_string(),
                num(p.value),
                num(p.std_error),
                num(thermal_pops[n]),
                num(lbme_stats.populations[n]),
            ]);
        }
        written.push(write(&pops, out, &file)?);
    }
    written.push(write(&sweep, out, "fig2_sweep.csv")?);
    Ok(written)
}
