//! Experiment configuration: flat JSON, command-line overrides, validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use num_complex::Complex64;
use qbm_core::ensemble::InitialState;
use qbm_core::fock::{harmonic_hamiltonian, kerr_hamiltonian, FockSpace, Operator};
use qbm_core::master_eq::MeModel;
use qbm_core::sse::{DriftForm, Scheme, SseParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Lbme,
    Sbme,
    Pbme,
    Sse,
    JointMeasurement,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Lbme => "lbme",
            Model::Sbme => "sbme",
            Model::Pbme => "pbme",
            Model::Sse => "sse",
            Model::JointMeasurement => "joint-measurement",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Model::Sse | Model::JointMeasurement)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    Harmonic,
    Kerr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Drift {
    Composed,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StepScheme {
    Split,
    Euler,
}

/// Defaults are the harmonic-oscillator thermalization run: ω = 2π, γ = 4,
/// n_T = 1, starting in the ground state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub hamiltonian: HamiltonianKind,
    pub omega: f64,
    pub gamma: f64,
    #[serde(alias = "ntherm")]
    pub n_t: f64,
    pub dim: usize,
    pub dt: f64,
    pub t_final: f64,
    pub burn_in: f64,
    #[serde(alias = "trajectories")]
    pub n_traj: usize,
    pub seed: u64,
    /// `fock:n` or `coherent:re,im`.
    pub initial: String,
    pub record_stride: f64,
    pub drift: Drift,
    pub scheme: StepScheme,
    /// Damping rates for the Kerr sweep.
    pub gammas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::Lbme,
            hamiltonian: HamiltonianKind::Harmonic,
            omega: 2.0 * PI,
            gamma: 4.0,
            n_t: 1.0,
            dim: 40,
            dt: 1e-4,
            t_final: 10.0,
            burn_in: 5.0,
            n_traj: 2000,
            seed: 1,
            initial: "fock:0".into(),
            record_stride: 0.01,
            drift: Drift::Composed,
            scheme: StepScheme::Split,
            gammas: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4],
        }
    }
}

/// A validation failure tied to one configuration field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_initial(s: &str) -> Result<InitialState, ConfigError> {
    let bad = || ConfigError::new("initial", format!("expected fock:<n> or coherent:<re>,<im>, got {s:?}"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind.trim() {
        "fock" => rest.trim().parse().map(InitialState::Fock).map_err(|_| bad()),
        "coherent" => {
            let mut parts = rest.split(',').map(|p| p.trim().parse::<f64>());
            let re = parts.next().ok_or_else(bad)?.map_err(|_| bad())?;
            let im = match parts.next() {
                Some(v) => v.map_err(|_| bad())?,
                None => 0.0,
            };
            if parts.next().is_some() || !re.is_finite() || !im.is_finite() {
                return Err(bad());
            }
            Ok(InitialState::Coherent(Complex64::new(re, im)))
        }
        _ => Err(bad()),
    }
}

/// Reads a configuration from a flat JSON object, or from the manifest line
/// of a CSV file written by a previous run.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let field = "config";
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(field, format!("cannot read {}: {e}", path.display())))?;
    if let Some(line) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        let manifest: serde_json::Value =
            serde_json::from_str(line.trim()).map_err(|e| ConfigError::new(field, format!("bad manifest: {e}")))?;
        let cfg = manifest
            .get("config")
            .cloned()
            .ok_or_else(|| ConfigError::new(field, "manifest has no config object"))?;
        return serde_json::from_value(cfg).map_err(|e| ConfigError::new(field, e.to_string()));
    }
    serde_json::from_str(&text).map_err(|e| ConfigError::new(field, e.to_string()))
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be non-negative, got {v}")))
    }
}

fn core_error(field: &str) -> impl Fn(qbm_core::Error) -> ConfigError + '_ {
    move |e| ConfigError::new(field, e.to_string())
}

impl ExperimentConfig {
    pub fn space(&self) -> Result<FockSpace, ConfigError> {
        FockSpace::new(self.dim).map_err(core_error("dim"))
    }

    pub fn initial_state(&self) -> Result<InitialState, ConfigError> {
        parse_initial(&self.initial)
    }

    pub fn hamiltonian_operator(&self, kind: HamiltonianKind) -> Result<Operator, ConfigError> {
        let s = self.space()?;
        match kind {
            HamiltonianKind::Harmonic => harmonic_hamiltonian(s, self.omega),
            HamiltonianKind::Kerr => kerr_hamiltonian(s, self.omega),
        }
        .map_err(core_error("omega"))
    }

    pub fn master_equation(&self, model: Model, kind: HamiltonianKind) -> Result<MeModel, ConfigError> {
        let h = self.hamiltonian_operator(kind)?;
        let field = "model";
        match model {
            Model::Lbme => MeModel::lbme(h, self.gamma, self.n_t),
            Model::Sbme => MeModel::sbme(h, self.gamma, self.n_t),
            Model::Pbme => MeModel::pbme(h, self.gamma, self.n_t),
            _ => {
                return Err(ConfigError::new(
                    field,
                    format!("{} is not a master equation", model.name()),
                ))
            }
        }
        .map_err(core_error(field))
    }

    pub fn sse_params(&self, kind: HamiltonianKind, gamma: f64, dt: f64) -> Result<SseParams, ConfigError> {
        let h = self.hamiltonian_operator(kind)?;
        let drift = match self.drift {
            Drift::Composed => DriftForm::Composed,
            Drift::AsPrinted => DriftForm::AsPrinted,
        };
        let scheme = match self.scheme {
            StepScheme::Split => Scheme::SplitUnitary,
            StepScheme::Euler => Scheme::EulerMaruyama,
        };
        Ok(SseParams::brownian(h, gamma, self.n_t, dt)
            .map_err(core_error("gamma"))?
            .with_drift(drift)
            .with_scheme(scheme))
    }

    /// Checks every field and builds the selected model once, so that model
    /// restrictions surface as configuration errors.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("omega", self.omega)?;
        non_negative("gamma", self.gamma)?;
        non_negative("n_t", self.n_t)?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("record_stride", self.record_stride)?;
        self.space()?;
        let initial = self.initial_state()?;
        initial.build(self.space()?).map_err(core_error("initial"))?;
        if self.dt > self.t_final {
            return Err(ConfigError::new("dt", format!("exceeds t_final = {}", self.t_final)));
        }
        if self.model.is_stochastic() {
            if self.n_traj == 0 {
                return Err(ConfigError::new("n_traj", "must be at least 1"));
            }
            non_negative("burn_in", self.burn_in)?;
            if self.burn_in >= self.t_final {
                return Err(ConfigError::new(
                    "burn_in",
                    format!("must be below t_final = {}, got {}", self.t_final, self.burn_in),
                ));
            }
            self.sse_params(self.hamiltonian, self.gamma, self.dt)?;
        } else {
            self.master_equation(self.model, self.hamiltonian)?;
        }
        if self.gammas.is_empty() {
            return Err(ConfigError::new("gammas", "must not be empty"));
        }
        for &g in &self.gammas {
            positive("gammas", g)?;
        }
        Ok(())
    }
}
