//! Brownian-motion master equations and a fixed-step RK4 integrator.
//!
//! Every variant shares the structure
//!
//! ```text
//! dρ/dt = −i[H,ρ] − iΓ[x,{p,ρ}] − ξ[x,[x,ρ]] + ζ[x,[p,ρ]] − η[p,[p,ρ]]
//! ```
//!
//! with constant coefficients for the low-temperature (LBME), "standard"
//! (SBME) and completely positive (PBME) forms, and caller-supplied
//! functions of time for the general form. Only the PBME has `η ≠ 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fock::{quadratures, DensityMatrix, FockSpace, Operator, C64, I};
use crate::observables::{reduced_temperature, trace_norm};

/// Trace drift tolerated by [`evolve`] before it reports divergence.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Top-level population at which integrators report truncation leakage.
pub const RUNTIME_LEAKAGE_LIMIT: f64 = 1e-4;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_STEADY_TOL: f64 = 1e-8;

type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The time-dependent coefficients `Γ(t)`, `ξ(t)`, `ζ(t)` of the general
/// equation. They are supplied by the caller; nothing here derives them
/// from a bath model.
#[derive(Clone)]
pub struct BmeCoefficients {
    gamma_fn: CoefficientFn,
    xi_fn: CoefficientFn,
    zeta_fn: CoefficientFn,
}

impl BmeCoefficients {
    pub fn new(
        gamma_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
        xi_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
        zeta_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BmeCoefficients {
            gamma_fn: Arc::new(gamma_fn),
            xi_fn: Arc::new(xi_fn),
            zeta_fn: Arc::new(zeta_fn),
        }
    }

    pub fn constant(gamma: f64, xi: f64, zeta: f64) -> Self {
        Self::new(move |_| gamma, move |_| xi, move |_| zeta)
    }

    /// `(Γ(t), ξ(t), ζ(t))`.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        ((self.gamma_fn)(t), (self.xi_fn)(t), (self.zeta_fn)(t))
    }
}

impl fmt::Debug for BmeCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (g, xi, z) = self.at(0.0);
        f.debug_struct("BmeCoefficients").field("at_t0", &(g, xi, z)).finish()
    }
}

#[derive(Debug, Clone)]
pub enum Variant {
    General(BmeCoefficients),
    Lbme,
    Sbme,
    Pbme,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::General(_) => "general",
            Variant::Lbme => "lbme",
            Variant::Sbme => "sbme",
            Variant::Pbme => "pbme",
        }
    }
}

/// Anything that produces `dρ/dt` for the fixed-step integrator.
pub trait Generator: Sync {
    fn space(&self) -> FockSpace;
    fn derivative(&self, t: f64, rho: &Array2<C64>) -> Array2<C64>;
}

/// A master equation: variant, damping rate, thermal occupation and the
/// system Hamiltonian. The `−i[H,ρ]` term is included for every variant.
#[derive(Debug, Clone)]
pub struct MeModel {
    variant: Variant,
    gamma: f64,
    n_t: f64,
    hamiltonian: Operator,
    x: Operator,
    p: Operator,
    /// k_B T/(ħω); only meaningful for the SBME.
    temperature: Option<f64>,
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
    }
    Ok(())
}

impl MeModel {
    fn build(variant: Variant, hamiltonian: Operator, gamma: f64, n_t: f64) -> Result<Self> {
        check_rate("gamma", gamma)?;
        check_rate("n_t", n_t)?;
        if !hamiltonian.is_hermitian() {
            return Err(Error::param("hamiltonian", "must be Hermitian"));
        }
        let temperature = match variant {
            Variant::Sbme if n_t == 0.0 => {
                return Err(Error::UnsupportedVariant(
                    "sbme requires n_t > 0: its diffusion coefficient k_B T/(2ħω) is singular at zero temperature"
                        .into(),
                ))
            }
            Variant::Sbme => Some(reduced_temperature(n_t)?),
            _ => None,
        };
        let (x, p) = quadratures(hamiltonian.space());
        Ok(MeModel {
            variant,
            gamma,
            n_t,
            hamiltonian,
            x,
            p,
            temperature,
        })
    }

    pub fn lbme(hamiltonian: Operator, gamma: f64, n_t: f64) -> Result<Self> {
        Self::build(Variant::Lbme, hamiltonian, gamma, n_t)
    }

    pub fn sbme(hamiltonian: Operator, gamma: f64, n_t: f64) -> Result<Self> {
        Self::build(Variant::Sbme, hamiltonian, gamma, n_t)
    }

    pub fn pbme(hamiltonian: Operator, gamma: f64, n_t: f64) -> Result<Self> {
        Self::build(Variant::Pbme, hamiltonian, gamma, n_t)
    }

    pub fn general(hamiltonian: Operator, coefficients: BmeCoefficients) -> Result<Self> {
        Self::build(Variant::General(coefficients), hamiltonian, 0.0, 0.0)
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    /// `(Γ, ξ, ζ, η)` at time `t`.
    pub fn coefficients(&self, t: f64) -> (f64, f64, f64, f64) {
        let g = self.gamma;
        let thermal = 2.0 * self.n_t + 1.0;
        match &self.variant {
            Variant::General(c) => {
                let (a, b, z) = c.at(t);
                (a, b, z, 0.0)
            }
            Variant::Lbme => (g / 4.0, g / 4.0 * thermal, 0.0, 0.0),
            Variant::Sbme => (g / 4.0, g * self.temperature.unwrap_or(0.0) / 2.0, 0.0, 0.0),
            Variant::Pbme => (g / 4.0, g / 4.0 * thermal, 0.0, g / (16.0 * thermal)),
        }
    }

    /// `dρ/dt` for a validated density matrix.
    pub fn rhs(&self, t: f64, rho: &DensityMatrix) -> Result<Array2<C64>> {
        self.hamiltonian.space().check(rho.dim())?;
        Ok(self.derivative(t, rho.entries()))
    }
}

fn bme_derivative(
    h: &Operator,
    x: &Operator,
    p: &Operator,
    rho: &Array2<C64>,
    (damping, xi, zeta, eta): (f64, f64, f64, f64),
) -> Array2<C64> {
    let mut out = h.commute(rho).mapv(|z| -I * z);
    if damping != 0.0 {
        out = out - x.commute(&p.anticommute(rho)).mapv(|z| I * damping * z);
    }
    if xi != 0.0 || zeta != 0.0 {
        let xr = x.commute(rho);
        if xi != 0.0 {
            out = out - x.commute(&xr).mapv(|z| z * xi);
        }
        if zeta != 0.0 {
            out = out + x.commute(&p.commute(rho)).mapv(|z| z * zeta);
        }
    }
    if eta != 0.0 {
        out = out - p.commute(&p.commute(rho)).mapv(|z| z * eta);
    }
    out
}

impl Generator for MeModel {
    fn space(&self) -> FockSpace {
        self.hamiltonian.space()
    }

    fn derivative(&self, t: f64, rho: &Array2<C64>) -> Array2<C64> {
        bme_derivative(&self.hamiltonian, &self.x, &self.p, rho, self.coefficients(t))
    }
}

/// `−i[H,ρ] − i(γ/4)[x,{p,ρ}] − (γ/4)(2n_T+1)[x,[x,ρ]]`.
pub fn lbme_rhs(rho: &DensityMatrix, hamiltonian: &Operator, gamma: f64, n_t: f64) -> Result<Array2<C64>> {
    MeModel::lbme(hamiltonian.clone(), gamma, n_t)?.rhs(0.0, rho)
}

/// LBME with the `[x,[x,ρ]]` coefficient replaced by `γ k_BT/(2ħω)`.
pub fn sbme_rhs(rho: &DensityMatrix, hamiltonian: &Operator, gamma: f64, n_t: f64) -> Result<Array2<C64>> {
    MeModel::sbme(hamiltonian.clone(), gamma, n_t)?.rhs(0.0, rho)
}

/// LBME plus position diffusion `−γ/(16(2n_T+1))[p,[p,ρ]]`.
pub fn pbme_rhs(rho: &DensityMatrix, hamiltonian: &Operator, gamma: f64, n_t: f64) -> Result<Array2<C64>> {
    MeModel::pbme(hamiltonian.clone(), gamma, n_t)?.rhs(0.0, rho)
}

pub fn general_bme_rhs(
    rho: &DensityMatrix,
    coefficients: &BmeCoefficients,
    hamiltonian: &Operator,
    t: f64,
) -> Result<Array2<C64>> {
    MeModel::general(hamiltonian.clone(), coefficients.clone())?.rhs(t, rho)
}

fn rk4_step<G: Generator + ?Sized>(gen: &G, t: f64, dt: f64, rho: &Array2<C64>) -> Array2<C64> {
    let k1 = gen.derivative(t, rho);
    let k2 = gen.derivative(t + 0.5 * dt, &(rho + &(&k1 * (0.5 * dt))));
    let k3 = gen.derivative(t + 0.5 * dt, &(rho + &(&k2 * (0.5 * dt))));
    let k4 = gen.derivative(t + dt, &(rho + &(&k3 * dt)));
    rho + &((k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

fn check_schedule(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(t_final >= dt && t_final.is_finite()) {
        return Err(Error::param(
            "t_final",
            format!("must be at least dt = {dt}, got {t_final}"),
        ));
    }
    Ok((t_final / dt).round() as usize)
}

fn guard(rho: &DensityMatrix, t: f64) -> Result<()> {
    let trace_error = rho.trace_error();
    if !(trace_error <= TRACE_DRIFT_LIMIT) {
        return Err(Error::IntegrationDiverged { t, trace_error });
    }
    let top = rho.top_population();
    if top > RUNTIME_LEAKAGE_LIMIT {
        return Err(Error::TruncationLeakage {
            weight: top,
            threshold: RUNTIME_LEAKAGE_LIMIT,
        }
        .at(t));
    }
    Ok(())
}

/// Integrates `dρ/dt` with classical RK4 from `t = 0` to `t_final` in steps
/// of `dt`, re-symmetrizing ρ after every step.
///
/// `observer` sees `(t, ρ)` at `t = 0`, after every `observe_every` steps and
/// after the last step.
pub fn evolve<G, F>(
    rho0: &DensityMatrix,
    gen: &G,
    dt: f64,
    t_final: f64,
    observe_every: usize,
    mut observer: F,
) -> Result<DensityMatrix>
where
    G: Generator + ?Sized,
    F: FnMut(f64, &DensityMatrix),
{
    gen.space().check(rho0.dim())?;
    let steps = check_schedule(dt, t_final)?;
    let every = observe_every.max(1);
    let mut rho = rho0.clone();
    observer(0.0, &rho);
    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * dt;
        let next = rk4_step(gen, t_prev, dt, rho.entries());
        *rho.entries_mut() = next;
        rho.symmetrize();
        let t = step as f64 * dt;
        guard(&rho, t)?;
        if step % every == 0 || step == steps {
            observer(t, &rho);
        }
    }
    Ok(rho)
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// Time at which the residual first fell below the tolerance.
    pub time: f64,
    /// Trace norm of dρ/dt at `time`.
    pub residual: f64,
}

/// Integrates until the trace norm of `dρ/dt` drops below `tol`.
pub fn steady_state<G: Generator + ?Sized>(
    gen: &G,
    rho0: &DensityMatrix,
    dt: f64,
    tol: f64,
    t_max: f64,
) -> Result<SteadyState> {
    gen.space().check(rho0.dim())?;
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let steps = check_schedule(dt, t_max)?;
    // residual checks cost one eigensolve, so space them out
    let check_every = ((0.01 / dt).round() as usize).max(1);
    let mut rho = rho0.clone();
    let mut residual = f64::INFINITY;
    for step in 0..=steps {
        let t = step as f64 * dt;
        if step % check_every == 0 || step == steps {
            residual = trace_norm(&gen.derivative(t, rho.entries()));
            if residual < tol {
                return Ok(SteadyState { rho, time: t, residual });
            }
        }
        if step == steps {
            break;
        }
        let next = rk4_step(gen, t, dt, rho.entries());
        *rho.entries_mut() = next;
        rho.symmetrize();
        guard(&rho, t + dt)?;
    }
    Err(Error::NoConvergence { t_max, residual })
}

/// Steady state of a time-independent generator from the kernel of its
/// Liouvillian, with one equation replaced by `Tr ρ = 1`. Cost grows as
/// `dim⁶`; practical up to a few tens of levels.
pub fn steady_state_direct<G: Generator + ?Sized>(gen: &G) -> Result<SteadyState> {
    let d = gen.space().dim();
    let n = d * d;
    let mut liouvillian = DMatrix::<C64>::zeros(n, n);
    let mut basis = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            basis[[i, j]] = C64::new(1.0, 0.0);
            let col = gen.derivative(0.0, &basis);
            basis[[i, j]] = C64::new(0.0, 0.0);
            for ((r, c), v) in col.indexed_iter() {
                liouvillian[(r * d + c, i * d + j)] = *v;
            }
        }
    }
    let mut rhs = DVector::<C64>::zeros(n);
    for c in 0..n {
        liouvillian[(0, c)] = C64::new(0.0, 0.0);
    }
    for k in 0..d {
        liouvillian[(0, k * d + k)] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(1.0, 0.0);
    let sol = liouvillian
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidDensity("singular Liouvillian: steady state not unique".into()))?;
    let entries = Array2::from_shape_fn((d, d), |(i, j)| sol[i * d + j]);
    let mut rho = DensityMatrix::from_matrix_unchecked(gen.space(), entries)?;
    rho.symmetrize();
    let residual = trace_norm(&gen.derivative(0.0, rho.entries()));
    Ok(SteadyState {
        rho,
        time: f64::INFINITY,
        residual,
    })
}
