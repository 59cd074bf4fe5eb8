//! Stochastic Schrödinger equations for damped Brownian motion.
//!
//! [`BrownianSse`] integrates the thermal-damping SSE: a joint continuous
//! measurement of `x` and `p` at strength `k = γn_T/2`, composed with a
//! linear feedback Hamiltonian that cancels the noise on `⟨x⟩` and damps
//! `⟨p⟩` at rate `γ/2`. In its unnormalized form the increment reads
//!
//! ```text
//! d|ψ⟩ = [−iH + D(ψ)]|ψ⟩dt
//!      + 2√(γn_T)(x/2 + iV_x p − i[C_xp − 1/2]x)|ψ⟩dW₁
//!      + 2√(γn_T)(p/2 − iV_p x + iC_xp p)|ψ⟩dW₂
//! ```
//!
//! where the drift `D(ψ)` is the Ito-consistent composition of measurement
//! and feedback ([`DriftForm::Composed`]):
//!
//! ```text
//! D = −(γn_T/2)(x² + p²) + 2γn_T(⟨x⟩x + ⟨p⟩p) − i(γ/2)⟨p⟩x
//!     − 2γn_T[((C−½)² + V_p²)x² + (V_x² + C²)p² − ((C−½)V_x + V_pC)(xp+px)]
//!     − 2iγn_T[(C−½)x² − Cp² + ½(V_p − V_x)(xp+px)]
//! ```
//!
//! With this drift the means obey the Langevin equations
//! `d⟨x⟩ = −i⟨[x,H]⟩dt`, `d⟨p⟩ = −i⟨[p,H]⟩dt − (γ/2)⟨p⟩dt + √(γn_T)dW`
//! for every state, and Gaussian covariances follow [`covariance_ode_rhs`].
//! The shorter drift `−(γn_T/2)(x² − p²) + 2γ(n_T⟨x⟩x + n_T⟨p⟩p + (i/4)⟨p⟩x)`
//! is available as [`DriftForm::AsPrinted`] for comparison only: it does not
//! reproduce those mean or covariance equations.
//!
//! Moments entering the coefficients are recomputed from the current
//! normalized state at every step, and the state is renormalized after
//! every increment.

use nalgebra::DMatrix;
use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fock::{norm_sqr, FockSpace, Ladder, Moments, Operator, PureState, C64, I, ZERO};
use crate::master_eq::RUNTIME_LEAKAGE_LIMIT;

/// Pre-renormalization norm below which a stochastic step is rejected.
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftForm {
    #[default]
    Composed,
    AsPrinted,
}

/// How the Hamiltonian part of a step is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Plain Euler–Maruyama: `−iH|ψ⟩dt` is part of the increment.
    EulerMaruyama,
    /// `|ψ⟩ ← e^{−iHdt}|ψ⟩` exactly, then an Euler–Maruyama step of the
    /// measurement and feedback terms. Explicit Euler on `−iH` amplifies
    /// level `n` by `√(1 + E_n²dt²)` per step, which the Kerr spectrum turns
    /// into runaway growth of the upper levels.
    #[default]
    SplitUnitary,
}

/// Parameters of the Brownian-motion SSE. `k = γn_T/2` is fixed by the
/// constructor.
#[derive(Debug, Clone)]
pub struct SseParams {
    gamma: f64,
    n_t: f64,
    k: f64,
    hamiltonian: Operator,
    dt: f64,
    drift: DriftForm,
    scheme: Scheme,
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    Ok(())
}

fn check_hamiltonian(h: &Operator) -> Result<()> {
    if !h.is_hermitian() {
        return Err(Error::param("hamiltonian", "must be Hermitian"));
    }
    Ok(())
}

impl SseParams {
    pub fn brownian(hamiltonian: Operator, gamma: f64, n_t: f64, dt: f64) -> Result<Self> {
        check_non_negative("gamma", gamma)?;
        check_non_negative("n_t", n_t)?;
        check_dt(dt)?;
        check_hamiltonian(&hamiltonian)?;
        Ok(SseParams {
            gamma,
            n_t,
            k: gamma * n_t / 2.0,
            hamiltonian,
            dt,
            drift: DriftForm::default(),
            scheme: Scheme::default(),
        })
    }

    pub fn with_drift(mut self, drift: DriftForm) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    /// Measurement strength, `γn_T/2`.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn drift(&self) -> DriftForm {
        self.drift
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn space(&self) -> FockSpace {
        self.hamiltonian.space()
    }
}

/// Independent Wiener increments with `dW² = dt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoisePair {
    pub dw1: f64,
    pub dw2: f64,
}

impl NoisePair {
    pub const ZERO: NoisePair = NoisePair { dw1: 0.0, dw2: 0.0 };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> Self {
        let s = dt.sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        NoisePair { dw1: a * s, dw2: b * s }
    }
}

/// `e^{−iHdt}`: a phase per level for Hamiltonians diagonal in the Fock
/// basis, a dense unitary from the eigendecomposition otherwise.
#[derive(Debug, Clone)]
enum Propagator {
    Phases(Vec<C64>),
    Dense(Operator),
}

impl Propagator {
    fn new(h: &Operator, dt: f64) -> Self {
        if let Some(e) = h.real_diagonal() {
            return Propagator::Phases(e.iter().map(|e| C64::from_polar(1.0, -e * dt)).collect());
        }
        let d = h.dim();
        let m = DMatrix::from_fn(d, d, |i, j| h.entries()[[i, j]]);
        let eig = m.symmetric_eigen();
        let u = &eig.eigenvectors;
        let phases: Vec<C64> = eig.eigenvalues.iter().map(|e| C64::from_polar(1.0, -e * dt)).collect();
        let prop = ndarray::Array2::from_shape_fn((d, d), |(i, j)| {
            (0..d).map(|k| u[(i, k)] * phases[k] * u[(j, k)].conj()).sum::<C64>()
        });
        Propagator::Dense(Operator::from_matrix(h.space(), prop).expect("same space"))
    }

    fn apply(&self, psi: &mut [C64], tmp: &mut [C64]) {
        match self {
            Propagator::Phases(ph) => psi.iter_mut().zip(ph).for_each(|(z, p)| *z *= p),
            Propagator::Dense(u) => {
                u.apply_into(psi, tmp);
                psi.copy_from_slice(tmp);
            }
        }
    }
}

/// Scratch buffers reused across steps of one trajectory.
#[derive(Debug, Clone)]
pub struct Workspace {
    xs: Vec<C64>,
    ps: Vec<C64>,
    xx: Vec<C64>,
    pp: Vec<C64>,
    xp: Vec<C64>,
    px: Vec<C64>,
    incr: Vec<C64>,
    tmp: Vec<C64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let v = vec![ZERO; dim];
        Workspace {
            xs: v.clone(),
            ps: v.clone(),
            xx: v.clone(),
            pp: v.clone(),
            xp: v.clone(),
            px: v.clone(),
            incr: v.clone(),
            tmp: v,
        }
    }

    /// Fills `xs = x|ψ⟩`, `ps = p|ψ⟩` and returns the moments of `ψ`.
    fn first_order(&mut self, ladder: &Ladder, psi: &[C64]) -> Moments {
        ladder.quadratures_into(psi, &mut self.xs, &mut self.ps);
        Moments::from_images(psi, &self.xs, &self.ps)
    }

    fn second_order(&mut self, ladder: &Ladder) {
        ladder.x_into(&self.xs, &mut self.xx);
        ladder.p_into(&self.ps, &mut self.pp);
        ladder.x_into(&self.ps, &mut self.xp);
        ladder.p_into(&self.xs, &mut self.px);
    }
}

/// One integration step of a pure-state SDE.
pub trait Stepper: Sync {
    fn space(&self) -> FockSpace;
    fn dt(&self) -> f64;
    fn step(&self, state: &mut PureState, noise: NoisePair, ws: &mut Workspace) -> Result<()>;
}

fn finish_step(state: &mut PureState) -> Result<()> {
    let norm = norm_sqr(state.as_slice()).sqrt();
    if !(norm >= DEGENERATE_NORM) || !norm.is_finite() {
        return Err(Error::DegenerateNorm { norm });
    }
    state.normalize()?;
    let top = state.top_population();
    if top > RUNTIME_LEAKAGE_LIMIT {
        return Err(Error::TruncationLeakage {
            weight: top,
            threshold: RUNTIME_LEAKAGE_LIMIT,
        });
    }
    Ok(())
}

/// Coefficients multiplying `x²ψ, p²ψ, (xp+px)ψ, xψ, pψ` in the drift and
/// `xψ, pψ` in the two noise terms.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    xx: C64,
    pp: C64,
    sym: C64,
    x: C64,
    p: C64,
    w1: (C64, C64),
    w2: (C64, C64),
}

fn brownian_coefficients(gamma: f64, n_t: f64, form: DriftForm, m: &Moments) -> Coefficients {
    let gn = gamma * n_t;
    let c = 2.0 * gn.sqrt();
    let (vx, vp, cv) = (m.var_x, m.var_p, m.cov_xp);
    let (mx, mp) = (m.mean_x, m.mean_p);
    let ch = cv - 0.5;
    let w1 = (C64::new(0.5 * c, -c * ch), C64::new(0.0, c * vx));
    let w2 = (C64::new(0.0, -c * vp), C64::new(0.5 * c, c * cv));
    match form {
        DriftForm::Composed => Coefficients {
            xx: C64::new(-0.5 * gn - 2.0 * gn * (ch * ch + vp * vp), -2.0 * gn * ch),
            pp: C64::new(-0.5 * gn - 2.0 * gn * (vx * vx + cv * cv), 2.0 * gn * cv),
            sym: C64::new(2.0 * gn * (ch * vx + vp * cv), -gn * (vp - vx)),
            x: C64::new(2.0 * gn * mx, -0.5 * gamma * mp),
            p: C64::new(2.0 * gn * mp, 0.0),
            w1,
            w2,
        },
        DriftForm::AsPrinted => Coefficients {
            xx: C64::new(-0.5 * gn, 0.0),
            pp: C64::new(0.5 * gn, 0.0),
            sym: ZERO,
            x: C64::new(2.0 * gn * mx, 0.5 * gamma * mp),
            p: C64::new(2.0 * gn * mp, 0.0),
            w1,
            w2,
        },
    }
}

/// Integrator for the Brownian-motion SSE.
#[derive(Debug, Clone)]
pub struct BrownianSse {
    params: SseParams,
    ladder: Ladder,
    propagator: Propagator,
}

impl BrownianSse {
    pub fn new(params: SseParams) -> Self {
        let ladder = Ladder::new(params.space().dim());
        let propagator = Propagator::new(&params.hamiltonian, params.dt);
        BrownianSse {
            params,
            ladder,
            propagator,
        }
    }

    pub fn params(&self) -> &SseParams {
        &self.params
    }

    /// Writes the increment (without the Hamiltonian term) into `ws.incr`.
    fn dissipative_increment(&self, psi: &[C64], noise: NoisePair, ws: &mut Workspace) {
        let m = ws.first_order(&self.ladder, psi);
        ws.second_order(&self.ladder);
        let c = brownian_coefficients(self.params.gamma, self.params.n_t, self.params.drift, &m);
        let dt = self.params.dt;
        let (cxx, cpp, csym, cx, cp) = (c.xx * dt, c.pp * dt, c.sym * dt, c.x * dt, c.p * dt);
        let nx = c.w1.0 * noise.dw1 + c.w2.0 * noise.dw2;
        let np = c.w1.1 * noise.dw1 + c.w2.1 * noise.dw2;
        for n in 0..psi.len() {
            let sym = ws.xp[n] + ws.px[n];
            ws.incr[n] = cxx * ws.xx[n] + cpp * ws.pp[n] + csym * sym + (cx + nx) * ws.xs[n] + (cp + np) * ws.ps[n];
        }
    }

    /// The full unnormalized increment `d|ψ⟩`, including `−iH|ψ⟩dt`.
    pub fn increment(&self, state: &PureState, noise: NoisePair) -> Result<Array1<C64>> {
        self.params.space().check(state.dim())?;
        let d = state.dim();
        let mut ws = Workspace::new(d);
        let psi = state.as_slice();
        self.dissipative_increment(psi, noise, &mut ws);
        self.params.hamiltonian.apply_into(psi, &mut ws.tmp);
        let dt = self.params.dt;
        Ok(Array1::from_shape_fn(d, |n| ws.incr[n] - I * ws.tmp[n] * dt))
    }

    pub fn step(&self, state: &mut PureState, noise: NoisePair) -> Result<()> {
        let mut ws = Workspace::new(state.dim());
        Stepper::step(self, state, noise, &mut ws)
    }
}

impl Stepper for BrownianSse {
    fn space(&self) -> FockSpace {
        self.params.space()
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn step(&self, state: &mut PureState, noise: NoisePair, ws: &mut Workspace) -> Result<()> {
        self.params.space().check(state.dim())?;
        let dt = self.params.dt;
        match self.params.scheme {
            Scheme::EulerMaruyama => {
                let psi = state.as_slice();
                self.dissipative_increment(psi, noise, ws);
                self.params.hamiltonian.apply_into(psi, &mut ws.tmp);
                for n in 0..psi.len() {
                    ws.incr[n] -= I * ws.tmp[n] * dt;
                }
            }
            Scheme::SplitUnitary => {
                self.propagator.apply(state.as_mut_slice(), &mut ws.tmp);
                self.dissipative_increment(state.as_slice(), noise, ws);
            }
        }
        for (z, dz) in state.as_mut_slice().iter_mut().zip(&ws.incr) {
            *z += dz;
        }
        finish_step(state)
    }
}

/// `brownian_sse_increment` as a free function.
pub fn brownian_sse_increment(state: &PureState, params: &SseParams, noise: NoisePair) -> Result<Array1<C64>> {
    BrownianSse::new(params.clone()).increment(state, noise)
}

/// One normalized Euler–Maruyama step of the Brownian SSE.
pub fn sse_step(state: &PureState, params: &SseParams, noise: NoisePair) -> Result<PureState> {
    let mut next = state.clone();
    BrownianSse::new(params.clone()).step(&mut next, noise)?;
    Ok(next)
}

/// Simultaneous continuous measurement of `x` and `p` at strength `k`,
/// optionally with a system Hamiltonian:
///
/// ```text
/// d|ψ⟩ = −k[(x−⟨x⟩)² + (p−⟨p⟩)²]|ψ⟩dt + √(2k)[(x−⟨x⟩)dW₁ + (p−⟨p⟩)dW₂]|ψ⟩
/// ```
#[derive(Debug, Clone)]
pub struct JointMeasurement {
    k: f64,
    dt: f64,
    hamiltonian: Option<Operator>,
    scheme: Scheme,
    space: FockSpace,
    ladder: Ladder,
    propagator: Option<Propagator>,
}

impl JointMeasurement {
    pub fn new(space: FockSpace, k: f64, dt: f64, hamiltonian: Option<Operator>) -> Result<Self> {
        check_non_negative("k", k)?;
        check_dt(dt)?;
        if let Some(h) = &hamiltonian {
            space.check(h.dim())?;
            check_hamiltonian(h)?;
        }
        let propagator = hamiltonian.as_ref().map(|h| Propagator::new(h, dt));
        Ok(JointMeasurement {
            k,
            dt,
            hamiltonian,
            scheme: Scheme::default(),
            space,
            ladder: Ladder::new(space.dim()),
            propagator,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn hamiltonian(&self) -> Option<&Operator> {
        self.hamiltonian.as_ref()
    }

    fn measurement_increment(&self, psi: &[C64], noise: NoisePair, ws: &mut Workspace) {
        let m = ws.first_order(&self.ladder, psi);
        self.ladder.x_into(&ws.xs, &mut ws.xx);
        self.ladder.p_into(&ws.ps, &mut ws.pp);
        let k = self.k;
        let s = (2.0 * k).sqrt();
        let (mx, mp) = (m.mean_x, m.mean_p);
        let dt = self.dt;
        for n in 0..psi.len() {
            let dx = ws.xs[n] - psi[n] * mx;
            let dp = ws.ps[n] - psi[n] * mp;
            // (x−⟨x⟩)²ψ = x²ψ − 2⟨x⟩xψ + ⟨x⟩²ψ
            let qx = ws.xx[n] - ws.xs[n] * (2.0 * mx) + psi[n] * (mx * mx);
            let qp = ws.pp[n] - ws.ps[n] * (2.0 * mp) + psi[n] * (mp * mp);
            ws.incr[n] = -(qx + qp) * (k * dt) + (dx * noise.dw1 + dp * noise.dw2) * s;
        }
    }

    /// The increment `d|ψ⟩`, including `−iH|ψ⟩dt` when a Hamiltonian is set.
    pub fn increment(&self, state: &PureState, noise: NoisePair) -> Result<Array1<C64>> {
        self.space.check(state.dim())?;
        let d = state.dim();
        let mut ws = Workspace::new(d);
        let psi = state.as_slice();
        self.measurement_increment(psi, noise, &mut ws);
        if let Some(h) = &self.hamiltonian {
            h.apply_into(psi, &mut ws.tmp);
            for n in 0..d {
                ws.incr[n] -= I * ws.tmp[n] * self.dt;
            }
        }
        Ok(Array1::from_vec(ws.incr))
    }
}

impl Stepper for JointMeasurement {
    fn space(&self) -> FockSpace {
        self.space
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, state: &mut PureState, noise: NoisePair, ws: &mut Workspace) -> Result<()> {
        self.space.check(state.dim())?;
        match (&self.propagator, self.scheme) {
            (Some(prop), Scheme::SplitUnitary) => {
                prop.apply(state.as_mut_slice(), &mut ws.tmp);
                self.measurement_increment(state.as_slice(), noise, ws);
            }
            (Some(_), Scheme::EulerMaruyama) => {
                let psi = state.as_slice();
                self.measurement_increment(psi, noise, ws);
                let h = self.hamiltonian.as_ref().expect("propagator implies hamiltonian");
                h.apply_into(psi, &mut ws.tmp);
                for n in 0..psi.len() {
                    ws.incr[n] -= I * ws.tmp[n] * self.dt;
                }
            }
            (None, _) => self.measurement_increment(state.as_slice(), noise, ws),
        }
        for (z, dz) in state.as_mut_slice().iter_mut().zip(&ws.incr) {
            *z += dz;
        }
        finish_step(state)
    }
}

pub fn joint_measurement_increment(state: &PureState, k: f64, noise: NoisePair, dt: f64) -> Result<Array1<C64>> {
    JointMeasurement::new(state.space(), k, dt, None)?.increment(state, noise)
}

/// Second moments of a Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl CovarianceState {
    pub const COHERENT: CovarianceState = CovarianceState {
        var_x: 0.5,
        var_p: 0.5,
        cov_xp: 0.0,
    };

    pub fn of(m: &Moments) -> Self {
        CovarianceState {
            var_x: m.var_x,
            var_p: m.var_p,
            cov_xp: m.cov_xp,
        }
    }

    fn axpy(self, h: f64, d: CovarianceState) -> Self {
        CovarianceState {
            var_x: self.var_x + h * d.var_x,
            var_p: self.var_p + h * d.var_p,
            cov_xp: self.cov_xp + h * d.cov_xp,
        }
    }

    pub fn max_abs_diff(&self, other: &CovarianceState) -> f64 {
        (self.var_x - other.var_x)
            .abs()
            .max((self.var_p - other.var_p).abs())
            .max((self.cov_xp - other.cov_xp).abs())
    }
}

/// Covariance dynamics of a Gaussian state under joint measurement at
/// strength `k` plus harmonic rotation at frequency `omega`.
pub fn covariance_ode_rhs(c: CovarianceState, k: f64, omega: f64) -> CovarianceState {
    let CovarianceState {
        var_x: vx,
        var_p: vp,
        cov_xp: cv,
    } = c;
    CovarianceState {
        var_x: -8.0 * k * vx * vx - 8.0 * k * cv * cv + 2.0 * k + 2.0 * omega * cv,
        var_p: -8.0 * k * vp * vp - 8.0 * k * cv * cv + 2.0 * k - 2.0 * omega * cv,
        cov_xp: -8.0 * k * (vx + vp) * cv + omega * (vp - vx),
    }
}

/// RK4 solution of [`covariance_ode_rhs`]; element `i` is the state at `i·dt`.
pub fn integrate_covariances(c0: CovarianceState, k: f64, omega: f64, dt: f64, steps: usize) -> Vec<CovarianceState> {
    let f = |c| covariance_ode_rhs(c, k, omega);
    let mut out = Vec::with_capacity(steps + 1);
    let mut c = c0;
    out.push(c);
    for _ in 0..steps {
        let k1 = f(c);
        let k2 = f(c.axpy(0.5 * dt, k1));
        let k3 = f(c.axpy(0.5 * dt, k2));
        let k4 = f(c.axpy(dt, k3));
        c = CovarianceState {
            var_x: c.var_x + dt / 6.0 * (k1.var_x + 2.0 * k2.var_x + 2.0 * k3.var_x + k4.var_x),
            var_p: c.var_p + dt / 6.0 * (k1.var_p + 2.0 * k2.var_p + 2.0 * k3.var_p + k4.var_p),
            cov_xp: c.cov_xp + dt / 6.0 * (k1.cov_xp + 2.0 * k2.cov_xp + 2.0 * k3.cov_xp + k4.cov_xp),
        };
        out.push(c);
    }
    out
}

/// Noise stream for trajectory `stream` of an ensemble seeded with `seed`.
/// ChaCha streams are independent, so the draws of one trajectory do not
/// depend on how many others exist or where they run.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of steps of size `dt` in `duration`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Runs one trajectory from `initial` for `t_final`, calling `observer` at
/// `t = 0` and every `observe_every` steps. Step failures carry the time at
/// which they happened.
pub fn run_trajectory<S, F>(
    initial: &PureState,
    stepper: &S,
    t_final: f64,
    seed: u64,
    stream: u64,
    observe_every: usize,
    mut observer: F,
) -> Result<PureState>
where
    S: Stepper + ?Sized,
    F: FnMut(f64, &PureState),
{
    stepper.space().check(initial.dim())?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::param("t_final", format!("must be positive, got {t_final}")));
    }
    let dt = stepper.dt();
    let steps = step_count(t_final, dt);
    let every = observe_every.max(1);
    let mut rng = trajectory_rng(seed, stream);
    let mut ws = Workspace::new(initial.dim());
    let mut state = initial.clone();
    observer(0.0, &state);
    for step in 1..=steps {
        let noise = NoisePair::sample(&mut rng, dt);
        let t = step as f64 * dt;
        stepper.step(&mut state, noise, &mut ws).map_err(|e| e.at(t))?;
        if step % every == 0 {
            observer(t, &state);
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub moments: Moments,
    pub mean_n: f64,
    pub mean_n2: f64,
    pub populations: Vec<f64>,
}

impl TrajectorySample {
    pub fn of(t: f64, state: &PureState) -> Self {
        let populations = state.populations();
        let (mut mean_n, mut mean_n2) = (0.0, 0.0);
        for (n, p) in populations.iter().enumerate() {
            let n = n as f64;
            mean_n += n * p;
            mean_n2 += n * n * p;
        }
        TrajectorySample {
            t,
            moments: crate::fock::moments(state),
            mean_n,
            mean_n2,
            populations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub samples: Vec<TrajectorySample>,
    pub final_state: PureState,
}

/// Records moments, `⟨n⟩`, `⟨n²⟩` and level populations every
/// `record_every` steps of a single trajectory.
pub fn simulate_trajectory<S: Stepper + ?Sized>(
    initial: &PureState,
    stepper: &S,
    t_final: f64,
    seed: u64,
    record_every: usize,
) -> Result<TrajectoryResult> {
    let mut samples = Vec::new();
    let final_state = run_trajectory(initial, stepper, t_final, seed, 0, record_every, |t, s| {
        samples.push(TrajectorySample::of(t, s))
    })?;
    Ok(TrajectoryResult { samples, final_state })
}
