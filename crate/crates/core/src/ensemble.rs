//! Trajectory ensembles: parallel, bit-reproducible runs of a [`Stepper`]
//! with ensemble means, standard errors and the reconstructed density
//! matrix.
//!
//! Trajectory `i` draws its noise from stream `i` of the master seed, runs
//! on whichever worker picks it up, and is folded into the totals in index
//! order. Results therefore depend only on the configuration, not on the
//! thread count.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{coherent_state, fock_state, moments, DensityMatrix, FockSpace, PureState, C64};
use crate::sse::{run_trajectory, step_count, Stepper};

/// Minimum number of post-burn-in samples per trajectory for steady-state
/// statistics.
pub const MIN_STEADY_SAMPLES: usize = 10;

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Fock(usize),
    Coherent(Complex64),
}

impl InitialState {
    pub fn build(&self, space: FockSpace) -> Result<PureState> {
        match *self {
            InitialState::Fock(n) => fock_state(space, n),
            InitialState::Coherent(alpha) => coherent_state(space, alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub initial: InitialState,
    pub n_traj: usize,
    pub t_final: f64,
    /// Samples with `t < burn_in` are excluded from the steady-state
    /// averages and the reconstructed density matrix.
    pub burn_in: f64,
    /// Time between recorded samples; rounded to a whole number of steps.
    pub record_stride: f64,
    pub master_seed: u64,
}

impl EnsembleConfig {
    /// Ten relaxation times of the momentum damping, `20/γ`.
    pub fn default_burn_in(gamma: f64) -> f64 {
        20.0 / gamma
    }
}

/// Per-state observables averaged over the ensemble at one recording time.
/// `var_x`, `var_p`, `cov_xp` are averages of the quantum (per-state)
/// second moments.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observables {
    pub mean_n: f64,
    pub mean_n2: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl Observables {
    fn of(state: &PureState) -> (Self, Vec<f64>) {
        let pops = state.populations();
        let (mut mean_n, mut mean_n2) = (0.0, 0.0);
        for (n, p) in pops.iter().enumerate() {
            let n = n as f64;
            mean_n += n * p;
            mean_n2 += n * n * p;
        }
        let m = moments(state);
        let obs = Observables {
            mean_n,
            mean_n2,
            mean_x: m.mean_x,
            mean_p: m.mean_p,
            var_x: m.var_x,
            var_p: m.var_p,
            cov_xp: m.cov_xp,
        };
        (obs, pops)
    }

    fn as_array(&self) -> [f64; 7] {
        [
            self.mean_n,
            self.mean_n2,
            self.mean_x,
            self.mean_p,
            self.var_x,
            self.var_p,
            self.cov_xp,
        ]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Observables {
            mean_n: a[0],
            mean_n2: a[1],
            mean_x: a[2],
            mean_p: a[3],
            var_x: a[4],
            var_p: a[5],
            cov_xp: a[6],
        }
    }
}

/// Post-burn-in time averages of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub samples: usize,
    pub mean_n: f64,
    pub mean_n2: f64,
    pub populations: Vec<f64>,
    pub mean_x: f64,
    pub mean_p: f64,
    /// Time average of `⟨x⟩²`.
    pub mean_x_sq: f64,
    /// Time average of `⟨p⟩²`.
    pub mean_p_sq: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    /// Largest deviation of `V_x`, `V_p` from 1/2 or of `C_xp` from 0 over
    /// the post-burn-in samples.
    pub max_coherent_deviation: f64,
}

impl TrajectorySummary {
    fn new(dim: usize) -> Self {
        TrajectorySummary {
            samples: 0,
            mean_n: 0.0,
            mean_n2: 0.0,
            populations: vec![0.0; dim],
            mean_x: 0.0,
            mean_p: 0.0,
            mean_x_sq: 0.0,
            mean_p_sq: 0.0,
            var_x: 0.0,
            var_p: 0.0,
            cov_xp: 0.0,
            max_coherent_deviation: 0.0,
        }
    }

    fn add(&mut self, o: &Observables, pops: &[f64]) {
        self.samples += 1;
        self.mean_n += o.mean_n;
        self.mean_n2 += o.mean_n2;
        self.populations.iter_mut().zip(pops).for_each(|(a, p)| *a += p);
        self.mean_x += o.mean_x;
        self.mean_p += o.mean_p;
        self.mean_x_sq += o.mean_x * o.mean_x;
        self.mean_p_sq += o.mean_p * o.mean_p;
        self.var_x += o.var_x;
        self.var_p += o.var_p;
        self.cov_xp += o.cov_xp;
        let dev = (o.var_x - 0.5).abs().max((o.var_p - 0.5).abs()).max(o.cov_xp.abs());
        self.max_coherent_deviation = self.max_coherent_deviation.max(dev);
    }

    fn finish(&mut self) {
        if self.samples == 0 {
            return;
        }
        let k = 1.0 / self.samples as f64;
        for v in [
            &mut self.mean_n,
            &mut self.mean_n2,
            &mut self.mean_x,
            &mut self.mean_p,
            &mut self.mean_x_sq,
            &mut self.mean_p_sq,
            &mut self.var_x,
            &mut self.var_p,
            &mut self.cov_xp,
        ] {
            *v *= k;
        }
        self.populations.iter_mut().for_each(|p| *p *= k);
    }
}

struct TrajectoryOutput {
    series: Vec<Observables>,
    summary: TrajectorySummary,
    rho_sum: Array2<C64>,
}

/// Adds `|ψ⟩⟨ψ|` to the upper triangle of `acc`.
fn accumulate_projector(acc: &mut Array2<C64>, psi: &[C64]) {
    let d = psi.len();
    for i in 0..d {
        let a = psi[i];
        for j in i..d {
            acc[[i, j]] += a * psi[j].conj();
        }
    }
}

fn hermitian_from_upper(mut m: Array2<C64>) -> Array2<C64> {
    let d = m.nrows();
    for i in 0..d {
        m[[i, i]].im = 0.0;
        for j in (i + 1)..d {
            m[[j, i]] = m[[i, j]].conj();
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub time_grid: Vec<f64>,
    /// Ensemble mean of the per-state observables at each recorded time.
    pub mean_observables: Vec<Observables>,
    /// Standard error of `mean` across trajectories (zero for a single
    /// trajectory).
    pub std_errors: Vec<Observables>,
    /// `Σ|ψ⟩⟨ψ|` over trajectories and post-burn-in samples, normalized.
    pub rho_ss: DensityMatrix,
    pub populations_ss: Vec<f64>,
    pub trajectories: Vec<TrajectorySummary>,
    pub burn_in: f64,
}

fn check_config(cfg: &EnsembleConfig, dt: f64) -> Result<(usize, usize)> {
    if cfg.n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(cfg.t_final > 0.0 && cfg.t_final.is_finite()) {
        return Err(Error::param(
            "t_final",
            format!("must be positive, got {}", cfg.t_final),
        ));
    }
    if !(cfg.burn_in >= 0.0 && cfg.burn_in < cfg.t_final) {
        return Err(Error::param(
            "burn_in",
            format!("must lie in [0, t_final), got {}", cfg.burn_in),
        ));
    }
    if !(cfg.record_stride > 0.0 && cfg.record_stride.is_finite()) {
        return Err(Error::param(
            "record_stride",
            format!("must be positive, got {}", cfg.record_stride),
        ));
    }
    let every = step_count(cfg.record_stride, dt).max(1);
    let steps = step_count(cfg.t_final, dt);
    Ok((every, steps))
}

/// Runs `cfg.n_traj` independent trajectories of `stepper`. The first
/// failing trajectory (lowest index) aborts the run and is reported with its
/// index.
pub fn run_ensemble<S: Stepper + ?Sized>(stepper: &S, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    let dt = stepper.dt();
    let (every, steps) = check_config(cfg, dt)?;
    let space = stepper.space();
    let dim = space.dim();
    let initial = cfg.initial.build(space)?;
    let times: Vec<f64> = (0..=steps).step_by(every).map(|s| s as f64 * dt).collect();
    let burn_eps = 0.5 * dt;

    let one = |index: usize| -> Result<TrajectoryOutput> {
        let mut series = Vec::with_capacity(times.len());
        let mut summary = TrajectorySummary::new(dim);
        let mut rho_sum = Array2::<C64>::zeros((dim, dim));
        run_trajectory(
            &initial,
            stepper,
            cfg.t_final,
            cfg.master_seed,
            index as u64,
            every,
            |t, state| {
                let (obs, pops) = Observables::of(state);
                series.push(obs);
                if t >= cfg.burn_in - burn_eps {
                    summary.add(&obs, &pops);
                    accumulate_projector(&mut rho_sum, state.as_slice());
                }
            },
        )
        .map_err(|e| Error::Trajectory {
            index,
            source: Box::new(e),
        })?;
        summary.finish();
        Ok(TrajectoryOutput {
            series,
            summary,
            rho_sum,
        })
    };

    let n_times = times.len();
    let mut sum = vec![[0.0f64; 7]; n_times];
    let mut sum_sq = vec![[0.0f64; 7]; n_times];
    let mut rho = Array2::<C64>::zeros((dim, dim));
    let mut summaries = Vec::with_capacity(cfg.n_traj);
    let indices: Vec<usize> = (0..cfg.n_traj).collect();
    for chunk in indices.chunks(CHUNK) {
        let outputs: Vec<Result<TrajectoryOutput>> = chunk.par_iter().map(|&i| one(i)).collect();
        for out in outputs {
            let out = out?;
            for (k, o) in out.series.iter().enumerate() {
                let a = o.as_array();
                for c in 0..7 {
                    sum[k][c] += a[c];
                    sum_sq[k][c] += a[c] * a[c];
                }
            }
            rho += &out.rho_sum;
            summaries.push(out.summary);
        }
    }

    let n = cfg.n_traj as f64;
    let mut mean = Vec::with_capacity(n_times);
    let mut std_error = Vec::with_capacity(n_times);
    for k in 0..n_times {
        let mut m = [0.0; 7];
        let mut se = [0.0; 7];
        for c in 0..7 {
            m[c] = sum[k][c] / n;
            if cfg.n_traj > 1 {
                let var = ((sum_sq[k][c] - n * m[c] * m[c]) / (n - 1.0)).max(0.0);
                se[c] = (var / n).sqrt();
            }
        }
        mean.push(Observables::from_array(m));
        std_error.push(Observables::from_array(se));
    }

    let count: usize = summaries.iter().map(|s| s.samples).sum();
    if count == 0 {
        return Err(Error::InsufficientSamples { found: 0, required: 1 });
    }
    let rho = hermitian_from_upper(rho.mapv(|z| z / count as f64));
    let rho_ss = DensityMatrix::from_matrix(space, rho)?;
    let populations_ss = rho_ss.populations();
    Ok(EnsembleResult {
        time_grid: times,
        mean_observables: mean,
        std_errors: std_error,
        rho_ss,
        populations_ss,
        trajectories: summaries,
        burn_in: cfg.burn_in,
    })
}

/// A value with its standard error across trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count() as f64;
        let value = xs.clone().sum::<f64>() / n;
        let std_error = if n > 1.0 {
            (xs.map(|x| (x - value).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate { value, std_error }
    }

    /// Number of standard errors separating `value` from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }
}

/// Steady-state averages over trajectories and post-burn-in time. Standard
/// errors treat each trajectory's time average as one independent sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStats {
    pub mean_n: Estimate,
    pub mean_n2: Estimate,
    pub populations: Vec<Estimate>,
    /// Spread of `⟨x⟩` over trajectories and time.
    pub variance_of_mean_x: Estimate,
    /// Spread of `⟨p⟩` over trajectories and time.
    pub variance_of_mean_p: Estimate,
    pub trajectories: usize,
    pub samples_per_trajectory: usize,
}

fn variance_of_means(
    sums: &[TrajectorySummary],
    mean: impl Fn(&TrajectorySummary) -> f64,
    mean_sq: impl Fn(&TrajectorySummary) -> f64,
) -> Estimate {
    let mu = sums.iter().map(&mean).sum::<f64>() / sums.len() as f64;
    // delta method: V = E[m²] − μ², linearized per trajectory around μ
    let est = Estimate::from_samples(sums.iter().map(|s| mean_sq(s) - 2.0 * mu * mean(s)));
    Estimate {
        value: est.value + mu * mu,
        std_error: est.std_error,
    }
}

pub fn steady_statistics(result: &EnsembleResult) -> Result<SteadyStats> {
    let sums = &result.trajectories;
    if sums.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let samples = sums.iter().map(|s| s.samples).min().unwrap_or(0);
    if samples < MIN_STEADY_SAMPLES {
        return Err(Error::InsufficientSamples {
            found: samples,
            required: MIN_STEADY_SAMPLES,
        });
    }
    let dim = sums[0].populations.len();
    let populations = (0..dim)
        .map(|n| Estimate::from_samples(sums.iter().map(move |s| s.populations[n])))
        .collect();
    Ok(SteadyStats {
        mean_n: Estimate::from_samples(sums.iter().map(|s| s.mean_n)),
        mean_n2: Estimate::from_samples(sums.iter().map(|s| s.mean_n2)),
        populations,
        variance_of_mean_x: variance_of_means(sums, |s| s.mean_x, |s| s.mean_x_sq),
        variance_of_mean_p: variance_of_means(sums, |s| s.mean_p, |s| s.mean_p_sq),
        trajectories: sums.len(),
        samples_per_trajectory: samples,
    })
}

/// `Σᵢ |ψᵢ⟩⟨ψᵢ| / N` for normalized states of one space.
pub fn reconstruct_density(states: &[PureState]) -> Result<DensityMatrix> {
    let first = states.first().ok_or(Error::EmptyEnsemble)?;
    let space = first.space();
    let d = space.dim();
    let mut acc = Array2::<C64>::zeros((d, d));
    for s in states {
        space.check(s.dim())?;
        if !s.is_normalized() {
            return Err(Error::InvalidDensity(format!(
                "state with norm {} in ensemble",
                s.norm()
            )));
        }
        accumulate_projector(&mut acc, s.as_slice());
    }
    let n = states.len() as f64;
    DensityMatrix::from_matrix(space, hermitian_from_upper(acc.mapv(|z| z / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::harmonic_hamiltonian;
    use crate::sse::{simulate_trajectory, BrownianSse, SseParams};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn sse(dim: usize, gamma: f64, dt: f64) -> BrownianSse {
        let s = FockSpace::new(dim).unwrap();
        BrownianSse::new(SseParams::brownian(harmonic_hamiltonian(s, 2.0 * PI).unwrap(), gamma, 1.0, dt).unwrap())
    }

    fn cfg(n: usize) -> EnsembleConfig {
        EnsembleConfig {
            initial: InitialState::Fock(0),
            n_traj: n,
            t_final: 1.0,
            burn_in: 0.5,
            record_stride: 0.01,
            master_seed: 5,
        }
    }

    #[test]
    fn reconstruct_examples() {
        let s = FockSpace::new(4).unwrap();
        let a = fock_state(s, 0).unwrap();
        let b = fock_state(s, 1).unwrap();
        let rho = reconstruct_density(&[a.clone(), b]).unwrap();
        assert_eq!(rho.populations()[..2], [0.5, 0.5]);
        assert_eq!(rho.entries()[[0, 1]], C64::new(0.0, 0.0));
        let same = reconstruct_density(&[a.clone(), a.clone()]).unwrap();
        assert_abs_diff_eq!(same.purity(), 1.0, epsilon = 1e-15);
        assert_eq!(reconstruct_density(&[]), Err(Error::EmptyEnsemble));
        let other = fock_state(FockSpace::new(5).unwrap(), 0).unwrap();
        assert!(matches!(
            reconstruct_density(&[a, other]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_trajectory_matches_direct_run() {
        let st = sse(24, 4.0, 1e-3);
        let r = run_ensemble(&st, &cfg(1)).unwrap();
        let init = fock_state(FockSpace::new(24).unwrap(), 0).unwrap();
        let direct = simulate_trajectory(&init, &st, 1.0, 5, 10).unwrap();
        assert_eq!(r.time_grid.len(), direct.samples.len());
        for (m, d) in r.mean_observables.iter().zip(&direct.samples) {
            assert_eq!(m.mean_n, d.mean_n);
            assert_eq!(m.mean_x, d.moments.mean_x);
        }
        assert!(r.std_errors.iter().all(|e| e.mean_n == 0.0));
    }

    #[test]
    fn results_are_bit_reproducible_across_thread_counts() {
        let st = sse(24, 4.0, 1e-3);
        let c = cfg(100);
        let a = run_ensemble(&st, &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_ensemble(&st, &c).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors() {
        let st = sse(24, 4.0, 1e-3);
        assert_eq!(run_ensemble(&st, &cfg(0)), Err(Error::EmptyEnsemble));
        let mut c = cfg(2);
        c.burn_in = 2.0;
        assert!(matches!(
            run_ensemble(&st, &c),
            Err(Error::InvalidParameter { name: "burn_in", .. })
        ));
        let mut c = cfg(2);
        c.burn_in = 0.95;
        let r = run_ensemble(&st, &c).unwrap();
        assert!(matches!(
            steady_statistics(&r),
            Err(Error::InsufficientSamples { found: 6, .. })
        ));
    }

    #[test]
    fn failing_trajectory_is_identified() {
        let st = sse(4, 4.0, 1e-3);
        let err = run_ensemble(&st, &cfg(8)).unwrap_err();
        match err {
            Error::Trajectory { index, source } => {
                assert_eq!(index, 0);
                assert!(matches!(source.root(), Error::TruncationLeakage { .. }));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn steady_density_is_physical() {
        let st = sse(24, 4.0, 1e-3);
        let r = run_ensemble(&st, &cfg(20)).unwrap();
        let report = crate::observables::physicality_report(&r.rho_ss);
        assert!(report.min_eigenvalue > -1e-12);
        assert!(report.trace_error < 1e-12);
        let stats = steady_statistics(&r).unwrap();
        assert_eq!(stats.samples_per_trajectory, 51);
        let total: f64 = stats.populations.iter().map(|p| p.value).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            stats.mean_n.value,
            crate::observables::phonon_stats(&r.rho_ss).mean_n,
            epsilon = 1e-10
        );
    }
}
