//! Truncated Fock-space linear algebra: the number basis |0⟩…|dim−1⟩,
//! dense operators acting on it, pure states, density matrices and the
//! quadrature statistics of a state.
//!
//! Units are ħ = 1 throughout and the quadratures are dimensionless,
//! `x = (a + a†)/√2`, `p = −i(a − a†)/√2`. Truncation corrupts `[x, p] = i`
//! in the top level only; callers keep the top-level population small.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Tail weight above which a state constructor refuses to truncate.
pub const STATE_LEAKAGE_THRESHOLD: f64 = 1e-6;

/// Tolerance for the Hermiticity and trace checks on density matrices.
pub const DENSITY_TOLERANCE: f64 = 1e-10;

/// Tolerance for [`PureState::is_normalized`].
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { dim });
        }
        Ok(FockSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn check(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }
}

pub fn make_space(dim: usize) -> Result<FockSpace> {
    FockSpace::new(dim)
}

/// Precomputed `√n` table for applying ladder operators without a matrix.
#[derive(Debug, Clone)]
pub(crate) struct Ladder {
    sqrt: Vec<f64>,
}

impl Ladder {
    pub(crate) fn new(dim: usize) -> Self {
        Ladder {
            sqrt: (0..dim).map(|n| (n as f64).sqrt()).collect(),
        }
    }

    /// `xs = x·v`, `ps = p·v`.
    #[inline]
    pub(crate) fn quadratures_into(&self, v: &[C64], xs: &mut [C64], ps: &mut [C64]) {
        let d = v.len();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for n in 0..d {
            // a·v at n and a†·v at n
            let lower = if n + 1 < d { v[n + 1] * self.sqrt[n + 1] } else { ZERO };
            let raise = if n > 0 { v[n - 1] * self.sqrt[n] } else { ZERO };
            xs[n] = (lower + raise) * s;
            let diff = lower - raise;
            // −i·diff/√2
            ps[n] = C64::new(diff.im, -diff.re) * s;
        }
    }

    #[inline]
    pub(crate) fn x_into(&self, v: &[C64], out: &mut [C64]) {
        let d = v.len();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for n in 0..d {
            let lower = if n + 1 < d { v[n + 1] * self.sqrt[n + 1] } else { ZERO };
            let raise = if n > 0 { v[n - 1] * self.sqrt[n] } else { ZERO };
            out[n] = (lower + raise) * s;
        }
    }

    #[inline]
    pub(crate) fn p_into(&self, v: &[C64], out: &mut [C64]) {
        let d = v.len();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for n in 0..d {
            let lower = if n + 1 < d { v[n + 1] * self.sqrt[n + 1] } else { ZERO };
            let raise = if n > 0 { v[n - 1] * self.sqrt[n] } else { ZERO };
            let diff = lower - raise;
            out[n] = C64::new(diff.im, -diff.re) * s;
        }
    }
}

#[inline]
pub(crate) fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

#[inline]
pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// A dense operator on a truncated Fock space.
///
/// The band structure is detected at construction so that products with
/// tridiagonal operators (ladders, quadratures) and diagonal Hamiltonians
/// cost `O(bandwidth·dim)` per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: FockSpace,
    entries: Array2<C64>,
    bandwidth: usize,
}

impl Operator {
    pub fn from_matrix(space: FockSpace, entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        space.check(r)?;
        space.check(c)?;
        let entries = entries.as_standard_layout().into_owned();
        let bandwidth = entries
            .indexed_iter()
            .filter(|(_, z)| **z != ZERO)
            .map(|((i, j), _)| i.abs_diff(j))
            .max()
            .unwrap_or(0);
        Ok(Operator {
            space,
            entries,
            bandwidth,
        })
    }

    fn from_diagonal(space: FockSpace, diag: impl Fn(usize) -> C64) -> Self {
        let d = space.dim();
        let entries = Array2::from_shape_fn((d, d), |(i, j)| if i == j { diag(i) } else { ZERO });
        Operator {
            space,
            entries,
            bandwidth: 0,
        }
    }

    /// Real diagonal operator with the given eigenvalues.
    pub fn diagonal(space: FockSpace, values: &[f64]) -> Result<Self> {
        space.check(values.len())?;
        Ok(Self::from_diagonal(space, |n| C64::new(values[n], 0.0)))
    }

    pub fn identity(space: FockSpace) -> Self {
        Self::from_diagonal(space, |_| ONE)
    }

    pub fn annihilation(space: FockSpace) -> Self {
        let d = space.dim();
        let mut entries = Array2::zeros((d, d));
        for n in 1..d {
            entries[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        Operator {
            space,
            entries,
            bandwidth: 1,
        }
    }

    pub fn creation(space: FockSpace) -> Self {
        Self::annihilation(space).dagger()
    }

    /// `a†a`, built directly as `diag(0, 1, …, dim−1)`.
    pub fn number(space: FockSpace) -> Self {
        Self::from_diagonal(space, |n| C64::new(n as f64, 0.0))
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn dagger(&self) -> Self {
        let entries = self.entries.t().mapv(|z| z.conj()).as_standard_layout().into_owned();
        Operator {
            space: self.space,
            entries,
            bandwidth: self.bandwidth,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Operator::from_matrix(self.space, self.entries.mapv(|z| z * s)).expect("same space")
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.space.check(other.dim())?;
        Operator::from_matrix(self.space, &self.entries + &other.entries)
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.space.check(other.dim())?;
        Operator::from_matrix(self.space, &self.entries - &other.entries)
    }

    pub fn matmul(&self, other: &Operator) -> Result<Self> {
        self.space.check(other.dim())?;
        Operator::from_matrix(self.space, self.entries.dot(&other.entries))
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Largest entrywise deviation `|M − M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= 1e-12
    }

    /// The eigenvalues when the operator is real and diagonal in the Fock basis.
    pub fn real_diagonal(&self) -> Option<Vec<f64>> {
        if self.bandwidth != 0 || self.entries.diag().iter().any(|z| z.im != 0.0) {
            return None;
        }
        Some(self.entries.diag().iter().map(|z| z.re).collect())
    }

    /// `out = M·v` using the band structure.
    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        let m = self.entries.as_slice().expect("standard layout");
        let bw = self.bandwidth;
        for i in 0..d {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw + 1).min(d);
            let row = &m[i * d..(i + 1) * d];
            let mut acc = ZERO;
            for j in lo..hi {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<Array1<C64>> {
        self.space.check(state.dim())?;
        let mut out = Array1::zeros(self.dim());
        self.apply_into(
            state.amplitudes.as_slice().expect("contiguous"),
            out.as_slice_mut().expect("contiguous"),
        );
        Ok(out)
    }

    /// `M·rho`.
    pub(crate) fn left_mul(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = self.dim();
        let m = self.entries.as_slice().expect("standard layout");
        let bw = self.bandwidth;
        let mut out = Array2::zeros((d, d));
        {
            let o = out.as_slice_mut().expect("standard layout");
            for i in 0..d {
                let lo = i.saturating_sub(bw);
                let hi = (i + bw + 1).min(d);
                for k in lo..hi {
                    let mik = m[i * d + k];
                    if mik == ZERO {
                        continue;
                    }
                    let src = rho.row(k);
                    let dst = &mut o[i * d..(i + 1) * d];
                    for (dj, sj) in dst.iter_mut().zip(src.iter()) {
                        *dj += mik * sj;
                    }
                }
            }
        }
        out
    }

    /// `rho·M`.
    pub(crate) fn right_mul(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = self.dim();
        let m = self.entries.as_slice().expect("standard layout");
        let bw = self.bandwidth;
        let mut out = Array2::zeros((d, d));
        {
            let o = out.as_slice_mut().expect("standard layout");
            for i in 0..d {
                let src = rho.row(i);
                let dst = &mut o[i * d..(i + 1) * d];
                for (k, &rik) in src.iter().enumerate() {
                    if rik == ZERO {
                        continue;
                    }
                    let lo = k.saturating_sub(bw);
                    let hi = (k + bw + 1).min(d);
                    let mrow = &m[k * d..(k + 1) * d];
                    for j in lo..hi {
                        dst[j] += rik * mrow[j];
                    }
                }
            }
        }
        out
    }

    /// `[M, rho]`.
    pub(crate) fn commute(&self, rho: &Array2<C64>) -> Array2<C64> {
        self.left_mul(rho) - self.right_mul(rho)
    }

    /// `{M, rho}`.
    pub(crate) fn anticommute(&self, rho: &Array2<C64>) -> Array2<C64> {
        self.left_mul(rho) + self.right_mul(rho)
    }
}

pub(crate) fn hermiticity_error(m: &Array2<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn annihilation(space: FockSpace) -> Operator {
    Operator::annihilation(space)
}

/// The dimensionless quadratures `(x, p)`.
pub fn quadratures(space: FockSpace) -> (Operator, Operator) {
    let a = Operator::annihilation(space);
    let ad = a.dagger();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = a.add(&ad).expect("same space").scale(C64::new(s, 0.0));
    let p = a.sub(&ad).expect("same space").scale(C64::new(0.0, -s));
    (x, p)
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::param(
            "omega",
            format!("must be positive and finite, got {omega}"),
        ));
    }
    Ok(())
}

/// `ω(n + 1/2)`, diagonal in the number basis.
pub fn harmonic_hamiltonian(space: FockSpace, omega: f64) -> Result<Operator> {
    check_omega(omega)?;
    Ok(Operator::from_diagonal(space, |n| {
        C64::new(omega * (n as f64 + 0.5), 0.0)
    }))
}

/// The χ⁽³⁾ oscillator `ω(a†a)²`, spectrum `E_n = ωn²`.
pub fn kerr_hamiltonian(space: FockSpace, omega: f64) -> Result<Operator> {
    check_omega(omega)?;
    Ok(Operator::from_diagonal(space, |n| {
        C64::new(omega * (n * n) as f64, 0.0)
    }))
}

/// A state vector in the number basis. Integrators renormalize after every
/// step; constructors in this module always return unit-norm states.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    space: FockSpace,
    amplitudes: Array1<C64>,
}

impl PureState {
    /// Wraps amplitudes as given, without normalizing.
    pub fn from_amplitudes(space: FockSpace, amplitudes: Array1<C64>) -> Result<Self> {
        space.check(amplitudes.len())?;
        Ok(PureState {
            space,
            amplitudes: amplitudes.as_standard_layout().into_owned(),
        })
    }

    /// Wraps and normalizes the amplitudes.
    pub fn normalized(space: FockSpace, amplitudes: Array1<C64>) -> Result<Self> {
        let mut s = Self::from_amplitudes(space, amplitudes)?;
        s.normalize()?;
        Ok(s)
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub(crate) fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice().expect("contiguous")
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        self.amplitudes.as_slice_mut().expect("contiguous")
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(self.as_slice()).sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (norm_sqr(self.as_slice()) - 1.0).abs() <= NORM_TOLERANCE
    }

    /// Rescales to unit norm and returns the norm before rescaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateNorm { norm: n });
        }
        let inv = 1.0 / n;
        self.amplitudes.mapv_inplace(|z| z * inv);
        Ok(n)
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        self.space.check(other.dim())?;
        Ok(dot(self.as_slice(), other.as_slice()))
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn top_population(&self) -> f64 {
        self.amplitudes[self.dim() - 1].norm_sqr()
    }
}

pub fn fock_state(space: FockSpace, n: usize) -> Result<PureState> {
    if n >= space.dim() {
        return Err(Error::IndexOutOfRange {
            index: n,
            dim: space.dim(),
        });
    }
    let mut amps = Array1::zeros(space.dim());
    amps[n] = ONE;
    Ok(PureState {
        space,
        amplitudes: amps,
    })
}

/// Coherent state `|α⟩`, truncated and renormalized. Fails when the Poisson
/// weight beyond the retained levels exceeds [`STATE_LEAKAGE_THRESHOLD`].
pub fn coherent_state(space: FockSpace, alpha: C64) -> Result<PureState> {
    let d = space.dim();
    let mean = alpha.norm_sqr();
    let mut c = C64::new((-mean / 2.0).exp(), 0.0);
    let mut amps = Array1::zeros(d);
    amps[0] = c;
    for n in 1..d {
        c = c * alpha / (n as f64).sqrt();
        amps[n] = c;
    }
    // Poisson tail beyond the truncation, summed term by term.
    let mut tail = 0.0;
    let mut n = d;
    let stop = d + 64 + (16.0 * mean) as usize;
    let mut term = c.norm_sqr();
    while n < stop {
        term *= mean / n as f64;
        tail += term;
        if term < 1e-300 || (term < tail * 1e-17 && n as f64 > mean) {
            break;
        }
        n += 1;
    }
    if !tail.is_finite() || tail > STATE_LEAKAGE_THRESHOLD {
        return Err(Error::TruncationLeakage {
            weight: tail,
            threshold: STATE_LEAKAGE_THRESHOLD,
        });
    }
    PureState::normalized(space, amps)
}

/// `⟨ψ|M|ψ⟩` for a normalized state.
pub fn expectation(op: &Operator, state: &PureState) -> Result<C64> {
    let mv = op.apply(state)?;
    Ok(dot(state.as_slice(), mv.as_slice().expect("contiguous")))
}

/// Means, variances and symmetrized covariance of the quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl Moments {
    /// `V_x·V_p − C_xp²`; at least 1/4 for any state.
    pub fn uncertainty_product(&self) -> f64 {
        self.var_x * self.var_p - self.cov_xp * self.cov_xp
    }

    /// Moments from a normalized state and its images `x|ψ⟩`, `p|ψ⟩`.
    #[inline]
    pub(crate) fn from_images(psi: &[C64], xs: &[C64], ps: &[C64]) -> Self {
        let mean_x = dot(psi, xs).re;
        let mean_p = dot(psi, ps).re;
        let x2 = norm_sqr(xs);
        let p2 = norm_sqr(ps);
        let sym = dot(xs, ps).re;
        Moments {
            mean_x,
            mean_p,
            var_x: x2 - mean_x * mean_x,
            var_p: p2 - mean_p * mean_p,
            cov_xp: sym - mean_x * mean_p,
        }
    }
}

pub fn moments(state: &PureState) -> Moments {
    let d = state.dim();
    let ladder = Ladder::new(d);
    let mut xs = vec![ZERO; d];
    let mut ps = vec![ZERO; d];
    ladder.quadratures_into(state.as_slice(), &mut xs, &mut ps);
    Moments::from_images(state.as_slice(), &xs, &ps)
}

/// Hermitian, unit-trace complex matrix on a Fock space.
///
/// Positivity is not enforced: some master-equation variants are not
/// completely positive, so small negative eigenvalues are diagnostics
/// (see `observables::physicality_report`) rather than construction errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: FockSpace,
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(space: FockSpace, entries: Array2<C64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(space, entries)?;
        let herm = rho.hermiticity_error();
        if herm > DENSITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let terr = rho.trace_error();
        if terr > DENSITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!("trace differs from 1 by {terr:.3e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(space: FockSpace, entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        space.check(r)?;
        space.check(c)?;
        Ok(DensityMatrix {
            space,
            entries: entries.as_standard_layout().into_owned(),
        })
    }

    /// Diagonal density matrix from level probabilities.
    pub fn from_populations(space: FockSpace, probs: &[f64]) -> Result<Self> {
        space.check(probs.len())?;
        let d = space.dim();
        let entries = Array2::from_shape_fn((d, d), |(i, j)| if i == j { C64::new(probs[i], 0.0) } else { ZERO });
        Self::from_matrix(space, entries)
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.amplitudes();
        let d = state.dim();
        let entries = Array2::from_shape_fn((d, d), |(i, j)| v[i] * v[j].conj());
        DensityMatrix {
            space: state.space(),
            entries,
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut Array2<C64> {
        &mut self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - ONE).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.entries.diag().iter().map(|z| z.re).collect()
    }

    pub fn top_population(&self) -> f64 {
        let d = self.dim();
        self.entries[[d - 1, d - 1]].re
    }

    /// `ρ ← (ρ + ρ†)/2`.
    pub(crate) fn symmetrize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            self.entries[[i, i]].im = 0.0;
            for j in (i + 1)..d {
                let avg = (self.entries[[i, j]] + self.entries[[j, i]].conj()) * 0.5;
                self.entries[[i, j]] = avg;
                self.entries[[j, i]] = avg.conj();
            }
        }
    }
}

pub fn pure_to_density(state: &PureState) -> DensityMatrix {
    DensityMatrix::from_pure(state)
}

/// `Tr(Mρ)`.
pub fn density_expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    op.space().check(rho.dim())?;
    Ok(op.left_mul(rho.entries()).diag().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    #[test]
    fn space_dimension_bounds() {
        assert_eq!(make_space(2).unwrap().dim(), 2);
        assert_eq!(make_space(30).unwrap().dim(), 30);
        assert_eq!(make_space(1), Err(Error::InvalidDimension { dim: 1 }));
        assert_eq!(make_space(0), Err(Error::InvalidDimension { dim: 0 }));
    }

    #[test]
    fn annihilation_entries() {
        let a = annihilation(space(2));
        assert_eq!(a.entries()[[0, 1]], ONE);
        assert_eq!(a.entries()[[0, 0]], ZERO);
        assert_eq!(a.entries()[[1, 0]], ZERO);
        assert_eq!(a.entries()[[1, 1]], ZERO);

        let a = annihilation(space(3));
        for ((i, j), z) in a.entries().indexed_iter() {
            let want = match (i, j) {
                (0, 1) => 1.0,
                (1, 2) => 2f64.sqrt(),
                _ => 0.0,
            };
            assert_eq!(*z, C64::new(want, 0.0));
        }
    }

    #[test]
    fn number_operator_from_ladders() {
        let s = space(7);
        let a = annihilation(s);
        let n = a.dagger().matmul(&a).unwrap();
        assert_eq!(n.bandwidth(), 0);
        for k in 0..7 {
            assert_abs_diff_eq!(n.entries()[[k, k]].re, k as f64, epsilon = 1e-14);
            let fk = fock_state(s, k).unwrap();
            assert_abs_diff_eq!(expectation(&n, &fk).unwrap().re, k as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadrature_definitions() {
        let (x, p) = quadratures(space(2));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(x.entries()[[0, 1]].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(x.entries()[[1, 0]].re, s, epsilon = 1e-15);
        assert_eq!(x.entries()[[0, 0]], ZERO);
        assert!(x.is_hermitian() && p.is_hermitian());
        assert_eq!(x.bandwidth(), 1);
        assert_eq!(p.bandwidth(), 1);
    }

    #[test]
    fn canonical_commutator_below_top_level() {
        let d = 9;
        let (x, p) = quadratures(space(d));
        let c = x.commutator(&p).unwrap();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j && i < d - 1 { I } else { ZERO };
                if i == d - 1 && j == d - 1 {
                    // truncation: −i(dim−1) instead of i
                    assert_abs_diff_eq!(c.entries()[[i, j]].im, -((d - 1) as f64), epsilon = 1e-12);
                    continue;
                }
                assert_abs_diff_eq!((c.entries()[[i, j]] - want).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_quadrature_variance() {
        let s = space(5);
        let (x, _) = quadratures(s);
        let x2 = x.matmul(&x).unwrap();
        let vac = fock_state(s, 0).unwrap();
        assert_abs_diff_eq!(expectation(&x2, &vac).unwrap().re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expectation(&x, &vac).unwrap().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonians() {
        let w = 2.0 * std::f64::consts::PI;
        let pi = std::f64::consts::PI;
        let h = harmonic_hamiltonian(space(3), w).unwrap();
        let e = h.real_diagonal().unwrap();
        for (got, want) in e.iter().zip([pi, 3.0 * pi, 5.0 * pi]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let h = harmonic_hamiltonian(space(10), w).unwrap();
        let e = h.real_diagonal().unwrap();
        for pair in e.windows(2) {
            assert_abs_diff_eq!(pair[1] - pair[0], w, epsilon = 1e-12);
        }
        let n = Operator::number(space(10));
        assert_eq!(
            h.commutator(&n)
                .unwrap()
                .entries()
                .iter()
                .map(|z| z.norm())
                .sum::<f64>(),
            0.0
        );

        let k = kerr_hamiltonian(space(4), w).unwrap();
        let e = k.real_diagonal().unwrap();
        for (got, want) in e.iter().zip([0.0, 2.0 * pi, 8.0 * pi, 18.0 * pi]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        // lowest gap shared with the harmonic oscillator
        assert_abs_diff_eq!(e[1] - e[0], w, epsilon = 1e-12);
        assert!(harmonic_hamiltonian(space(3), 0.0).is_err());
        assert!(kerr_hamiltonian(space(3), -1.0).is_err());
    }

    #[test]
    fn fock_state_bounds() {
        let s = space(5);
        let n = Operator::number(s);
        assert_eq!(expectation(&n, &fock_state(s, 0).unwrap()).unwrap(), ZERO);
        assert_abs_diff_eq!(expectation(&n, &fock_state(s, 2).unwrap()).unwrap().re, 2.0);
        assert_eq!(fock_state(s, 5), Err(Error::IndexOutOfRange { index: 5, dim: 5 }));
    }

    #[test]
    fn coherent_state_moments() {
        let s = space(20);
        let vac = coherent_state(s, ZERO).unwrap();
        assert_eq!(vac, fock_state(s, 0).unwrap());

        let st = coherent_state(s, ONE).unwrap();
        assert!(st.is_normalized());
        let m = moments(&st);
        assert_abs_diff_eq!(m.mean_x, 2f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.var_x, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(m.var_p, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(m.cov_xp, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn coherent_state_leakage() {
        // Poisson(16) weight above n = 5 is 1 − e⁻¹⁶ Σ_{n≤5} 16ⁿ/n! ≈ 0.9986
        match coherent_state(space(6), C64::new(4.0, 0.0)) {
            Err(Error::TruncationLeakage { weight, .. }) => assert!(weight > 0.99 && weight < 1.0),
            other => panic!("expected leakage error, got {other:?}"),
        }
    }

    #[test]
    fn expectation_examples() {
        let s = space(6);
        let w = 2.0 * std::f64::consts::PI;
        let n = Operator::number(s);
        let (x, _) = quadratures(s);
        assert_abs_diff_eq!(expectation(&n, &fock_state(s, 2).unwrap()).unwrap().re, 2.0);
        assert_eq!(expectation(&x, &fock_state(s, 0).unwrap()).unwrap(), ZERO);
        let k = kerr_hamiltonian(s, w).unwrap();
        assert_abs_diff_eq!(
            expectation(&k, &fock_state(s, 3).unwrap()).unwrap().re,
            18.0 * std::f64::consts::PI,
            epsilon = 1e-12
        );
        let other = space(5);
        assert!(matches!(
            expectation(&n, &fock_state(other, 0).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Matrix-element oracle: ⟨ψ|AB|ψ⟩ by explicit double sums over the
    /// dense entries, independent of the ladder kernel.
    fn brute_moments(st: &PureState) -> Moments {
        let (x, p) = quadratures(st.space());
        let v = st.amplitudes();
        let d = st.dim();
        let ev = |a: &Array2<C64>, b: Option<&Array2<C64>>| {
            let mut acc = ZERO;
            for i in 0..d {
                for j in 0..d {
                    let mij = match b {
                        None => a[[i, j]],
                        Some(b) => (0..d).map(|k| a[[i, k]] * b[[k, j]]).sum(),
                    };
                    acc += v[i].conj() * mij * v[j];
                }
            }
            acc
        };
        let (xe, pe) = (x.entries(), p.entries());
        let mx = ev(xe, None).re;
        let mp = ev(pe, None).re;
        Moments {
            mean_x: mx,
            mean_p: mp,
            var_x: ev(xe, Some(xe)).re - mx * mx,
            var_p: ev(pe, Some(pe)).re - mp * mp,
            cov_xp: 0.5 * (ev(xe, Some(pe)) + ev(pe, Some(xe))).re - mx * mp,
        }
    }

    #[test]
    fn moments_examples() {
        let s = space(8);
        let m = moments(&fock_state(s, 0).unwrap());
        assert_eq!((m.mean_x, m.mean_p, m.cov_xp), (0.0, 0.0, 0.0));
        assert_abs_diff_eq!(m.var_x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.var_p, 0.5, epsilon = 1e-15);

        let one = fock_state(s, 1).unwrap();
        let m = moments(&one);
        let b = brute_moments(&one);
        assert_abs_diff_eq!(b.var_x, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_x, b.var_x, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_p, b.var_p, epsilon = 1e-14);
        assert_abs_diff_eq!(m.cov_xp, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn density_examples() {
        let s = space(4);
        let n = Operator::number(s);
        let vac = pure_to_density(&fock_state(s, 0).unwrap());
        assert_eq!(density_expectation(&n, &vac).unwrap(), ZERO);
        let mix = DensityMatrix::from_populations(s, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(
            density_expectation(&Operator::identity(s), &mix).unwrap().re,
            1.0,
            epsilon = 1e-15
        );
        let one = pure_to_density(&fock_state(s, 1).unwrap());
        assert_abs_diff_eq!(one.purity(), 1.0, epsilon = 1e-15);
        assert!(DensityMatrix::from_populations(s, &[0.5, 0.2, 0.0, 0.0]).is_err());
        assert!(density_expectation(&Operator::number(space(3)), &one).is_err());
    }

    #[test]
    fn banded_products_match_dense() {
        let s = space(6);
        let (x, p) = quadratures(s);
        let x2 = x.matmul(&x).unwrap();
        let rho = Array2::from_shape_fn((6, 6), |(i, j)| C64::new((i * 7 + j) as f64, (i as f64) - (j as f64)));
        for op in [&x, &p, &x2] {
            let l = op.left_mul(&rho);
            let r = op.right_mul(&rho);
            let ld = op.entries().dot(&rho);
            let rd = rho.dot(op.entries());
            assert_abs_diff_eq!((&l - &ld).iter().map(|z| z.norm()).sum::<f64>(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!((&r - &rd).iter().map(|z| z.norm()).sum::<f64>(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ladder_kernel_matches_operators() {
        let s = space(7);
        let (x, p) = quadratures(s);
        let st = PureState::normalized(
            s,
            Array1::from_shape_fn(7, |n| C64::new(1.0 / (n + 1) as f64, 0.3 * n as f64)),
        )
        .unwrap();
        let lad = Ladder::new(7);
        let mut xs = vec![ZERO; 7];
        let mut ps = vec![ZERO; 7];
        lad.quadratures_into(st.as_slice(), &mut xs, &mut ps);
        let xd = x.apply(&st).unwrap();
        let pd = p.apply(&st).unwrap();
        for n in 0..7 {
            assert_abs_diff_eq!((xs[n] - xd[n]).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((ps[n] - pd[n]).norm(), 0.0, epsilon = 1e-14);
        }
        let m = moments(&st);
        let b = brute_moments(&st);
        assert_abs_diff_eq!(m.mean_x, b.mean_x, epsilon = 1e-13);
        assert_abs_diff_eq!(m.mean_p, b.mean_p, epsilon = 1e-13);
        assert_abs_diff_eq!(m.var_x, b.var_x, epsilon = 1e-13);
        assert_abs_diff_eq!(m.var_p, b.var_p, epsilon = 1e-13);
        assert_abs_diff_eq!(m.cov_xp, b.cov_xp, epsilon = 1e-13);
    }
}
