//! Reference distributions and diagnostics: the geometric thermal state,
//! Boltzmann weights for an arbitrary spectrum, phonon-number statistics and
//! a physicality report for density matrices.
//!
//! Temperature enters only through the thermal occupation `n_T`; the inverse
//! temperature is recovered as `β = ln(1 + 1/n_T)/ω`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockSpace, C64, STATE_LEAKAGE_THRESHOLD};

fn check_n_t(n_t: f64, strict: bool) -> Result<()> {
    let ok = n_t.is_finite() && if strict { n_t > 0.0 } else { n_t >= 0.0 };
    if !ok {
        let bound = if strict { "positive" } else { "non-negative" };
        return Err(Error::param("n_t", format!("must be finite and {bound}, got {n_t}")));
    }
    Ok(())
}

/// `k_B T/(ħω) = 1/ln(1 + 1/n_T)`, the inverse of the Bose–Einstein occupation.
pub fn reduced_temperature(n_t: f64) -> Result<f64> {
    check_n_t(n_t, true)?;
    Ok(1.0 / (1.0 / n_t).ln_1p())
}

/// Geometric (thermal harmonic) populations `p_n = n_T^n/(n_T+1)^{n+1}`,
/// renormalized on `dim` levels.
pub fn thermal_populations(n_t: f64, dim: usize) -> Result<Vec<f64>> {
    check_n_t(n_t, false)?;
    let ratio = n_t / (n_t + 1.0);
    let tail = ratio.powi(dim as i32);
    if tail > STATE_LEAKAGE_THRESHOLD {
        return Err(Error::TruncationLeakage {
            weight: tail,
            threshold: STATE_LEAKAGE_THRESHOLD,
        });
    }
    let mut probs = Vec::with_capacity(dim);
    let mut w = 1.0 / (n_t + 1.0);
    for _ in 0..dim {
        probs.push(w);
        w *= ratio;
    }
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

pub fn thermal_geometric(n_t: f64, space: FockSpace) -> Result<DensityMatrix> {
    let probs = thermal_populations(n_t, space.dim())?;
    DensityMatrix::from_populations(space, &probs)
}

/// A spectrum `E_n` (ħ = 1) together with the thermal occupation that fixes
/// the temperature and the frequency `ω` that sets its scale.
///
/// `energies` may be longer than the space a distribution is evaluated on;
/// the extra levels measure the truncation tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSpec {
    pub n_t: f64,
    pub omega: f64,
    pub energies: Vec<f64>,
}

impl ThermalSpec {
    /// Spectrum sampled from `energy(n)` for `levels` levels.
    pub fn from_fn(n_t: f64, omega: f64, levels: usize, energy: impl Fn(usize) -> f64) -> Self {
        ThermalSpec {
            n_t,
            omega,
            energies: (0..levels).map(energy).collect(),
        }
    }

    pub fn harmonic(n_t: f64, omega: f64, levels: usize) -> Self {
        Self::from_fn(n_t, omega, levels, |n| omega * (n as f64 + 0.5))
    }

    pub fn kerr(n_t: f64, omega: f64, levels: usize) -> Self {
        Self::from_fn(n_t, omega, levels, |n| omega * (n * n) as f64)
    }

    pub fn beta(&self) -> Result<f64> {
        check_n_t(self.n_t, true)?;
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::param("omega", format!("must be positive, got {}", self.omega)));
        }
        Ok((1.0 / self.n_t).ln_1p() / self.omega)
    }
}

/// Boltzmann weights `p_n ∝ exp(−βE_n)` on the first `dim` levels.
pub fn boltzmann_distribution(spec: &ThermalSpec, dim: usize) -> Result<Vec<f64>> {
    let beta = spec.beta()?;
    if spec.energies.len() < dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: spec.energies.len(),
        });
    }
    // shift by the ground energy so the weights stay finite
    let e0 = spec.energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = spec.energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let kept: f64 = weights[..dim].iter().sum();
    let tail = (total - kept) / total;
    if tail > STATE_LEAKAGE_THRESHOLD {
        return Err(Error::TruncationLeakage {
            weight: tail,
            threshold: STATE_LEAKAGE_THRESHOLD,
        });
    }
    Ok(weights[..dim].iter().map(|w| w / kept).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhononStats {
    pub mean_n: f64,
    pub mean_n2: f64,
    pub populations: Vec<f64>,
}

impl PhononStats {
    pub fn from_populations(populations: Vec<f64>) -> Self {
        let (mut mean_n, mut mean_n2) = (0.0, 0.0);
        for (n, p) in populations.iter().enumerate() {
            let n = n as f64;
            mean_n += n * p;
            mean_n2 += n * n * p;
        }
        PhononStats {
            mean_n,
            mean_n2,
            populations,
        }
    }
}

/// `Tr(ρn̂)`, `Tr(ρn̂²)` and the diagonal of ρ.
pub fn phonon_stats(rho: &DensityMatrix) -> PhononStats {
    PhononStats::from_populations(rho.populations())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalityReport {
    pub min_eigenvalue: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub purity: f64,
}

/// Eigenvalues of the Hermitian part `(M + M†)/2`, ascending.
pub fn hermitian_eigenvalues(m: &ndarray::Array2<C64>) -> Vec<f64> {
    let d = m.nrows();
    let h = DMatrix::from_fn(d, d, |i, j| (m[[i, j]] + m[[j, i]].conj()) * 0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Sum of absolute eigenvalues of the Hermitian part.
pub fn trace_norm(m: &ndarray::Array2<C64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|e| e.abs()).sum()
}

pub fn physicality_report(rho: &DensityMatrix) -> PhysicalityReport {
    let ev = hermitian_eigenvalues(rho.entries());
    PhysicalityReport {
        min_eigenvalue: ev[0],
        trace_error: rho.trace_error(),
        hermiticity_error: rho.hermiticity_error(),
        purity: rho.purity(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    const W: f64 = 2.0 * PI;

    #[test]
    fn geometric_examples() {
        let s = FockSpace::new(40).unwrap();
        let rho = thermal_geometric(1.0, s).unwrap();
        let p = rho.populations();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.125, epsilon = 1e-12);
        let st = phonon_stats(&rho);
        assert_abs_diff_eq!(st.mean_n, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(st.mean_n2, 3.0, epsilon = 1e-8);

        let cold = thermal_geometric(0.0, s).unwrap();
        assert_eq!(cold.populations()[0], 1.0);
        assert_eq!(cold.populations()[1..].iter().sum::<f64>(), 0.0);

        let st = phonon_stats(&thermal_geometric(2.5, FockSpace::new(80).unwrap()).unwrap());
        assert_abs_diff_eq!(st.mean_n, 2.5, epsilon = 1e-8);
        assert_abs_diff_eq!(st.mean_n2, 2.0 * 2.5 * 2.5 + 2.5, epsilon = 1e-6);
    }

    #[test]
    fn geometric_leakage() {
        // (1/2)^10 ≈ 9.8e-4 left above ten levels
        assert!(matches!(
            thermal_geometric(1.0, FockSpace::new(10).unwrap()),
            Err(Error::TruncationLeakage { .. })
        ));
        assert!(thermal_geometric(-0.1, FockSpace::new(10).unwrap()).is_err());
    }

    #[test]
    fn boltzmann_harmonic_identity() {
        for n_t in [0.3, 1.0, 2.0] {
            let dim = 60;
            let spec = ThermalSpec::harmonic(n_t, W, 200);
            let b = boltzmann_distribution(&spec, dim).unwrap();
            let g = thermal_populations(n_t, dim).unwrap();
            for (x, y) in b.iter().zip(&g) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn boltzmann_kerr_reference() {
        // Oracle: Z = Σ 2^{−n²}, partial sum converged by n = 6.
        let z: f64 = (0..7).map(|n: i32| 2f64.powi(-(n * n))).sum();
        assert_abs_diff_eq!(z, 1.5645, epsilon = 1e-4);
        let n2: f64 = (0..7).map(|n: i32| (n * n) as f64 * 2f64.powi(-(n * n))).sum::<f64>() / z;

        let spec = ThermalSpec::kerr(1.0, W, 30);
        let p = boltzmann_distribution(&spec, 20).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / z, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 0.639, epsilon = 5e-4);
        let st = PhononStats::from_populations(p);
        assert_abs_diff_eq!(st.mean_n2, n2, epsilon = 1e-12);
        assert!((st.mean_n2 - 0.49).abs() <= 0.005, "<n²> = {}", st.mean_n2);
    }

    #[test]
    fn boltzmann_monotone_and_below_geometric() {
        let mut last = 0.0;
        for n_t in [0.5, 1.0, 2.0] {
            let st = PhononStats::from_populations(boltzmann_distribution(&ThermalSpec::kerr(n_t, W, 40), 30).unwrap());
            assert!(st.mean_n2 > last);
            last = st.mean_n2;
            let geo = 2.0 * n_t * n_t + n_t;
            assert!(st.mean_n2 < geo);
        }
    }

    #[test]
    fn boltzmann_errors() {
        assert!(boltzmann_distribution(&ThermalSpec::kerr(0.0, W, 10), 5).is_err());
        assert!(boltzmann_distribution(&ThermalSpec::kerr(1.0, W, 4), 5).is_err());
        assert!(matches!(
            boltzmann_distribution(&ThermalSpec::harmonic(1.0, W, 100), 8),
            Err(Error::TruncationLeakage { .. })
        ));
    }

    #[test]
    fn sbme_temperature_inverts_occupation() {
        for n_t in [0.1, 1.0, 7.0] {
            let t = reduced_temperature(n_t).unwrap();
            assert_abs_diff_eq!(1.0 / ((1.0 / t).exp() - 1.0), n_t, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(reduced_temperature(1.0).unwrap(), 1.0 / 2f64.ln(), epsilon = 1e-15);
        assert!(reduced_temperature(0.0).is_err());
    }

    #[test]
    fn report_examples() {
        let s = FockSpace::new(2).unwrap();
        let rho = DensityMatrix::from_populations(s, &[0.5, 0.5]).unwrap();
        let r = physicality_report(&rho);
        assert_abs_diff_eq!(r.purity, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.min_eigenvalue, 0.5, epsilon = 1e-12);
        assert_eq!(r.trace_error, 0.0);

        let s = FockSpace::new(3).unwrap();
        let stats = phonon_stats(&crate::fock::pure_to_density(&crate::fock::fock_state(s, 2).unwrap()));
        assert_eq!((stats.mean_n, stats.mean_n2), (2.0, 4.0));
        assert_eq!(stats.populations, vec![0.0, 0.0, 1.0]);
    }
}
