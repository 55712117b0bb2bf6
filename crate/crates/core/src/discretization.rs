//! Uniform discretization of the waveguide continuum below a cutoff, plus the
//! perturbative level shift from the tail above it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::spectral_response;
use crate::quadrature::integrate;

/// Relative accuracy of the tail-shift quadrature.
pub const SHIFT_REL_TOL: f64 = 1e-12;

/// Discretized bath: modes `ω_j = jε`, `j = 1..=M`, with `g̃_j² = D(ω_j) ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumGrid {
    pub modes: usize,
    pub omega_up: f64,
    pub epsilon: f64,
    pub omegas: Vec<f64>,
    /// `g̃_j²`, stored so that the identity with `D(ω_j) ε` is exact.
    pub coupling_sq: Vec<f64>,
    pub couplings: Vec<f64>,
    /// Tail shift S.
    pub shift: f64,
    pub recurrence_time: f64,
    pub outcoupling: f64,
    pub omega_z: f64,
}

/// Compact description written into run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub modes: usize,
    pub omega_up: f64,
    pub epsilon: f64,
    pub shift: f64,
    pub recurrence_time: f64,
}

impl ContinuumGrid {
    pub fn summary(&self) -> GridSummary {
        GridSummary {
            modes: self.modes,
            omega_up: self.omega_up,
            epsilon: self.epsilon,
            shift: self.shift,
            recurrence_time: self.recurrence_time,
        }
    }

    /// Σ g̃_j², the discrete approximation of ∫₀^{ω_up} D.
    pub fn total_coupling_sq(&self) -> f64 {
        self.coupling_sq.iter().sum()
    }
}

pub fn build_grid(
    outcoupling: f64,
    omega_z: f64,
    modes: usize,
    omega_up: f64,
) -> Result<ContinuumGrid> {
    if modes == 0 {
        return Err(Error::InvalidGrid("mode count must be at least 1".into()));
    }
    if !(omega_up.is_finite() && omega_up > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "omega_up must be positive, got {omega_up}"
        )));
    }
    if !(omega_z.is_finite() && omega_z > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "omega_z must be positive, got {omega_z}"
        )));
    }
    if !(outcoupling.is_finite() && outcoupling >= 0.0) {
        return Err(Error::InvalidGrid(format!(
            "outcoupling must be non-negative, got {outcoupling}"
        )));
    }
    let epsilon = omega_up / modes as f64;
    let mut omegas: Vec<f64> = (1..=modes).map(|j| j as f64 * epsilon).collect();
    omegas[modes - 1] = omega_up;
    let coupling_sq: Vec<f64> = omegas
        .iter()
        .map(|&w| spectral_response(w, outcoupling, omega_z) * epsilon)
        .collect();
    let couplings = coupling_sq.iter().map(|g2| g2.sqrt()).collect();
    Ok(ContinuumGrid {
        modes,
        omega_up,
        epsilon,
        omegas,
        coupling_sq,
        couplings,
        shift: tail_shift(outcoupling, omega_z, omega_up)?,
        recurrence_time: 2.0 * PI / epsilon,
        outcoupling,
        omega_z,
    })
}

/// S = ∫_{ω_up}^∞ D(ω)/ω dω.
///
/// Evaluated with ω = ω_up eˢ, which maps the tail to a rapidly decaying
/// integrand on s ∈ [0, ∞); the upper limit is cut where the integrand is
/// below double precision relative to its value at s = 0.
pub fn tail_shift(outcoupling: f64, omega_z: f64, omega_up: f64) -> Result<f64> {
    if !(omega_up.is_finite() && omega_up > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "omega_up must be positive, got {omega_up}"
        )));
    }
    if outcoupling == 0.0 {
        return Ok(0.0);
    }
    let x0 = 2.0 * omega_up / omega_z;
    // integrand ∝ exp(-x0 eˢ - s/2); beyond x0 (eˢ - 1) ≈ 40 it is negligible
    let s_max = (1.0 + 40.0 / x0).ln();
    let integrand = |s: f64| {
        let w = omega_up * s.exp();
        spectral_response(w, outcoupling, omega_z)
    };
    let q = integrate(integrand, 0.0, s_max, SHIFT_REL_TOL, 0.0)?;
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::erf::erfc;

    fn incomplete_gamma_minus_half(x: f64) -> f64 {
        2.0 * ((-x).exp() / x.sqrt() - PI.sqrt() * erfc(x.sqrt()))
    }

    fn shift_closed_form(outcoupling: f64, omega_z: f64, omega_up: f64) -> f64 {
        (2.0 / (PI * omega_z)).sqrt()
            * outcoupling
            * (omega_z / 2.0).powf(-0.5)
            * incomplete_gamma_minus_half(2.0 * omega_up / omega_z)
    }

    #[test]
    fn standard_grid_spacing_and_recurrence() {
        let g = build_grid(100.0, 200.0, 1500, 300.0).unwrap();
        assert_relative_eq!(g.epsilon, 0.2, max_relative = 1e-15);
        assert!((g.recurrence_time - 31.4).abs() < 0.02);
        assert_eq!(*g.omegas.last().unwrap(), 300.0);

        let g = build_grid(100.0, 200.0, 3000, 300.0).unwrap();
        assert_relative_eq!(g.epsilon, 0.1, max_relative = 1e-15);
        assert!((g.recurrence_time - 62.8).abs() < 0.05);
    }

    #[test]
    fn grid_invariants() {
        let g = build_grid(2000.0, 200.0, 800, 300.0).unwrap();
        for w in g.omegas.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in g.couplings.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(g.couplings.iter().all(|&c| c > 0.0));
        for (w, g2) in g.omegas.iter().zip(&g.coupling_sq) {
            assert_eq!(*g2, spectral_response(*w, 2000.0, 200.0) * g.epsilon);
        }
    }

    #[test]
    fn no_outcoupling_means_no_coupling() {
        let g = build_grid(0.0, 200.0, 100, 300.0).unwrap();
        assert!(g.couplings.iter().all(|&c| c == 0.0));
        assert_eq!(g.shift, 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(1.0, 200.0, 0, 300.0).is_err());
        assert!(build_grid(1.0, 200.0, 10, 0.0).is_err());
        assert!(build_grid(1.0, 200.0, 10, -3.0).is_err());
    }

    #[test]
    fn shift_matches_incomplete_gamma() {
        for (lam, wup) in [(1.0, 300.0), (100.0, 300.0), (4000.0, 120.0), (1.0, 50.0)] {
            let s = tail_shift(lam, 200.0, wup).unwrap();
            assert_relative_eq!(s, shift_closed_form(lam, 200.0, wup), max_relative = 1e-8);
        }
        let per_lambda = tail_shift(1.0, 200.0, 300.0).unwrap();
        assert!(
            (per_lambda - 3.83e-5).abs() / 3.83e-5 < 5e-3,
            "{per_lambda}"
        );
    }

    #[test]
    fn shift_is_linear_in_outcoupling() {
        let s1 = tail_shift(100.0, 200.0, 300.0).unwrap();
        let s2 = tail_shift(200.0, 200.0, 300.0).unwrap();
        assert_relative_eq!(s2, 2.0 * s1, max_relative = 1e-12);
    }
}
