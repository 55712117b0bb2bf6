//! Closed-form coefficients of the two-mode trapped condensate and of its
//! coupling to the free-atom waveguide continuum.
//!
//! Both wells are identical axially symmetric harmonic traps with
//! `ω_x = ω_y = ω_z / λ`; their ground states are Gaussians, so all
//! overlap integrals reduce to elementary functions of the dimensionless
//! half-distance `η = s / (2 l_x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_8e-34;

/// `≪` conditions pass when the small/large ratio is at most this value.
pub const MUCH_LESS_RATIO: f64 = 0.2;

/// Smallest intertrap distance for which the two-mode description is used.
pub const MIN_TWO_MODE_ETA: f64 = 1.5;

/// Physical inputs of one run. Frequencies are angular, in s⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Atomic mass, kg.
    pub mass: f64,
    /// s-wave scattering length between trapped atoms, m.
    pub scattering_length: f64,
    /// Longitudinal trap frequency ω_z.
    pub omega_z: f64,
    /// Trap anisotropy λ = ω_z / ω_x.
    pub trap_ratio: f64,
    /// Outcoupling strength Λ, s⁻².
    pub outcoupling: f64,
    /// Dimensionless intertrap half-distance η = s / (2 l_x).
    pub eta: f64,
    pub n_total: f64,
    /// Initial fraction of atoms in trap A.
    pub alpha_frac: f64,
    /// Initial fraction of atoms in trap B.
    pub beta_frac: f64,
    /// Initial relative phase of trap B, rad.
    pub phi0: f64,
    /// Enables the mean-field collisional term.
    pub kappa_on: bool,
}

impl PhysicalConfig {
    /// ²³Na in a 200 s⁻¹, λ = 0.4 trap with the 0.7 / 0.3 in-phase start.
    pub fn sodium_baseline() -> Self {
        Self {
            mass: 3.818e-26,
            scattering_length: 2.75e-9,
            omega_z: 200.0,
            trap_ratio: 0.4,
            outcoupling: 100.0,
            eta: 1.7,
            n_total: 1.0,
            alpha_frac: 0.7,
            beta_frac: 0.3,
            phi0: 0.0,
            kappa_on: false,
        }
    }

    pub fn omega_x(&self) -> f64 {
        self.omega_z / self.trap_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("omega_z", self.omega_z),
            ("trap_ratio", self.trap_ratio),
            ("eta", self.eta),
            ("n_total", self.n_total),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.scattering_length.is_finite() && self.scattering_length >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scattering_length must be non-negative, got {}",
                self.scattering_length
            )));
        }
        if !(self.outcoupling.is_finite() && self.outcoupling >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "outcoupling must be non-negative, got {}",
                self.outcoupling
            )));
        }
        for (name, v) in [
            ("alpha_frac", self.alpha_frac),
            ("beta_frac", self.beta_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if (self.alpha_frac + self.beta_frac - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "alpha_frac + beta_frac must equal 1 (continuum starts empty), got {}",
                self.alpha_frac + self.beta_frac
            )));
        }
        if !self.phi0.is_finite() {
            return Err(Error::InvalidConfig("phi0 must be finite".into()));
        }
        Ok(())
    }
}

/// Outcome of one advisory validity condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityCheck {
    pub name: String,
    pub satisfied: bool,
    /// Raw ratio of the condition (small side over large side).
    pub ratio: f64,
    /// How far the condition is from its boundary; `1 / ratio` for `≪` checks.
    pub margin: f64,
}

/// Coefficients derived in closed form from a [`PhysicalConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Longitudinal oscillator length, m.
    pub l_z: f64,
    /// Radial oscillator length, m.
    pub l_x: f64,
    /// Local ground-state frequency including the double-well correction.
    pub omega_o_exact: f64,
    /// η-independent ground-state frequency ω_z (1/2 + 1/λ).
    pub omega_o_approx: f64,
    /// Josephson tunnelling coupling J.
    pub josephson: f64,
    /// Collisional strength κ per atom pair.
    pub kappa: f64,
    /// Wavefunction overlap e^{-η²}.
    pub overlap: f64,
    /// Upper bound on the atom number for the two-mode model.
    pub n_max: f64,
    /// Off-resonant continuum shift S, once a grid has been built.
    pub shift: Option<f64>,
    pub checks: Vec<ValidityCheck>,
}

pub fn oscillator_length(mass: f64, omega: f64) -> f64 {
    (HBAR / (mass * omega)).sqrt()
}

/// J(η) = ω_z (1/2 + 1/λ − η/(λ√π)) e^{−η²}.
pub fn josephson_coupling(omega_z: f64, trap_ratio: f64, eta: f64) -> f64 {
    omega_z * (0.5 + 1.0 / trap_ratio - eta / (trap_ratio * PI.sqrt())) * (-eta * eta).exp()
}

/// Local ground-state frequency in the double-well potential.
pub fn ground_state_frequency(omega_z: f64, trap_ratio: f64, eta: f64) -> f64 {
    omega_z
        * (0.5 + 1.0 / trap_ratio + eta * eta / trap_ratio * erfc(eta)
            - eta / (trap_ratio * PI.sqrt()) * (-eta * eta).exp())
}

pub fn ground_state_frequency_approx(omega_z: f64, trap_ratio: f64) -> f64 {
    omega_z * (0.5 + 1.0 / trap_ratio)
}

/// Spectral response D(ω) of the waveguide continuum, s⁻¹.
///
/// Zero for ω ≤ 0. The band edge ω = 0 is an integrable 1/√ω divergence and
/// returns `f64::INFINITY` (when Λ > 0); discretized grids never sample it.
pub fn spectral_response(omega: f64, outcoupling: f64, omega_z: f64) -> f64 {
    if omega < 0.0 || outcoupling == 0.0 {
        return 0.0;
    }
    if omega == 0.0 {
        return f64::INFINITY;
    }
    (2.0 / (PI * omega_z)).sqrt() * outcoupling * (-2.0 * omega / omega_z).exp() / omega.sqrt()
}

pub fn derive_params(cfg: &PhysicalConfig) -> Result<DerivedParams> {
    cfg.validate()?;
    let l_z = oscillator_length(cfg.mass, cfg.omega_z);
    let l_x = oscillator_length(cfg.mass, cfg.omega_x());
    let kappa = HBAR * cfg.scattering_length
        / (cfg.trap_ratio * cfg.mass * (2.0 * PI).sqrt() * l_z.powi(3));
    let n_max = if cfg.scattering_length > 0.0 {
        cfg.trap_ratio.cbrt() * (2.0 * PI).sqrt() * l_z / cfg.scattering_length
    } else {
        f64::INFINITY
    };
    if cfg.eta < MIN_TWO_MODE_ETA {
        log::warn!(
            "eta = {} is below the two-mode range eta >= {MIN_TWO_MODE_ETA}",
            cfg.eta
        );
    }
    let mut derived = DerivedParams {
        l_z,
        l_x,
        omega_o_exact: ground_state_frequency(cfg.omega_z, cfg.trap_ratio, cfg.eta),
        omega_o_approx: ground_state_frequency_approx(cfg.omega_z, cfg.trap_ratio),
        josephson: josephson_coupling(cfg.omega_z, cfg.trap_ratio, cfg.eta),
        kappa,
        overlap: (-cfg.eta * cfg.eta).exp(),
        n_max,
        shift: None,
        checks: Vec::new(),
    };
    derived.checks = validity_report(cfg, &derived);
    Ok(derived)
}

fn much_less(name: &str, small: f64, large: f64) -> ValidityCheck {
    let ratio = small / large;
    ValidityCheck {
        name: name.to_string(),
        satisfied: ratio <= MUCH_LESS_RATIO,
        ratio,
        margin: 1.0 / ratio,
    }
}

/// Advisory checks of the two-mode model's validity conditions.
pub fn validity_report(cfg: &PhysicalConfig, derived: &DerivedParams) -> Vec<ValidityCheck> {
    let separation = 2.0 * cfg.eta * derived.l_x;
    let eta_ratio = MIN_TWO_MODE_ETA / cfg.eta;
    vec![
        much_less(
            "localized_ground_states(l_x << sqrt2*s)",
            derived.l_x,
            2f64.sqrt() * separation,
        ),
        much_less("weak_interaction(N << N_max)", cfg.n_total, derived.n_max),
        ValidityCheck {
            name: "two_mode_distance(eta >= 1.5)".to_string(),
            satisfied: cfg.eta >= MIN_TWO_MODE_ETA,
            ratio: eta_ratio,
            margin: 1.0 / eta_ratio,
        },
    ]
}

/// Distinguished points of the bare Josephson coupling J(η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JosephsonLandmarks {
    /// Sign change of J, if it lies inside the search interval.
    pub eta_zero: Option<f64>,
    /// Location of the most negative J.
    pub eta_min: f64,
    pub j_min: f64,
}

pub const LANDMARK_INTERVAL: (f64, f64) = (1.0, 4.0);

pub fn josephson_landmarks(omega_z: f64, trap_ratio: f64) -> JosephsonLandmarks {
    let j = |eta: f64| josephson_coupling(omega_z, trap_ratio, eta);
    let (lo, hi) = LANDMARK_INTERVAL;

    let eta_zero = if j(lo).signum() != j(hi).signum() {
        let (mut a, mut b) = (lo, hi);
        let fa_positive = j(a) > 0.0;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (j(m) > 0.0) == fa_positive {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-15 {
                break;
            }
        }
        Some(0.5 * (a + b))
    } else {
        None
    };

    // golden-section search for the minimum
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while (b - a).abs() > 1e-12 {
        if j(c) < j(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    let eta_min = 0.5 * (a + b);
    JosephsonLandmarks {
        eta_zero,
        eta_min,
        j_min: j(eta_min),
    }
}
