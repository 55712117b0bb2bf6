//! Mean-field amplitude equations of the two traps coupled to the discretized
//! continuum, their time integration, and an exact propagator for the
//! bilinear (κ = 0) case.
//!
//! The state is packed as `[a, b, c_1, ..., c_M]`. The generator splits into
//! a diagonal part `-iΩ` (trap energies and mode frequencies) and the
//! remaining couplings `N(u)`; the interaction-picture integrators treat the
//! diagonal part exactly.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::ContinuumGrid;
use crate::error::{Error, Result};
use crate::model::{derive_params, DerivedParams, PhysicalConfig};
use crate::observables::TimeSeries;

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_NORM_DRIFT_LIMIT: f64 = 1e-6;
/// Fraction of the recurrence time above which a run is flagged.
pub const RECURRENCE_WARN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeState {
    pub t: f64,
    /// `[a, b, c_1, ..., c_M]`, in units of √atoms.
    pub amps: Vec<C64>,
}

impl AmplitudeState {
    pub fn a(&self) -> C64 {
        self.amps[0]
    }

    pub fn b(&self) -> C64 {
        self.amps[1]
    }

    pub fn c(&self) -> &[C64] {
        &self.amps[2..]
    }

    pub fn modes(&self) -> usize {
        self.amps.len() - 2
    }

    pub fn n_a(&self) -> f64 {
        self.amps[0].norm_sqr()
    }

    pub fn n_b(&self) -> f64 {
        self.amps[1].norm_sqr()
    }

    pub fn n_c(&self) -> f64 {
        self.c().iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.n_a() + self.n_b() + self.n_c()
    }

    pub fn conj(&self) -> Self {
        Self {
            t: self.t,
            amps: self.amps.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            t: self.t,
            amps: self.amps.iter().map(|z| z * factor).collect(),
        }
    }

    /// Largest componentwise modulus of the difference.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

pub fn init_state(cfg: &PhysicalConfig, grid: &ContinuumGrid) -> Result<AmplitudeState> {
    cfg.validate()?;
    let mut amps = vec![C64::new(0.0, 0.0); grid.modes + 2];
    amps[0] = C64::new((cfg.n_total * cfg.alpha_frac).sqrt(), 0.0);
    amps[1] = C64::from_polar((cfg.n_total * cfg.beta_frac).sqrt(), cfg.phi0);
    Ok(AmplitudeState { t: 0.0, amps })
}

/// Coefficients of the equations of motion at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    /// Diagonal frequency of trap A, ω_z/2 − S while outcoupling.
    pub omega_a: f64,
    /// Diagonal frequency of trap B, ω_z/2 − S e^{−2η²} while outcoupling.
    pub omega_b: f64,
    /// Effective inter-trap coupling, J − S e^{−η²} while outcoupling.
    pub tunnel: f64,
    pub overlap: f64,
    pub kappa: f64,
    /// 1 while the outcoupler is on, 0 otherwise.
    pub bath_scale: f64,
}

impl Couplings {
    pub fn outcoupling_on(omega_z: f64, derived: &DerivedParams, shift: f64, kappa: f64) -> Self {
        let o = derived.overlap;
        Self {
            omega_a: 0.5 * omega_z - shift,
            omega_b: 0.5 * omega_z - shift * o * o,
            tunnel: derived.josephson - shift * o,
            overlap: o,
            kappa,
            bath_scale: 1.0,
        }
    }

    pub fn outcoupling_off(omega_z: f64, derived: &DerivedParams, kappa: f64) -> Self {
        Self {
            omega_a: 0.5 * omega_z,
            omega_b: 0.5 * omega_z,
            tunnel: derived.josephson,
            overlap: derived.overlap,
            kappa,
            bath_scale: 0.0,
        }
    }
}

/// Time dependence of the coefficients. Integrators evaluate it at step
/// midpoints and always place step boundaries on the breakpoints.
pub trait CouplingSchedule: Send + Sync {
    fn couplings_at(&self, t: f64) -> Couplings;
    fn breakpoints(&self) -> Vec<f64>;
}

/// Rectangular outcoupling pulse on `[0, τ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsedOutcoupling {
    pub tau: f64,
    pub on: Couplings,
    pub off: Couplings,
}

impl PulsedOutcoupling {
    pub fn new(
        cfg: &PhysicalConfig,
        derived: &DerivedParams,
        grid: &ContinuumGrid,
        tau: f64,
    ) -> Self {
        let kappa = if cfg.kappa_on { derived.kappa } else { 0.0 };
        Self {
            tau,
            on: Couplings::outcoupling_on(cfg.omega_z, derived, grid.shift, kappa),
            off: Couplings::outcoupling_off(cfg.omega_z, derived, kappa),
        }
    }
}

impl CouplingSchedule for PulsedOutcoupling {
    fn couplings_at(&self, t: f64) -> Couplings {
        if t < self.tau {
            self.on
        } else {
            self.off
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.tau]
    }
}

impl CouplingSchedule for Couplings {
    fn couplings_at(&self, _t: f64) -> Couplings {
        *self
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

fn diagonal(grid: &ContinuumGrid, cp: &Couplings) -> Vec<f64> {
    let mut omega = Vec::with_capacity(grid.modes + 2);
    omega.push(cp.omega_a);
    omega.push(cp.omega_b);
    omega.extend_from_slice(&grid.omegas);
    omega
}

/// Off-diagonal and nonlinear part of the generator.
fn couplings_term(u: &[C64], out: &mut [C64], g: &[f64], cp: &Couplings) {
    let a = u[0];
    let b = u[1];
    let s = cp.bath_scale;
    let mut sum = C64::new(0.0, 0.0);
    if s != 0.0 {
        for (gj, cj) in g.iter().zip(&u[2..]) {
            sum += cj * *gj;
        }
    }
    out[0] = -I * (2.0 * cp.kappa * a.norm_sqr() * a + cp.tunnel * b + s * sum);
    out[1] = -I * (2.0 * cp.kappa * b.norm_sqr() * b + cp.tunnel * a + s * cp.overlap * sum);
    let drive = -I * s * (a + cp.overlap * b);
    for (o, gj) in out[2..].iter_mut().zip(g) {
        *o = drive * *gj;
    }
}

fn full_rhs(u: &[C64], out: &mut [C64], grid: &ContinuumGrid, cp: &Couplings) {
    couplings_term(u, out, &grid.couplings, cp);
    out[0] -= I * cp.omega_a * u[0];
    out[1] -= I * cp.omega_b * u[1];
    for ((o, w), c) in out[2..].iter_mut().zip(&grid.omegas).zip(&u[2..]) {
        *o -= I * *w * c;
    }
}

/// Time derivative of the amplitudes for the given coefficients.
pub fn rhs(state: &AmplitudeState, grid: &ContinuumGrid, couplings: &Couplings) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); state.amps.len()];
    full_rhs(&state.amps, &mut out, grid, couplings);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    #[default]
    FixedRk4,
    AdaptiveRk45,
}

/// Frame in which the stepping formulas are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Diagonal frequencies are propagated exactly (Lawson scheme).
    #[default]
    Interaction,
    Direct,
}

impl fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegratorKind::FixedRk4 => "fixed-rk4",
            IntegratorKind::AdaptiveRk45 => "adaptive-rk45",
        })
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Interaction => "interaction",
            Frame::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub t_end: f64,
    /// Fixed step, or the initial step in adaptive mode.
    pub dt: f64,
    pub integrator: IntegratorKind,
    pub frame: Frame,
    /// Relative local error per step in adaptive mode.
    pub tolerance: f64,
    pub sample_every: f64,
    /// Outcoupling is active on `[0, pulse_duration)`.
    pub pulse_duration: f64,
    /// Times at which the full state is kept (spectra).
    pub snapshots: Vec<f64>,
    /// Abort when the relative norm drift exceeds this; `None` disables.
    pub norm_drift_limit: Option<f64>,
}

impl EvolutionSpec {
    pub fn new(t_end: f64, pulse_duration: f64) -> Self {
        Self {
            t_end,
            dt: DEFAULT_DT,
            integrator: IntegratorKind::FixedRk4,
            frame: Frame::Interaction,
            tolerance: 1e-10,
            sample_every: 0.01,
            pulse_duration,
            snapshots: Vec::new(),
            norm_drift_limit: Some(DEFAULT_NORM_DRIFT_LIMIT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_end", self.t_end),
            ("dt", self.dt),
            ("sample_every", self.sample_every),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidEvolution(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.pulse_duration >= 0.0) {
            return Err(Error::InvalidEvolution(format!(
                "pulse_duration must be non-negative, got {}",
                self.pulse_duration
            )));
        }
        if self.integrator == IntegratorKind::AdaptiveRk45
            && !(self.tolerance.is_finite() && self.tolerance > 0.0)
        {
            return Err(Error::InvalidEvolution(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if let Some(&t) = self
            .snapshots
            .iter()
            .find(|&&t| !(0.0..=self.t_end).contains(&t))
        {
            return Err(Error::InvalidEvolution(format!(
                "snapshot time {t} outside [0, {}]",
                self.t_end
            )));
        }
        Ok(())
    }
}

/// Enforces the recurrence guard for a horizon on a coupled grid.
pub fn check_recurrence(t_end: f64, grid: &ContinuumGrid) -> Result<()> {
    if grid.outcoupling == 0.0 {
        return Ok(());
    }
    if t_end > grid.recurrence_time {
        return Err(Error::RecurrenceViolation {
            t_end,
            recurrence_time: grid.recurrence_time,
        });
    }
    if t_end > RECURRENCE_WARN_FRACTION * grid.recurrence_time {
        log::warn!(
            "horizon {t_end} s is above {:.0}% of the recurrence time {} s",
            100.0 * RECURRENCE_WARN_FRACTION,
            grid.recurrence_time
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: u64,
    pub rejected_steps: u64,
    pub final_norm_drift: f64,
    pub max_norm_drift: f64,
    pub integrator: String,
    pub frame: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub series: TimeSeries,
    /// Full states at the requested snapshot times, in time order.
    pub snapshots: Vec<AmplitudeState>,
    pub final_state: AmplitudeState,
    pub epsilon: f64,
    pub omegas: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn merged_times(mut times: Vec<f64>) -> Vec<f64> {
    times.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match out.last() {
            Some(&last) if (t - last).abs() <= 1e-12 * t.abs().max(1.0) => {}
            _ => out.push(t),
        }
    }
    out
}

fn sample_times(spec: &EvolutionSpec) -> Vec<f64> {
    let n = (spec.t_end / spec.sample_every * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * spec.sample_every).collect();
    if spec.t_end - times[n] > 1e-9 * spec.sample_every {
        times.push(spec.t_end);
    } else {
        times[n] = spec.t_end;
    }
    times
}

fn is_member(times: &[f64], t: f64) -> bool {
    times
        .binary_search_by(|x| {
            if (x - t).abs() <= 1e-12 * t.abs().max(1.0) {
                std::cmp::Ordering::Equal
            } else {
                x.total_cmp(&t)
            }
        })
        .is_ok()
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'g> {
    grid: &'g ContinuumGrid,
    frame: Frame,
    k: Vec<Vec<C64>>,
    tmp: Vec<C64>,
    phase_key: Option<(f64, Couplings)>,
    half: Vec<C64>,
    full: Vec<C64>,
    stage_phase: Vec<Vec<C64>>,
}

impl<'g> Stepper<'g> {
    fn new(grid: &'g ContinuumGrid, frame: Frame) -> Self {
        let n = grid.modes + 2;
        Self {
            grid,
            frame,
            k: vec![vec![C64::new(0.0, 0.0); n]; 7],
            tmp: vec![C64::new(0.0, 0.0); n],
            phase_key: None,
            half: Vec::new(),
            full: Vec::new(),
            stage_phase: Vec::new(),
        }
    }

    fn refresh_phases(&mut self, h: f64, cp: &Couplings, adaptive: bool) {
        if self.phase_key == Some((h, *cp)) {
            return;
        }
        let omega = diagonal(self.grid, cp);
        if adaptive {
            self.stage_phase = DP_C
                .iter()
                .map(|c| {
                    omega
                        .iter()
                        .map(|w| C64::from_polar(1.0, -w * c * h))
                        .collect()
                })
                .collect();
        } else {
            self.half = omega
                .iter()
                .map(|w| C64::from_polar(1.0, -0.5 * w * h))
                .collect();
            self.full = self.half.iter().map(|p| p * p).collect();
        }
        self.phase_key = Some((h, *cp));
    }

    fn rk4_direct(&mut self, u: &mut [C64], h: f64, cp: &Couplings) {
        let grid = self.grid;
        let [k1, k2, k3, k4, ..] = &mut self.k[..] else {
            unreachable!()
        };
        let tmp = &mut self.tmp;
        full_rhs(u, k1, grid, cp);
        for i in 0..u.len() {
            tmp[i] = u[i] + 0.5 * h * k1[i];
        }
        full_rhs(tmp, k2, grid, cp);
        for i in 0..u.len() {
            tmp[i] = u[i] + 0.5 * h * k2[i];
        }
        full_rhs(tmp, k3, grid, cp);
        for i in 0..u.len() {
            tmp[i] = u[i] + h * k3[i];
        }
        full_rhs(tmp, k4, grid, cp);
        for i in 0..u.len() {
            u[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }

    fn rk4_lawson(&mut self, u: &mut [C64], h: f64, cp: &Couplings) {
        self.refresh_phases(h, cp, false);
        let g = &self.grid.couplings;
        let [k1, k2, k3, k4, ..] = &mut self.k[..] else {
            unreachable!()
        };
        let (half, full, tmp) = (&self.half, &self.full, &mut self.tmp);
        couplings_term(u, k1, g, cp);
        for i in 0..u.len() {
            tmp[i] = half[i] * (u[i] + 0.5 * h * k1[i]);
        }
        couplings_term(tmp, k2, g, cp);
        for i in 0..u.len() {
            tmp[i] = half[i] * u[i] + 0.5 * h * k2[i];
        }
        couplings_term(tmp, k3, g, cp);
        for i in 0..u.len() {
            tmp[i] = full[i] * u[i] + h * half[i] * k3[i];
        }
        couplings_term(tmp, k4, g, cp);
        for i in 0..u.len() {
            u[i] = full[i] * u[i]
                + h / 6.0 * (full[i] * k1[i] + 2.0 * half[i] * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Stage derivative for Dormand–Prince; in the interaction frame `y` is
    /// the rotated variable at offset `DP_C[stage] * h`.
    fn dp_stage(&mut self, stage: usize, y: &[C64], cp: &Couplings) {
        match self.frame {
            Frame::Direct => full_rhs(y, &mut self.k[stage], self.grid, cp),
            Frame::Interaction => {
                let p = &self.stage_phase[stage];
                for i in 0..y.len() {
                    self.tmp[i] = p[i] * y[i];
                }
                couplings_term(&self.tmp, &mut self.k[stage], &self.grid.couplings, cp);
                for i in 0..y.len() {
                    self.k[stage][i] *= p[i].conj();
                }
            }
        }
    }

    /// One Dormand–Prince attempt; returns the error norm relative to the
    /// state norm and leaves the candidate in `out`.
    fn dp_attempt(&mut self, u: &[C64], out: &mut [C64], h: f64, cp: &Couplings) -> f64 {
        if self.frame == Frame::Interaction {
            self.refresh_phases(h, cp, true);
        }
        let n = u.len();
        let mut y = vec![C64::new(0.0, 0.0); n];
        self.dp_stage(0, u, cp);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, a) in DP_A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        acc += *a * self.k[j][i];
                    }
                }
                y[i] = u[i] + h * acc;
            }
            self.dp_stage(s, &y, cp);
        }
        // y now holds the fifth-order solution (row 7 equals B5)
        let mut err_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..n {
            let mut e = C64::new(0.0, 0.0);
            for s in 0..7 {
                e += (DP_B5[s] - DP_B4[s]) * self.k[s][i];
            }
            err_sq += (h * e).norm_sqr();
            norm_sq += y[i].norm_sqr();
        }
        match self.frame {
            Frame::Direct => out.copy_from_slice(&y),
            Frame::Interaction => {
                let p = &self.stage_phase[6];
                for i in 0..n {
                    out[i] = p[i] * y[i];
                }
            }
        }
        err_sq.sqrt() / norm_sq.sqrt().max(f64::MIN_POSITIVE)
    }
}

fn drift_of(state: &AmplitudeState, norm0: f64) -> f64 {
    let n = state.norm_sqr();
    if norm0 > 0.0 {
        (n - norm0).abs() / norm0
    } else {
        n
    }
}

/// Integrates from `initial` to `spec.t_end` under `schedule`.
pub fn integrate(
    initial: &AmplitudeState,
    spec: &EvolutionSpec,
    grid: &ContinuumGrid,
    schedule: &dyn CouplingSchedule,
) -> Result<Trajectory> {
    spec.validate()?;
    if initial.amps.len() != grid.modes + 2 {
        return Err(Error::InvalidEvolution(format!(
            "state has {} modes, grid has {}",
            initial.modes(),
            grid.modes
        )));
    }
    let bath_used = schedule.couplings_at(initial.t).bath_scale != 0.0
        || schedule
            .breakpoints()
            .iter()
            .any(|&t| schedule.couplings_at(t).bath_scale != 0.0);
    if bath_used {
        check_recurrence(spec.t_end, grid)?;
    }

    let t0 = initial.t;
    let samples: Vec<f64> = sample_times(spec).into_iter().map(|t| t + t0).collect();
    let snapshots_at = merged_times(spec.snapshots.iter().map(|t| t + t0).collect());
    let mut bounds: Vec<f64> = samples.clone();
    bounds.extend(&snapshots_at);
    bounds.extend(
        schedule
            .breakpoints()
            .into_iter()
            .filter(|&b| b > t0 && b < t0 + spec.t_end),
    );
    let bounds = merged_times(bounds);

    let norm0 = initial.norm_sqr();
    let mut state = initial.clone();
    let mut series = TimeSeries::default();
    let mut snapshots = Vec::with_capacity(snapshots_at.len());
    let mut diag = Diagnostics {
        integrator: spec.integrator.to_string(),
        frame: spec.frame.to_string(),
        ..Default::default()
    };
    let mut stepper = Stepper::new(grid, spec.frame);
    let mut buf = vec![C64::new(0.0, 0.0); state.amps.len()];
    let mut h_adapt = spec.dt;

    let mut record = |state: &AmplitudeState, diag: &mut Diagnostics| -> Result<()> {
        let drift = drift_of(state, norm0);
        diag.max_norm_drift = diag.max_norm_drift.max(drift);
        if is_member(&samples, state.t) {
            series.push(state, norm0);
        }
        if is_member(&snapshots_at, state.t) {
            snapshots.push(state.clone());
        }
        let exceeded = spec
            .norm_drift_limit
            .map(|lim| drift > lim)
            .unwrap_or(false);
        if exceeded || !drift.is_finite() {
            return Err(Error::NormDrift {
                t: state.t,
                drift,
                limit: spec.norm_drift_limit.unwrap_or(f64::INFINITY),
                n_a: state.n_a(),
                n_b: state.n_b(),
                n_c: state.n_c(),
                steps: diag.steps,
            });
        }
        Ok(())
    };

    record(&state, &mut diag)?;
    for w in bounds.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        match spec.integrator {
            IntegratorKind::FixedRk4 => {
                let n = ((tb - ta) / spec.dt * (1.0 - 1e-10)).ceil().max(1.0) as u64;
                let h = (tb - ta) / n as f64;
                for k in 0..n {
                    let t = ta + k as f64 * h;
                    let cp = schedule.couplings_at(t + 0.5 * h);
                    match spec.frame {
                        Frame::Direct => stepper.rk4_direct(&mut state.amps, h, &cp),
                        Frame::Interaction => stepper.rk4_lawson(&mut state.amps, h, &cp),
                    }
                }
                diag.steps += n;
            }
            IntegratorKind::AdaptiveRk45 => {
                let mut t = ta;
                while t < tb {
                    let remaining = tb - t;
                    let last = h_adapt >= remaining * (1.0 - 1e-12);
                    let h = if last { remaining } else { h_adapt };
                    if h < 1e-13 * t.abs().max(1.0) {
                        return Err(Error::StepUnderflow { t, h });
                    }
                    let cp = schedule.couplings_at(t + 0.5 * h);
                    let err = stepper.dp_attempt(&state.amps, &mut buf, h, &cp) / spec.tolerance;
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if err <= 1.0 {
                        state.amps.copy_from_slice(&buf);
                        t = if last { tb } else { t + h };
                        diag.steps += 1;
                        if !last || factor < 1.0 {
                            h_adapt = h * factor;
                        }
                    } else {
                        diag.rejected_steps += 1;
                        h_adapt = h * factor.min(1.0);
                    }
                }
            }
        }
        state.t = tb;
        record(&state, &mut diag)?;
    }
    diag.final_norm_drift = drift_of(&state, norm0);
    Ok(Trajectory {
        series,
        snapshots,
        final_state: state,
        epsilon: grid.epsilon,
        omegas: grid.omegas.clone(),
        diagnostics: diag,
    })
}

/// Derives the coefficients, prepares the initial state and the rectangular
/// pulse, and integrates.
pub fn simulate(
    cfg: &PhysicalConfig,
    grid: &ContinuumGrid,
    spec: &EvolutionSpec,
) -> Result<(DerivedParams, Trajectory)> {
    let mut derived = derive_params(cfg)?;
    derived.shift = Some(grid.shift);
    let schedule = PulsedOutcoupling::new(cfg, &derived, grid, spec.pulse_duration);
    let initial = init_state(cfg, grid)?;
    let trajectory = integrate(&initial, spec, grid, &schedule)?;
    Ok((derived, trajectory))
}

/// Real-symmetric coefficient matrix of the bilinear generator, so that
/// `du/dt = -i H u`.
pub fn generator_matrix(grid: &ContinuumGrid, cp: &Couplings) -> DMatrix<f64> {
    let n = grid.modes + 2;
    let mut h = DMatrix::zeros(n, n);
    h[(0, 0)] = cp.omega_a;
    h[(1, 1)] = cp.omega_b;
    h[(0, 1)] = cp.tunnel;
    h[(1, 0)] = cp.tunnel;
    for (j, (&w, &g)) in grid.omegas.iter().zip(&grid.couplings).enumerate() {
        let gs = cp.bath_scale * g;
        h[(j + 2, j + 2)] = w;
        h[(0, j + 2)] = gs;
        h[(j + 2, 0)] = gs;
        h[(1, j + 2)] = gs * cp.overlap;
        h[(j + 2, 1)] = gs * cp.overlap;
    }
    h
}

/// Exact evolution of the κ = 0 system by eigendecomposition of the
/// generator on each interval between schedule breakpoints.
pub struct ExactPropagator<'a> {
    grid: &'a ContinuumGrid,
    schedule: &'a dyn CouplingSchedule,
    cache: Vec<(Couplings, SymmetricEigen<f64, nalgebra::Dyn>)>,
}

impl<'a> ExactPropagator<'a> {
    pub fn new(grid: &'a ContinuumGrid, schedule: &'a dyn CouplingSchedule) -> Self {
        Self {
            grid,
            schedule,
            cache: Vec::new(),
        }
    }

    fn eigen(&mut self, cp: &Couplings) -> &SymmetricEigen<f64, nalgebra::Dyn> {
        let idx = match self.cache.iter().position(|(c, _)| c == cp) {
            Some(i) => i,
            None => {
                let eig = SymmetricEigen::new(generator_matrix(self.grid, cp));
                self.cache.push((*cp, eig));
                self.cache.len() - 1
            }
        };
        &self.cache[idx].1
    }

    fn apply(&mut self, amps: &[C64], dt: f64, cp: &Couplings) -> Vec<C64> {
        let eig = self.eigen(cp);
        let v = &eig.eigenvectors;
        let n = amps.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            let col = v.column(k);
            let mut proj = C64::new(0.0, 0.0);
            for i in 0..n {
                proj += col[i] * amps[i];
            }
            proj *= C64::from_polar(1.0, -eig.eigenvalues[k] * dt);
            for i in 0..n {
                out[i] += col[i] * proj;
            }
        }
        out
    }

    /// State at time `t` (absolute), starting from `state0`.
    pub fn propagate(&mut self, state0: &AmplitudeState, t: f64) -> Result<AmplitudeState> {
        if t < state0.t {
            return Err(Error::InvalidEvolution(format!(
                "target time {t} precedes the initial time {}",
                state0.t
            )));
        }
        let mut bounds = vec![state0.t];
        bounds.extend(
            self.schedule
                .breakpoints()
                .into_iter()
                .filter(|&b| b > state0.t && b < t),
        );
        bounds.push(t);
        let mut amps = state0.amps.clone();
        for w in bounds.windows(2) {
            let cp = self.schedule.couplings_at(0.5 * (w[0] + w[1]));
            if cp.kappa != 0.0 {
                return Err(Error::NonlinearPropagator);
            }
            if w[1] > w[0] {
                amps = self.apply(&amps, w[1] - w[0], &cp);
            }
        }
        Ok(AmplitudeState { t, amps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use approx::assert_relative_eq;

    fn baseline() -> PhysicalConfig {
        PhysicalConfig::sodium_baseline()
    }

    #[test]
    fn initial_state_examples() {
        let grid = build_grid(100.0, 200.0, 50, 300.0).unwrap();
        let s = init_state(&baseline(), &grid).unwrap();
        assert_relative_eq!(s.a().re, 0.7f64.sqrt());
        assert_relative_eq!(s.b().re, 0.3f64.sqrt());
        assert_relative_eq!(s.n_a() + s.n_b(), 1.0, max_relative = 1e-15);
        assert!(s.c().iter().all(|c| *c == C64::new(0.0, 0.0)));

        let flipped = PhysicalConfig {
            phi0: std::f64::consts::PI,
            ..baseline()
        };
        let s = init_state(&flipped, &grid).unwrap();
        assert!(s.b().re < 0.0 && s.b().im.abs() < 1e-15);

        let many = PhysicalConfig {
            n_total: 100.0,
            alpha_frac: 1.0,
            beta_frac: 0.0,
            ..baseline()
        };
        let s = init_state(&many, &grid).unwrap();
        assert_eq!(s.a(), C64::new(10.0, 0.0));
        assert_eq!(s.b(), C64::new(0.0, 0.0));
    }

    #[test]
    fn bath_drive_at_start() {
        let cfg = baseline();
        let grid = build_grid(100.0, 200.0, 40, 300.0).unwrap();
        let d = derive_params(&cfg).unwrap();
        let cp = Couplings::outcoupling_on(cfg.omega_z, &d, grid.shift, 0.0);
        let s = init_state(&cfg, &grid).unwrap();
        let ds = rhs(&s, &grid, &cp);
        for (j, g) in grid.couplings.iter().enumerate() {
            let expected = -I * *g * (s.a() + d.overlap * s.b());
            assert!((ds[j + 2] - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn rhs_preserves_norm_instantaneously() {
        let cfg = PhysicalConfig {
            kappa_on: true,
            n_total: 50.0,
            ..baseline()
        };
        let grid = build_grid(2000.0, 200.0, 60, 300.0).unwrap();
        let d = derive_params(&cfg).unwrap();
        let cp = Couplings::outcoupling_on(cfg.omega_z, &d, grid.shift, d.kappa);
        let mut s = init_state(&cfg, &grid).unwrap();
        for (j, c) in s.amps[2..].iter_mut().enumerate() {
            *c = C64::from_polar(0.1, 0.37 * j as f64);
        }
        let ds = rhs(&s, &grid, &cp);
        let dnorm: f64 = s
            .amps
            .iter()
            .zip(&ds)
            .map(|(u, du)| 2.0 * (u.conj() * du).re)
            .sum();
        assert!(dnorm.abs() < 1e-11, "{dnorm}");
    }

    #[test]
    fn sample_grid_includes_end() {
        let spec = EvolutionSpec {
            sample_every: 0.3,
            ..EvolutionSpec::new(1.0, 1.0)
        };
        let t = sample_times(&spec);
        assert_eq!(t.len(), 5);
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    #[test]
    fn recurrence_guard() {
        let grid = build_grid(100.0, 200.0, 1500, 300.0).unwrap();
        assert!(check_recurrence(30.0, &grid).is_ok());
        assert!(matches!(
            check_recurrence(40.0, &grid),
            Err(Error::RecurrenceViolation { .. })
        ));
        let free = build_grid(0.0, 200.0, 1500, 300.0).unwrap();
        assert!(check_recurrence(40.0, &free).is_ok());
    }

    #[test]
    fn exact_propagator_refuses_nonlinear_model() {
        let cfg = PhysicalConfig {
            kappa_on: true,
            ..baseline()
        };
        let grid = build_grid(100.0, 200.0, 10, 300.0).unwrap();
        let d = derive_params(&cfg).unwrap();
        let sched = PulsedOutcoupling::new(&cfg, &d, &grid, 1.0);
        let mut prop = ExactPropagator::new(&grid, &sched);
        let s = init_state(&cfg, &grid).unwrap();
        assert!(matches!(
            prop.propagate(&s, 0.5),
            Err(Error::NonlinearPropagator)
        ));
    }

    #[test]
    fn exact_propagator_identity_at_zero() {
        let cfg = baseline();
        let grid = build_grid(100.0, 200.0, 20, 300.0).unwrap();
        let d = derive_params(&cfg).unwrap();
        let sched = PulsedOutcoupling::new(&cfg, &d, &grid, 1.0);
        let mut prop = ExactPropagator::new(&grid, &sched);
        let s = init_state(&cfg, &grid).unwrap();
        assert_eq!(prop.propagate(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn adaptive_and_fixed_agree() {
        let cfg = baseline();
        let grid = build_grid(100.0, 200.0, 100, 300.0).unwrap();
        let spec = EvolutionSpec {
            sample_every: 0.5,
            ..EvolutionSpec::new(2.0, 2.0)
        };
        let (_, fixed) = simulate(&cfg, &grid, &spec).unwrap();
        for frame in [Frame::Direct, Frame::Interaction] {
            let adaptive_spec = EvolutionSpec {
                integrator: IntegratorKind::AdaptiveRk45,
                frame,
                tolerance: 1e-11,
                ..spec.clone()
            };
            let (_, adaptive) = simulate(&cfg, &grid, &adaptive_spec).unwrap();
            let dev = fixed.final_state.max_deviation(&adaptive.final_state);
            assert!(dev < 1e-7, "{frame}: {dev}");
        }
    }

    #[test]
    fn pulse_end_is_a_step_boundary() {
        let cfg = baseline();
        let grid = build_grid(100.0, 200.0, 50, 300.0).unwrap();
        let spec = EvolutionSpec {
            sample_every: 0.3,
            ..EvolutionSpec::new(1.0, 0.45)
        };
        let (_, traj) = simulate(&cfg, &grid, &spec).unwrap();
        // after the pulse the bath evolves freely
        let d = derive_params(&cfg).unwrap();
        let sched = PulsedOutcoupling::new(&cfg, &d, &grid, 0.45);
        let mut prop = ExactPropagator::new(&grid, &sched);
        let exact = prop
            .propagate(&init_state(&cfg, &grid).unwrap(), 1.0)
            .unwrap();
        let n_c_exact = exact.n_c();
        assert_relative_eq!(traj.final_state.n_c(), n_c_exact, max_relative = 1e-6);
    }
}
