//! Reduced-size invariant suite behind the `validate` subcommand.

use std::f64::consts::PI;
use std::time::Instant;

use atomlaser_core::dynamics::Couplings;
use atomlaser_core::model::ground_state_frequency;
use atomlaser_core::quadrature::integrate as quad;
use atomlaser_core::{
    build_grid, derive_params, init_state, integrate, josephson_coupling, josephson_landmarks,
    simulate, tail_shift, ContinuumGrid, CouplingSchedule, EvolutionSpec, ExactPropagator,
    PhysicalConfig, PulsedOutcoupling, Spectrum,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckFn = fn() -> (bool, String);

fn baseline() -> PhysicalConfig {
    PhysicalConfig::sodium_baseline()
}

fn josephson_quadrature(omega_z: f64, trap_ratio: f64, eta: f64) -> f64 {
    let omega_x = omega_z / trap_ratio;
    let xa = |u: f64| PI.powf(-0.25) * (-0.5 * u * u).exp();
    let xb = |u: f64| PI.powf(-0.25) * (-0.5 * (u - 2.0 * eta).powi(2)).exp();
    let f = |u: f64| {
        let kinetic = 0.5 * (1.0 - (u - 2.0 * eta).powi(2));
        let potential = 0.5 * ((u - eta).abs() - eta).powi(2);
        xa(u) * (kinetic + potential) * xb(u)
    };
    let q = |g: &dyn Fn(f64) -> f64, a, b| quad(g, a, b, 1e-13, 1e-300).map(|q| q.value);
    let (Ok(l), Ok(r), Ok(o)) = (
        q(&f, eta - 40.0, eta),
        q(&f, eta, eta + 40.0),
        q(&|u| xa(u) * xb(u), eta - 40.0, eta + 40.0),
    ) else {
        return f64::NAN;
    };
    omega_x * (l + r) + 0.5 * (omega_x + omega_z) * o
}

fn check_n_max() -> (bool, String) {
    let d = derive_params(&baseline()).unwrap();
    let rel = (d.n_max - 2500.0).abs() / 2500.0;
    (rel < 0.05, format!("N_max = {:.1}", d.n_max))
}

fn check_josephson() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for eta in [1.5, 1.7, 2.0, 3.0] {
        let closed = josephson_coupling(200.0, 0.4, eta);
        let rel = ((closed - josephson_quadrature(200.0, 0.4, eta)) / closed).abs();
        worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
    }
    let j = josephson_coupling(200.0, 0.4, 1.7);
    (
        worst < 1e-6 && (j - 6.70).abs() < 0.01,
        format!("J(1.7) = {j:.4}, worst quadrature rel = {worst:.1e}"),
    )
}

fn check_landmarks() -> (bool, String) {
    let l = josephson_landmarks(200.0, 0.4);
    let zero = l.eta_zero.unwrap_or(f64::NAN);
    (
        (zero - 2.127).abs() <= 0.005 && (l.eta_min - 2.34).abs() <= 0.02,
        format!("eta_zero = {zero:.4}, eta_min = {:.4}", l.eta_min),
    )
}

fn check_ground_frequency() -> (bool, String) {
    let exact = ground_state_frequency(200.0, 0.4, 1.5);
    let approx = 200.0 * (0.5 + 1.0 / 0.4);
    let rel = (exact - approx).abs() / approx;
    let mut prev = f64::INFINITY;
    let monotone = (0..30).all(|k| {
        let d = (ground_state_frequency(200.0, 0.4, 1.5 + 0.1 * k as f64) - approx).abs();
        let ok = d <= prev;
        prev = d;
        ok
    });
    (
        rel < 0.02 && monotone,
        format!("relative gap at eta = 1.5: {rel:.2e}"),
    )
}

fn check_grid() -> (bool, String) {
    let g = build_grid(100.0, 200.0, 800, 300.0).unwrap();
    let ok = g.omegas[799] == 300.0
        && g.omegas.windows(2).all(|w| w[1] > w[0])
        && g.couplings.windows(2).all(|w| w[1] < w[0])
        && g.omegas
            .iter()
            .zip(&g.coupling_sq)
            .all(|(w, g2)| *g2 == atomlaser_core::spectral_response(*w, 100.0, 200.0) * g.epsilon)
        && build_grid(0.0, 200.0, 800, 300.0)
            .unwrap()
            .couplings
            .iter()
            .all(|&c| c == 0.0);
    (
        ok,
        format!(
            "eps = {}, recurrence = {:.2} s",
            g.epsilon, g.recurrence_time
        ),
    )
}

fn check_shift() -> (bool, String) {
    // S/Λ = C (ω_z/2)^{−1/2} Γ(−1/2, x), Γ(−1/2, x) = 2(e^{−x}/√x − √π erfc √x)
    let x: f64 = 2.0 * 300.0 / 200.0;
    let gamma = 2.0 * ((-x).exp() / x.sqrt() - PI.sqrt() * statrs::function::erf::erfc(x.sqrt()));
    let oracle = (2.0 / (PI * 200.0)).sqrt() / 100.0f64.sqrt() * gamma;
    let s = tail_shift(1.0, 200.0, 300.0).unwrap();
    let rel = (s - oracle).abs() / oracle;
    let linear = (tail_shift(2.0, 200.0, 300.0).unwrap() - 2.0 * s).abs() < 1e-15;
    let zero = tail_shift(0.0, 200.0, 300.0).unwrap() == 0.0;
    (
        rel < 1e-8 && linear && zero,
        format!("S/Λ = {s:.6e}, rel = {rel:.1e}"),
    )
}

fn drift_run(kappa_on: bool, dt: f64) -> f64 {
    let cfg = PhysicalConfig {
        kappa_on,
        n_total: if kappa_on { 100.0 } else { 1.0 },
        ..baseline()
    };
    let grid = build_grid(cfg.outcoupling, cfg.omega_z, 800, 300.0).unwrap();
    let spec = EvolutionSpec {
        dt,
        norm_drift_limit: None,
        ..EvolutionSpec::new(10.0, 10.0)
    };
    match simulate(&cfg, &grid, &spec) {
        Ok((_, t)) => t.diagnostics.max_norm_drift,
        Err(_) => f64::INFINITY,
    }
}

fn check_norm() -> (bool, String) {
    let off = drift_run(false, 1e-3);
    let on = drift_run(true, 1e-3);
    (
        off < 1e-8 && on < 1e-8,
        format!("drift {off:.2e} (kappa off), {on:.2e} (kappa on)"),
    )
}

fn check_negative_control() -> (bool, String) {
    let drift = drift_run(false, 0.1);
    (
        drift > 1e-8,
        format!("dt = 0.1 drift {drift:.2e} exceeds 1e-8 as expected"),
    )
}

fn toy(outcoupling: f64) -> (PhysicalConfig, ContinuumGrid) {
    let cfg = PhysicalConfig {
        outcoupling,
        ..baseline()
    };
    let grid = build_grid(outcoupling, cfg.omega_z, 200, 120.0).unwrap();
    (cfg, grid)
}

/// Schedule with the sign of the overlap factor inverted.
struct FlippedOverlap(PulsedOutcoupling);

impl CouplingSchedule for FlippedOverlap {
    fn couplings_at(&self, t: f64) -> Couplings {
        let c = self.0.couplings_at(t);
        Couplings {
            overlap: -c.overlap,
            ..c
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

/// Largest amplitude deviation from the exact propagator over 10 s.
pub fn oracle_deviation(outcoupling: f64, mutate: bool) -> f64 {
    let (cfg, grid) = toy(outcoupling);
    let mut d = derive_params(&cfg).unwrap();
    d.shift = Some(grid.shift);
    let sched = PulsedOutcoupling::new(&cfg, &d, &grid, 10.0);
    let s0 = init_state(&cfg, &grid).unwrap();
    let spec = EvolutionSpec {
        dt: 5e-4,
        sample_every: 2.5,
        snapshots: vec![2.5, 5.0, 7.5],
        ..EvolutionSpec::new(10.0, 10.0)
    };
    let flipped = FlippedOverlap(sched);
    let used: &dyn CouplingSchedule = if mutate { &flipped } else { &sched };
    let Ok(traj) = integrate(&s0, &spec, &grid, used) else {
        return f64::INFINITY;
    };
    let mut prop = ExactPropagator::new(&grid, &sched);
    traj.snapshots
        .iter()
        .chain(std::iter::once(&traj.final_state))
        .map(|s| {
            prop.propagate(&s0, s.t)
                .map_or(f64::INFINITY, |e| s.max_deviation(&e))
        })
        .fold(0.0, f64::max)
}

fn check_oracle() -> (bool, String) {
    let a = oracle_deviation(100.0, false);
    let b = oracle_deviation(2000.0, false);
    (
        a < 1e-6 && b < 1e-6,
        format!("max deviation {a:.2e} (Λ=100), {b:.2e} (Λ=2000)"),
    )
}

fn check_mutation() -> (bool, String) {
    let dev = oracle_deviation(2000.0, true);
    (
        dev > 1e-6,
        format!("flipped overlap sign deviates by {dev:.2e}"),
    )
}

fn markov_n_a(modes: usize, dt: f64, t_end: f64) -> f64 {
    let cfg = baseline();
    let grid = build_grid(cfg.outcoupling, cfg.omega_z, modes, 300.0).unwrap();
    let spec = EvolutionSpec {
        dt,
        sample_every: 0.5,
        norm_drift_limit: None,
        ..EvolutionSpec::new(t_end, t_end)
    };
    simulate(&cfg, &grid, &spec).map_or(f64::NAN, |(_, t)| t.final_state.n_a())
}

fn check_refinement() -> (bool, String) {
    let coarse = markov_n_a(400, 1e-3, 5.0);
    let fine = markov_n_a(800, 1e-3, 5.0);
    let rel = (coarse - fine).abs() / fine;
    (
        rel < 1e-3,
        format!("N_A(5 s): M=400 {coarse:.6}, M=800 {fine:.6}, rel {rel:.2e}"),
    )
}

/// Observed RK4 order from three step sizes.
pub fn rk4_order() -> f64 {
    let cfg = PhysicalConfig {
        outcoupling: 2000.0,
        ..baseline()
    };
    let grid = build_grid(cfg.outcoupling, cfg.omega_z, 400, 300.0).unwrap();
    let n = |h: f64| {
        let spec = EvolutionSpec {
            dt: h,
            sample_every: 1.0,
            norm_drift_limit: None,
            ..EvolutionSpec::new(2.0, 2.0)
        };
        simulate(&cfg, &grid, &spec).map_or(f64::NAN, |(_, t)| t.final_state.n_a())
    };
    let (n1, n2, n3) = (n(2.5e-4), n(1.25e-4), n(6.25e-5));
    ((n1 - n2).abs() / (n2 - n3).abs()).log2()
}

fn check_order() -> (bool, String) {
    let p = rk4_order();
    ((3.5..=4.5).contains(&p), format!("observed order {p:.2}"))
}

fn check_empty_continuum() -> (bool, String) {
    let cfg = PhysicalConfig {
        outcoupling: 0.0,
        ..baseline()
    };
    let grid = build_grid(0.0, cfg.omega_z, 800, 300.0).unwrap();
    let spec = EvolutionSpec {
        snapshots: vec![5.0],
        ..EvolutionSpec::new(5.0, 5.0)
    };
    let Ok((_, t)) = simulate(&cfg, &grid, &spec) else {
        return (false, "run failed".into());
    };
    let s = Spectrum::from_state(&t.snapshots[0], &t.omegas, t.epsilon);
    let zero = s.raw.iter().all(|&r| r == 0.0);
    (
        zero,
        format!("max raw {:e}", s.raw.iter().copied().fold(0.0, f64::max)),
    )
}

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("n_max_baseline", check_n_max),
    ("josephson_closed_form", check_josephson),
    ("josephson_landmarks", check_landmarks),
    ("ground_state_frequency", check_ground_frequency),
    ("grid_invariants", check_grid),
    ("tail_shift_oracle", check_shift),
    ("norm_conservation", check_norm),
    ("negative_control_coarse_dt", check_negative_control),
    ("oracle_equivalence", check_oracle),
    ("mutation_overlap_sign", check_mutation),
    ("refinement_m400_m800", check_refinement),
    ("rk4_order", check_order),
    ("empty_continuum_spectrum", check_empty_continuum),
];

pub fn run_suite() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = f();
            CheckOutcome {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
