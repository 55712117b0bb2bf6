//! Run configuration and its flat, unit-suffixed TOML form.

use std::path::Path;

use anyhow::{bail, Context, Result};
use atomlaser_core::{
    build_grid, ContinuumGrid, EvolutionSpec, Frame, IntegratorKind, PhysicalConfig,
};
use serde::{Deserialize, Serialize};

use crate::preset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    pub modes: usize,
    pub omega_up: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSettings {
    pub t_end: f64,
    pub dt: f64,
    pub integrator: IntegratorKind,
    pub frame: Frame,
    pub tolerance: f64,
    pub sample_every: f64,
    pub pulse_duration: f64,
    /// Spectrum snapshot time; the pulse end when absent.
    pub spectrum_at: Option<f64>,
    pub norm_drift_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub physical: PhysicalConfig,
    pub grid: GridSettings,
    pub evolution: EvolutionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            physical: PhysicalConfig::sodium_baseline(),
            grid: GridSettings {
                modes: 1500,
                omega_up: 300.0,
            },
            evolution: EvolutionSettings {
                t_end: 10.0,
                dt: 1e-3,
                integrator: IntegratorKind::FixedRk4,
                frame: Frame::Interaction,
                tolerance: 1e-10,
                sample_every: 0.01,
                pulse_duration: 10.0,
                spectrum_at: None,
                norm_drift_limit: Some(atomlaser_core::dynamics::DEFAULT_NORM_DRIFT_LIMIT),
            },
        }
    }
}

impl RunConfig {
    pub fn spectrum_time(&self) -> f64 {
        self.evolution
            .spectrum_at
            .unwrap_or(self.evolution.pulse_duration)
            .min(self.evolution.t_end)
    }

    pub fn build_grid(&self) -> atomlaser_core::Result<ContinuumGrid> {
        build_grid(
            self.physical.outcoupling,
            self.physical.omega_z,
            self.grid.modes,
            self.grid.omega_up,
        )
    }

    pub fn evolution_spec(&self) -> EvolutionSpec {
        let e = &self.evolution;
        EvolutionSpec {
            t_end: e.t_end,
            dt: e.dt,
            integrator: e.integrator,
            frame: e.frame,
            tolerance: e.tolerance,
            sample_every: e.sample_every,
            pulse_duration: e.pulse_duration,
            snapshots: vec![self.spectrum_time()],
            norm_drift_limit: e.norm_drift_limit,
        }
    }
}

/// On-disk configuration. Every key is optional and overrides the preset
/// named by `preset` (or the sodium baseline).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub mass_kg: Option<f64>,
    pub scattering_length_m: Option<f64>,
    pub omega_z_per_sec: Option<f64>,
    pub trap_ratio: Option<f64>,
    pub outcoupling_per_sec2: Option<f64>,
    pub eta: Option<f64>,
    pub n_total: Option<f64>,
    pub alpha_frac: Option<f64>,
    pub beta_frac: Option<f64>,
    pub phi0_rad: Option<f64>,
    pub kappa_on: Option<bool>,
    pub modes: Option<usize>,
    pub omega_up_per_sec: Option<f64>,
    pub t_end_sec: Option<f64>,
    pub dt_sec: Option<f64>,
    pub integrator: Option<IntegratorKind>,
    pub frame: Option<Frame>,
    pub tolerance: Option<f64>,
    pub sample_every_sec: Option<f64>,
    pub pulse_duration_sec: Option<f64>,
    pub spectrum_at_sec: Option<f64>,
    pub norm_drift_limit: Option<f64>,
}

macro_rules! overlay {
    ($src:expr, $dst:expr, $($key:ident => $($field:ident).+),* $(,)?) => {
        $( if let Some(v) = $src.$key.clone() { $dst.$($field).+ = v; } )*
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("malformed config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.preset {
            Some(name) => preset::find(name)?.config,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self, cfg,
            mass_kg => physical.mass,
            scattering_length_m => physical.scattering_length,
            omega_z_per_sec => physical.omega_z,
            trap_ratio => physical.trap_ratio,
            outcoupling_per_sec2 => physical.outcoupling,
            eta => physical.eta,
            n_total => physical.n_total,
            alpha_frac => physical.alpha_frac,
            beta_frac => physical.beta_frac,
            phi0_rad => physical.phi0,
            kappa_on => physical.kappa_on,
            modes => grid.modes,
            omega_up_per_sec => grid.omega_up,
            t_end_sec => evolution.t_end,
            dt_sec => evolution.dt,
            integrator => evolution.integrator,
            frame => evolution.frame,
            tolerance => evolution.tolerance,
            sample_every_sec => evolution.sample_every,
            pulse_duration_sec => evolution.pulse_duration,
        );
        if self.spectrum_at_sec.is_some() {
            cfg.evolution.spectrum_at = self.spectrum_at_sec;
        }
        if let Some(limit) = self.norm_drift_limit {
            cfg.evolution.norm_drift_limit = (limit > 0.0).then_some(limit);
        }
    }

    /// Flat form of a resolved configuration.
    pub fn from_run(cfg: &RunConfig) -> Self {
        let (p, g, e) = (&cfg.physical, &cfg.grid, &cfg.evolution);
        Self {
            preset: None,
            mass_kg: Some(p.mass),
            scattering_length_m: Some(p.scattering_length),
            omega_z_per_sec: Some(p.omega_z),
            trap_ratio: Some(p.trap_ratio),
            outcoupling_per_sec2: Some(p.outcoupling),
            eta: Some(p.eta),
            n_total: Some(p.n_total),
            alpha_frac: Some(p.alpha_frac),
            beta_frac: Some(p.beta_frac),
            phi0_rad: Some(p.phi0),
            kappa_on: Some(p.kappa_on),
            modes: Some(g.modes),
            omega_up_per_sec: Some(g.omega_up),
            t_end_sec: Some(e.t_end),
            dt_sec: Some(e.dt),
            integrator: Some(e.integrator),
            frame: Some(e.frame),
            tolerance: Some(e.tolerance),
            sample_every_sec: Some(e.sample_every),
            pulse_duration_sec: Some(e.pulse_duration),
            spectrum_at_sec: e.spectrum_at,
            norm_drift_limit: Some(e.norm_drift_limit.unwrap_or(0.0)),
        }
    }
}

/// Checks that cannot be expressed by the core types.
pub fn check_run(cfg: &RunConfig) -> Result<()> {
    cfg.physical.validate()?;
    cfg.evolution_spec().validate()?;
    if cfg.grid.modes == 0 {
        bail!("modes must be at least 1");
    }
    Ok(())
}
