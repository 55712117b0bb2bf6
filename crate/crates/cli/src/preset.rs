//! Named scenarios with pinned physical, grid and pulse parameters.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Parameter axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Lambda,
    Eta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "Lambda",
            Axis::Eta => "eta",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig, value: f64) {
        match self {
            Axis::Lambda => cfg.physical.outcoupling = value,
            Axis::Eta => cfg.physical.eta = value,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" | "outcoupling" => Ok(Axis::Lambda),
            "eta" => Ok(Axis::Eta),
            _ => bail!("unknown axis {s:?}; expected Lambda or eta"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub config: RunConfig,
    /// Frequency window written as an extra spectrum file.
    pub closeup: Option<(f64, f64)>,
    /// Presets that stand for a family of curves.
    pub sweep: Option<Sweep>,
}

/// One preset row; the window t_end equals τ.
struct Row {
    name: &'static str,
    lambda: f64,
    eta: f64,
    tau: f64,
    modes: usize,
    dt: f64,
}

const MARKOV_DT: f64 = 1e-3;
const NON_MARKOV_DT: f64 = 5e-4;

#[rustfmt::skip]
const ROWS: &[Row] = &[
    Row { name: "mark-P-a", lambda: 1e2, eta: 2.0, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-P-b", lambda: 1e2, eta: 1.7, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-P-c", lambda: 1e2, eta: 1.5, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-P-d", lambda: 2e2, eta: 1.7, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-S-a", lambda: 1e2, eta: 2.0, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-S-b", lambda: 1e2, eta: 1.7, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-S-c", lambda: 1e2, eta: 1.5, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "mark-S-d", lambda: 2e2, eta: 1.7, tau: 10.0, modes: 1500, dt: MARKOV_DT },
    Row { name: "nm-gam-a", lambda: 5e2, eta: 1.7, tau: 40.0, modes: 3000, dt: NON_MARKOV_DT },
    Row { name: "nm-gam-b", lambda: 1e3, eta: 1.7, tau: 40.0, modes: 3000, dt: NON_MARKOV_DT },
    Row { name: "nm-gam-c", lambda: 2e3, eta: 1.7, tau: 40.0, modes: 3000, dt: NON_MARKOV_DT },
    Row { name: "nm-gam-d", lambda: 4e3, eta: 1.7, tau: 40.0, modes: 3000, dt: NON_MARKOV_DT },
    Row { name: "nm-eta-a", lambda: 4e3, eta: 4.0, tau: 25.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-eta-b", lambda: 4e3, eta: 2.0, tau: 25.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-eta-c", lambda: 4e3, eta: 1.8, tau: 25.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-eta-d", lambda: 4e3, eta: 1.6, tau: 25.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-eta-a", lambda: 2e3, eta: 4.0, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-eta-b", lambda: 2e3, eta: 2.0, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-eta-c", lambda: 2e3, eta: 1.8, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-eta-d", lambda: 2e3, eta: 1.6, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-gam-a", lambda: 5e2, eta: 1.7, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-gam-b", lambda: 1e3, eta: 1.7, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-gam-c", lambda: 2e3, eta: 1.7, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "nm-spec-gam-d", lambda: 4e3, eta: 1.7, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
    Row { name: "dip-closeup", lambda: 2e3, eta: 1.7, tau: 10.0, modes: 1500, dt: NON_MARKOV_DT },
];

/// Λ values of the outcoupling families.
pub const LAMBDA_FAMILY: [f64; 4] = [5e2, 1e3, 2e3, 4e3];

/// Frequency window around the dark line.
pub const DIP_WINDOW: (f64, f64) = (85.0, 105.0);

fn build(row: &Row) -> Preset {
    let mut config = RunConfig::default();
    config.physical.outcoupling = row.lambda;
    config.physical.eta = row.eta;
    config.grid.modes = row.modes;
    config.grid.omega_up = 300.0;
    config.evolution.pulse_duration = row.tau;
    config.evolution.t_end = row.tau;
    config.evolution.dt = row.dt;
    let dip = row.name == "dip-closeup";
    Preset {
        name: row.name,
        config,
        closeup: dip.then_some(DIP_WINDOW),
        sweep: dip.then(|| Sweep {
            axis: Axis::Lambda,
            values: LAMBDA_FAMILY.to_vec(),
        }),
    }
}

pub fn all() -> Vec<Preset> {
    ROWS.iter().map(build).collect()
}

pub fn names() -> Vec<&'static str> {
    ROWS.iter().map(|r| r.name).collect()
}

pub fn find(name: &str) -> Result<Preset> {
    match ROWS.iter().find(|r| r.name == name) {
        Some(row) => Ok(build(row)),
        None => bail!("unknown preset {name:?}; available: {}", names().join(", ")),
    }
}
