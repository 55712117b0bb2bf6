//! Run and scan orchestration.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use atomlaser_core::observables::{LOW_FREQUENCY_FRACTION, STEADY_MIN_DURATION};
use atomlaser_core::{
    detect_steady_state_with, find_peaks_and_dip, josephson_landmarks, simulate, spectrum_at,
    PeakOptions, Spectrum, SteadyOptions, SteadyState, TimeSeries,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_run, RunConfig};
use crate::manifest::{content_hash, ManifestBody, RunManifest, ARTIFACT_VERSION};
use crate::output::{float, manifest_line, spectrum_csv, timeseries_csv};
use crate::preset::Axis;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub series: TimeSeries,
    pub spectrum: Spectrum,
    pub closeup: Option<Spectrum>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub steady: SteadyOptions,
    pub peaks: PeakOptions,
    pub closeup: Option<(f64, f64)>,
}

fn window(s: &Spectrum, lo: f64, hi: f64) -> Spectrum {
    let a = s.omegas.partition_point(|&w| w < lo);
    let b = s.omegas.partition_point(|&w| w <= hi);
    Spectrum {
        omegas: s.omegas[a..b].to_vec(),
        raw: s.raw[a..b].to_vec(),
        density: s.density[a..b].to_vec(),
        t_snapshot: s.t_snapshot,
        epsilon: s.epsilon,
    }
}

pub fn execute(label: &str, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    check_run(cfg)?;
    let start = Instant::now();
    let grid = cfg.build_grid()?;
    let (derived, traj) = simulate(&cfg.physical, &grid, &cfg.evolution_spec())?;
    let spectrum = spectrum_at(&traj, cfg.spectrum_time());
    let analysis = find_peaks_and_dip(&spectrum, &opts.peaks);
    let steady = if traj.series.duration() >= STEADY_MIN_DURATION {
        Some(detect_steady_state_with(&traj.series, &opts.steady)?)
    } else {
        None
    };
    let body = ManifestBody {
        version: ARTIFACT_VERSION.to_string(),
        label: label.to_string(),
        config: cfg.clone(),
        landmarks: josephson_landmarks(cfg.physical.omega_z, cfg.physical.trap_ratio),
        derived,
        grid: grid.summary(),
        diagnostics: traj.diagnostics.clone(),
        spectrum_time: spectrum.t_snapshot,
        analysis,
        steady_options: opts.steady,
        steady,
    };
    let closeup = opts.closeup.map(|(lo, hi)| window(&spectrum, lo, hi));
    Ok(RunOutput {
        manifest: RunManifest::new(body, start.elapsed().as_secs_f64()),
        series: traj.series,
        spectrum,
        closeup,
    })
}

/// Writes the manifest and CSV files of one run into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let hash = &out.manifest.content_hash;
    let cutoff = LOW_FREQUENCY_FRACTION * out.manifest.body.config.physical.omega_z;
    let mut files = vec![
        ("manifest.json", out.manifest.to_json()),
        ("timeseries.csv", timeseries_csv(hash, &out.series)),
        ("spectrum.csv", spectrum_csv(hash, &out.spectrum)),
        (
            "spectrum_low.csv",
            spectrum_csv(hash, &out.spectrum.low_frequency_window(cutoff)),
        ),
    ];
    if let Some(c) = &out.closeup {
        files.push(("spectrum_closeup.csv", spectrum_csv(hash, c)));
    }
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Evenly spaced values from `start` to `stop` inclusive.
pub fn range_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step != 0.0) || (stop - start) * step < 0.0 {
        bail!("range {start}:{stop}:{step} does not reach its end");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| {
            let v = start + k as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

/// Parses `a,b,c` or `start:stop:step`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("bad number {s:?} in {spec:?}"))
    };
    match parts.as_slice() {
        [a, b, c] => range_values(parse(a)?, parse(b)?, parse(c)?),
        [_] => spec.split(',').map(parse).collect(),
        _ => bail!("expected a,b,c or start:stop:step, got {spec:?}"),
    }
}

pub fn check_monotone(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        bail!("scan grid is empty");
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        bail!("scan grid must be strictly monotone");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Steady,
    NoSteadyState,
    /// Integrated span too short to judge a steady state.
    Unjudged,
    Failed,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Steady => "steady",
            PointStatus::NoSteadyState => "no-steady-state",
            PointStatus::Unjudged => "unjudged",
            PointStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub value: f64,
    pub status: PointStatus,
    pub outcome: std::result::Result<RunOutput, String>,
}

impl ScanPoint {
    pub fn steady_value(&self) -> Option<f64> {
        self.steady().and_then(|s| s.value())
    }

    pub fn steady(&self) -> Option<SteadyState> {
        self.outcome
            .as_ref()
            .ok()
            .and_then(|o| o.manifest.body.steady)
    }
}

#[derive(Debug, Clone)]
pub struct ScanRequest {
    pub base: RunConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub workers: usize,
    pub options: RunOptions,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub axis: Axis,
    pub points: Vec<ScanPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScanIndex {
    version: String,
    axis: Axis,
    values: Vec<f64>,
    points: Vec<Option<String>>,
}

fn point_label(axis: Axis, value: f64) -> String {
    format!("{}={}", axis.name(), float(value))
}

fn run_point(req: &ScanRequest, value: f64) -> ScanPoint {
    let mut cfg = req.base.clone();
    req.axis.apply(&mut cfg, value);
    let label = point_label(req.axis, value);
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(&label, &cfg, &req.options)))
        .unwrap_or_else(|_| Err(anyhow::anyhow!("worker panicked")))
        .map_err(|e| format!("{e:#}"));
    let status = match &outcome {
        Err(_) => PointStatus::Failed,
        Ok(o) => match o.manifest.body.steady {
            Some(SteadyState::Steady { .. }) => PointStatus::Steady,
            Some(SteadyState::NoSteadyState { .. }) => PointStatus::NoSteadyState,
            None => PointStatus::Unjudged,
        },
    };
    if let Err(e) = &outcome {
        log::warn!("{label}: {e}");
    }
    ScanPoint {
        value,
        status,
        outcome,
    }
}

pub fn run_scan(req: &ScanRequest) -> Result<ScanResult> {
    check_monotone(&req.values)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers.max(1))
        .build()?;
    let points = pool.install(|| {
        req.values
            .par_iter()
            .map(|&v| run_point(req, v))
            .collect::<Vec<_>>()
    });
    Ok(ScanResult {
        axis: req.axis,
        points,
    })
}

impl ScanResult {
    /// Maximal runs of consecutive no-steady-state points, as value intervals.
    pub fn no_steady_windows(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for p in &self.points {
            if p.status == PointStatus::NoSteadyState {
                open = Some(open.map_or((p.value, p.value), |(a, _)| (a, p.value)));
            } else if let Some(w) = open.take() {
                out.push(w);
            }
        }
        out.extend(open);
        out
    }

    fn index_hash(&self) -> String {
        content_hash(&ScanIndex {
            version: ARTIFACT_VERSION.to_string(),
            axis: self.axis,
            values: self.points.iter().map(|p| p.value).collect(),
            points: self
                .points
                .iter()
                .map(|p| {
                    p.outcome
                        .as_ref()
                        .ok()
                        .map(|o| o.manifest.content_hash.clone())
                })
                .collect(),
        })
    }

    pub fn csv(&self) -> String {
        let mut out = manifest_line(&self.index_hash());
        out.push_str(
            "axis,value,status,N_A,N_B,N_C,steady_N_A,peak_to_peak,beat_amplitude,manifest,error\n",
        );
        for p in &self.points {
            let mut cols = vec![
                self.axis.name().to_string(),
                float(p.value),
                p.status.as_str().into(),
            ];
            match &p.outcome {
                Ok(o) => {
                    let s = &o.series;
                    let last = s.len() - 1;
                    cols.extend([float(s.n_a[last]), float(s.n_b[last]), float(s.n_c[last])]);
                    let (value, p2p, beat) = match o.manifest.body.steady {
                        Some(SteadyState::Steady {
                            value,
                            peak_to_peak,
                        }) => (float(value), float(peak_to_peak), String::new()),
                        Some(SteadyState::NoSteadyState { beat_amplitude }) => {
                            (String::new(), String::new(), float(beat_amplitude))
                        }
                        None => Default::default(),
                    };
                    cols.extend([
                        value,
                        p2p,
                        beat,
                        o.manifest.content_hash.clone(),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    cols.extend(std::iter::repeat_n(String::new(), 7));
                    cols.push(format!("\"{}\"", e.replace('"', "'")));
                }
            }
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `scan.csv` and one directory per successful point.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        for p in &self.points {
            if let Ok(o) = &p.outcome {
                write_run(&dir.join(point_label(self.axis, p.value)), o)?;
            }
        }
        let path = dir.join("scan.csv");
        std::fs::write(&path, self.csv())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_include_the_end_point() {
        let v = parse_values("1.8:2.6:0.05").unwrap();
        assert_eq!(v.len(), 17);
        assert_eq!(v[0], 1.8);
        assert_eq!(v[7], 2.15);
        assert_eq!(*v.last().unwrap(), 2.6);
        assert_eq!(
            parse_values("500,1000, 2000").unwrap(),
            vec![500.0, 1000.0, 2000.0]
        );
        assert!(parse_values("1:0:0.1").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn monotone_grids_only() {
        assert!(check_monotone(&[1.0, 2.0, 3.0]).is_ok());
        assert!(check_monotone(&[3.0, 2.0]).is_ok());
        assert!(check_monotone(&[1.0, 3.0, 2.0]).is_err());
        assert!(check_monotone(&[1.0, 1.0]).is_err());
        assert!(check_monotone(&[]).is_err());
    }

    fn fake(value: f64, status: PointStatus) -> ScanPoint {
        ScanPoint {
            value,
            status,
            outcome: Err(String::new()),
        }
    }

    #[test]
    fn windows_group_consecutive_points() {
        use PointStatus::*;
        let r = ScanResult {
            axis: Axis::Eta,
            points: vec![
                fake(1.0, Steady),
                fake(1.1, NoSteadyState),
                fake(1.2, NoSteadyState),
                fake(1.3, Failed),
                fake(1.4, NoSteadyState),
            ],
        };
        assert_eq!(r.no_steady_windows(), vec![(1.1, 1.2), (1.4, 1.4)]);
    }
}
