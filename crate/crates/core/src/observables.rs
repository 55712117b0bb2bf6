//! Reductions of trajectories to populations, spectra, and derived features.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AmplitudeState, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub n_c: Vec<f64>,
    /// |(a + b)/√2|²
    pub n_plus: Vec<f64>,
    /// |(a − b)/√2|²
    pub n_minus: Vec<f64>,
    /// Relative deviation of the total population from its initial value.
    pub norm_drift: Vec<f64>,
}

impl TimeSeries {
    pub fn push(&mut self, state: &AmplitudeState, norm0: f64) {
        let (a, b) = (state.a(), state.b());
        let n_a = a.norm_sqr();
        let n_b = b.norm_sqr();
        let n_c = state.n_c();
        self.times.push(state.t);
        self.n_a.push(n_a);
        self.n_b.push(n_b);
        self.n_c.push(n_c);
        self.n_plus.push(0.5 * (a + b).norm_sqr());
        self.n_minus.push(0.5 * (a - b).norm_sqr());
        let total = n_a + n_b + n_c;
        self.norm_drift.push(if norm0 > 0.0 {
            (total - norm0).abs() / norm0
        } else {
            total
        });
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the sample closest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        (0..self.len()).min_by(|&i, &j| {
            (self.times[i] - t)
                .abs()
                .total_cmp(&(self.times[j] - t).abs())
        })
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn total_at(&self, i: usize) -> f64 {
        self.n_a[i] + self.n_b[i] + self.n_c[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub omegas: Vec<f64>,
    /// |c_j|², atoms.
    pub raw: Vec<f64>,
    /// |c_j|² / ε, atoms·s.
    pub density: Vec<f64>,
    pub t_snapshot: f64,
    pub epsilon: f64,
}

impl Spectrum {
    pub fn from_state(state: &AmplitudeState, omegas: &[f64], epsilon: f64) -> Self {
        let raw: Vec<f64> = state.c().iter().map(|c| c.norm_sqr()).collect();
        let density = raw.iter().map(|r| r / epsilon).collect();
        Self {
            omegas: omegas.to_vec(),
            raw,
            density,
            t_snapshot: state.t,
            epsilon,
        }
    }

    pub fn total(&self) -> f64 {
        self.raw.iter().sum()
    }

    /// The modes with `ω ≤ cutoff`, unscaled.
    pub fn low_frequency_window(&self, cutoff: f64) -> Spectrum {
        let n = self.omegas.partition_point(|&w| w <= cutoff);
        Spectrum {
            omegas: self.omegas[..n].to_vec(),
            raw: self.raw[..n].to_vec(),
            density: self.density[..n].to_vec(),
            t_snapshot: self.t_snapshot,
            epsilon: self.epsilon,
        }
    }
}

/// Default upper edge of the low-frequency zoom window, as a fraction of ω_z.
pub const LOW_FREQUENCY_FRACTION: f64 = 0.25;

/// Spectrum of the stored state closest to `t` (snapshots and final state).
pub fn spectrum_at(trajectory: &Trajectory, t: f64) -> Spectrum {
    let state = trajectory
        .snapshots
        .iter()
        .chain(std::iter::once(&trajectory.final_state))
        .min_by(|x, y| (x.t - t).abs().total_cmp(&(y.t - t).abs()))
        .expect("final state always present");
    if (state.t - t).abs() > 1e-9 * t.abs().max(1.0) {
        log::warn!("no state stored at t = {t} s; using t = {} s", state.t);
    }
    Spectrum::from_state(state, &trajectory.omegas, trajectory.epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    /// RMS residual of ln N_A about the fitted line.
    pub residual: f64,
    pub points: usize,
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Least-squares fit of ln N_A(t) = c − Γ t over `window`.
pub fn fit_decay(series: &TimeSeries, window: (f64, f64)) -> Result<DecayFit> {
    let (t0, t1) = window;
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(&series.n_a)
        .filter(|(t, n)| **t >= t0 && **t <= t1 && **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .unzip();
    if x.len() < 2 || !(t1 > t0) {
        return Err(Error::BadWindow(t0, t1));
    }
    let (slope, intercept) = line_fit(&x, &y);
    let ss: f64 = x
        .iter()
        .zip(&y)
        .map(|(t, v)| (v - intercept - slope * t).powi(2))
        .sum();
    Ok(DecayFit {
        rate: -slope,
        residual: (ss / x.len() as f64).sqrt(),
        points: x.len(),
    })
}

/// Angular frequency of the oscillation in N_A − N_B from zero-crossing
/// spacing of the linearly detrended signal. `None` with fewer than four
/// extrema or a flat signal.
pub fn oscillation_frequency(series: &TimeSeries) -> Option<f64> {
    if series.len() < 4 {
        return None;
    }
    let d: Vec<f64> = series
        .n_a
        .iter()
        .zip(&series.n_b)
        .map(|(a, b)| a - b)
        .collect();
    let (slope, intercept) = line_fit(&series.times, &d);
    let r: Vec<f64> = series
        .times
        .iter()
        .zip(&d)
        .map(|(t, v)| v - intercept - slope * t)
        .collect();
    let scale = series.total_at(0).max(f64::MIN_POSITIVE);
    let amplitude = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amplitude <= 1e-9 * scale {
        return None;
    }
    let extrema = r
        .windows(3)
        .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
        .count();
    if extrema < 4 {
        return None;
    }
    let t = &series.times;
    let crossings: Vec<f64> = (1..r.len())
        .filter(|&i| r[i - 1] != 0.0 && r[i - 1].signum() != r[i].signum())
        .map(|i| t[i - 1] + r[i - 1] / (r[i - 1] - r[i]) * (t[i] - t[i - 1]))
        .collect();
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(PI * (crossings.len() - 1) as f64 / span)
}

pub const STEADY_MIN_DURATION: f64 = 20.0;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const DEFAULT_STEADY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteadyState {
    Steady { value: f64, peak_to_peak: f64 },
    NoSteadyState { beat_amplitude: f64 },
}

impl SteadyState {
    pub fn value(&self) -> Option<f64> {
        match self {
            SteadyState::Steady { value, .. } => Some(*value),
            SteadyState::NoSteadyState { .. } => None,
        }
    }
}

/// Reference against which the tail's peak-to-peak variation is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdBasis {
    /// Fraction of the total atom number N.
    #[default]
    TotalAtoms,
    /// Fraction of the tail mean of N_A.
    TailMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub tail_fraction: f64,
    pub threshold: f64,
    pub basis: ThresholdBasis,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tail_fraction: DEFAULT_TAIL_FRACTION,
            threshold: DEFAULT_STEADY_THRESHOLD,
            basis: ThresholdBasis::TotalAtoms,
        }
    }
}

/// Long-time N_A: the tail mean if its peak-to-peak variation is below
/// `threshold × N`, otherwise a no-steady-state marker.
pub fn detect_steady_state(
    series: &TimeSeries,
    tail_fraction: f64,
    threshold: f64,
) -> Result<SteadyState> {
    detect_steady_state_with(
        series,
        &SteadyOptions {
            tail_fraction,
            threshold,
            basis: ThresholdBasis::TotalAtoms,
        },
    )
}

pub fn detect_steady_state_with(series: &TimeSeries, opts: &SteadyOptions) -> Result<SteadyState> {
    let covered = series.duration();
    if covered < STEADY_MIN_DURATION {
        return Err(Error::SeriesTooShort {
            covered,
            required: STEADY_MIN_DURATION,
        });
    }
    let t_last = *series.times.last().expect("non-empty");
    let start = t_last - opts.tail_fraction * covered;
    let tail: Vec<f64> = series
        .times
        .iter()
        .zip(&series.n_a)
        .filter(|(t, _)| **t >= start)
        .map(|(_, n)| *n)
        .collect();
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let peak_to_peak = max - min;
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let reference = match opts.basis {
        ThresholdBasis::TotalAtoms => series.total_at(0),
        ThresholdBasis::TailMean => mean,
    };
    if peak_to_peak < opts.threshold * reference {
        Ok(SteadyState::Steady {
            value: mean,
            peak_to_peak,
        })
    } else {
        Ok(SteadyState::NoSteadyState {
            beat_amplitude: peak_to_peak,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// Minimum prominence relative to the largest smoothed density.
    pub prominence_fraction: f64,
    /// Boxcar length in grid points; `None` picks the beat period 2π/t.
    pub smoothing_points: Option<usize>,
    /// Area is summed within this many FWHM of each peak.
    pub area_halfwidths: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            prominence_fraction: 0.01,
            smoothing_points: None,
            area_halfwidths: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    /// Smoothed density at the maximum.
    pub height: f64,
    pub prominence: f64,
    pub fwhm: f64,
    /// Σ raw within ±`area_halfwidths` FWHM, not crossing neighbouring minima.
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub omega: f64,
    /// Smallest unsmoothed density next to the minimum.
    pub depth: f64,
    /// `depth` over the largest unsmoothed density.
    pub relative_depth: f64,
    /// Extent over which the smoothed density stays below twice its minimum.
    pub width: f64,
    /// Smoothed minimum over the lower of the two flanking maxima.
    pub contrast: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakAnalysis {
    pub peaks: Vec<Peak>,
    pub dip: Option<Dip>,
    pub smoothing_points: usize,
}

pub fn default_smoothing(spectrum: &Spectrum) -> usize {
    if spectrum.t_snapshot <= 0.0 {
        return 1;
    }
    let k = (2.0 * PI / spectrum.t_snapshot / spectrum.epsilon)
        .ceil()
        .max(1.0) as usize;
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

/// Centered moving average with edge-value padding.
pub fn smooth(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    if k <= 1 || n == 0 {
        return values.to_vec();
    }
    let half = k / 2;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for off in 0..k {
                let j = (i + off).saturating_sub(half).min(n - 1);
                acc += values[j];
            }
            acc / k as f64
        })
        .collect()
}

fn prominence(s: &[f64], i: usize) -> f64 {
    let h = s[i];
    let mut left_min = h;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if s[j] > h {
            break;
        }
        left_min = left_min.min(s[j]);
    }
    // a peak with no higher ground on one side uses only the other side
    let left_bounded = j < i && s[j] > h;
    let mut right_min = h;
    let mut k = i;
    while k + 1 < s.len() {
        k += 1;
        if s[k] > h {
            break;
        }
        right_min = right_min.min(s[k]);
    }
    let right_bounded = k > i && s[k] > h;
    let base = match (left_bounded, right_bounded) {
        (true, true) => left_min.max(right_min),
        (true, false) => left_min,
        (false, true) => right_min,
        (false, false) => left_min.min(right_min),
    };
    h - base
}

fn half_width(s: &[f64], omegas: &[f64], i: usize) -> f64 {
    let level = 0.5 * s[i];
    let cross = |j: usize, k: usize| {
        let t = (s[j] - level) / (s[j] - s[k]);
        omegas[j] + t * (omegas[k] - omegas[j])
    };
    let mut l = i;
    while l > 0 && s[l] > level {
        l -= 1;
    }
    let left = if s[l] <= level {
        cross(l + 1, l)
    } else {
        omegas[0]
    };
    let mut r = i;
    while r + 1 < s.len() && s[r] > level {
        r += 1;
    }
    let right = if s[r] <= level {
        cross(r - 1, r)
    } else {
        omegas[s.len() - 1]
    };
    right - left
}

/// Spectral peaks above the prominence floor and the most pronounced dip
/// between the outermost peaks.
///
/// Maxima and minima are located on a boxcar-smoothed density so that the
/// 2π/t beat ripple of a finite-time snapshot is not mistaken for structure;
/// areas and the dip depth use the unsmoothed values.
pub fn find_peaks_and_dip(spectrum: &Spectrum, opts: &PeakOptions) -> PeakAnalysis {
    let n = spectrum.density.len();
    let k = opts
        .smoothing_points
        .unwrap_or_else(|| default_smoothing(spectrum));
    let mut out = PeakAnalysis {
        smoothing_points: k,
        ..Default::default()
    };
    if n < 3 {
        return out;
    }
    let s = smooth(&spectrum.density, k);
    let global = s.iter().copied().fold(0.0, f64::max);
    if !(global > 0.0) {
        return out;
    }
    let floor = opts.prominence_fraction * global;
    let w = &spectrum.omegas;

    let is_max = |i: usize| {
        let left_ok = i == 0 || s[i] > s[i - 1];
        let right_ok = i == n - 1 || s[i] >= s[i + 1];
        left_ok && right_ok && (i != 0 || s[0] > s[1]) && (i != n - 1 || s[n - 1] > s[n - 2])
    };
    let mut idx: Vec<usize> = (0..n).filter(|&i| is_max(i)).collect();
    idx.retain(|&i| prominence(&s, i) >= floor);
    if idx.is_empty() {
        return out;
    }

    // area windows are clipped at the deepest point between neighbours
    let valley = |a: usize, b: usize| (a..=b).min_by(|&x, &y| s[x].total_cmp(&s[y])).unwrap();
    for (m, &i) in idx.iter().enumerate() {
        let fwhm = half_width(&s, w, i);
        let lo_clip = if m > 0 { valley(idx[m - 1], i) } else { 0 };
        let hi_clip = if m + 1 < idx.len() {
            valley(i, idx[m + 1])
        } else {
            n - 1
        };
        let reach = opts.area_halfwidths * fwhm;
        let area = (lo_clip..=hi_clip)
            .filter(|&j| (w[j] - w[i]).abs() <= reach)
            .map(|j| spectrum.raw[j])
            .sum();
        out.peaks.push(Peak {
            omega: w[i],
            height: s[i],
            prominence: prominence(&s, i),
            fwhm,
            area,
        });
    }

    if idx.len() < 2 {
        return out;
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let mut best: Option<(usize, f64)> = None;
    for i in first + 1..last {
        if !(s[i] <= s[i - 1] && s[i] <= s[i + 1]) {
            continue;
        }
        let lmax = s[first..i].iter().copied().fold(0.0, f64::max);
        let rmax = s[i + 1..=last].iter().copied().fold(0.0, f64::max);
        let contrast = s[i] / lmax.min(rmax);
        if best.is_none_or(|(_, c)| contrast < c) {
            best = Some((i, contrast));
        }
    }
    if let Some((i, contrast)) = best {
        let level = 2.0 * s[i];
        let mut a = i;
        while a > first && s[a] < level {
            a -= 1;
        }
        let mut b = i;
        while b < last && s[b] < level {
            b += 1;
        }
        let depth = spectrum.density[i - 1..=i + 1]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let raw_max = spectrum.density.iter().copied().fold(0.0, f64::max);
        out.dip = Some(Dip {
            omega: w[i],
            depth,
            relative_depth: depth / raw_max,
            width: (b - a) as f64 * spectrum.epsilon,
            contrast,
        });
    }
    out
}
