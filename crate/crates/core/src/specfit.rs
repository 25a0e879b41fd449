//! Estimation of the stretched-exponential exponent from a spectrum.
//!
//! The exponent is the magnitude of the slope of `ln(ln F)` against `ln ω`
//! over a frequency window, fitted either through every grid point or only
//! through the maxima of an oscillating spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::least_squares_line;
use crate::spectrum::Spectrum;

pub const MIN_DIRECT_POINTS: usize = 8;
pub const MIN_PEAK_POINTS: usize = 3;
pub const MIN_PEAK_WINDOW_POINTS: usize = 16;
/// Minimum `ln F` required at the top of a fit window.
pub const MIN_LN_F_AT_OMEGA_MAX: f64 = 2.0;
/// Fits with a larger rms residual (in `ln ln F` units) are flagged non-linear.
pub const NONLINEAR_RMS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// All grid points, `ln(ln F)` against `ln ω`.
    Direct,
    /// Local maxima only.
    Peaks,
    /// All grid points, `ln(-ln F)` against `ln ω`, for spectra below 1.
    Decay,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::Direct => "direct",
            FitMethod::Peaks => "peaks",
            FitMethod::Decay => "decay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub intercept: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub method: FitMethod,
    pub rms_residual: f64,
    pub n_points: usize,
}

impl AlphaFit {
    pub fn is_nonlinear(&self) -> bool {
        self.rms_residual > NONLINEAR_RMS
    }

    /// Exponent inside `(0, 1)` and straight-line residual within the gate.
    pub fn is_accepted(&self) -> bool {
        self.alpha > 0.0 && self.alpha < 1.0 && !self.is_nonlinear()
    }
}

fn check_window(omega_min: f64, omega_max: f64) -> Result<()> {
    if !(omega_min < omega_max && omega_min >= 0.0 && omega_max.is_finite()) {
        return Err(Error::domain(format!(
            "invalid fit window [{omega_min}, {omega_max}]"
        )));
    }
    Ok(())
}

/// Direct fit of `ln(ln F)` against `ln ω` through every grid point in the window.
pub fn fit_alpha(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> Result<AlphaFit> {
    check_window(omega_min, omega_max)?;
    let idx = spectrum.window(omega_min, omega_max);
    if idx.len() < MIN_DIRECT_POINTS {
        return Err(Error::InsufficientData(format!(
            "window [{omega_min}, {omega_max}] holds {} grid points; at least {MIN_DIRECT_POINTS} are required",
            idx.len()
        )));
    }
    let ln_f = &spectrum.ln_f_mag[idx.clone()];
    if let Some(k) = ln_f.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::domain(format!(
            "F = {:.4e} ≤ 1 at ω = {} inside the fit window; rescale the envelope",
            ln_f[k].exp(),
            spectrum.omega[idx.start + k]
        )));
    }
    let last = *ln_f.last().unwrap();
    if last < MIN_LN_F_AT_OMEGA_MAX {
        return Err(Error::domain(format!(
            "ln F = {last:.4} at the top of the window is below {MIN_LN_F_AT_OMEGA_MAX}; the double log is unreliable there"
        )));
    }
    let z: Vec<f64> = spectrum.omega[idx].iter().map(|w| w.ln()).collect();
    let y: Vec<f64> = ln_f.iter().map(|v| v.ln()).collect();
    let line = least_squares_line(&z, &y)?;
    Ok(AlphaFit {
        alpha: -line.slope,
        intercept: line.intercept,
        omega_min,
        omega_max,
        method: FitMethod::Direct,
        rms_residual: line.rms_residual,
        n_points: line.n,
    })
}

/// Fit of `ln(-ln F)` against `ln ω` for spectra that decay below 1, as
/// `F ≈ exp(-c ω^α)`. The slope itself is the exponent.
pub fn fit_alpha_decay(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> Result<AlphaFit> {
    check_window(omega_min, omega_max)?;
    let idx = spectrum.window(omega_min, omega_max);
    if idx.len() < MIN_DIRECT_POINTS {
        return Err(Error::InsufficientData(format!(
            "window [{omega_min}, {omega_max}] holds {} grid points; at least {MIN_DIRECT_POINTS} are required",
            idx.len()
        )));
    }
    let ln_f = &spectrum.ln_f_mag[idx.clone()];
    if ln_f.iter().any(|v| !(*v < 0.0) || !v.is_finite()) {
        return Err(Error::domain("decay fit needs 0 < F < 1 throughout the window"));
    }
    let z: Vec<f64> = spectrum.omega[idx].iter().map(|w| w.ln()).collect();
    let y: Vec<f64> = ln_f.iter().map(|v| (-v).ln()).collect();
    let line = least_squares_line(&z, &y)?;
    Ok(AlphaFit {
        alpha: line.slope,
        intercept: line.intercept,
        omega_min,
        omega_max,
        method: FitMethod::Decay,
        rms_residual: line.rms_residual,
        n_points: line.n,
    })
}

/// Local extrema of `F` inside a window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// `(ω, F)` of each local maximum.
    pub peaks: Vec<(f64, f64)>,
    /// `(ω, F)` of each local minimum.
    pub troughs: Vec<(f64, f64)>,
    /// `ln F` at each maximum, finite even where `F` underflows.
    pub peak_ln: Vec<f64>,
    pub trough_ln: Vec<f64>,
}

impl PeakSet {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

#[derive(Clone, Copy)]
struct Extremum {
    omega: f64,
    ln_f: f64,
    is_max: bool,
}

/// Vertex of the parabola through three points, if it lies between the outer two.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a == 0.0 || !a.is_finite() {
        return None;
    }
    let b = d1 - a * (x[0] + x[1]);
    let xv = -b / (2.0 * a);
    if !(xv > x[0] && xv < x[2]) {
        return None;
    }
    let yv = y[1] + d1 * (xv - x[1]) + a * (xv - x[0]) * (xv - x[1]);
    Some((xv, yv))
}

fn extrema(omega: &[f64], ln_f: &[f64]) -> Vec<Extremum> {
    // Collapse runs of equal values into plateaus.
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in ln_f.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == v => r.1 = i,
            _ => runs.push((i, i, v)),
        }
    }
    let mut out = Vec::new();
    for k in 1..runs.len().saturating_sub(1) {
        let (prev, cur, next) = (runs[k - 1].2, runs[k], runs[k + 1].2);
        let is_max = cur.2 > prev && cur.2 > next;
        let is_min = cur.2 < prev && cur.2 < next;
        if !(is_max || is_min) {
            continue;
        }
        let (omega_e, ln_e) = if cur.0 == cur.1 {
            let i = cur.0;
            parabola_vertex([omega[i - 1], omega[i], omega[i + 1]], [ln_f[i - 1], ln_f[i], ln_f[i + 1]])
                .unwrap_or((omega[i], ln_f[i]))
        } else {
            (0.5 * (omega[cur.0] + omega[cur.1]), cur.2)
        };
        out.push(Extremum {
            omega: omega_e,
            ln_f: ln_e,
            is_max,
        });
    }
    out
}

/// Local maxima and minima of `F` by three-point comparison, each refined by
/// a parabola through its neighbours.
pub fn find_peaks(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> Result<PeakSet> {
    check_window(omega_min, omega_max)?;
    let idx = spectrum.window(omega_min, omega_max);
    if idx.len() < MIN_PEAK_WINDOW_POINTS {
        return Err(Error::InsufficientData(format!(
            "peak search needs at least {MIN_PEAK_WINDOW_POINTS} grid points in the window, found {}",
            idx.len()
        )));
    }
    let mut set = PeakSet::default();
    for e in extrema(&spectrum.omega[idx.clone()], &spectrum.ln_f_mag[idx]) {
        if e.is_max {
            set.peaks.push((e.omega, e.ln_f.exp()));
            set.peak_ln.push(e.ln_f);
        } else {
            set.troughs.push((e.omega, e.ln_f.exp()));
            set.trough_ln.push(e.ln_f);
        }
    }
    Ok(set)
}

/// Fit of `ln(ln F)` through the maxima of an oscillating spectrum.
pub fn fit_alpha_peaks(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> Result<AlphaFit> {
    let set = find_peaks(spectrum, omega_min, omega_max)?;
    if set.peaks.len() < MIN_PEAK_POINTS {
        return Err(Error::InsufficientData(format!(
            "found {} peak(s) in [{omega_min}, {omega_max}]; the peaks method needs {MIN_PEAK_POINTS}, use the direct method",
            set.peaks.len()
        )));
    }
    if set.peak_ln.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("F ≤ 1 at a peak inside the fit window; rescale the envelope"));
    }
    let z: Vec<f64> = set.peaks.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = set.peak_ln.iter().map(|v| v.ln()).collect();
    let line = least_squares_line(&z, &y)?;
    Ok(AlphaFit {
        alpha: -line.slope,
        intercept: line.intercept,
        omega_min,
        omega_max,
        method: FitMethod::Peaks,
        rms_residual: line.rms_residual,
        n_points: line.n,
    })
}

/// Largest peak-relative drop `(F_peak - F_trough) / F_peak` over adjacent
/// peak–trough pairs in the window; 0 without oscillation.
pub fn oscillation_amplitude(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> f64 {
    if check_window(omega_min, omega_max).is_err() {
        return 0.0;
    }
    let idx = spectrum.window(omega_min, omega_max);
    if idx.len() < 3 {
        return 0.0;
    }
    let ex = extrema(&spectrum.omega[idx.clone()], &spectrum.ln_f_mag[idx]);
    let mut best = 0.0f64;
    for pair in ex.windows(2) {
        let (p, t) = if pair[0].is_max { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
        if p.is_max && !t.is_max {
            best = best.max(-(t.ln_f - p.ln_f).exp_m1());
        }
    }
    best
}

/// Direct fits over the full window and over its two halves, split at the
/// geometric midpoint.
pub fn half_window_fits(spectrum: &Spectrum, omega_min: f64, omega_max: f64) -> Result<[AlphaFit; 3]> {
    check_window(omega_min, omega_max)?;
    let mid = (omega_min * omega_max).sqrt();
    Ok([
        fit_alpha(spectrum, omega_min, omega_max)?,
        fit_alpha(spectrum, omega_min, mid)?,
        fit_alpha(spectrum, mid, omega_max)?,
    ])
}
