//! Cosine, sine and magnitude transforms of an envelope,
//! `F_C(ω) = ∫ cos(ωt) g(t) dt`, `F_S(ω) = ∫ sin(ωt) g(t) dt`, `F = |F_C + i F_S|`.
//!
//! Three evaluation paths share the [`Spectrum`] container:
//! * arbitrary callables, by composite Simpson on a shared uniform grid with
//!   refinement until the coarse/fine difference meets the target;
//! * trajectories, by integrating the piecewise-polynomial dense output
//!   against `e^{iωt}` exactly on every step;
//! * the pump pulse itself, through its exact contour representation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ComplexSum, NeumaierSum};
use crate::pump::PumpSpec;
use crate::rate_model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Uniform samples per period at the highest requested frequency.
    pub samples_per_period: usize,
    /// Number of grid doublings allowed beyond the initial grid.
    pub max_refinements: usize,
    /// Target relative error of each `(F_C, F_S)` pair.
    pub rel_target: f64,
    /// Absolute error floor, relative to `∫ |g|`; below it rounding dominates.
    pub abs_floor: f64,
    /// Minimum number of Simpson intervals.
    pub min_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            samples_per_period: 32,
            max_refinements: 6,
            rel_target: 1e-6,
            abs_floor: 1e-13,
            min_intervals: 1024,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_period < 16 {
            return Err(Error::domain(format!(
                "samples_per_period must be at least 16, got {}",
                self.samples_per_period
            )));
        }
        if !(self.rel_target > 0.0 && self.rel_target < 1.0) {
            return Err(Error::domain("rel_target must lie in (0, 1)"));
        }
        if !(self.abs_floor >= 0.0) {
            return Err(Error::domain("abs_floor must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Simpson,
    PiecewiseExact,
    Contour,
    /// Values read from a file or generated outside this module.
    External,
}

/// What was transformed and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub description: String,
    pub method: Method,
    pub t_end: Option<f64>,
    /// Factor applied to the envelope (for instance `r` for the output flux).
    pub scale: f64,
    pub quadrature: Option<QuadratureSettings>,
}

impl Source {
    pub fn external(description: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            method: Method::External,
            t_end: None,
            scale: 1.0,
            quadrature: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub f_c: Vec<f64>,
    pub f_s: Vec<f64>,
    pub f_mag: Vec<f64>,
    /// `ln F`, kept separately because `F` itself can underflow.
    pub ln_f_mag: Vec<f64>,
    pub source: Source,
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn empty(source: Source) -> Self {
        Self {
            omega: vec![],
            f_c: vec![],
            f_s: vec![],
            f_mag: vec![],
            ln_f_mag: vec![],
            source,
            warnings: vec![],
        }
    }

    /// Builds a spectrum from `ln F` only, with `F_S = 0` and `F_C = F`.
    pub fn from_ln_magnitude(omega: Vec<f64>, ln_f: Vec<f64>, source: Source) -> Result<Self> {
        if omega.len() != ln_f.len() {
            return Err(Error::domain("omega and ln F lengths differ"));
        }
        let f: Vec<f64> = ln_f.iter().map(|v| v.exp()).collect();
        let s = Self {
            f_c: f.clone(),
            f_s: vec![0.0; f.len()],
            f_mag: f,
            ln_f_mag: ln_f,
            omega,
            source,
            warnings: vec![],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omega.len();
        if [self.f_c.len(), self.f_s.len(), self.f_mag.len(), self.ln_f_mag.len()]
            .iter()
            .any(|&m| m != n)
        {
            return Err(Error::domain("spectrum columns have different lengths"));
        }
        validate_grid(&self.omega)?;
        if self.f_mag.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::domain("spectrum magnitudes must be non-negative"));
        }
        Ok(())
    }

    /// Index range of grid points with `omega_min ≤ ω ≤ omega_max`.
    pub fn window(&self, omega_min: f64, omega_max: f64) -> std::ops::Range<usize> {
        let lo = self.omega.partition_point(|&w| w < omega_min);
        let hi = self.omega.partition_point(|&w| w <= omega_max);
        lo..hi.max(lo)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,f_c,f_s,f_mag,ln_f_mag\n");
        for i in 0..self.len() {
            writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.omega[i], self.f_c[i], self.f_s[i], self.f_mag[i], self.ln_f_mag[i]
            )
            .unwrap();
        }
        s
    }

    /// Parses the CSV layout written by [`Spectrum::to_csv`]. The `ln_f_mag`
    /// column is optional; when absent it is recomputed from `f_mag`.
    pub fn from_csv(text: &str, description: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(iw), Some(ic), Some(is), Some(im)) = (col("omega"), col("f_c"), col("f_s"), col("f_mag")) else {
            return Err(Error::Serde(
                "spectrum CSV needs columns omega,f_c,f_s,f_mag[,ln_f_mag]".into(),
            ));
        };
        let il = col("ln_f_mag");
        let mut s = Self::empty(Source::external(description));
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Serde("short CSV record".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Serde(format!("bad number in spectrum CSV: {e}")))
            };
            s.omega.push(num(iw)?);
            s.f_c.push(num(ic)?);
            s.f_s.push(num(is)?);
            let m = num(im)?;
            s.f_mag.push(m);
            s.ln_f_mag.push(match il {
                Some(i) => num(i)?,
                None => m.ln(),
            });
        }
        s.validate().map_err(|e| Error::Serde(format!("invalid spectrum file: {e}")))?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate().map_err(|e| Error::Serde(format!("invalid spectrum file: {e}")))?;
        Ok(s)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    /// Reads CSV or JSON, chosen by file extension.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_csv(&text, &path.display().to_string()),
        }
    }
}

fn validate_grid(omega: &[f64]) -> Result<()> {
    if omega.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::domain("frequencies must be finite and non-negative"));
    }
    if omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("frequencies must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSpacing {
    PerDecade(usize),
    Total(usize),
}

/// Log-spaced frequencies from `omega_min` to `omega_max`, both included.
pub fn default_omega_grid(omega_min: f64, omega_max: f64, spacing: GridSpacing) -> Result<Vec<f64>> {
    if !(omega_min > 0.0 && omega_min < omega_max && omega_max.is_finite()) {
        return Err(Error::domain(format!(
            "need 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
        )));
    }
    let ratio = omega_max / omega_min;
    let n = match spacing {
        GridSpacing::PerDecade(k) if k >= 1 => ((k as f64 * ratio.log10()).round() as usize).max(1) + 1,
        GridSpacing::Total(n) if n >= 2 => n,
        _ => return Err(Error::domain("grid needs at least one point per decade or two points in total")),
    };
    let ln_r = ratio.ln();
    Ok((0..n)
        .map(|i| match i {
            0 => omega_min,
            _ if i == n - 1 => omega_max,
            _ => omega_min * (ln_r * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

/// One transform value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub f_c: f64,
    pub f_s: f64,
    pub f_mag: f64,
    pub error_estimate: f64,
}

/// Transform of `envelope` on `[0, t_end]` at a single frequency.
pub fn transform<E>(envelope: &E, t_end: f64, omega: f64, settings: &QuadratureSettings) -> Result<TransformValue>
where
    E: Fn(f64) -> f64 + Sync,
{
    let (vals, _) = simpson_transforms(envelope, t_end, &[omega], settings)?;
    Ok(vals[0])
}

/// Transform on a frequency grid, sharing one envelope sampling across all
/// frequencies.
pub fn transform_grid<E>(
    envelope: &E,
    t_end: f64,
    omega: &[f64],
    settings: &QuadratureSettings,
    description: &str,
) -> Result<Spectrum>
where
    E: Fn(f64) -> f64 + Sync,
{
    let source = Source {
        description: description.to_string(),
        method: Method::Simpson,
        t_end: Some(t_end),
        scale: 1.0,
        quadrature: Some(*settings),
    };
    validate_grid(omega)?;
    if omega.is_empty() {
        return Ok(Spectrum::empty(source));
    }
    let (vals, _) = simpson_transforms(envelope, t_end, omega, settings)?;
    Ok(assemble(omega, vals.iter().map(|v| Complex64::new(v.f_c, v.f_s)).collect(), source))
}

fn assemble(omega: &[f64], values: Vec<Complex64>, source: Source) -> Spectrum {
    let f_mag: Vec<f64> = values.iter().map(|v| v.re.hypot(v.im)).collect();
    Spectrum {
        omega: omega.to_vec(),
        f_c: values.iter().map(|v| v.re).collect(),
        f_s: values.iter().map(|v| v.im).collect(),
        ln_f_mag: f_mag.iter().map(|v| v.ln()).collect(),
        f_mag,
        source,
        warnings: vec![],
    }
}

fn simpson_sums(samples: &[f64], dt: f64, stride: usize, omega: f64) -> Complex64 {
    let n = (samples.len() - 1) / stride;
    let h = dt * stride as f64;
    let mut acc = ComplexSum::new();
    for j in 0..=n {
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = samples[j * stride];
        if v != 0.0 {
            let t = j as f64 * h;
            let (s, c) = (omega * t).sin_cos();
            acc.add(Complex64::new(w * v * c, w * v * s));
        }
    }
    acc.value() * (h / 3.0)
}

/// Composite Simpson on `n` intervals with `n` doubled until the estimate
/// `|S_n - S_{n/2}| / 15` meets the target at every frequency.
fn simpson_transforms<E>(
    envelope: &E,
    t_end: f64,
    omega: &[f64],
    settings: &QuadratureSettings,
) -> Result<(Vec<TransformValue>, usize)>
where
    E: Fn(f64) -> f64 + Sync,
{
    settings.validate()?;
    validate_grid(omega)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::domain(format!("t_end must be positive, got {t_end}")));
    }
    let w_max = omega.iter().copied().fold(0.0, f64::max);
    let needed = (t_end * w_max * settings.samples_per_period as f64 / (2.0 * PI)).ceil() as usize;
    let mut n = needed.max(settings.min_intervals);
    n = n.div_ceil(4) * 4;
    let mut worst = (0.0, 0.0, 0usize);
    for _ in 0..=settings.max_refinements {
        let dt = t_end / n as f64;
        let samples: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|j| envelope(if j == n { t_end } else { j as f64 * dt }))
            .collect();
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "envelope is not finite at t = {}",
                j as f64 * dt
            )));
        }
        let scale: f64 = {
            let mut s = NeumaierSum::new();
            for v in &samples {
                s.add(v.abs());
            }
            s.value() * dt
        };
        let results: Vec<(TransformValue, f64)> = omega
            .par_iter()
            .map(|&w| {
                let fine = simpson_sums(&samples, dt, 1, w);
                let coarse = simpson_sums(&samples, dt, 2, w);
                let err = (fine - coarse).norm() / 15.0;
                let target = (settings.rel_target * fine.norm()).max(settings.abs_floor * scale);
                (
                    TransformValue {
                        f_c: fine.re,
                        f_s: fine.im,
                        f_mag: fine.re.hypot(fine.im),
                        error_estimate: err,
                    },
                    target,
                )
            })
            .collect();
        let bad = results
            .iter()
            .enumerate()
            .filter(|(_, (v, target))| v.error_estimate > *target)
            .max_by(|a, b| (a.1 .0.error_estimate / a.1 .1).total_cmp(&(b.1 .0.error_estimate / b.1 .1)));
        match bad {
            None => return Ok((results.into_iter().map(|r| r.0).collect(), n)),
            Some((i, (v, target))) => worst = (v.error_estimate, *target, i),
        }
        n *= 2;
    }
    Err(Error::numerical(format!(
        "transform at ω = {} did not reach its error target: estimate {:.3e}, target {:.3e}",
        omega[worst.2], worst.0, worst.1
    )))
}

/// `∫_0^1 θ^n e^{iκθ} dθ` for `n = 0..=4`.
fn moments(kappa: f64) -> [Complex64; 5] {
    let mut out = [Complex64::new(0.0, 0.0); 5];
    if kappa.abs() < 2.0 {
        // Σ_k (iκ)^k / (k! (n + k + 1))
        for (n, slot) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for k in 0..40 {
                let add = term / (n + k + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 * sum.norm() {
                    break;
                }
                term = term * Complex64::new(0.0, kappa) / (k + 1) as f64;
            }
            *slot = sum;
        }
    } else {
        let e = Complex64::new(0.0, kappa).exp();
        let ik = Complex64::new(0.0, kappa);
        out[0] = (e - 1.0) / ik;
        for n in 1..5 {
            out[n] = (e - out[n - 1] * n as f64) / ik;
        }
    }
    out
}

/// Options for transforming a trajectory's photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTransform {
    /// Transform the output flux `r x(t)` instead of `x(t)`.
    pub include_r_factor: bool,
    /// Warn when the truncation jump `x(t_end)/ω` exceeds this fraction of `F`.
    pub truncation_warning_fraction: f64,
}

impl Default for TrajectoryTransform {
    fn default() -> Self {
        Self {
            include_r_factor: false,
            truncation_warning_fraction: 1e-3,
        }
    }
}

/// Exact transform of the piecewise-polynomial dense output of `x(t)`,
/// truncated at `t_end`.
pub fn transform_trajectory(traj: &Trajectory, omega: &[f64], opts: &TrajectoryTransform) -> Result<Spectrum> {
    validate_grid(omega)?;
    let scale = if opts.include_r_factor { traj.params.r } else { 1.0 };
    let p = &traj.params;
    let source = Source {
        description: format!(
            "photon number x(t): n0={:e} c={:e} r={} eta={} nu={}",
            p.n0, p.c, p.r, p.eta, p.pump.nu
        ),
        method: Method::PiecewiseExact,
        t_end: Some(traj.t_end()),
        scale,
        quadrature: None,
    };
    let segments = traj.segments();
    let values: Vec<Complex64> = omega
        .par_iter()
        .map(|&w| {
            let mut acc = ComplexSum::new();
            for seg in segments {
                let m = moments(w * seg.h);
                let c = &seg.coef[0];
                let mut s = Complex64::new(0.0, 0.0);
                for n in 0..5 {
                    s += m[n] * c[n];
                }
                acc.add(Complex64::new(0.0, w * seg.t0).exp() * s * seg.h);
            }
            acc.value() * scale
        })
        .collect();
    let mut spec = assemble(omega, values, source);
    let x_end = traj.nodes().last().map(|n| n.x.max(0.0)).unwrap_or(0.0) * scale;
    if let (Some(&w), Some(&f)) = (omega.last(), spec.f_mag.last()) {
        if w > 0.0 && x_end / w > opts.truncation_warning_fraction * f {
            spec.warnings.push(format!(
                "truncation at t_end = {} leaves x(t_end)/ω_max = {:.3e}, more than {} of F(ω_max) = {:.3e}",
                traj.t_end(),
                x_end / w,
                opts.truncation_warning_fraction,
                f
            ));
        }
    }
    Ok(spec)
}

/// Which part of the exact pump transform to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpPart {
    /// `|f̂(ω)|`, including the zeros caused by the pulse's mirror symmetry.
    Full,
    /// Smooth single-edge envelope of `|f̂|`.
    Envelope,
}

/// Exact spectrum of the normalized pump pulse.
pub fn pump_spectrum(pump: &PumpSpec, omega: &[f64], part: PumpPart) -> Result<Spectrum> {
    validate_grid(omega)?;
    let source = Source {
        description: format!("pump pulse nu={} ({:?})", pump.nu, part),
        method: Method::Contour,
        t_end: Some(1.0),
        scale: 1.0,
        quadrature: None,
    };
    let vals: Vec<_> = omega
        .par_iter()
        .map(|&w| pump.transform(w).map_err(|e| tag(e, w)))
        .collect::<Result<_>>()?;
    let mut s = Spectrum::empty(source);
    for v in vals {
        s.omega.push(v.omega);
        match part {
            PumpPart::Full => {
                s.f_c.push(v.value.re);
                s.f_s.push(v.value.im);
                s.f_mag.push(v.value.re.hypot(v.value.im));
                s.ln_f_mag.push(v.ln_abs);
            }
            PumpPart::Envelope => {
                let m = v.ln_envelope.exp();
                s.f_c.push(m);
                s.f_s.push(0.0);
                s.f_mag.push(m);
                s.ln_f_mag.push(v.ln_envelope);
            }
        }
    }
    Ok(s)
}

fn tag(e: Error, omega: f64) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("at ω = {omega}: {m}")),
        other => other,
    }
}
