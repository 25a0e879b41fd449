//! Rate equations for the photon number `x(t)` and the excited-atom number
//! `a(t)` driven by a pump pulse, integrated with dense output.
//!
//! ```text
//! dx/dt = C (x + 1) a - η C (N0 - a) x - r x
//! da/dt = N0 f(t) - C (x + 1) a + η C (N0 - a) x
//! ```
//!
//! The integrated state is augmented with `∫ x dt` so the balance identity
//! `x + a + r ∫x = N0 ∫f` can be checked at every node.

mod dopri;
mod radau;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pump::PumpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub n0: f64,
    pub c: f64,
    pub r: f64,
    pub eta: f64,
    pub pump: PumpSpec,
}

impl RateParams {
    pub fn new(n0: f64, c: f64, r: f64, eta: f64, pump: PumpSpec) -> Result<Self> {
        let p = Self { n0, c, r, eta, pump };
        p.validate()?;
        Ok(p)
    }

    /// `N0 = 1e7, C = 1e-4, r = 2, η = 1` with the `ν = 1` pump.
    pub fn reference() -> Result<Self> {
        Self::new(1e7, 1e-4, 2.0, 1.0, PumpSpec::new(1.0)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_inner(false)
    }

    fn validate_inner(&self, allow_zero_c: bool) -> Result<()> {
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(Error::domain(format!("n0 must be positive and finite, got {}", self.n0)));
        }
        let c_ok = if allow_zero_c { self.c >= 0.0 } else { self.c > 0.0 };
        if !(c_ok && self.c.is_finite()) {
            return Err(Error::domain(format!("c must be positive and finite, got {}", self.c)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::domain(format!("r must be positive and finite, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        self.pump.validate()
    }

    pub fn with_n0(mut self, n0: f64) -> Self {
        self.n0 = n0;
        self
    }
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserState {
    pub t: f64,
    pub x: f64,
    pub a: f64,
}

/// Right-hand side of the rate equations at `state`.
pub fn derivatives(params: &RateParams, state: &LaserState) -> (f64, f64) {
    let [dx, da, _] = rhs(params, state.t, &[state.x, state.a, 0.0]);
    (dx, da)
}

#[inline]
pub(crate) fn rhs(p: &RateParams, t: f64, y: &[f64; 3]) -> [f64; 3] {
    let (x, a) = (y[0], y[1]);
    let emission = p.c * (x + 1.0) * a;
    let absorption = p.eta * p.c * (p.n0 - a) * x;
    [
        emission - absorption - p.r * x,
        p.n0 * p.pump.value(t) - emission + absorption,
        x,
    ]
}

#[inline]
pub(crate) fn jacobian(p: &RateParams, y: &[f64; 3]) -> [[f64; 3]; 3] {
    let (x, a) = (y[0], y[1]);
    let dfx_dx = p.c * a - p.eta * p.c * (p.n0 - a) - p.r;
    let dfx_da = p.c * (x + 1.0) + p.eta * p.c * x;
    [
        [dfx_dx, dfx_da, 0.0],
        [-(dfx_dx + p.r), -dfx_da, 0.0],
        [1.0, 0.0, 0.0],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Explicit Dormand–Prince unless the problem is predicted to be stiff.
    #[default]
    Auto,
    DormandPrince,
    Radau,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "dopri5" | "dormand-prince" => Ok(Self::DormandPrince),
            "radau" | "radau5" => Ok(Self::Radau),
            other => Err(Error::domain(format!("unknown integrator '{other}'"))),
        }
    }
}

/// Above this value of `C N0 t_end (1 + η)` the auto choice switches to Radau IIA.
pub const STIFFNESS_THRESHOLD: f64 = 2e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub t_end: f64,
    pub rel_tol: f64,
    /// Absolute tolerance in units of `N0`.
    pub abs_tol: f64,
    pub integrator: Integrator,
    /// Largest step inside the pump interval `(0, 1)`.
    pub h_max_pump: f64,
    /// Largest step after the pump.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            t_end: 8.0,
            rel_tol: 1e-10,
            abs_tol: 1e-8,
            integrator: Integrator::Auto,
            h_max_pump: 1.0 / 64.0,
            h_max: 0.125,
            max_steps: 50_000_000,
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 1.0 && self.t_end.is_finite()) {
            return Err(Error::domain(format!(
                "t_end must be at least 1 (the pump support), got {}",
                self.t_end
            )));
        }
        if !(1e-13..=1e-6).contains(&self.rel_tol) {
            return Err(Error::domain(format!(
                "rel_tol must lie in [1e-13, 1e-6], got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::domain(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if !(self.h_max_pump > 0.0 && self.h_max_pump <= 1.0 / 64.0) {
            return Err(Error::domain("h_max_pump must lie in (0, 1/64]"));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::domain("h_max must be positive"));
        }
        Ok(())
    }

    pub fn resolve_integrator(&self, p: &RateParams) -> Integrator {
        match self.integrator {
            Integrator::Auto => {
                if p.c * p.n0 * self.t_end * (1.0 + p.eta) > STIFFNESS_THRESHOLD {
                    Integrator::Radau
                } else {
                    Integrator::DormandPrince
                }
            }
            other => other,
        }
    }
}

/// One accepted step of the dense output: `y(t0 + θ h) = Σ_n coef[n] θ^n`
/// for `θ ∈ [0, 1]`, per component `x`, `a`, `∫x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub h: f64,
    pub coef: [[f64; 5]; 3],
}

impl Segment {
    #[inline]
    pub fn eval(&self, theta: f64, component: usize) -> f64 {
        let c = &self.coef[component];
        c[0] + theta * (c[1] + theta * (c[2] + theta * (c[3] + theta * c[4])))
    }

    #[inline]
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub integrator: Integrator,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub steps_in_pump: usize,
    /// `max |x + a + r ∫x - N0 ∫f| / N0` over the nodes.
    pub max_balance_residual: f64,
    /// Photon flux `r x(t_end)` left at the truncation time.
    pub truncation_residual: f64,
}

/// Raw integrator output, before diagnostics are attached.
pub(crate) struct RawSolution {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 3]>,
    pub segments: Vec<Segment>,
    pub rejected: usize,
}

pub(crate) struct StepLimits {
    pub t_end: f64,
    pub h_max_pump: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl StepLimits {
    #[inline]
    pub fn h_max_at(&self, t: f64) -> f64 {
        if t < 1.0 {
            self.h_max_pump
        } else {
            self.h_max
        }
    }
}

/// Weighted RMS error norm used by both integrators.
#[inline]
pub(crate) fn error_norm(err: &[f64; 3], y0: &[f64; 3], y1: &[f64; 3], atol: f64, rtol: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        s += e * e;
    }
    (s / 3.0).sqrt()
}

pub(crate) fn check_finite(t: f64, y: &[f64; 3]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite state at t = {t:.9e}")))
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: RateParams,
    pub settings: SimulationSettings,
    nodes: Vec<LaserState>,
    integral_x: Vec<f64>,
    segments: Vec<Segment>,
    pub diagnostics: Diagnostics,
}

/// Integrates from `x = a = 0` at `t = 0` to `t_end` with default step limits.
pub fn simulate(params: &RateParams, t_end: f64, rel_tol: f64, abs_tol: f64) -> Result<Trajectory> {
    simulate_with(
        params,
        &SimulationSettings {
            t_end,
            rel_tol,
            abs_tol,
            ..SimulationSettings::default()
        },
    )
}

pub fn simulate_with(params: &RateParams, settings: &SimulationSettings) -> Result<Trajectory> {
    params.validate_inner(true)?;
    settings.validate()?;
    let integrator = settings.resolve_integrator(params);
    let limits = StepLimits {
        t_end: settings.t_end,
        h_max_pump: settings.h_max_pump,
        h_max: settings.h_max,
        max_steps: settings.max_steps,
    };
    let atol = settings.abs_tol * params.n0;
    let raw = match integrator {
        Integrator::DormandPrince | Integrator::Auto => {
            dopri::integrate(params, &limits, settings.rel_tol, atol)?
        }
        Integrator::Radau => radau::integrate(params, &limits, settings.rel_tol, atol)?,
    };

    let pumped = params.pump.cumulative_at(&raw.times);
    let mut max_res = 0.0f64;
    for (y, f) in raw.states.iter().zip(&pumped) {
        let res = (y[0] + y[1] + params.r * y[2] - params.n0 * f).abs() / params.n0;
        max_res = max_res.max(res);
    }
    let steps_in_pump = raw.segments.iter().filter(|s| s.t0 < 1.0).count();
    let last = raw.states.last().copied().unwrap_or([0.0; 3]);
    let nodes: Vec<LaserState> = raw
        .times
        .iter()
        .zip(&raw.states)
        .map(|(&t, y)| LaserState { t, x: y[0], a: y[1] })
        .collect();
    let integral_x = raw.states.iter().map(|y| y[2]).collect();
    Ok(Trajectory {
        params: *params,
        settings: *settings,
        nodes,
        integral_x,
        diagnostics: Diagnostics {
            integrator,
            accepted_steps: raw.segments.len(),
            rejected_steps: raw.rejected,
            steps_in_pump,
            max_balance_residual: max_res,
            truncation_residual: params.r * last[0].max(0.0),
        },
        segments: raw.segments,
    })
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.settings.t_end
    }

    pub fn nodes(&self) -> &[LaserState] {
        &self.nodes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `∫_0^t x` at each node.
    pub fn integral_x(&self) -> &[f64] {
        &self.integral_x
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= 0.0 && t <= self.t_end()) {
            return Err(Error::domain(format!(
                "time {t} outside the trajectory range [0, {}]",
                self.t_end()
            )));
        }
        let k = self.segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let seg = &self.segments[k];
        Ok((k, ((t - seg.t0) / seg.h).clamp(0.0, 1.0)))
    }

    fn component(&self, t: f64, i: usize) -> Result<f64> {
        let (k, theta) = self.locate(t)?;
        let node = &self.nodes[k];
        if t == node.t {
            return Ok([node.x, node.a, self.integral_x[k]][i]);
        }
        if t == self.t_end() {
            let last = self.nodes.last().unwrap();
            return Ok([last.x, last.a, *self.integral_x.last().unwrap()][i]);
        }
        Ok(self.segments[k].eval(theta, i))
    }

    /// Photon number `x(t)` from the dense output, clamped at zero.
    pub fn envelope(&self, t: f64) -> Result<f64> {
        Ok(self.component(t, 0)?.max(0.0))
    }

    pub fn state(&self, t: f64) -> Result<LaserState> {
        Ok(LaserState {
            t,
            x: self.component(t, 0)?.max(0.0),
            a: self.component(t, 1)?.max(0.0),
        })
    }

    /// Location and value of the maximum of `x`.
    pub fn peak(&self) -> (f64, f64) {
        let (k, node) = self
            .nodes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.x.total_cmp(&b.1.x))
            .map(|(k, n)| (k, *n))
            .unwrap();
        let lo = if k > 0 { self.nodes[k - 1].t } else { node.t };
        let hi = if k + 1 < self.nodes.len() { self.nodes[k + 1].t } else { node.t };
        let f = |t: f64| self.envelope(t).unwrap_or(0.0);
        let (mut a, mut b) = (lo, hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        while b - a > 1e-13 * b.abs().max(1.0) {
            let m1 = b - g * (b - a);
            let m2 = a + g * (b - a);
            if f(m1) < f(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let tm = 0.5 * (a + b);
        if f(tm) > node.x {
            (tm, f(tm))
        } else {
            (node.t, node.x)
        }
    }

    /// Earliest time with `x(t) ≥ fraction · max x`.
    pub fn switch_on_time(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::domain(format!("fraction must lie in (0, 1], got {fraction}")));
        }
        let (t_max, x_max) = self.peak();
        if !(x_max > 0.0) {
            return Err(Error::domain("switch-on time of an all-zero trajectory"));
        }
        if fraction == 1.0 {
            return Ok(t_max);
        }
        let target = fraction * x_max;
        // First segment whose dense output reaches the target.
        let probes = [0.25, 0.5, 0.75, 1.0];
        let mut bracket = None;
        'outer: for (k, seg) in self.segments.iter().enumerate() {
            let mut prev = 0.0;
            if self.nodes[k].x >= target {
                bracket = Some((seg.t0, seg.t0));
                break;
            }
            for &th in &probes {
                if seg.eval(th, 0) >= target {
                    bracket = Some((seg.t0 + prev * seg.h, seg.t0 + th * seg.h));
                    break 'outer;
                }
                prev = th;
            }
        }
        let (mut lo, mut hi) = bracket.unwrap_or((t_max, t_max));
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.envelope(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `n` uniformly spaced samples over `[0, t_end]`.
    pub fn sample_uniform(&self, n: usize) -> Result<Vec<LaserState>> {
        if n < 2 {
            return Err(Error::domain("at least two samples are required"));
        }
        let t_end = self.t_end();
        (0..n)
            .map(|i| {
                let t = if i + 1 == n { t_end } else { t_end * i as f64 / (n - 1) as f64 };
                self.state(t)
            })
            .collect()
    }

    pub fn to_csv(&self, samples: usize) -> Result<String> {
        let mut s = String::from("t,x,a\n");
        for st in self.sample_uniform(samples)? {
            writeln!(s, "{:.16e},{:.16e},{:.16e}", st.t, st.x, st.a).unwrap();
        }
        Ok(s)
    }

    pub fn write_csv(&self, path: &Path, samples: usize) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv(samples)?.as_bytes())
    }
}
