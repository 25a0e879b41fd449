//! Numerical checks of the tail bounds for compactly supported smooth pulses,
//! run on the exact pump transform: faster than any power, slower than any
//! exponential, and the stretched-exponential exponent `ν/(1+ν)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pump::{pump_alpha_in, PumpSpec};
use crate::specfit::fit_alpha_decay;
use crate::spectrum::{default_omega_grid, pump_spectrum, GridSpacing, PumpPart};

pub const ALPHA_IN_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub nu: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points_per_decade: usize,
    /// Powers `ω^n` checked for eventual decrease, `n = 1..=max_power`.
    pub max_power: u32,
    /// Decades below `omega_max` used for the exponent fit.
    pub fit_decades: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            nu: 1.0,
            omega_min: 1e2,
            omega_max: 1e6,
            points_per_decade: 20,
            max_power: 8,
            fit_decades: 2.0,
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        PumpSpec::new(self.nu)?;
        if !(self.omega_min > 0.0 && self.omega_max >= 10.0 * self.omega_min && self.omega_max.is_finite()) {
            return Err(Error::domain(format!(
                "need 0 < omega_min and omega_max >= 10 omega_min, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        if self.points_per_decade < 4 {
            return Err(Error::domain("points_per_decade must be at least 4"));
        }
        if self.max_power == 0 {
            return Err(Error::domain("max_power must be at least 1"));
        }
        let span = (self.omega_max / self.omega_min).log10();
        if !(self.fit_decades > 0.0 && self.fit_decades <= span) {
            return Err(Error::domain(format!("fit_decades must lie in (0, {span}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub settings: VerifySettings,
    pub alpha_in: f64,
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// First index from which `v` is strictly decreasing to the end.
fn decreasing_from(v: &[f64]) -> usize {
    let mut start = v.len().saturating_sub(1);
    while start > 0 && v[start - 1] > v[start] {
        start -= 1;
    }
    start
}

pub fn verify_pump(settings: &VerifySettings) -> Result<VerifyReport> {
    settings.validate()?;
    let pump = PumpSpec::new(settings.nu)?;
    let alpha_in = pump_alpha_in(settings.nu)?;
    let grid = default_omega_grid(
        settings.omega_min,
        settings.omega_max,
        GridSpacing::PerDecade(settings.points_per_decade),
    )?;
    let spec = pump_spectrum(&pump, &grid, PumpPart::Envelope)?;
    let mut checks = Vec::new();

    // ω^n E(ω) must decrease at least over the final decade of the grid.
    let last_decade = settings.omega_max / 10.0;
    for n in 1..=settings.max_power {
        let v: Vec<f64> = grid
            .iter()
            .zip(&spec.ln_f_mag)
            .map(|(w, l)| l + n as f64 * w.ln())
            .collect();
        let onset = grid[decreasing_from(&v)];
        checks.push(PropertyCheck {
            name: format!("power_decay_n{n}"),
            passed: onset <= last_decade,
            value: onset,
            target: format!("omega^{n} F decreasing from omega <= {last_decade:e}"),
        });
    }

    // ln F/ω shrinks by 4^(α_in - 1) over a factor 4 in ω for a stretched
    // exponential, by 1 for a pure exponential.
    let wm = settings.omega_max;
    let hi = pump.transform(wm)?.ln_envelope / wm;
    let lo = pump.transform(wm / 4.0)?.ln_envelope / (wm / 4.0);
    let ratio = hi / lo;
    let bound = 4f64.powf(alpha_in - 1.0);
    checks.push(PropertyCheck {
        name: "log_ratio".to_string(),
        passed: ratio.is_finite() && ratio <= bound,
        value: ratio,
        target: format!("[ln F/omega](omega_max) / [ln F/omega](omega_max/4) <= {bound:.4}"),
    });

    let fit_lo = wm / 10f64.powf(settings.fit_decades);
    let fit = fit_alpha_decay(&spec, fit_lo, wm)?;
    checks.push(PropertyCheck {
        name: "alpha_in".to_string(),
        passed: (fit.alpha - alpha_in).abs() <= ALPHA_IN_TOLERANCE,
        value: fit.alpha,
        target: format!("{alpha_in:.4} +/- {ALPHA_IN_TOLERANCE} over [{fit_lo:e}, {wm:e}]"),
    });

    Ok(VerifyReport {
        settings: *settings,
        alpha_in,
        checks,
    })
}
