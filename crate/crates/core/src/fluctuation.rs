//! Large-fluctuation tail formulas and the physical estimators that consume a
//! fitted exponent. The constants `b` and `c0` are not derived here; results
//! that depend on them are relative/asymptotic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 2.998e8;

/// Reference values of the He-3 scattering estimate.
pub const SCATTERING_COEFFICIENT: f64 = 4.6;
pub const REF_PULSE_LENGTH_UM: f64 = 160.0;
pub const REF_SOUND_SPEED_M_PER_S: f64 = 200.0;
pub const REF_WAVELENGTH_NM: f64 = 570.0;
pub const REF_TEMPERATURE_K: f64 = 1.0;

/// `P(u) ~ c0 exp(-b u^α)` for a variance-normalized outcome `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    pub alpha: f64,
    pub b: f64,
    pub c0: f64,
}

impl TailParams {
    /// `b` and `c0` default to 1. Exponent 1 (plain exponential) is admitted as
    /// the degenerate limit.
    pub fn new(alpha: f64, b: f64, c0: f64) -> Result<Self> {
        let p = Self { alpha, b, c0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::domain(format!("b must be positive, got {}", self.b)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::domain(format!("c0 must be positive, got {}", self.c0)));
        }
        Ok(())
    }
}

pub fn tail_pdf(u: f64, p: &TailParams) -> Result<f64> {
    p.validate()?;
    if !(u >= 0.0) {
        return Err(Error::domain(format!("u must be non-negative, got {u}")));
    }
    Ok(p.c0 * (-p.b * u.powf(p.alpha)).exp())
}

/// Probability of an outcome at least `u`, `(c0/(α b)) u^{1-α} exp(-b u^α)`.
pub fn tail_ccdf(u: f64, p: &TailParams) -> Result<f64> {
    p.validate()?;
    if !(u > 0.0) {
        return Err(Error::domain(format!("u must be positive, got {u}")));
    }
    Ok(p.c0 / (p.alpha * p.b) * u.powf(1.0 - p.alpha) * (-p.b * u.powf(p.alpha)).exp())
}

/// `ω_d = u / τ`.
pub fn dominant_frequency(u: f64, tau: f64) -> Result<f64> {
    if !(u > 0.0 && tau > 0.0) {
        return Err(Error::domain(format!("u and tau must be positive, got u = {u}, tau = {tau}")));
    }
    Ok(u / tau)
}

/// `(ω_max^α, exp(-ω_max^α))`; the second value gauges the probability of
/// fluctuations probed up to `ω_max`.
pub fn omega_alpha_measure(omega_max: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::domain(format!("omega_max must be positive, got {omega_max}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    let v = omega_max.powf(alpha);
    Ok((v, (-v).exp()))
}

/// Expected scattered-photon ratio `Δn_s / n_T` for a pulse in liquid He-3:
/// `4.6 u (160/ℓ)^5 (200/c_s)^{3/2} (λ0/570)^4 / T`.
pub fn scattering_ratio(
    u: f64,
    pulse_length_um: f64,
    sound_speed_mps: f64,
    wavelength_nm: f64,
    temperature_k: f64,
) -> Result<f64> {
    for (name, v) in [
        ("u", u),
        ("pulse length", pulse_length_um),
        ("sound speed", sound_speed_mps),
        ("wavelength", wavelength_nm),
        ("temperature", temperature_k),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(SCATTERING_COEFFICIENT
        * u
        * (REF_PULSE_LENGTH_UM / pulse_length_um).powi(5)
        * (REF_SOUND_SPEED_M_PER_S / sound_speed_mps).powf(1.5)
        * (wavelength_nm / REF_WAVELENGTH_NM).powi(4)
        / (temperature_k / REF_TEMPERATURE_K))
}

/// Physical scales of a pulse whose dimensionless emission constant is `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseUnits {
    pub c_coeff: f64,
    /// Radiative lifetime, seconds.
    pub tau_life: f64,
    /// Pulse time scale `C τ_life`, seconds.
    pub tau: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// `c τ`, meters.
    pub pulse_length: f64,
    /// Carrier oscillations per pulse length.
    pub oscillations: f64,
}

pub fn lifetime_to_pulse_scale(c_coeff: f64, tau_life_s: f64, wavelength_m: f64) -> Result<PulseUnits> {
    for (name, v) in [("C", c_coeff), ("tau_life", tau_life_s), ("wavelength", wavelength_m)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let tau = c_coeff * tau_life_s;
    let pulse_length = SPEED_OF_LIGHT_M_PER_S * tau;
    Ok(PulseUnits {
        c_coeff,
        tau_life: tau_life_s,
        tau,
        wavelength: wavelength_m,
        pulse_length,
        oscillations: pulse_length / wavelength_m,
    })
}
