//! Light transport in brain tissue.
//!
//! Modified Beer-Lambert attenuation with a distance-dependent differential
//! pathlength factor. Distances are in mm, coefficients in mm⁻¹ and
//! intensities in mW/mm².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    /// Absorption coefficient μa, mm⁻¹.
    pub mu_a: f64,
    /// Reduced scattering coefficient μs′, mm⁻¹.
    pub mu_s_prime: f64,
    /// Medium/geometry constant G(λ). Zero makes T(0) = 1.
    pub g_const: f64,
    /// Irradiance needed at the neuron, mW/mm² (ChR2 activates at 8-12).
    pub target_intensity: f64,
    /// Informational only.
    pub wavelength_nm: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        OpticsParams {
            mu_a: 0.07,
            mu_s_prime: 1.404,
            g_const: 0.0,
            target_intensity: 10.0,
            wavelength_nm: 480.0,
        }
    }
}

impl OpticsParams {
    fn check(&self, d: f64) -> Result<()> {
        if !(self.mu_a > 0.0) || !(self.mu_s_prime > 0.0) {
            return Err(Error::domain(format!(
                "optical coefficients must be positive (mu_a={}, mu_s_prime={})",
                self.mu_a, self.mu_s_prime
            )));
        }
        if !(d >= 0.0) {
            return Err(Error::domain(format!("distance must be >= 0 mm, got {d}")));
        }
        Ok(())
    }

    /// Supremum of the pathlength factor as d grows without bound.
    pub fn dpf_limit(&self) -> f64 {
        0.5 * (3.0 * self.mu_s_prime / self.mu_a).sqrt()
    }
}

/// Differential pathlength factor at distance `d` (mm).
pub fn dpf(p: &OpticsParams, d: f64) -> Result<f64> {
    p.check(d)?;
    let k = (3.0 * p.mu_a * p.mu_s_prime).sqrt();
    Ok(p.dpf_limit() * (1.0 - 1.0 / (1.0 + d * k)))
}

/// Intensity ratio I(d)/I₀.
pub fn transmittance(p: &OpticsParams, d: f64) -> Result<f64> {
    let f = dpf(p, d)?;
    Ok((-p.mu_a * d * f + p.g_const).exp())
}

/// Source irradiance (mW/mm²) needed so that `target_intensity` reaches distance `d`.
pub fn required_source_intensity(p: &OpticsParams, d: f64) -> Result<f64> {
    Ok(p.target_intensity / transmittance(p, d)?)
}

/// One row of the distance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpticsRow {
    pub d_mm: f64,
    pub dpf: f64,
    pub transmittance: f64,
    pub required_source_mw_mm2: f64,
}

pub fn optics_table(p: &OpticsParams, distances: &[f64]) -> Result<Vec<OpticsRow>> {
    distances
        .iter()
        .map(|&d| {
            Ok(OpticsRow {
                d_mm: d,
                dpf: dpf(p, d)?,
                transmittance: transmittance(p, d)?,
                required_source_mw_mm2: required_source_intensity(p, d)?,
            })
        })
        .collect()
}

/// Inclusive grid `from, from+step, ..., <= to`.
pub fn distance_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) || !(from >= 0.0) {
        return Err(Error::domain(format!(
            "bad distance grid from={from} to={to} step={step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}
