//! Ultrasound power delivery, piezoelectric conversion and storage
//! capacitor dynamics for a single device.
//!
//! Units: intensities in mW/cm², attenuation in dB/(cm·MHz), frequency in
//! Hz, depth in cm, harvester area in cm², voltages in V, capacitance in F,
//! energies in J.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::photonics::{self, OpticsParams};

/// Regulatory cap on source ultrasound intensity, mW/cm².
pub const FDA_INTENSITY_CAP_MW_CM2: f64 = 720.0;

/// Attenuation coefficient of brain tissue, dB/(cm·MHz).
pub const BRAIN_ATTENUATION_DB_CM_MHZ: f64 = 0.435;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub i_s: f64,
    pub alpha: f64,
    pub f_us: f64,
    pub depth: f64,
    pub a_eh: f64,
    pub eta: f64,
    pub v_g: f64,
    pub c_cap: f64,
    /// Full-charge energy; one LED pulse draws exactly this much.
    pub e_max: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        let mut p = EnergyParams {
            i_s: FDA_INTENSITY_CAP_MW_CM2,
            alpha: BRAIN_ATTENUATION_DB_CM_MHZ,
            f_us: 1.0e6,
            depth: 0.2,
            a_eh: 1.0e-4,
            eta: 0.5,
            v_g: 1.0,
            c_cap: 100.0e-9,
            e_max: 0.0,
        };
        p.e_max = LedParams::default()
            .pulse_energy(&OpticsParams::default())
            .expect("default optics are valid");
        p
    }
}

impl EnergyParams {
    pub fn led_pulse_energy(&self) -> f64 {
        self.e_max
    }

    /// `sqrt(2·e_max / (c_cap·v_g²))`, the full-charge voltage as a fraction of v_g.
    pub fn full_voltage_ratio(&self) -> f64 {
        (2.0 * self.e_max / (self.c_cap * self.v_g * self.v_g)).sqrt()
    }

    /// Voltage at which the stored energy equals e_max.
    pub fn full_voltage(&self) -> f64 {
        (2.0 * self.e_max / self.c_cap).sqrt()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.i_s > FDA_INTENSITY_CAP_MW_CM2 {
            v.push(Violation::physics(
                "energy.i_s_mw_cm2",
                format!(
                    "source intensity {} mW/cm² exceeds the FDA limit of 720 mW/cm²",
                    self.i_s
                ),
            ));
        }
        let positive = [
            ("energy.i_s_mw_cm2", self.i_s),
            ("energy.alpha_db_cm_mhz", self.alpha),
            ("energy.f_us_hz", self.f_us),
            ("energy.a_eh_cm2", self.a_eh),
            ("energy.v_g", self.v_g),
            ("energy.c_cap_f", self.c_cap),
            ("energy.e_max_j", self.e_max),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                v.push(Violation::physics(name, format!("must be positive, got {x}")));
            }
        }
        if !(self.depth >= 0.0) {
            v.push(Violation::physics(
                "energy.depth_cm",
                format!("must be >= 0, got {}", self.depth),
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            v.push(Violation::physics(
                "energy.eta",
                format!("conversion rate must be in (0, 1], got {}", self.eta),
            ));
        }
        if self.e_max > 0.0 && self.c_cap > 0.0 && 2.0 * self.e_max >= self.c_cap * self.v_g * self.v_g {
            v.push(Violation::physics(
                "energy.e_max_j",
                format!(
                    "capacitor cannot reach e_max: 2·e_max = {:e} J must be below c_cap·v_g² = {:e} J",
                    2.0 * self.e_max,
                    self.c_cap * self.v_g * self.v_g
                ),
            ));
        }
        v
    }
}

/// LED electrical parameters linking the optics to the required pulse energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedParams {
    pub area_mm2: f64,
    pub pulse_ms: f64,
    /// Electrical to optical efficiency.
    pub efficiency: f64,
    /// LED to neuron distance, mm.
    pub distance_mm: f64,
}

impl Default for LedParams {
    fn default() -> Self {
        LedParams {
            area_mm2: 1.0e-4,
            pulse_ms: 1.0,
            efficiency: 0.3,
            distance_mm: 0.5,
        }
    }
}

impl LedParams {
    /// Electrical energy (J) of one stimulation pulse.
    pub fn pulse_energy(&self, optics: &OpticsParams) -> Result<f64> {
        if !(self.area_mm2 > 0.0 && self.pulse_ms > 0.0 && self.efficiency > 0.0) {
            return Err(Error::domain("LED area, pulse length and efficiency must be positive"));
        }
        let irradiance = photonics::required_source_intensity(optics, self.distance_mm)?;
        // mW/mm² · mm² · ms = µJ
        Ok(irradiance * self.area_mm2 * self.pulse_ms * 1e-6 / self.efficiency)
    }
}

/// Intensity at the harvester after tissue attenuation, mW/cm².
pub fn intensity_at_depth(p: &EnergyParams) -> f64 {
    let f_mhz = p.f_us / 1e6;
    p.i_s * 10f64.powf(-p.alpha * f_mhz * p.depth / 10.0)
}

/// Electrical power after electromechanical conversion, W.
pub fn harvested_electrical_power(p: &EnergyParams) -> f64 {
    intensity_at_depth(p) * p.a_eh * 1e-3 * p.eta
}

pub fn generated_current(p: &EnergyParams) -> Result<f64> {
    if !(p.v_g > 0.0) {
        return Err(Error::domain("generated voltage must be positive"));
    }
    Ok(harvested_electrical_power(p) / p.v_g)
}

/// Charge delivered per vibration cycle, C.
pub fn charge_per_cycle(p: &EnergyParams) -> Result<f64> {
    if !(p.f_us > 0.0) {
        return Err(Error::domain("ultrasound frequency must be positive"));
    }
    Ok(generated_current(p)? / p.f_us)
}

/// Ceiling that ignores rounding noise when `x` sits on an integer.
fn ceil_cycles(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 8.0 * f64::EPSILON * x.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.ceil().max(0.0) as u64
    }
}

fn cycle_scale(p: &EnergyParams) -> Result<(f64, f64)> {
    let dq = charge_per_cycle(p)?;
    if !(dq > 0.0) {
        return Err(Error::domain("no charge delivered per cycle"));
    }
    let ratio = p.full_voltage_ratio();
    if !(ratio < 1.0) || !(p.e_max >= 0.0) {
        return Err(Error::domain(format!(
            "capacitor cannot reach e_max (sqrt(2·e_max/(c_cap·v_g²)) = {ratio})"
        )));
    }
    Ok((p.v_g * p.c_cap / dq, ratio))
}

/// Number of vibration cycles to charge from empty to e_max.
pub fn cycles_to_charge(p: &EnergyParams) -> Result<u64> {
    let (tau, ratio) = cycle_scale(p)?;
    Ok(ceil_cycles(-tau * (1.0 - ratio).ln()))
}

/// Number of cycles for the voltage to decay from v_g to the full-charge voltage.
pub fn cycles_to_discharge(p: &EnergyParams) -> Result<u64> {
    let (tau, ratio) = cycle_scale(p)?;
    Ok(ceil_cycles(-tau * ratio.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Charging,
    Holding,
    Discharging,
}

fn decay(p: &EnergyParams, n: f64) -> Result<f64> {
    let dq = charge_per_cycle(p)?;
    Ok((-n * dq / (p.v_g * p.c_cap)).exp())
}

/// Capacitor voltage after `n` cycles.
pub fn voltage_at_cycle(p: &EnergyParams, n: u64, phase: Phase) -> Result<f64> {
    let k = decay(p, n as f64)?;
    Ok(match phase {
        Phase::Discharging => p.v_g * k,
        Phase::Charging | Phase::Holding => p.v_g * (1.0 - k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorState {
    pub charge_cycles_elapsed: u64,
    pub voltage: f64,
    pub stored_energy: f64,
    pub phase: Phase,
}

impl CapacitorState {
    pub fn empty() -> Self {
        CapacitorState {
            charge_cycles_elapsed: 0,
            voltage: 0.0,
            stored_energy: 0.0,
            phase: Phase::Holding,
        }
    }

    pub fn full(p: &EnergyParams) -> Self {
        CapacitorState {
            charge_cycles_elapsed: 0,
            voltage: p.full_voltage(),
            stored_energy: p.e_max,
            phase: Phase::Holding,
        }
    }

    /// Whether a pulse can be fired.
    pub fn sufficient(&self, p: &EnergyParams) -> bool {
        self.stored_energy >= p.e_max
    }
}

/// Cycles applied in one slot of `slot_ms` milliseconds (rounded to nearest).
pub fn cycles_per_slot(p: &EnergyParams, slot_ms: f64) -> u64 {
    (p.f_us * slot_ms / 1000.0).round().max(0.0) as u64
}

/// Advance one slot. Charging follows the exponential charge curve for the
/// number of cycles that fit in the slot, clamped at e_max.
pub fn step_slot(state: CapacitorState, p: &EnergyParams, being_charged: bool, slot_ms: f64) -> Result<CapacitorState> {
    if !being_charged {
        return Ok(state);
    }
    let n = cycles_per_slot(p, slot_ms);
    let k = decay(p, n as f64)?;
    let mut v = p.v_g - (p.v_g - state.voltage) * k;
    let mut e = 0.5 * p.c_cap * v * v;
    if e >= p.e_max {
        e = p.e_max;
        v = p.full_voltage();
    }
    // never lose charge while charging
    if e < state.stored_energy {
        v = state.voltage;
        e = state.stored_energy;
    }
    Ok(CapacitorState {
        charge_cycles_elapsed: state.charge_cycles_elapsed + n,
        voltage: v,
        stored_energy: e,
        phase: Phase::Charging,
    })
}

/// Fire the LED if the capacitor holds at least e_max.
pub fn discharge_pulse(state: CapacitorState, p: &EnergyParams) -> (CapacitorState, bool) {
    if !state.sufficient(p) {
        return (state, false);
    }
    let e = (state.stored_energy - p.e_max).max(0.0);
    let next = CapacitorState {
        charge_cycles_elapsed: state.charge_cycles_elapsed,
        voltage: (2.0 * e / p.c_cap).sqrt(),
        stored_energy: e,
        phase: Phase::Discharging,
    };
    (next, true)
}

/// Stored energy at wall-clock time `t_s` when charging from empty, using
/// the whole number of cycles completed by then.
pub fn stored_energy_at_time(p: &EnergyParams, t_s: f64) -> Result<f64> {
    let n = (p.f_us * t_s + 1e-9).floor().max(0.0) as u64;
    let v = voltage_at_cycle(p, n, Phase::Charging)?;
    Ok(0.5 * p.c_cap * v * v)
}

/// One point of a charge or discharge curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t_ms: f64,
    pub n_cycles: u64,
    pub voltage_v: f64,
    pub energy_j: f64,
}

/// Curve from cycle 0 to the full-charge crossing (charging) or to the
/// e_max level (discharging), sampled every `stride` cycles.
pub fn energy_curve(p: &EnergyParams, phase: Phase, stride: u64) -> Result<Vec<CurvePoint>> {
    let end = match phase {
        Phase::Discharging => cycles_to_discharge(p)?,
        _ => cycles_to_charge(p)?,
    };
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut n = 0;
    loop {
        let v = voltage_at_cycle(p, n, phase)?;
        out.push(CurvePoint {
            t_ms: n as f64 / p.f_us * 1000.0,
            n_cycles: n,
            voltage_v: v,
            energy_j: 0.5 * p.c_cap * v * v,
        });
        if n >= end {
            break;
        }
        n = (n + stride).min(end);
    }
    Ok(out)
}
