//! Raster generation: Poisson spike trains with piecewise-constant rates,
//! a stimulus-driven threshold-crossing model, and a rate-step scenario.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{slot_count, RasterPlot};
use crate::seed::stream_rng;

/// Piecewise-constant firing rates. Segment `i` starts at `starts[i]` and
/// runs until the next start (the last one until the end of the raster).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRateProfile {
    starts: Vec<f64>,
    /// `rates[i][d]` is device `d`'s rate (Hz) in segment `i`.
    rates: Vec<Vec<f64>>,
}

impl SpikeRateProfile {
    pub fn uniform(devices: usize, rate_hz: f64) -> Self {
        SpikeRateProfile {
            starts: vec![0.0],
            rates: vec![vec![rate_hz; devices]],
        }
    }

    pub fn per_device(rates_hz: Vec<f64>) -> Self {
        SpikeRateProfile {
            starts: vec![0.0],
            rates: vec![rates_hz],
        }
    }

    /// All devices at `before` until `switch_s`, then at `after`.
    pub fn step(devices: usize, before: f64, after: f64, switch_s: f64) -> Self {
        if switch_s <= 0.0 {
            return Self::uniform(devices, after);
        }
        SpikeRateProfile {
            starts: vec![0.0, switch_s],
            rates: vec![vec![before; devices], vec![after; devices]],
        }
    }

    /// Append a segment starting at `start_s`.
    pub fn then(mut self, start_s: f64, rates_hz: Vec<f64>) -> Self {
        self.starts.push(start_s);
        self.rates.push(rates_hz);
        self
    }

    pub fn devices(&self) -> usize {
        self.rates.first().map_or(0, |r| r.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.starts.first() != Some(&0.0) {
            return Err(Error::domain("first rate segment must start at 0 s"));
        }
        if self.starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("rate segments must start in increasing order"));
        }
        let n = self.devices();
        for r in &self.rates {
            if r.len() != n {
                return Err(Error::domain("every segment needs one rate per device"));
            }
            if r.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::domain("rates must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// `(start, rate)` pieces for one device with equal neighbours merged.
    fn pieces(&self, device: usize) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (s, r) in self.starts.iter().zip(&self.rates) {
            let rate = r[device];
            if out.last().map(|p| p.1) != Some(rate) {
                out.push((*s, rate));
            }
        }
        out
    }
}

/// Map unit-rate arrival time `target` to wall-clock time through the
/// cumulative intensity of `pieces`. `None` when it never arrives.
fn invert_intensity(pieces: &[(f64, f64)], target: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (i, &(start, rate)) in pieces.iter().enumerate() {
        let end = pieces.get(i + 1).map(|p| p.0);
        let mass = match end {
            Some(e) => rate * (e - start),
            None => f64::INFINITY,
        };
        if target <= acc + mass {
            if rate == 0.0 {
                return None;
            }
            return Some(start + (target - acc) / rate);
        }
        acc += mass;
    }
    None
}

/// Exponential inter-spike intervals quantised to slots, one spike per slot.
/// Device `d` draws from stream `d` of `seed`.
pub fn generate_poisson_raster(
    profile: &SpikeRateProfile,
    duration_s: f64,
    slot_ms: f64,
    seed: u64,
) -> Result<RasterPlot> {
    profile.validate()?;
    if !(slot_ms > 0.0) || !(duration_s >= 0.0) {
        return Err(Error::domain("slot and duration must be positive"));
    }
    let devices = profile.devices();
    let slots = slot_count(duration_s, slot_ms);
    let mut raster = RasterPlot::new(devices, slots, slot_ms);
    for d in 0..devices {
        let pieces = profile.pieces(d);
        let mut rng = stream_rng(seed, d as u64);
        let mut clock = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            clock += e;
            let Some(t) = invert_intensity(&pieces, clock) else {
                break;
            };
            if t >= duration_s {
                break;
            }
            let slot = ((t * 1000.0) / slot_ms).floor() as usize;
            if slot < slots {
                raster.set(d, slot, true);
            }
        }
    }
    Ok(raster)
}

/// Rate step from `rate_before` to `rate_after` at `switch_s`.
pub fn direction_switch_scenario(
    rate_before: f64,
    rate_after: f64,
    switch_s: f64,
    duration_s: f64,
    devices: usize,
    slot_ms: f64,
    seed: u64,
) -> Result<RasterPlot> {
    if !(switch_s >= 0.0 && switch_s <= duration_s) {
        return Err(Error::domain(format!(
            "switch time {switch_s} s outside [0, {duration_s}] s"
        )));
    }
    let profile = SpikeRateProfile::step(devices, rate_before, rate_after, switch_s);
    generate_poisson_raster(&profile, duration_s, slot_ms, seed)
}

/// Stimulus samples, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusTrace {
    pub samples: Vec<f64>,
}

impl StimulusTrace {
    pub fn new(samples: Vec<f64>) -> Self {
        StimulusTrace { samples }
    }

    /// `amplitude·(1 + sin(2πt/period + phase))/2`.
    pub fn sinusoid(slots: usize, slot_ms: f64, amplitude: f64, period_ms: f64, phase: f64) -> Self {
        let w = std::f64::consts::TAU / period_ms;
        StimulusTrace {
            samples: (0..slots)
                .map(|t| amplitude * 0.5 * (1.0 + (w * t as f64 * slot_ms + phase).sin()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeatParams {
    pub theta: f64,
    /// Stimulus filter taps, lag 0 first, spaced one slot apart.
    pub filter_f: Vec<f64>,
    /// Feedback taps; `feedback_p[j]` acts `j + 1` slots after a spike.
    pub feedback_p: Vec<f64>,
    pub noise_a_sigma: f64,
    pub noise_b_sigma: f64,
}

impl Default for KeatParams {
    fn default() -> Self {
        KeatParams {
            theta: 0.6,
            filter_f: biphasic_filter(30, 3.0, 6.0, 0.5),
            feedback_p: afterpotential(30, 2.0, 5.0),
            noise_a_sigma: 0.05,
            noise_b_sigma: 0.1,
        }
    }
}

impl KeatParams {
    pub fn validate(&self) -> Result<()> {
        if self.filter_f.is_empty() || self.feedback_p.is_empty() {
            return Err(Error::domain("filters need at least one tap"));
        }
        if !(self.noise_a_sigma >= 0.0 && self.noise_b_sigma >= 0.0) {
            return Err(Error::domain("noise sigmas must be >= 0"));
        }
        Ok(())
    }
}

/// Positive lobe followed by a negative lobe:
/// `exp(-k/tau_fast) - ratio·exp(-k/tau_slow)`.
pub fn biphasic_filter(taps: usize, tau_fast: f64, tau_slow: f64, ratio: f64) -> Vec<f64> {
    (0..taps)
        .map(|k| {
            let k = k as f64;
            (-k / tau_fast).exp() - ratio * (-k / tau_slow).exp()
        })
        .collect()
}

/// Negative exponential afterpotential `-depth·exp(-j/decay)`.
pub fn afterpotential(taps: usize, depth: f64, decay: f64) -> Vec<f64> {
    (0..taps).map(|j| -depth * (-(j as f64) / decay).exp()).collect()
}

/// Causal discrete convolution of the stimulus with `filter`, times the slot
/// duration in ms.
pub fn keat_filter_response(stimulus: &StimulusTrace, filter: &[f64], slot_ms: f64) -> Vec<f64> {
    let s = &stimulus.samples;
    (0..s.len())
        .map(|t| {
            let kmax = filter.len().min(t + 1);
            (0..kmax).map(|k| s[t - k] * filter[k]).sum::<f64>() * slot_ms
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeatOutput {
    pub spikes: Vec<bool>,
    pub potential: Vec<f64>,
}

impl KeatOutput {
    pub fn spike_slots(&self) -> Vec<usize> {
        self.spikes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Threshold-crossing spike generation. A spike is emitted at slot `t` when
/// `h(t) > θ`, `h(t-1) ≤ θ` and `h` rose; `h(-1)` is taken as 0.
pub fn keat_spikes(stimulus: &StimulusTrace, p: &KeatParams, slot_ms: f64, seed: u64) -> Result<KeatOutput> {
    p.validate()?;
    let g = keat_filter_response(stimulus, &p.filter_f, slot_ms);
    let n = g.len();
    let mut rng = stream_rng(seed, 0);
    let mut spikes = vec![false; n];
    let mut h = vec![0.0; n];
    // (slot, gain) of past spikes still inside the feedback kernel
    let mut past: Vec<(usize, f64)> = Vec::new();
    let mut prev = 0.0;
    for t in 0..n {
        let a = if p.noise_a_sigma > 0.0 {
            p.noise_a_sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        past.retain(|&(tau, _)| t - tau <= p.feedback_p.len());
        let fb: f64 = past.iter().map(|&(tau, gain)| gain * p.feedback_p[t - tau - 1]).sum();
        let ht = g[t] + a + fb;
        h[t] = ht;
        if ht > p.theta && prev <= p.theta && ht - prev > 0.0 {
            spikes[t] = true;
            let b = if p.noise_b_sigma > 0.0 {
                p.noise_b_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            past.push((t, 1.0 + b));
        }
        prev = ht;
    }
    Ok(KeatOutput { spikes, potential: h })
}

/// Raster with one sinusoidal stimulus per device, phases spread evenly.
pub fn keat_raster(
    devices: usize,
    duration_s: f64,
    slot_ms: f64,
    amplitude: f64,
    period_ms: f64,
    p: &KeatParams,
    seed: u64,
) -> Result<RasterPlot> {
    let slots = slot_count(duration_s, slot_ms);
    let mut raster = RasterPlot::new(devices, slots, slot_ms);
    for d in 0..devices {
        let phase = std::f64::consts::TAU * d as f64 / devices.max(1) as f64;
        let stim = StimulusTrace::sinusoid(slots, slot_ms, amplitude, period_ms, phase);
        let out = keat_spikes(&stim, p, slot_ms, crate::seed::split(seed, d as u64))?;
        for t in out.spike_slots() {
            raster.set(d, t, true);
        }
    }
    Ok(raster)
}
