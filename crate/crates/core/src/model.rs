//! Shared vocabulary: layers, device and frequency ids, rasters and the
//! top-level simulation configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyParams, LedParams};
use crate::error::{Error, Result, Violation};
use crate::photonics::OpticsParams;

/// Cortical layer hosting a device. Ordered from superficial to deep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "L2/3")]
    L23,
    L4,
    L5,
    L6,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::L23, Layer::L4, Layer::L5, Layer::L6];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Layer> {
        Layer::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::L23 => "L2/3",
            Layer::L4 => "L4",
            Layer::L5 => "L5",
            Layer::L6 => "L6",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L2/3" | "L23" | "2/3" | "II/III" => Ok(Layer::L23),
            "L4" | "4" | "IV" => Ok(Layer::L4),
            "L5" | "5" | "V" => Ok(Layer::L5),
            "L6" | "6" | "VI" => Ok(Layer::L6),
            other => Err(Error::Format(format!("unknown layer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrequencyId(pub usize);

impl fmt::Display for FrequencyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0 + 1)
    }
}

/// Round-robin assignment of `n` devices over the four layers.
pub fn round_robin_layers(n: usize) -> Vec<Layer> {
    (0..n).map(|i| Layer::ALL[i % 4]).collect()
}

/// Number of slots covering `duration_s` seconds.
pub fn slot_count(duration_s: f64, slot_ms: f64) -> usize {
    let x = duration_s * 1000.0 / slot_ms;
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Binary spike matrix, one row per device, one column per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterPlot {
    devices: usize,
    slots: usize,
    slot_ms: f64,
    bits: Vec<bool>,
}

impl RasterPlot {
    pub fn new(devices: usize, slots: usize, slot_ms: f64) -> Self {
        RasterPlot {
            devices,
            slots,
            slot_ms,
            bits: vec![false; devices * slots],
        }
    }

    /// Build from `(device, slot)` spike coordinates. Duplicates collapse.
    pub fn from_spikes(
        devices: usize,
        slots: usize,
        slot_ms: f64,
        spikes: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut r = RasterPlot::new(devices, slots, slot_ms);
        for (d, t) in spikes {
            if d >= devices || t >= slots {
                return Err(Error::Format(format!(
                    "spike ({d}, {t}) outside a {devices}x{slots} raster"
                )));
            }
            r.set(d, t, true);
        }
        Ok(r)
    }

    /// Build from 0/1 rows.
    pub fn from_rows(rows: &[Vec<u8>], slot_ms: f64) -> Result<Self> {
        let slots = rows.first().map_or(0, |r| r.len());
        let mut r = RasterPlot::new(rows.len(), slots, slot_ms);
        for (d, row) in rows.iter().enumerate() {
            if row.len() != slots {
                return Err(Error::Format("ragged raster rows".into()));
            }
            for (t, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 => r.set(d, t, true),
                    _ => return Err(Error::Format(format!("raster entry {x} is not 0/1"))),
                }
            }
        }
        Ok(r)
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn slot_ms(&self) -> f64 {
        self.slot_ms
    }

    #[inline]
    pub fn get(&self, device: usize, slot: usize) -> bool {
        slot < self.slots && self.bits[device * self.slots + slot]
    }

    #[inline]
    pub fn set(&mut self, device: usize, slot: usize, spike: bool) {
        self.bits[device * self.slots + slot] = spike;
    }

    pub fn total_spikes(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn device_spikes(&self, device: usize) -> usize {
        self.row(device).iter().filter(|&&b| b).count()
    }

    pub fn row(&self, device: usize) -> &[bool] {
        &self.bits[device * self.slots..(device + 1) * self.slots]
    }

    /// Devices spiking in `slot`, ascending.
    pub fn spiking_at(&self, slot: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.devices).filter(move |&d| self.get(d, slot))
    }

    pub fn any_at(&self, slot: usize) -> bool {
        (0..self.devices).any(|d| self.get(d, slot))
    }

    /// All spikes as `(device, slot)`, device-major.
    pub fn spikes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.devices).flat_map(move |d| (0..self.slots).filter(move |&t| self.get(d, t)).map(move |t| (d, t)))
    }

    /// CSV with columns `device_id,slot_index`, one row per spike.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("device_id,slot_index\n");
        for (d, t) in self.spikes() {
            s.push_str(&format!("{d},{t}\n"));
        }
        s
    }

    /// Parse the spike-list CSV. Dimensions are taken from the arguments.
    pub fn from_csv(text: &str, devices: usize, slots: usize, slot_ms: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["device_id", "slot_index"] {
            return Err(Error::Format("raster CSV header must be device_id,slot_index".into()));
        }
        let mut spikes = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let d: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad device_id '{}'", &rec[0])))?;
            let t: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad slot_index '{}'", &rec[1])))?;
            spikes.push((d, t));
        }
        RasterPlot::from_spikes(devices, slots, slot_ms, spikes)
    }

    /// Dense JSON `{"slot_duration_ms": .., "spikes": [[0,1,..], ..]}`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<u8>> = (0..self.devices)
            .map(|d| self.row(d).iter().map(|&b| b as u8).collect())
            .collect();
        serde_json::json!({ "slot_duration_ms": self.slot_ms, "spikes": rows }).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dense {
            slot_duration_ms: f64,
            spikes: Vec<Vec<u8>>,
        }
        let dense: Dense = serde_json::from_str(text)?;
        RasterPlot::from_rows(&dense.spikes, dense.slot_duration_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    ChargeAndFire,
    PsdwRandom,
    PsdwMarkov,
}

impl ProtocolChoice {
    pub const ALL: [ProtocolChoice; 3] = [
        ProtocolChoice::ChargeAndFire,
        ProtocolChoice::PsdwRandom,
        ProtocolChoice::PsdwMarkov,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolChoice::ChargeAndFire => "charge_and_fire",
            ProtocolChoice::PsdwRandom => "psdw_random",
            ProtocolChoice::PsdwMarkov => "psdw_markov",
        }
    }

    pub fn uses_bank(self) -> bool {
        self != ProtocolChoice::ChargeAndFire
    }
}

impl fmt::Display for ProtocolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolChoice::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::Format(format!("unknown protocol '{}'", s.trim())))
    }
}

/// Where the demand raster comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterSource {
    Poisson {
        rate_hz: f64,
    },
    DirectionSwitch {
        rate_before_hz: f64,
        rate_after_hz: f64,
        switch_time_s: f64,
    },
    /// Stimulus-driven threshold-crossing spikes, one sinusoidal stimulus per device.
    Keat {
        amplitude: f64,
        period_ms: f64,
    },
    File {
        path: String,
    },
}

impl RasterSource {
    pub fn kind(&self) -> &'static str {
        match self {
            RasterSource::Poisson { .. } => "poisson",
            RasterSource::DirectionSwitch { .. } => "direction_switch",
            RasterSource::Keat { .. } => "keat",
            RasterSource::File { .. } => "file",
        }
    }

    /// Nominal spike rate recorded in metric rows.
    pub fn nominal_rate_hz(&self) -> f64 {
        match self {
            RasterSource::Poisson { rate_hz } => *rate_hz,
            RasterSource::DirectionSwitch { rate_after_hz, .. } => *rate_after_hz,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub device_count: usize,
    pub device_layers: Vec<Layer>,
    pub frequency_count: usize,
    pub window_width: usize,
    pub slot_duration_ms: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub energy: EnergyParams,
    pub led: LedParams,
    pub optics: OpticsParams,
    pub protocol: ProtocolChoice,
    pub raster: RasterSource,
    /// Slots each emission keeps charging for.
    pub emission_slots: usize,
    /// Idle slots required between two emissions.
    pub min_emission_gap: usize,
    pub start_empty: bool,
    /// When false, Charge-and-Fire charges only the addressed device.
    pub cf_broadcast_charging: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            device_count: 4,
            device_layers: round_robin_layers(4),
            frequency_count: 4,
            window_width: 4,
            slot_duration_ms: 1.0,
            duration_s: 10.0,
            seed: 1,
            energy: EnergyParams::default(),
            led: LedParams::default(),
            optics: OpticsParams::default(),
            protocol: ProtocolChoice::ChargeAndFire,
            raster: RasterSource::Poisson { rate_hz: 100.0 },
            emission_slots: 1,
            min_emission_gap: 0,
            start_empty: false,
            cf_broadcast_charging: true,
        }
    }
}

impl SimConfig {
    pub fn slots(&self) -> usize {
        slot_count(self.duration_s, self.slot_duration_ms)
    }

    /// Set the device count and reassign layers round-robin.
    pub fn set_device_count(&mut self, n: usize) {
        self.device_count = n;
        self.device_layers = round_robin_layers(n);
    }
}

/// Every violated invariant of `cfg`; empty when valid.
pub fn validate_config(cfg: &SimConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    if cfg.device_count < 1 {
        v.push(Violation::config("sim.device_count", "device_count ≥ 1"));
    }
    if cfg.frequency_count < 1 {
        v.push(Violation::config("sim.frequency_count", "frequency_count ≥ 1"));
    }
    if cfg.window_width < 1 {
        v.push(Violation::config("sim.window_width", "window_width ≥ 1"));
    }
    if cfg.device_layers.len() != cfg.device_count {
        v.push(Violation::config(
            "sim.device_layers",
            format!(
                "{} layers given for {} devices",
                cfg.device_layers.len(),
                cfg.device_count
            ),
        ));
    }
    if !(cfg.slot_duration_ms > 0.0) {
        v.push(Violation::config("sim.slot_duration_ms", "slot_duration_ms > 0"));
    }
    if !(cfg.duration_s > 0.0) {
        v.push(Violation::config("sim.duration_s", "duration_s > 0"));
    }
    if cfg.emission_slots < 1 {
        v.push(Violation::config("sim.emission_slots", "emission_slots ≥ 1"));
    }
    match cfg.protocol {
        ProtocolChoice::ChargeAndFire => {
            if cfg.device_count > cfg.frequency_count {
                v.push(Violation::config(
                    "sim.frequency_count",
                    "charge_and_fire needs one frequency per device (device_count ≤ frequency_count)",
                ));
            }
        }
        ProtocolChoice::PsdwMarkov => {
            if cfg.window_width < 4 {
                v.push(Violation::config(
                    "sim.window_width",
                    "psdw_markov needs window_width ≥ 4 (one slot per layer)",
                ));
            }
            if cfg.frequency_count > 24 {
                v.push(Violation::config(
                    "sim.frequency_count",
                    "psdw_markov has only 24 layer orderings (frequency_count ≤ 24)",
                ));
            }
        }
        ProtocolChoice::PsdwRandom => {}
    }
    match &cfg.raster {
        RasterSource::Poisson { rate_hz } if !(*rate_hz >= 0.0) => {
            v.push(Violation::config("raster.rate_hz", "rate must be ≥ 0"));
        }
        RasterSource::DirectionSwitch {
            rate_before_hz,
            rate_after_hz,
            switch_time_s,
        } => {
            if !(*rate_before_hz >= 0.0 && *rate_after_hz >= 0.0) {
                v.push(Violation::config("raster.rate_hz", "rates must be ≥ 0"));
            }
            if !(*switch_time_s >= 0.0 && *switch_time_s <= cfg.duration_s) {
                v.push(Violation::config(
                    "raster.switch_time_s",
                    "switch time must lie within [0, duration]",
                ));
            }
        }
        RasterSource::Keat { period_ms, .. } if !(*period_ms > 0.0) => {
            v.push(Violation::config("keat.period_ms", "period must be > 0"));
        }
        _ => {}
    }
    if !(cfg.optics.mu_a > 0.0) {
        v.push(Violation::physics("optics.mu_a", "mu_a > 0"));
    }
    if !(cfg.optics.mu_s_prime > 0.0) {
        v.push(Violation::physics("optics.mu_s_prime", "mu_s_prime > 0"));
    }
    if !(cfg.optics.target_intensity > 0.0) {
        v.push(Violation::physics("optics.target_intensity", "target_intensity > 0"));
    }
    v.extend(cfg.energy.validate());
    v
}
