//! Charging protocols as per-slot decision policies, plus the pattern banks
//! the window-based protocols draw from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrequencyId, Layer, RasterPlot};

pub mod charge_fire;
pub mod markov;
pub mod psdw;

pub use charge_fire::{charge_and_fire_step, ChargeAndFire};
pub use markov::{
    build_markov_bank, chain_score, connection_distribution, random_pattern_bank, rank_layer_sequences, rank_table_csv,
    LayerDistribution, LayerSequence, TransitionMatrix,
};
pub use psdw::{match_score, psdw_step, Psdw};

/// Discharge offsets (slots after the emission) for every device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    delays: Vec<usize>,
    window: usize,
}

impl Pattern {
    pub fn new(delays: Vec<usize>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::domain("window width must be >= 1"));
        }
        if let Some(d) = delays.iter().find(|&&d| d >= window) {
            return Err(Error::domain(format!("delay {d} outside window of width {window}")));
        }
        Ok(Pattern { delays, window })
    }

    pub fn delay(&self, device: usize) -> usize {
        self.delays[device]
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn devices(&self) -> usize {
        self.delays.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Random,
    Markov,
    /// Supplied by hand or loaded from a file without a kind.
    Custom,
}

/// One pattern per frequency, all sharing a window width.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank {
    pub kind: BankKind,
    window: usize,
    patterns: Vec<Pattern>,
    /// Layer order behind each pattern, for Markov banks.
    layer_orders: Option<Vec<Vec<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct BankJson {
    kind: BankKind,
    window_width: usize,
    device_count: usize,
    patterns: BTreeMap<String, PatternJson>,
}

#[derive(Serialize, Deserialize)]
struct PatternJson {
    devices: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<BTreeMap<String, usize>>,
}

fn freq_key(i: usize) -> String {
    FrequencyId(i).to_string()
}

fn parse_freq_key(k: &str) -> Result<usize> {
    k.strip_prefix('f')
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .map(|n| n - 1)
        .ok_or_else(|| Error::Format(format!("bad frequency key '{k}'")))
}

impl PatternBank {
    pub fn new(kind: BankKind, window: usize, patterns: Vec<Pattern>) -> Result<Self> {
        if window == 0 {
            return Err(Error::domain("window width must be >= 1"));
        }
        if let Some(first) = patterns.first() {
            let n = first.devices();
            if patterns.iter().any(|p| p.window != window || p.devices() != n) {
                return Err(Error::domain(
                    "all patterns must share the bank's window and device count",
                ));
            }
        }
        Ok(PatternBank {
            kind,
            window,
            patterns,
            layer_orders: None,
        })
    }

    /// Convenience for hand-written banks: one delay row per frequency.
    pub fn from_rows(window: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let patterns = rows
            .iter()
            .map(|r| Pattern::new(r.clone(), window))
            .collect::<Result<Vec<_>>>()?;
        PatternBank::new(BankKind::Custom, window, patterns)
    }

    pub(crate) fn with_layer_orders(mut self, orders: Vec<Vec<usize>>) -> Self {
        self.layer_orders = Some(orders);
        self
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn pattern(&self, f: FrequencyId) -> &Pattern {
        &self.patterns[f.0]
    }

    pub fn devices(&self) -> usize {
        self.patterns.first().map_or(0, Pattern::devices)
    }

    pub fn layer_orders(&self) -> Option<&[Vec<usize>]> {
        self.layer_orders.as_deref()
    }

    /// `{"kind", "window_width", "device_count", "patterns": {"f1":
    /// {"devices": {"0": delay, ..}, "layers": {"L5": 0, ..}}}}`.
    /// The `layers` map is present for Markov banks only.
    pub fn to_json(&self) -> String {
        let patterns = self
            .patterns
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let devices = p.delays.iter().enumerate().map(|(d, &x)| (d.to_string(), x)).collect();
                let layers = self.layer_orders.as_ref().map(|orders| {
                    orders[i]
                        .iter()
                        .enumerate()
                        .map(|(pos, &l)| (layer_name(l), pos))
                        .collect()
                });
                (freq_key(i), PatternJson { devices, layers })
            })
            .collect();
        let j = BankJson {
            kind: self.kind,
            window_width: self.window,
            device_count: self.devices(),
            patterns,
        };
        serde_json::to_string_pretty(&j).expect("bank serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: BankJson = serde_json::from_str(text)?;
        let mut rows: Vec<(usize, Vec<usize>)> = Vec::with_capacity(j.patterns.len());
        for (k, p) in &j.patterns {
            let f = parse_freq_key(k)?;
            let mut delays = vec![None; j.device_count];
            for (dk, &delay) in &p.devices {
                let d: usize = dk
                    .parse()
                    .map_err(|_| Error::Format(format!("bad device key '{dk}'")))?;
                let slot = delays
                    .get_mut(d)
                    .ok_or_else(|| Error::Format(format!("device {d} out of range")))?;
                *slot = Some(delay);
            }
            let delays = delays
                .into_iter()
                .enumerate()
                .map(|(d, x)| x.ok_or_else(|| Error::Format(format!("{k}: device {d} has no delay"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push((f, delays));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::Format("frequency keys must be f1..fn without gaps".into()));
        }
        let patterns = rows
            .into_iter()
            .map(|(_, d)| Pattern::new(d, j.window_width))
            .collect::<Result<Vec<_>>>()?;
        let mut bank = PatternBank::new(j.kind, j.window_width, patterns)?;
        if j.kind == BankKind::Markov {
            let orders: Option<Vec<Vec<usize>>> = j
                .patterns
                .values()
                .map(|p| {
                    p.layers.as_ref().map(|m| {
                        let mut v: Vec<(usize, usize)> =
                            m.iter().map(|(name, &pos)| (pos, layer_index(name))).collect();
                        v.sort();
                        v.into_iter().map(|x| x.1).collect()
                    })
                })
                .collect();
            // BTreeMap orders "f10" before "f2"; re-sort by frequency index
            if let Some(orders) = orders {
                let mut keyed: Vec<(usize, Vec<usize>)> = j
                    .patterns
                    .keys()
                    .map(|k| parse_freq_key(k))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .zip(orders)
                    .collect();
                keyed.sort_by_key(|x| x.0);
                bank.layer_orders = Some(keyed.into_iter().map(|x| x.1).collect());
            }
        }
        Ok(bank)
    }
}

pub(crate) fn layer_name(i: usize) -> String {
    Layer::from_index(i).map_or_else(|| format!("layer{i}"), |l| l.to_string())
}

fn layer_index(name: &str) -> usize {
    name.parse::<Layer>()
        .map(Layer::index)
        .unwrap_or_else(|_| name.trim_start_matches("layer").parse().unwrap_or(usize::MAX))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Idle,
    Emit(FrequencyId),
}

/// What the transceiver does in one slot. At most one frequency is emitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDecision {
    pub action: Action,
    /// Devices that discharge in the emission slot (Charge and Fire).
    pub immediate_discharges: Vec<usize>,
    /// `(device, absolute slot)` discharge schedule (window protocols).
    pub scheduled_discharges: Vec<(usize, usize)>,
    /// `(device, slot)` spikes the protocol expects this emission to serve.
    pub predicted_cover: Vec<(usize, usize)>,
}

impl ProtocolDecision {
    pub fn idle() -> Self {
        ProtocolDecision {
            action: Action::Idle,
            immediate_discharges: Vec::new(),
            scheduled_discharges: Vec::new(),
            predicted_cover: Vec::new(),
        }
    }

    pub fn emitted(&self) -> Option<FrequencyId> {
        match self.action {
            Action::Emit(f) => Some(f),
            Action::Idle => None,
        }
    }
}

/// A protocol consulted once per slot in increasing slot order.
pub trait ChargingProtocol {
    fn name(&self) -> &'static str;

    /// Decide for slot `t`. Only called when the transmitter is free to emit.
    fn step(&mut self, t: usize) -> ProtocolDecision;

    /// Whether emitted frequencies charge every device or only the addressed one.
    fn broadcast_charging(&self) -> bool {
        true
    }
}

/// Reject window protocols whose bank does not fit the raster.
pub(crate) fn check_bank_fits(bank: &PatternBank, raster: &RasterPlot) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::Mismatch("pattern bank is empty".into()));
    }
    if bank.devices() != raster.devices() {
        return Err(Error::Mismatch(format!(
            "bank covers {} devices, raster has {}",
            bank.devices(),
            raster.devices()
        )));
    }
    Ok(())
}
