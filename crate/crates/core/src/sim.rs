//! Slot-by-slot network execution and its trace.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::energy::{discharge_pulse, step_slot, CapacitorState};
use crate::error::{Error, Result};
use crate::model::{validate_config, Layer, ProtocolChoice, RasterPlot, SimConfig};
use crate::protocols::{check_bank_fits, BankKind, ChargeAndFire, ChargingProtocol, PatternBank, Psdw};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub capacitor: CapacitorState,
    pub pending_discharge: Option<usize>,
    pub layer: Layer,
}

/// Everything that happened in one slot. Device lists are sorted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    /// Frequency index emitted in this slot, if any.
    pub emitted: Option<usize>,
    /// Devices receiving charge (emission slot and its continuation).
    pub charged: Vec<usize>,
    /// `(device, slot)` discharges registered this slot.
    pub scheduled: Vec<(usize, usize)>,
    /// `(device, slot)` pending discharges overwritten by a newer schedule.
    pub replaced: Vec<(usize, usize)>,
    /// Devices whose LED fired.
    pub fired: Vec<usize>,
    /// Devices whose discharge was due but lacked energy.
    pub failed: Vec<usize>,
    pub spikes: Vec<usize>,
    pub covered: Vec<usize>,
    pub missed: Vec<usize>,
    pub spurious: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCounts {
    pub total_spikes: usize,
    pub covered: usize,
    pub missed: usize,
    pub spurious: usize,
    pub emissions: usize,
    pub failed_discharges: usize,
    pub replaced: usize,
}

/// Total energy across all devices, J.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_j: f64,
    pub added_j: f64,
    pub drained_j: f64,
    pub final_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub trace_version: u32,
    pub protocol: ProtocolChoice,
    pub devices: usize,
    pub slots: usize,
    pub slot_ms: f64,
    pub counts: TraceCounts,
    pub energy: EnergyLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub summary: TraceSummary,
    pub records: Vec<SlotRecord>,
}

impl SimTrace {
    pub fn counts(&self) -> TraceCounts {
        self.summary.counts
    }

    /// One JSON object per slot, LF-terminated.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serialises");
        s.push('\n');
        s
    }

    /// Rebuild from the summary JSON and the JSONL event log.
    pub fn read(summary_json: &str, jsonl: impl BufRead) -> Result<Self> {
        let summary: TraceSummary = serde_json::from_str(summary_json)?;
        if summary.trace_version != TRACE_VERSION {
            return Err(Error::Format(format!(
                "unsupported trace_version {}",
                summary.trace_version
            )));
        }
        let mut records = Vec::new();
        for (i, line) in jsonl.lines().enumerate() {
            let line = line.map_err(|e| Error::io("trace.jsonl", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: SlotRecord =
                serde_json::from_str(&line).map_err(|e| Error::Format(format!("trace line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Ok(SimTrace { summary, records })
    }
}

/// Reject protocol/bank/raster combinations that cannot run together.
fn check_inputs(cfg: &SimConfig, raster: &RasterPlot, bank: Option<&PatternBank>) -> Result<()> {
    let v = validate_config(cfg);
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    if raster.devices() != cfg.device_count {
        return Err(Error::Mismatch(format!(
            "raster has {} devices, config has {}",
            raster.devices(),
            cfg.device_count
        )));
    }
    if (raster.slot_ms() - cfg.slot_duration_ms).abs() > 1e-12 {
        return Err(Error::Mismatch(format!(
            "raster slot is {} ms, config slot is {} ms",
            raster.slot_ms(),
            cfg.slot_duration_ms
        )));
    }
    match (cfg.protocol, bank) {
        (ProtocolChoice::ChargeAndFire, None) => Ok(()),
        (ProtocolChoice::ChargeAndFire, Some(_)) => {
            Err(Error::Mismatch("charge_and_fire does not use a pattern bank".into()))
        }
        (p, None) => Err(Error::Mismatch(format!("{p} requires a pattern bank"))),
        (p, Some(b)) => {
            let kind_ok = matches!(
                (p, b.kind),
                (_, BankKind::Custom)
                    | (ProtocolChoice::PsdwRandom, BankKind::Random)
                    | (ProtocolChoice::PsdwMarkov, BankKind::Markov)
            );
            if !kind_ok {
                return Err(Error::Mismatch(format!("{p} cannot use a {:?} bank", b.kind)));
            }
            if b.len() != cfg.frequency_count {
                return Err(Error::Mismatch(format!(
                    "bank has {} patterns, config has {} frequencies",
                    b.len(),
                    cfg.frequency_count
                )));
            }
            if b.window() != cfg.window_width {
                return Err(Error::Mismatch(format!(
                    "bank window {} differs from configured window {}",
                    b.window(),
                    cfg.window_width
                )));
            }
            check_bank_fits(b, raster)
        }
    }
}

/// Execute the configured protocol over `raster`.
pub fn run(cfg: &SimConfig, raster: &RasterPlot, bank: Option<&PatternBank>) -> Result<SimTrace> {
    check_inputs(cfg, raster, bank)?;
    let mut proto: Box<dyn ChargingProtocol + '_> = match (cfg.protocol, bank) {
        (ProtocolChoice::ChargeAndFire, _) => Box::new(ChargeAndFire::new(raster, cfg.cf_broadcast_charging)),
        (p, Some(b)) => Box::new(Psdw::new(raster, b, p.as_str())),
        (_, None) => unreachable!("checked above"),
    };
    run_protocol(cfg, raster, proto.as_mut())
}

/// Execute an arbitrary protocol. `cfg` supplies energy and timing.
pub fn run_protocol(cfg: &SimConfig, raster: &RasterPlot, proto: &mut dyn ChargingProtocol) -> Result<SimTrace> {
    let p = &cfg.energy;
    let n = raster.devices();
    let slots = raster.slots();
    let slot_ms = raster.slot_ms();
    let initial = if cfg.start_empty {
        CapacitorState::empty()
    } else {
        CapacitorState::full(p)
    };
    let mut devices: Vec<DeviceState> = (0..n)
        .map(|d| DeviceState {
            capacitor: initial,
            pending_discharge: None,
            layer: cfg.device_layers.get(d).copied().unwrap_or(Layer::L23),
        })
        .collect();
    let mut energy = EnergyLedger {
        initial_j: devices.iter().map(|d| d.capacitor.stored_energy).sum(),
        ..Default::default()
    };
    let mut counts = TraceCounts::default();
    let mut records = Vec::with_capacity(slots);

    let busy_slots = cfg.emission_slots.max(1);
    let spacing = busy_slots.max(1 + cfg.min_emission_gap);
    let mut last_emit: Option<usize> = None;
    // devices still being charged by the current emission, until slot (exclusive)
    let mut charging: Vec<usize> = Vec::new();
    let mut charging_until = 0usize;

    for t in 0..slots {
        let mut rec = SlotRecord {
            slot: t,
            ..Default::default()
        };

        // (1) protocol
        let free = last_emit.is_none_or(|l| t >= l + spacing);
        let decision = if free { Some(proto.step(t)) } else { None };
        if let Some(f) = decision.as_ref().and_then(|d| d.emitted()) {
            rec.emitted = Some(f.0);
            counts.emissions += 1;
            last_emit = Some(t);
            charging = if proto.broadcast_charging() {
                (0..n).collect()
            } else {
                decision.as_ref().unwrap().immediate_discharges.clone()
            };
            charging_until = t + busy_slots;
        }

        // (2) charging
        if t < charging_until {
            for &d in &charging {
                let before = devices[d].capacitor;
                let after = step_slot(before, p, true, slot_ms)?;
                energy.added_j += after.stored_energy - before.stored_energy;
                devices[d].capacitor = after;
            }
            rec.charged = charging.clone();
        }

        // (3) discharge registration; a discharge already due now is kept
        // and the newer schedule takes effect after it
        let mut deferred: Vec<(usize, usize)> = Vec::new();
        if let Some(dec) = &decision {
            let schedule = dec
                .immediate_discharges
                .iter()
                .map(|&d| (d, t))
                .chain(dec.scheduled_discharges.iter().copied());
            for (d, at) in schedule {
                rec.scheduled.push((d, at));
                match devices[d].pending_discharge {
                    Some(old) if old == t && at != t => deferred.push((d, at)),
                    Some(old) if old != at => {
                        rec.replaced.push((d, old));
                        devices[d].pending_discharge = Some(at);
                    }
                    _ => devices[d].pending_discharge = Some(at),
                }
            }
        }

        // (4) firing and classification
        for (d, dev) in devices.iter_mut().enumerate() {
            let spike = raster.get(d, t);
            if spike {
                rec.spikes.push(d);
            }
            let mut served = false;
            if dev.pending_discharge == Some(t) {
                dev.pending_discharge = None;
                let (next, ok) = discharge_pulse(dev.capacitor, p);
                if ok {
                    energy.drained_j += dev.capacitor.stored_energy - next.stored_energy;
                    dev.capacitor = next;
                    rec.fired.push(d);
                    if spike {
                        rec.covered.push(d);
                        served = true;
                    } else {
                        rec.spurious.push(d);
                    }
                } else {
                    rec.failed.push(d);
                }
            }
            // (5) everything else is a miss
            if spike && !served {
                rec.missed.push(d);
            }
        }
        for (d, at) in deferred {
            devices[d].pending_discharge = Some(at);
        }

        counts.total_spikes += rec.spikes.len();
        counts.covered += rec.covered.len();
        counts.missed += rec.missed.len();
        counts.spurious += rec.spurious.len();
        counts.failed_discharges += rec.failed.len();
        counts.replaced += rec.replaced.len();
        records.push(rec);
    }
    energy.final_j = devices.iter().map(|d| d.capacitor.stored_energy).sum();

    Ok(SimTrace {
        summary: TraceSummary {
            trace_version: TRACE_VERSION,
            protocol: match proto.name() {
                "psdw_markov" => ProtocolChoice::PsdwMarkov,
                "psdw_random" => ProtocolChoice::PsdwRandom,
                _ => ProtocolChoice::ChargeAndFire,
            },
            devices: n,
            slots,
            slot_ms,
            counts,
            energy,
        },
        records,
    })
}

fn sorted_set(v: &[usize]) -> Option<BTreeSet<usize>> {
    let s: BTreeSet<usize> = v.iter().copied().collect();
    (s.len() == v.len()).then_some(s)
}

/// Recount the trace from its slot log and check it against the stored
/// counts. The error names the first slot that does not add up.
pub fn replay(trace: &SimTrace) -> Result<TraceCounts> {
    let s = &trace.summary;
    let mut c = TraceCounts::default();
    let bad = |slot: usize, message: &str| Error::Trace {
        slot,
        message: message.to_string(),
    };
    for expected in 0..s.slots {
        let Some(r) = trace.records.get(expected) else {
            return Err(bad(expected, "record missing"));
        };
        if r.slot != expected {
            return Err(bad(expected, &format!("record missing (found slot {})", r.slot)));
        }
        let lists = [&r.spikes, &r.covered, &r.missed, &r.spurious, &r.fired, &r.failed];
        let mut sets = Vec::with_capacity(lists.len());
        for l in lists {
            match sorted_set(l) {
                Some(x) if x.iter().all(|&d| d < s.devices) => sets.push(x),
                _ => return Err(bad(expected, "duplicate or out-of-range device")),
            }
        }
        let [spikes, covered, missed, spurious, fired, failed] = &sets[..] else {
            unreachable!()
        };
        if !covered.is_disjoint(missed) || &(covered | missed) != spikes {
            return Err(bad(expected, "spikes not partitioned into covered and missed"));
        }
        if !covered.is_disjoint(spurious) || &(covered | spurious) != fired {
            return Err(bad(expected, "fired devices not partitioned into covered and spurious"));
        }
        if !spurious.is_disjoint(spikes) || !failed.is_disjoint(fired) {
            return Err(bad(expected, "inconsistent discharge outcome"));
        }
        c.total_spikes += spikes.len();
        c.covered += covered.len();
        c.missed += missed.len();
        c.spurious += spurious.len();
        c.failed_discharges += failed.len();
        c.replaced += r.replaced.len();
        c.emissions += usize::from(r.emitted.is_some());
    }
    if trace.records.len() != s.slots {
        return Err(bad(s.slots, "records beyond the last slot"));
    }
    if c != s.counts {
        return Err(bad(s.slots, "recounted totals differ from stored counts"));
    }
    Ok(c)
}
