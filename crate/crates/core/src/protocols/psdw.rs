//! Predictive sliding detection window.

use super::{Action, ChargingProtocol, Pattern, PatternBank, ProtocolDecision};
use crate::model::{FrequencyId, RasterPlot};

/// Spikes the pattern would serve if its frequency were emitted at `t0`.
/// Delays reaching past the raster end count nothing.
pub fn match_score(pattern: &Pattern, raster: &RasterPlot, t0: usize) -> usize {
    pattern
        .delays()
        .iter()
        .enumerate()
        .filter(|&(d, &k)| {
            let t = t0 + k;
            t < raster.slots() && raster.get(d, t)
        })
        .count()
}

/// One window step. Idle unless some remaining spike sits at `t`; otherwise
/// emit the best-matching frequency (lowest index on ties), schedule every
/// device at its delay and drop the covered spikes from `remaining`.
pub fn psdw_step(remaining: &mut RasterPlot, t: usize, bank: &PatternBank) -> ProtocolDecision {
    if t >= remaining.slots() || !remaining.any_at(t) || bank.is_empty() {
        return ProtocolDecision::idle();
    }
    let mut best = 0;
    let mut best_score = match_score(&bank.patterns()[0], remaining, t);
    for (i, p) in bank.patterns().iter().enumerate().skip(1) {
        let s = match_score(p, remaining, t);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let pattern = &bank.patterns()[best];
    let mut scheduled = Vec::with_capacity(pattern.devices());
    let mut covered = Vec::with_capacity(best_score);
    for (d, &k) in pattern.delays().iter().enumerate() {
        let slot = t + k;
        scheduled.push((d, slot));
        if slot < remaining.slots() && remaining.get(d, slot) {
            remaining.set(d, slot, false);
            covered.push((d, slot));
        }
    }
    ProtocolDecision {
        action: Action::Emit(FrequencyId(best)),
        immediate_discharges: Vec::new(),
        scheduled_discharges: scheduled,
        predicted_cover: covered,
    }
}

/// Window protocol state: the bank and the spikes not yet served.
pub struct Psdw<'a> {
    remaining: RasterPlot,
    bank: &'a PatternBank,
    name: &'static str,
}

impl<'a> Psdw<'a> {
    pub fn new(raster: &RasterPlot, bank: &'a PatternBank, name: &'static str) -> Self {
        Psdw {
            remaining: raster.clone(),
            bank,
            name,
        }
    }

    pub fn remaining(&self) -> &RasterPlot {
        &self.remaining
    }
}

impl ChargingProtocol for Psdw<'_> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn step(&mut self, t: usize) -> ProtocolDecision {
        psdw_step(&mut self.remaining, t, self.bank)
    }
}
