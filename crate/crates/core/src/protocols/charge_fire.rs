//! Charge and Fire: one frequency per device, emitted in the slot the device
//! spikes, which charges and discharges it at once.

use super::{Action, ChargingProtocol, ProtocolDecision};
use crate::model::{FrequencyId, RasterPlot};

/// Serve the lowest-indexed device spiking at `t`; the rest go unserved.
pub fn charge_and_fire_step(raster: &RasterPlot, t: usize) -> ProtocolDecision {
    match raster.spiking_at(t).next() {
        None => ProtocolDecision::idle(),
        Some(d) => ProtocolDecision {
            action: Action::Emit(FrequencyId(d)),
            immediate_discharges: vec![d],
            scheduled_discharges: Vec::new(),
            predicted_cover: vec![(d, t)],
        },
    }
}

pub struct ChargeAndFire<'a> {
    raster: &'a RasterPlot,
    broadcast: bool,
}

impl<'a> ChargeAndFire<'a> {
    pub fn new(raster: &'a RasterPlot, broadcast: bool) -> Self {
        ChargeAndFire { raster, broadcast }
    }
}

impl ChargingProtocol for ChargeAndFire<'_> {
    fn name(&self) -> &'static str {
        "charge_and_fire"
    }

    fn step(&mut self, t: usize) -> ProtocolDecision {
        charge_and_fire_step(self.raster, t)
    }

    fn broadcast_charging(&self) -> bool {
        self.broadcast
    }
}
