//! Per-slot CSV traces: `seed,slot,policy_hash,psi,metric_components`.

use std::io::Write;

use serde::Serialize;

use super::SlotOutcome;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTraceRow {
    pub seed: u64,
    pub slot: u64,
    pub policy_hash: String,
    pub psi: f64,
    pub metric_components: String,
}

impl SlotTraceRow {
    pub fn new(seed: u64, slot: u64, policy_hash: u64, outcome: &SlotOutcome) -> Self {
        Self {
            seed,
            slot,
            policy_hash: format!("{policy_hash:016x}"),
            psi: outcome.psi,
            metric_components: outcome.metrics.components(),
        }
    }
}

pub fn write_slot_trace<W: Write>(out: W, rows: &[SlotTraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
