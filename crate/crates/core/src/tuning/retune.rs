//! Re-tuning several stabilizers one after another or independently.

use super::locus::{assess, Assessment};
use super::{TuningConfig, TuningMethod, TuningOutcome};
use crate::error::{Error, Result};
use crate::grid::{OperatingPoint, PowerSystemModel};

/// Result of one slot in a re-tuning run.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub slot: String,
    pub outcome: std::result::Result<TuningOutcome, String>,
}

impl SlotOutcome {
    pub fn tuning(&self) -> Option<&TuningOutcome> {
        self.outcome.as_ref().ok()
    }
}

fn install(model: &mut PowerSystemModel, outcome: &TuningOutcome) {
    if let Some(s) = model.pss_slot_mut(&outcome.slot) {
        s.params = outcome.params.clone();
        s.enabled = true;
    }
}

fn check_slots(model: &PowerSystemModel, slots: &[&str]) -> Result<()> {
    if slots.is_empty() {
        return Err(Error::Tuning { slot: String::new(), reason: "no stabilizer slots given".into() });
    }
    for s in slots {
        if model.pss_slot(s).is_none() {
            return Err(Error::UnknownLabel(format!("stabilizer {s}")));
        }
    }
    Ok(())
}

/// Tunes `order` one slot at a time; each step sees every earlier slot with
/// its new parameters. A failing slot keeps its parameters and the run goes
/// on. Returns the final model and the per-slot results.
pub fn retune_sequential(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    order: &[&str],
    method: &dyn TuningMethod,
    cfg: &TuningConfig,
) -> Result<(PowerSystemModel, Vec<SlotOutcome>)> {
    check_slots(model, order)?;
    let mut current = model.clone();
    let mut outcomes = Vec::with_capacity(order.len());
    for slot in order {
        let outcome = method.tune(&current, op, slot, cfg).map_err(|e| e.to_string());
        if let Ok(o) = &outcome {
            install(&mut current, o);
        }
        outcomes.push(SlotOutcome { slot: slot.to_string(), outcome });
    }
    Ok((current, outcomes))
}

#[derive(Debug, Clone)]
pub struct UncoordinatedOutcome {
    pub model: PowerSystemModel,
    pub slots: Vec<SlotOutcome>,
    /// Closed loop with every new parameter set applied together.
    pub assessment: Assessment,
}

/// Tunes every slot against the original model, then applies all results at
/// once and re-evaluates the closed loop.
pub fn retune_uncoordinated(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    slots: &[&str],
    method: &dyn TuningMethod,
    cfg: &TuningConfig,
) -> Result<UncoordinatedOutcome> {
    check_slots(model, slots)?;
    let outcomes: Vec<SlotOutcome> = slots
        .iter()
        .map(|slot| SlotOutcome { slot: slot.to_string(), outcome: method.tune(model, op, slot, cfg).map_err(|e| e.to_string()) })
        .collect();
    let mut tuned = model.clone();
    for o in outcomes.iter().filter_map(|o| o.tuning()) {
        install(&mut tuned, o);
    }
    let assessment = assess(&tuned, op)?;
    Ok(UncoordinatedOutcome { model: tuned, slots: outcomes, assessment })
}
