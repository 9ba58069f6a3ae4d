//! Residue-based phase compensation of the critical rotor mode.

use serde::Serialize;

use super::locus::{locus_with_refinement, open_loop_plant, state_space_locus_with_refinement, GainSelection, RootLocus};
use super::{
    block_count, hz, leadlag_design, signed_compensation, washout_for, LeadLagDesign, TuningConfig, TuningOutcome,
};
use crate::error::{Error, Result};
use crate::grid::{OperatingPoint, PowerSystemModel, PssParams};
use crate::linear::StateSpaceModel;
use crate::modal::{eigen_modes, residues_with, ModalSet, ResidueInfo};
use crate::numeric::C64;

/// Damping ratio the tuning aims for; reported alongside the target mode.
pub const TARGET_DAMPING: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct TuningTarget {
    pub eigenvalue: C64,
    pub residue: C64,
    /// Residue angle on [0, 360).
    pub residue_angle_deg: f64,
    pub target_damping: f64,
}

impl TuningTarget {
    pub fn sigma(&self) -> f64 {
        self.eigenvalue.re
    }
    pub fn omega(&self) -> f64 {
        self.eigenvalue.im
    }
    pub fn frequency_hz(&self) -> f64 {
        hz(self.eigenvalue.im)
    }
}

/// The critical rotor mode: the one with the largest real part when any
/// rotor mode is unstable (larger residue on ties), otherwise the least
/// damped one.
pub fn critical_mode<'a>(modes: &ModalSet, residues: &'a [ResidueInfo]) -> Option<&'a ResidueInfo> {
    let rotor = modes.rotor_modes();
    let candidates: Vec<&ResidueInfo> = residues.iter().filter(|r| rotor.contains(&r.mode_index)).collect();
    let unstable: Vec<&&ResidueInfo> = candidates.iter().filter(|r| r.eigenvalue.re > 0.0).collect();
    if !unstable.is_empty() {
        return unstable
            .into_iter()
            .max_by(|a, b| a.eigenvalue.re.total_cmp(&b.eigenvalue.re).then(a.magnitude.total_cmp(&b.magnitude)))
            .copied();
    }
    candidates.into_iter().min_by(|a, b| {
        crate::numeric::damping_ratio(a.eigenvalue).total_cmp(&crate::numeric::damping_ratio(b.eigenvalue))
    })
}

struct Design {
    target: TuningTarget,
    design: LeadLagDesign,
    candidate: PssParams,
    warnings: Vec<String>,
}

/// Lead-lag compensation of the critical mode of `plant` from `input` to
/// `output`; the candidate carries zero gain.
fn design_for(slot: &str, plant: &StateSpaceModel, input: &str, output: &str, limits: (f64, f64)) -> Result<Design> {
    let modes = eigen_modes(plant)?;
    let res = residues_with(&modes, plant, input, output)?;
    let crit = critical_mode(&modes, &res)
        .ok_or_else(|| Error::Tuning { slot: slot.into(), reason: "no rotor mode found".into() })?;
    let target = TuningTarget {
        eigenvalue: crit.eigenvalue,
        residue: crit.residue,
        residue_angle_deg: crit.angle_deg,
        target_damping: TARGET_DAMPING,
    };
    let mut warnings = Vec::new();
    let theta = signed_compensation(crit.angle_deg)?;
    let mut n = block_count(theta)?;
    if n > 2 {
        warnings.push(format!("{theta:.1} deg needs three blocks; split over the two available stages"));
        n = 2;
    }
    let design = leadlag_design(theta, n, target.omega())?;
    let mut candidate = design.params(0.0, washout_for(target.frequency_hz()));
    (candidate.v_min, candidate.v_max) = limits;
    Ok(Design { target, design, candidate, warnings })
}

fn outcome(slot: &str, d: Design, locus: RootLocus, selection: GainSelection) -> TuningOutcome {
    let mut warnings = d.warnings;
    if !selection.stabilizable {
        warnings.push(format!("{slot} cannot bring every rotor mode to positive damping"));
    }
    TuningOutcome {
        slot: slot.into(),
        method: "residues".into(),
        params: d.candidate.with_gain(selection.gain),
        locus,
        selection,
        target: Some(d.target),
        design: Some(d.design),
        fit: None,
        warnings,
    }
}

/// Residues tuning of `slot` with every other stabilizer left in place.
pub fn tune_residues(model: &PowerSystemModel, op: &OperatingPoint, slot: &str, cfg: &TuningConfig) -> Result<TuningOutcome> {
    let (plant, input, output) = open_loop_plant(model, op, slot)?;
    let current = &model.pss_slot(slot).expect("slot checked by open_loop_plant").params;
    let d = design_for(slot, &plant, &input, &output, (current.v_min, current.v_max))?;
    let (locus, selection) = locus_with_refinement(model, op, slot, &d.candidate, cfg)?;
    Ok(outcome(slot, d, locus, selection))
}

/// Residues tuning on an imported open-loop model, the stabilizer measuring
/// `output` and acting on `input`. Rotor modes are recognised from state
/// labels ending in `.dw` or `.delta`.
pub fn tune_state_space(
    plant: &StateSpaceModel,
    input: &str,
    output: &str,
    slot: &str,
    cfg: &TuningConfig,
) -> Result<TuningOutcome> {
    let limits = PssParams::new(0.0, 10.0, 1.0, 1.0, 1.0, 1.0);
    let d = design_for(slot, plant, input, output, (limits.v_min, limits.v_max))?;
    let (locus, selection) = state_space_locus_with_refinement(plant, input, output, slot, &d.candidate, cfg)?;
    Ok(outcome(slot, d, locus, selection))
}
