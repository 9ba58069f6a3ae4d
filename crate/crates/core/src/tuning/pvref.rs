//! P-Vref tuning: phase of `dP/dVref` with the shafts frozen, compensated by
//! a fitted lead-lag chain.

use serde::{Deserialize, Serialize};

use super::locus::{locus_with_refinement, open_loop_plant};
use super::residues::critical_mode;
use super::{washout_for, TuningConfig, TuningOutcome, UNITY_STAGE};
use crate::error::{Error, Result};
use crate::grid::{OperatingPoint, PowerSystemModel, PssParams};
use crate::linear::frozen_shaft_linearize;
use crate::modal::{eigen_modes, residues_with, Siso};
use crate::numeric::logspace;
use crate::sim::{vref_probe, ProbeOptions};

/// RMS fit error above which the plant is reported as not compensable.
pub const FIT_WARNING_RMS_DEG: f64 = 20.0;

/// Inertia multiplier that freezes the shafts in the time-domain probe.
pub const PROBE_INERTIA_SCALE: f64 = 1e6;

const T_MIN: f64 = 1e-4;
const T_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSource {
    /// Transfer function of the frozen-shaft linearisation.
    FrozenShaft,
    /// Sinusoidal time-domain probe with all inertias scaled up.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseResponse {
    pub frequencies_hz: Vec<f64>,
    /// Degrees, unwrapped along frequency.
    pub phase_deg: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub source: PhaseSource,
}

fn unwrap(phase: &mut [f64]) {
    for i in 1..phase.len() {
        while phase[i] - phase[i - 1] > 180.0 {
            phase[i] -= 360.0;
        }
        while phase[i] - phase[i - 1] < -180.0 {
            phase[i] += 360.0;
        }
    }
}

/// Phase of `dP/dVref` of `gen` with every shaft held still.
pub fn pvref_phase(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    gen: &str,
    freqs_hz: &[f64],
    source: PhaseSource,
) -> Result<PhaseResponse> {
    if freqs_hz.windows(2).any(|w| !(w[0] < w[1])) || freqs_hz.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::OutOfRange("frequencies must be positive and strictly ascending".into()));
    }
    let (mut phase, mut magnitude) = (Vec::with_capacity(freqs_hz.len()), Vec::with_capacity(freqs_hz.len()));
    match source {
        PhaseSource::FrozenShaft => {
            let ss = frozen_shaft_linearize(model, op, gen)?;
            let siso = Siso::new(&ss, &format!("{gen}.vref"), &format!("{gen}.P"))?;
            for &f in freqs_hz {
                let (p, m) = siso.frequency_response(f)?;
                phase.push(p);
                magnitude.push(m);
            }
        }
        PhaseSource::Probe => {
            let mut frozen = model.clone();
            frozen.scale_inertia(PROBE_INERTIA_SCALE);
            let opts = ProbeOptions::default();
            for &f in freqs_hz {
                let r = vref_probe(&frozen, op, gen, f, &opts)?;
                phase.push(r.phase_deg);
                magnitude.push(r.magnitude);
            }
        }
    }
    unwrap(&mut phase);
    Ok(PhaseResponse { frequencies_hz: freqs_hz.to_vec(), phase_deg: phase, magnitude, source })
}

/// Fitted lead-lag chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadLagFit {
    pub n: usize,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    /// Weighted RMS phase error in degrees.
    pub rms_deg: f64,
    pub warning: Option<String>,
}

impl LeadLagFit {
    pub fn params(&self, k: f64, tw: f64) -> PssParams {
        PssParams::new(k, tw, self.t1, self.t2, self.t3, self.t4)
    }
}

struct FitProblem {
    omega: Vec<f64>,
    target: Vec<f64>,
    weight: Vec<f64>,
    n: f64,
}

impl FitProblem {
    /// Weighted mean squared error for log10 T and log10 a.
    fn cost(&self, lt: f64, la: f64) -> f64 {
        let t1 = 10f64.powf(lt);
        let t2 = 10f64.powf(lt + la);
        if !(T_MIN..=T_MAX).contains(&t1) || !(T_MIN..=T_MAX).contains(&t2) {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for i in 0..self.omega.len() {
            let w = self.omega[i];
            let model = self.n * ((w * t1).atan() - (w * t2).atan()).to_degrees();
            let e = model - self.target[i];
            acc += self.weight[i] * e * e;
            wsum += self.weight[i];
        }
        acc / wsum
    }
}

/// Least-squares fit of `n` tied lead-lag blocks whose phase matches the
/// negative of `target`, optionally after removing the washout lead
/// `atan(1/(w T_W))`. Samples inside `band_hz` carry `band_weight`.
pub fn fit_leadlag_to_phase(
    target: &PhaseResponse,
    n: usize,
    band_hz: (f64, f64),
    band_weight: f64,
    washout: Option<f64>,
) -> Result<LeadLagFit> {
    if !(1..=2).contains(&n) {
        return Err(Error::OutOfRange(format!("fit supports one or two blocks, not {n}")));
    }
    if target.frequencies_hz.is_empty() {
        return Err(Error::OutOfRange("empty phase response".into()));
    }
    let omega: Vec<f64> = target.frequencies_hz.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let wanted: Vec<f64> = target
        .phase_deg
        .iter()
        .zip(&omega)
        .map(|(p, w)| -p - washout.map_or(0.0, |tw| (1.0 / (w * tw)).atan().to_degrees()))
        .collect();
    let weight = target
        .frequencies_hz
        .iter()
        .map(|f| if (band_hz.0..=band_hz.1).contains(f) { band_weight } else { 1.0 })
        .collect();
    let prob = FitProblem { omega, target: wanted, weight, n: n as f64 };

    // Coarse grid in (log10 T, log10 a); a = 1 lies exactly on the grid.
    let step = 0.05;
    let (mut best_lt, mut best_la, mut best) = (0.0, 0.0, f64::INFINITY);
    for i in 0..=106 {
        let lt = -4.0 + i as f64 * step;
        for j in 0..=120 {
            let la = (j as f64 - 80.0) * step;
            let c = prob.cost(lt, la);
            if c < best {
                (best_lt, best_la, best) = (lt, la, c);
            }
        }
    }
    // Pattern search with a shrinking step.
    let mut h = step;
    while h > 1e-9 {
        let mut moved = false;
        for (dt, da) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, -h), (-h, h), (h, h), (-h, -h)] {
            let c = prob.cost(best_lt + dt, best_la + da);
            if c < best {
                (best_lt, best_la, best) = (best_lt + dt, best_la + da, c);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    let t1 = 10f64.powf(best_lt);
    let t2 = if best_la == 0.0 { t1 } else { 10f64.powf(best_lt + best_la) };
    let (t3, t4) = if n == 2 { (t1, t2) } else { (UNITY_STAGE, UNITY_STAGE) };
    let rms = best.sqrt();
    let warning = (rms > FIT_WARNING_RMS_DEG)
        .then(|| format!("phase fit error {rms:.1} deg RMS exceeds {FIT_WARNING_RMS_DEG} deg; plant not compensable by {n} blocks"));
    Ok(LeadLagFit { n, t1, t2, t3, t4, rms_deg: rms, warning })
}

/// P-Vref tuning of `slot` with every other stabilizer left in place.
pub fn tune_pvref(model: &PowerSystemModel, op: &OperatingPoint, slot: &str, cfg: &TuningConfig) -> Result<TuningOutcome> {
    let host = model.pss_host(slot).ok_or_else(|| Error::UnknownLabel(format!("stabilizer {slot}")))?;
    let gen = model.machines[host].id.clone();

    // Washout from the critical rotor mode, as in the Residues method.
    let (plant, input, output) = open_loop_plant(model, op, slot)?;
    let modes = eigen_modes(&plant)?;
    let res = residues_with(&modes, &plant, &input, &output)?;
    let crit = critical_mode(&modes, &res)
        .ok_or_else(|| Error::Tuning { slot: slot.into(), reason: "no rotor mode found".into() })?;
    let tw = washout_for(super::hz(crit.eigenvalue.im));

    let freqs = logspace(cfg.freq_min_hz, cfg.freq_max_hz, cfg.freq_points);
    let phase = pvref_phase(model, op, &gen, &freqs, cfg.phase_source)?;
    let fit = fit_leadlag_to_phase(&phase, cfg.fit_blocks, (cfg.band_lo_hz, cfg.band_hi_hz), cfg.band_weight, Some(tw))?;
    let mut warnings: Vec<String> = fit.warning.iter().cloned().collect();

    let current = model.pss_slot(slot).expect("slot checked above");
    let mut candidate = fit.params(0.0, tw);
    candidate.v_min = current.params.v_min;
    candidate.v_max = current.params.v_max;
    let (locus, selection) = locus_with_refinement(model, op, slot, &candidate, cfg)?;
    if !selection.stabilizable {
        warnings.push(format!("{slot} cannot bring every rotor mode to positive damping"));
    }
    Ok(TuningOutcome {
        slot: slot.into(),
        method: "pvref".into(),
        params: candidate.with_gain(selection.gain),
        locus,
        selection,
        target: None,
        design: None,
        fit: Some(fit),
        warnings,
    })
}
