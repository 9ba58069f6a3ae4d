//! Stabilizer tuning: lead-lag design formulas, root-locus gain selection,
//! the Residues and P-Vref procedures and multi-stabilizer orchestration.

mod locus;
mod pvref;
mod residues;
mod retune;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{OperatingPoint, PowerSystemModel, PssParams};
use crate::numeric::C64;

pub use locus::{
    assess, close_loop, damping_score, locus_with_refinement, open_loop_plant, root_locus, root_locus_state_space,
    select_gain, stabilizer_poles, stabilizer_state_space, Assessment, GainSelection, RootLocus,
};
pub use pvref::{
    fit_leadlag_to_phase, pvref_phase, tune_pvref, LeadLagFit, PhaseResponse, PhaseSource, FIT_WARNING_RMS_DEG,
    PROBE_INERTIA_SCALE,
};
pub use residues::{critical_mode, tune_residues, tune_state_space, TuningTarget, TARGET_DAMPING};
pub use retune::{retune_sequential, retune_uncoordinated, SlotOutcome, UncoordinatedOutcome};

/// Largest phase a single lead-lag block is asked to provide.
pub const MAX_BLOCK_PHASE_DEG: f64 = 60.0;

/// Time constant used for an unused lead-lag stage (`T = T' = 1`).
pub const UNITY_STAGE: f64 = 1.0;

/// `|theta_R - 180|`, the magnitude of the phase the stabilizer must add.
pub fn compensation_angle(theta_r_deg: f64) -> Result<f64> {
    if !(0.0..360.0).contains(&theta_r_deg) {
        return Err(Error::OutOfRange(format!("residue angle {theta_r_deg} outside [0, 360)")));
    }
    Ok((theta_r_deg - 180.0).abs())
}

/// Phase the stabilizer must add, positive for lead and negative for lag.
pub fn signed_compensation(theta_r_deg: f64) -> Result<f64> {
    compensation_angle(theta_r_deg)?;
    Ok(180.0 - theta_r_deg)
}

/// Number of lead-lag blocks for a total compensation of `theta_h_deg`.
pub fn block_count(theta_h_deg: f64) -> Result<usize> {
    let t = theta_h_deg.abs();
    if t >= 180.0 || !t.is_finite() {
        return Err(Error::OutOfRange(format!("compensation of {theta_h_deg} deg is not achievable")));
    }
    Ok(if t < MAX_BLOCK_PHASE_DEG {
        1
    } else if t < 2.0 * MAX_BLOCK_PHASE_DEG {
        2
    } else {
        3
    })
}

/// Identical lead-lag blocks `(1 + sT)/(1 + s aT)` giving `total_phase_deg`
/// at `omega_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadLagDesign {
    pub n: usize,
    pub a: f64,
    pub t: f64,
    pub omega_c: f64,
    pub total_phase_deg: f64,
}

impl LeadLagDesign {
    pub fn block_phase_deg(&self) -> f64 {
        self.total_phase_deg / self.n as f64
    }

    /// Centre frequency `1/(T sqrt(a))` of each block.
    pub fn omega_m(&self) -> f64 {
        1.0 / (self.t * self.a.sqrt())
    }

    /// Frequency response of the block chain.
    pub fn response(&self, s: C64) -> C64 {
        ((1.0 + s * self.t) / (1.0 + s * self.a * self.t)).powi(self.n as i32)
    }

    /// `(T1, T2, T3, T4)`; a single block leaves the second stage at unity.
    pub fn time_constants(&self) -> (f64, f64, f64, f64) {
        let (t1, t2) = (self.t, self.a * self.t);
        if self.n == 1 {
            (t1, t2, UNITY_STAGE, UNITY_STAGE)
        } else {
            (t1, t2, t1, t2)
        }
    }

    pub fn params(&self, k: f64, tw: f64) -> PssParams {
        let (t1, t2, t3, t4) = self.time_constants();
        PssParams::new(k, tw, t1, t2, t3, t4)
    }
}

/// Lead-lag parameters for `n` equal blocks. Negative angles give lag blocks.
pub fn leadlag_design(theta_h_deg: f64, n: usize, omega_c: f64) -> Result<LeadLagDesign> {
    if n == 0 {
        return Err(Error::OutOfRange("block count must be positive".into()));
    }
    if !(omega_c > 0.0) {
        return Err(Error::OutOfRange(format!("design frequency {omega_c} must be positive")));
    }
    let per = theta_h_deg / n as f64;
    if per.abs() >= 90.0 {
        return Err(Error::OutOfRange(format!("{per} deg per block is not achievable")));
    }
    let s = per.to_radians().sin();
    let a = (1.0 - s) / (1.0 + s);
    Ok(LeadLagDesign { n, a, t: 1.0 / (omega_c * a.sqrt()), omega_c, total_phase_deg: theta_h_deg })
}

/// Washout rule: 10 s for modes below 2 Hz, otherwise 1 s.
pub fn washout_for(freq_hz: f64) -> f64 {
    if freq_hz < 2.0 {
        10.0
    } else {
        1.0
    }
}

/// Settings shared by the tuning methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub gain_min: f64,
    pub gain_max: f64,
    pub gain_points: usize,
    /// Points of the second, finer pass around the best coarse gain.
    pub refine_points: usize,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub freq_points: usize,
    /// Band weighted by `band_weight` in the phase fit.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub band_weight: f64,
    pub fit_blocks: usize,
    pub phase_source: PhaseSource,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            gain_min: 0.1,
            gain_max: 1000.0,
            gain_points: 60,
            refine_points: 15,
            freq_min_hz: 0.1,
            freq_max_hz: 10.0,
            freq_points: 40,
            band_lo_hz: 0.2,
            band_hi_hz: 2.0,
            band_weight: 5.0,
            fit_blocks: 2,
            phase_source: PhaseSource::FrozenShaft,
        }
    }
}

impl TuningConfig {
    pub fn gain_grid(&self) -> Vec<f64> {
        crate::numeric::logspace(self.gain_min, self.gain_max, self.gain_points)
    }
}

/// Everything a tuning run produced for one stabilizer slot.
#[derive(Debug, Clone)]
pub struct TuningOutcome {
    pub slot: String,
    pub method: String,
    pub params: PssParams,
    pub locus: RootLocus,
    pub selection: GainSelection,
    pub target: Option<TuningTarget>,
    pub design: Option<LeadLagDesign>,
    pub fit: Option<LeadLagFit>,
    pub warnings: Vec<String>,
}

impl TuningOutcome {
    pub fn stabilizable(&self) -> bool {
        self.selection.stabilizable
    }
    pub fn min_damping(&self) -> f64 {
        self.selection.min_damping
    }
}

/// A tuning procedure selectable by name.
pub trait TuningMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn tune(&self, model: &PowerSystemModel, op: &OperatingPoint, slot: &str, cfg: &TuningConfig)
        -> Result<TuningOutcome>;
}

pub struct Residues;

impl TuningMethod for Residues {
    fn name(&self) -> &'static str {
        "residues"
    }
    fn tune(&self, model: &PowerSystemModel, op: &OperatingPoint, slot: &str, cfg: &TuningConfig) -> Result<TuningOutcome> {
        tune_residues(model, op, slot, cfg)
    }
}

pub struct Pvref;

impl TuningMethod for Pvref {
    fn name(&self) -> &'static str {
        "pvref"
    }
    fn tune(&self, model: &PowerSystemModel, op: &OperatingPoint, slot: &str, cfg: &TuningConfig) -> Result<TuningOutcome> {
        tune_pvref(model, op, slot, cfg)
    }
}

/// Tuning methods keyed by name.
pub struct MethodRegistry {
    methods: BTreeMap<String, Box<dyn TuningMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self { methods: BTreeMap::new() }
    }

    pub fn register(&mut self, method: Box<dyn TuningMethod>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn TuningMethod> {
        let key = name.to_ascii_lowercase().replace(['-', '_'], "");
        self.methods
            .get(&key)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownLabel(format!("tuning method {name} (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<String> {
        self.methods.keys().cloned().collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Residues));
        r.register(Box::new(Pvref));
        r
    }
}

pub(crate) fn hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_examples() {
        assert_eq!(compensation_angle(180.0).unwrap(), 0.0);
        assert_eq!(compensation_angle(100.0).unwrap(), 80.0);
        assert_eq!(compensation_angle(350.0).unwrap(), 170.0);
        assert!(compensation_angle(360.0).is_err());
        assert_eq!(signed_compensation(350.0).unwrap(), -170.0);
    }

    #[test]
    fn block_boundaries() {
        assert_eq!(block_count(45.0).unwrap(), 1);
        assert_eq!(block_count(59.999).unwrap(), 1);
        assert_eq!(block_count(60.0).unwrap(), 2);
        assert_eq!(block_count(120.0).unwrap(), 3);
        assert_eq!(block_count(130.0).unwrap(), 3);
        assert!(block_count(180.0).is_err());
    }

    #[test]
    fn worked_design() {
        let d = leadlag_design(80.0, 2, 2.0 * PI * 0.6).unwrap();
        assert!((d.a - 0.21743).abs() / 0.21743 < 1e-4);
        assert!((d.t - 0.5689).abs() / 0.5689 < 1e-4);
        let phase = d.response(C64::new(0.0, d.omega_c)).arg().to_degrees();
        assert!((phase - 80.0).abs() < 1e-6);
        assert!((d.omega_m() - d.omega_c).abs() < 1e-12);
    }

    #[test]
    fn zero_phase_is_unity() {
        let d = leadlag_design(0.0, 1, 3.0).unwrap();
        assert_eq!(d.a, 1.0);
        assert!((d.t - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.time_constants().2, UNITY_STAGE);
    }

    #[test]
    fn lag_design() {
        let d = leadlag_design(-50.0, 1, 2.0).unwrap();
        assert!(d.a > 1.0);
        let phase = d.response(C64::new(0.0, 2.0)).arg().to_degrees();
        assert!((phase + 50.0).abs() < 1e-9);
    }

    #[test]
    fn registry_lookup() {
        let r = MethodRegistry::default();
        assert_eq!(r.get("Residues").unwrap().name(), "residues");
        assert_eq!(r.get("p-vref").unwrap().name(), "pvref");
        assert!(r.get("h-infinity").is_err());
    }
}
