//! Sinusoidal voltage-reference probe measured on the machine's electrical
//! power.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{simulate_dae, InputSchedule, SimOptions};
use crate::dae::{DaeModel, Equilibrium};
use crate::error::{Error, Result};
use crate::grid::{DaeOptions, OperatingPoint, PowerSystemDae, PowerSystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    /// Peak of the injected sinusoid in pu.
    pub amplitude: f64,
    /// Cycles discarded before measuring.
    pub settle_cycles: usize,
    pub measure_cycles: usize,
    pub steps_per_cycle: usize,
    pub max_dt: f64,
    /// Lower bound on the discarded time in seconds.
    pub min_settle: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { amplitude: 1e-3, settle_cycles: 10, measure_cycles: 10, steps_per_cycle: 100, max_dt: 0.01, min_settle: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    /// Phase of the power response relative to the injection, in (-180, 180].
    pub phase_deg: f64,
    /// Response amplitude over injection amplitude.
    pub magnitude: f64,
}

/// Least-squares fit of `y = c0 + c1 t + a sin(w t) + b cos(w t)`; returns
/// `(amplitude, phase)` of the sinusoid.
pub fn sine_component(t: &[f64], y: &[f64], omega: f64) -> Result<(f64, f64)> {
    if t.len() != y.len() || t.len() < 8 {
        return Err(Error::Probe("too few samples for the sine fit".into()));
    }
    let t0 = t[0];
    let basis = DMatrix::from_fn(t.len(), 4, |i, j| {
        let ti = t[i];
        match j {
            0 => 1.0,
            1 => ti - t0,
            2 => (omega * ti).sin(),
            _ => (omega * ti).cos(),
        }
    });
    let coef = basis
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-14)
        .map_err(|e| Error::Probe(e.to_string()))?;
    Ok((coef[2].hypot(coef[3]), coef[3].atan2(coef[2])))
}

/// Inputs held at `base` except `input`, which carries
/// `amplitude sin(omega t)`.
struct SineInput {
    base: Vec<f64>,
    input: usize,
    amplitude: f64,
    omega: f64,
}

impl InputSchedule for SineInput {
    fn value(&self, t: f64, _left: bool, u: &mut [f64]) {
        u.copy_from_slice(&self.base);
        u[self.input] += self.amplitude * (self.omega * t).sin();
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![]
    }
}

/// Drives `input` of `dae` with a sinusoid from the equilibrium `eq` and
/// measures the sinusoidal part of `output` once the transient has died out.
pub fn probe_dae<D: DaeModel + ?Sized>(
    dae: &D,
    eq: &Equilibrium,
    input: &str,
    output: &str,
    frequency_hz: f64,
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    if !(frequency_hz > 0.0) || !(opts.amplitude > 0.0) || opts.measure_cycles == 0 || opts.steps_per_cycle < 8 {
        return Err(Error::Probe("invalid probe settings".into()));
    }
    let input = dae.input_index(input).ok_or_else(|| Error::UnknownLabel(format!("input {input}")))?;
    let period = 1.0 / frequency_hz;
    let dt = (period / opts.steps_per_cycle as f64).min(opts.max_dt);
    let settle_cycles = (opts.settle_cycles as f64).max((opts.min_settle / period).ceil());
    let settle = settle_cycles * period;
    let t_end = settle + opts.measure_cycles as f64 * period;
    let omega = 2.0 * std::f64::consts::PI * frequency_hz;
    let schedule = SineInput { base: eq.u.clone(), input, amplitude: opts.amplitude, omega };
    let sim = SimOptions { t_end, dt, channels: vec![output.to_string()], ..SimOptions::default() };
    let traj = simulate_dae(dae, eq, &schedule, &sim)?;
    let first = traj.time.iter().position(|t| *t >= settle - 1e-9).unwrap_or(0);
    let (amp, phase) = sine_component(&traj.time[first..], &traj.data[0][first..], omega)?;
    if !(amp > 1e-12 * opts.amplitude) {
        return Err(Error::Probe(format!("{output} shows no response at {frequency_hz} Hz")));
    }
    Ok(ProbeResult { phase_deg: phase.to_degrees(), magnitude: amp / opts.amplitude })
}

/// Probes `gen`'s voltage reference and measures its electrical power.
/// Freezing the shafts is left to the caller, normally by scaling the
/// inertias up.
pub fn vref_probe(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    gen: &str,
    frequency_hz: f64,
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    let (dae, eq) = PowerSystemDae::new(model, op, DaeOptions::default())?;
    probe_dae(&dae, &eq, &format!("{gen}.vref"), &format!("{gen}.P"), frequency_hz, opts)
}
