//! Nonlinear time-domain simulation with the implicit trapezoidal rule.
//!
//! Each step solves
//! `x1 - x0 - h/2 (f(x0, y0, u0) + f(x1, y1, u1)) = 0`, `g(x1, y1, u1) = 0`
//! by Newton iterations that reuse a factorised Jacobian until convergence
//! slows down. Step disturbances are applied on the time grid: the step that
//! ends at the event still sees the old input, after which the algebraic
//! variables are re-solved with the new one.

mod fit;
mod probe;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dae::{DaeModel, Equilibrium};
use crate::error::{Error, Result};
use crate::grid::{DaeOptions, OperatingPoint, PowerSystemDae, PowerSystemModel};

pub use fit::{classify_stability, fit_damped_modes, FittedMode, StabilityClass, StabilityVerdict, GROWING_SIGMA};
pub use probe::{probe_dae, sine_component, vref_probe, ProbeOptions, ProbeResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Disturbance {
    /// Load at `bus` scaled by `1 + fraction` from `start` on.
    LoadStep { bus: u32, fraction: f64, start: f64 },
    /// `amplitude sin(2 pi f (t - start))` added to the voltage reference.
    VrefSinusoid { gen: String, amplitude: f64, frequency_hz: f64, start: f64 },
}

impl Disturbance {
    pub fn start(&self) -> f64 {
        match self {
            Disturbance::LoadStep { start, .. } | Disturbance::VrefSinusoid { start, .. } => *start,
        }
    }
}

/// Step change of the load at `bus` at time `t`.
pub fn apply_load_step(model: &PowerSystemModel, bus: u32, fraction: f64, t: f64) -> Result<Disturbance> {
    if !model.loads.iter().any(|l| l.bus == bus) {
        return Err(Error::InvalidModel(format!("no load at bus {bus}")));
    }
    if !(t >= 0.0) {
        return Err(Error::OutOfRange(format!("start time {t} must be non-negative")));
    }
    Ok(Disturbance::LoadStep { bus, fraction, start: t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Output labels to record; empty records every output.
    pub channels: Vec<String>,
    pub newton_tol: f64,
    pub max_iterations: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { t_end: 20.0, dt: 0.005, channels: vec![], newton_tol: 1e-8, max_iterations: 30 }
    }
}

/// Uniformly sampled output channels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub scenario: String,
    pub dt: f64,
    pub time: Vec<f64>,
    pub channels: Vec<String>,
    /// `data[c][k]` is channel `c` at `time[k]`.
    pub data: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().position(|c| c == name).map(|i| self.data[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Input trajectory: `value(t, left)` gives the inputs at `t`, taking the
/// limit from the left when `left` is set.
pub trait InputSchedule {
    fn value(&self, t: f64, left: bool, u: &mut [f64]);
    /// Times where the inputs jump.
    fn breakpoints(&self) -> Vec<f64>;
}

/// Constant inputs.
pub struct Constant(pub Vec<f64>);

impl InputSchedule for Constant {
    fn value(&self, _t: f64, _left: bool, u: &mut [f64]) {
        u.copy_from_slice(&self.0);
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![]
    }
}

enum Action {
    Scale { input: usize, factor: f64, start: f64 },
    Sine { input: usize, amplitude: f64, omega: f64, start: f64 },
}

/// Inputs of a [`PowerSystemDae`] under a list of disturbances.
pub struct DisturbanceSchedule {
    base: Vec<f64>,
    actions: Vec<Action>,
}

impl DisturbanceSchedule {
    pub fn new(dae: &PowerSystemDae, base: &[f64], disturbances: &[Disturbance]) -> Result<Self> {
        let mut actions = Vec::new();
        for d in disturbances {
            match d {
                Disturbance::LoadStep { bus, fraction, start } => {
                    let label = format!("L{bus}.scale");
                    let input = dae.input_index(&label).ok_or_else(|| Error::InvalidModel(format!("no load at bus {bus}")))?;
                    if *fraction == 0.0 {
                        continue;
                    }
                    actions.push(Action::Scale { input, factor: 1.0 + fraction, start: *start });
                }
                Disturbance::VrefSinusoid { gen, amplitude, frequency_hz, start } => {
                    let label = format!("{gen}.vref");
                    let input = dae.input_index(&label).ok_or_else(|| Error::UnknownLabel(label.clone()))?;
                    if !(*frequency_hz > 0.0) {
                        return Err(Error::OutOfRange("sinusoid frequency must be positive".into()));
                    }
                    actions.push(Action::Sine {
                        input,
                        amplitude: *amplitude,
                        omega: 2.0 * std::f64::consts::PI * frequency_hz,
                        start: *start,
                    });
                }
            }
        }
        Ok(Self { base: base.to_vec(), actions })
    }
}

impl InputSchedule for DisturbanceSchedule {
    fn value(&self, t: f64, left: bool, u: &mut [f64]) {
        u.copy_from_slice(&self.base);
        for a in &self.actions {
            match *a {
                Action::Scale { input, factor, start } => {
                    if t > start || (!left && t == start) {
                        u[input] = self.base[input] * factor;
                    }
                }
                Action::Sine { input, amplitude, omega, start } => {
                    if t > start {
                        u[input] += amplitude * (omega * (t - start)).sin();
                    }
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Scale { start, .. } => Some(*start),
                Action::Sine { .. } => None,
            })
            .collect()
    }
}

struct Stepper<'a, D: DaeModel + ?Sized> {
    dae: &'a D,
    n: usize,
    m: usize,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    lu_h: f64,
    lu_algebraic_only: bool,
}

impl<'a, D: DaeModel + ?Sized> Stepper<'a, D> {
    fn new(dae: &'a D) -> Self {
        Self { dae, n: dae.n_states(), m: dae.n_algebraic(), lu: None, lu_h: 0.0, lu_algebraic_only: false }
    }

    /// Forward-difference Jacobian of `(f, g)` with respect to `(x, y)`.
    fn jacobian(&self, x: &[f64], y: &[f64], u: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let (f0, g0) = self.dae.eval(x, y, u);
        let mut j = DMatrix::zeros(n + m, n + m);
        let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
        let (mut f, mut g) = (vec![0.0; n], vec![0.0; m]);
        for c in 0..n + m {
            let v = if c < n { &mut xp[c] } else { &mut yp[c - n] };
            let orig = *v;
            let h = 1e-7 * orig.abs().max(1.0);
            *v = orig + h;
            self.dae.residuals(&xp, &yp, u, &mut f, &mut g);
            for r in 0..n {
                j[(r, c)] = (f[r] - f0[r]) / h;
            }
            for r in 0..m {
                j[(n + r, c)] = (g[r] - g0[r]) / h;
            }
            if c < n {
                xp[c] = orig;
            } else {
                yp[c - n] = orig;
            }
        }
        j
    }

    fn factor_step(&mut self, x: &[f64], y: &[f64], u: &[f64], h: f64) {
        let mut j = self.jacobian(x, y, u);
        let n = self.n;
        for r in 0..n {
            for c in 0..n + self.m {
                j[(r, c)] *= -0.5 * h;
            }
            j[(r, r)] += 1.0;
        }
        self.lu = Some(j.lu());
        self.lu_h = h;
        self.lu_algebraic_only = false;
    }

    fn factor_algebraic(&mut self, x: &[f64], y: &[f64], u: &[f64]) {
        let j = self.jacobian(x, y, u);
        let n = self.n;
        let gy = j.view((n, n), (self.m, self.m)).into_owned();
        self.lu = Some(gy.lu());
        self.lu_algebraic_only = true;
    }

    /// Re-solves `g(x, y, u) = 0` for `y`.
    fn reinit(&mut self, x: &[f64], y: &mut [f64], u: &[f64], tol: f64, max_it: usize, t: f64) -> Result<()> {
        if self.m == 0 {
            return Ok(());
        }
        self.factor_algebraic(x, y, u);
        let mut f = vec![0.0; self.n];
        let mut g = vec![0.0; self.m];
        for _ in 0..max_it {
            self.dae.residuals(x, y, u, &mut f, &mut g);
            if crate::numeric::inf_norm(&g) <= tol {
                self.lu = None;
                return Ok(());
            }
            let rhs = DVector::from_column_slice(&g);
            let d = self.lu.as_ref().and_then(|lu| lu.solve(&rhs)).ok_or_else(|| Error::Simulation {
                time: t,
                reason: "singular algebraic Jacobian while re-initialising".into(),
            })?;
            for i in 0..self.m {
                y[i] -= d[i];
            }
        }
        Err(Error::Simulation { time: t, reason: "algebraic re-initialisation did not converge".into() })
    }

    /// One trapezoidal step; `x`, `y` are overwritten with the new values.
    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, x: &mut [f64], y: &mut [f64], f0: &[f64], u1: &[f64], h: f64, tol: f64, max_it: usize, t: f64) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let (x0, y0) = (x.to_vec(), y.to_vec());
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; m];
        let mut fresh = false;
        if self.lu.is_none() || self.lu_algebraic_only || self.lu_h != h {
            self.factor_step(x, y, u1, h);
            fresh = true;
        }
        let mut last = f64::INFINITY;
        let mut it = 0;
        loop {
            self.dae.residuals(x, y, u1, &mut f, &mut g);
            let mut r = DVector::zeros(n + m);
            for i in 0..n {
                r[i] = x[i] - x0[i] - 0.5 * h * (f0[i] + f[i]);
            }
            for i in 0..m {
                r[n + i] = g[i];
            }
            if !r.amax().is_finite() {
                return Err(Error::Simulation { time: t, reason: "non-finite residual".into() });
            }
            let d = self.lu.as_ref().and_then(|lu| lu.solve(&r)).ok_or_else(|| Error::Simulation {
                time: t,
                reason: "singular Newton matrix".into(),
            })?;
            for i in 0..n {
                x[i] -= d[i];
            }
            for i in 0..m {
                y[i] -= d[n + i];
            }
            // Converged when the correction is below tolerance.
            let update = d.amax();
            if update <= tol {
                return Ok(());
            }
            it += 1;
            let slow = it > 1 && update > 0.5 * last;
            if it >= max_it || (slow && it > 6) {
                if fresh {
                    return Err(Error::Simulation { time: t, reason: format!("Newton iteration did not converge (update {update:.3e})") });
                }
                // Retry from the start of the step with an up-to-date Jacobian.
                x.copy_from_slice(&x0);
                y.copy_from_slice(&y0);
                self.factor_step(x, y, u1, h);
                fresh = true;
                it = 0;
                last = f64::INFINITY;
                continue;
            }
            last = update;
        }
    }
}

/// Largest number of step halvings tried when Newton fails.
const MAX_SPLITS: usize = 8;

/// Advances from `span.0` by `span.1`, halving the step when the corrector
/// fails. `f` holds the state derivatives at the start and is left stale.
#[allow(clippy::too_many_arguments)]
fn advance<D: DaeModel + ?Sized>(
    stepper: &mut Stepper<'_, D>,
    x: &mut [f64],
    y: &mut [f64],
    f: &mut [f64],
    inputs: &dyn InputSchedule,
    span: (f64, f64),
    opts: &SimOptions,
    depth: usize,
) -> Result<()> {
    let (t0, h) = span;
    let mut u = vec![0.0; stepper.dae.n_inputs()];
    inputs.value(t0 + h, true, &mut u);
    let (x0, y0) = (x.to_vec(), y.to_vec());
    match stepper.step(x, y, f, &u, h, opts.newton_tol, opts.max_iterations, t0 + h) {
        Ok(()) => Ok(()),
        Err(e) if depth >= MAX_SPLITS => Err(e),
        Err(_) => {
            x.copy_from_slice(&x0);
            y.copy_from_slice(&y0);
            let half = 0.5 * h;
            advance(stepper, x, y, f, inputs, (t0, half), opts, depth + 1)?;
            inputs.value(t0 + half, false, &mut u);
            let mut g = vec![0.0; stepper.m];
            stepper.dae.residuals(x, y, &u, f, &mut g);
            advance(stepper, x, y, f, inputs, (t0 + half, half), opts, depth + 1)
        }
    }
}

/// Integrates any [`DaeModel`] from `start` over `[0, t_end]`.
pub fn simulate_dae<D: DaeModel + ?Sized>(
    dae: &D,
    start: &Equilibrium,
    inputs: &dyn InputSchedule,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end > 0.0) {
        return Err(Error::OutOfRange("dt and t_end must be positive".into()));
    }
    let channel_idx: Vec<usize> = if opts.channels.is_empty() {
        (0..dae.output_labels().len()).collect()
    } else {
        opts.channels
            .iter()
            .map(|c| dae.output_index(c).ok_or_else(|| Error::UnknownLabel(format!("output {c}"))))
            .collect::<Result<_>>()?
    };
    let steps = (opts.t_end / opts.dt).round() as usize;
    let h = opts.dt;
    let mut breaks: Vec<usize> = inputs
        .breakpoints()
        .into_iter()
        .filter(|b| *b <= opts.t_end)
        .map(|b| (b / h - 1e-9).ceil().max(0.0) as usize)
        .collect();
    breaks.sort_unstable();

    let mut stepper = Stepper::new(dae);
    let (mut x, mut y) = (start.x.clone(), start.y.clone());
    let mut u = vec![0.0; dae.n_inputs()];
    let mut f = vec![0.0; dae.n_states()];
    let mut g = vec![0.0; dae.n_algebraic()];

    let mut time = Vec::with_capacity(steps + 1);
    let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); channel_idx.len()];
    for k in 0..=steps {
        let t = k as f64 * h;
        if k > 0 {
            advance(&mut stepper, &mut x, &mut y, &mut f, inputs, (t - h, h), opts, 0)?;
        }
        inputs.value(t, false, &mut u);
        if breaks.binary_search(&k).is_ok() {
            stepper.reinit(&x, &mut y, &u, opts.newton_tol, opts.max_iterations, t)?;
        }
        dae.residuals(&x, &y, &u, &mut f, &mut g);
        time.push(t);
        for (c, &i) in channel_idx.iter().enumerate() {
            data[c].push(dae.output(i, &x, &y, &u));
        }
    }
    Ok(Trajectory {
        scenario: String::new(),
        dt: h,
        time,
        channels: channel_idx.iter().map(|&i| dae.output_labels()[i].clone()).collect(),
        data,
    })
}

/// Simulates the power system from its operating point.
pub fn simulate(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    disturbances: &[Disturbance],
    opts: &SimOptions,
) -> Result<Trajectory> {
    let (dae, eq) = PowerSystemDae::new(model, op, DaeOptions::default())?;
    let schedule = DisturbanceSchedule::new(&dae, &eq.u, disturbances)?;
    let mut traj = simulate_dae(&dae, &eq, &schedule, opts)?;
    traj.scenario = model.name.clone();
    Ok(traj)
}
