//! Acceptance suite: one line per criterion, non-zero exit when any fails.
//!
//! Quoted reference constants (a = 0.21743, T = 0.5689 s, 0.70711) carry four
//! or five significant digits and are compared at 1e-4 relative; the exact
//! identities behind them are checked at 1e-6.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use psstune::grid::{build_two_area, legacy_set_a, legacy_set_b, solve_power_flow, IbrShare, OperatingPoint, PowerSystemModel, PssParams};
use psstune::linear::{jacobians, linearize, linearize_dae, StateSpaceModel, FD_STEP};
use psstune::modal::{eigen_modes, residue_sum, residues_with, tf_eval, ModalSet};
use psstune::numeric::{damping_ratio, eigenvalues, logspace, C64};
use psstune::sim::{apply_load_step, classify_stability, simulate, simulate_dae, Constant, SimOptions};
use psstune::tuning::{
    assess, block_count, close_loop, compensation_angle, leadlag_design, open_loop_plant, pvref_phase, root_locus, tune_pvref, tune_residues,
    PhaseSource, TuningConfig,
};
use psstune::{DaeModel, Equilibrium};
use psstune_harness::{run_experiment, Context, ExperimentKind};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(x: f64, want: f64) -> f64 {
    (x - want).abs() / want.abs()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
}

// 1 ------------------------------------------------------------------------

// the quoted constants are reference values, not stand-ins for std consts
#[allow(clippy::approx_constant)]
fn formulas() -> Outcome {
    let mut bad = vec![];
    for (theta, want) in [(180.0, 0.0), (100.0, 80.0), (350.0, 170.0)] {
        if compensation_angle(theta).unwrap() != want {
            bad.push(format!("compensation_angle({theta})"));
        }
    }
    for (theta, want) in [(45.0, 1), (60.0, 2), (120.0, 3), (130.0, 3)] {
        if block_count(theta).unwrap() != want {
            bad.push(format!("block_count({theta})"));
        }
    }
    let wc = 2.0 * PI * 0.6;
    let d = leadlag_design(80.0, 2, wc).unwrap();
    // independent forms: a = tan^2(45 - phi/2), T = 1/(w sqrt a)
    let a_exact = (PI / 4.0 - 40f64.to_radians() / 2.0).tan().powi(2);
    let t_exact = 1.0 / (wc * a_exact.sqrt());
    if rel(d.a, a_exact) > 1e-6 || rel(d.t, t_exact) > 1e-6 {
        bad.push(format!("design a={} T={}", d.a, d.t));
    }
    if rel(d.a, 0.21743) > 1e-4 || rel(d.t, 0.5689) > 1e-4 {
        bad.push(format!("quoted a/T: {:.6}/{:.6}", d.a, d.t));
    }
    // phase of each block at the centre frequency: sin(phi) = (1-a)/(1+a)
    for (theta, n) in [(80.0, 2), (35.0, 1), (150.0, 3), (-50.0, 1)] {
        let d = leadlag_design(theta, n, 5.0).unwrap();
        let phase = d.response(C64::new(0.0, d.omega_c)).arg().to_degrees();
        let per = ((1.0 - d.a) / (1.0 + d.a)).asin().to_degrees();
        if rel(phase, theta) > 1e-6 || rel(per * n as f64, theta) > 1e-6 || rel(d.omega_m(), d.omega_c) > 1e-6 {
            bad.push(format!("identity at {theta} deg"));
        }
    }
    let xi = damping_ratio(C64::new(-1.0, 1.0));
    if rel(xi, 0.5f64.sqrt()) > 1e-6 || rel(xi, 0.70711) > 1e-4 {
        bad.push(format!("xi(-1+j1) = {xi}"));
    }
    check(bad.is_empty(), if bad.is_empty() { format!("a={:.6} T={:.6} xi={xi:.6}", d.a, d.t) } else { bad.join("; ") })
}

// 2 ------------------------------------------------------------------------

struct Device {
    kind: u8,
    p: [f64; 4],
    labels: [Vec<String>; 4],
}

impl Device {
    fn new(kind: u8, p: [f64; 4], nx: usize) -> Self {
        let l = |s: &str, n: usize| (0..n).map(|i| format!("{s}{i}")).collect();
        Self { kind, p, labels: [l("x", nx), l("y", 1), l("u", 1), l("z", 1)] }
    }
}

impl DaeModel for Device {
    fn state_labels(&self) -> &[String] {
        &self.labels[0]
    }
    fn algebraic_labels(&self) -> &[String] {
        &self.labels[1]
    }
    fn input_labels(&self) -> &[String] {
        &self.labels[2]
    }
    fn output_labels(&self) -> &[String] {
        &self.labels[3]
    }
    fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
        let [a, b, c, d] = self.p;
        match self.kind {
            // swing against an infinite bus: a = H, b = D, c = w_base, d = E V / X
            0 => {
                f[0] = c * x[1];
                f[1] = (u[0] - y[0] - b * x[1]) / (2.0 * a);
                g[0] = y[0] - d * x[0].sin();
            }
            // exciter with a saturating terminal map: a = KA, b = TA
            1 => {
                f[0] = (a * (u[0] - y[0]) - x[0]) / b;
                g[0] = y[0] - x[0] * x[0] / (1.0 + x[0]);
            }
            // PLL: a = kp, b = ki, c = V
            _ => {
                f[0] = a * y[0] + b * x[1];
                f[1] = y[0];
                g[0] = y[0] - c * (u[0] - x[0]).sin();
            }
        }
    }
    fn output(&self, _: usize, x: &[f64], _y: &[f64], _u: &[f64]) -> f64 {
        x[0]
    }
}

fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

struct LinearDae {
    mats: [DMatrix<f64>; 8],
    labels: [Vec<String>; 4],
}

impl DaeModel for LinearDae {
    fn state_labels(&self) -> &[String] {
        &self.labels[0]
    }
    fn algebraic_labels(&self) -> &[String] {
        &self.labels[1]
    }
    fn input_labels(&self) -> &[String] {
        &self.labels[2]
    }
    fn output_labels(&self) -> &[String] {
        &self.labels[3]
    }
    // x' = A x + B u + E y, 0 = y - G x - H u, z = C x + D u + F y
    fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
        let [a, b, e, gm, h, ..] = &self.mats;
        let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
        let (xv, yv, uv) = (col(x), col(y), col(u));
        f.copy_from_slice((a * &xv + b * &uv + e * &yv).as_slice());
        g.copy_from_slice((&yv - gm * &xv - h * &uv).as_slice());
    }
    fn output(&self, i: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
        let [.., c, d, f] = &self.mats;
        let row = |mat: &DMatrix<f64>, v: &[f64]| (0..v.len()).map(|j| mat[(i, j)] * v[j]).sum::<f64>();
        row(c, x) + row(d, u) + row(f, y)
    }
}

fn linearization() -> Outcome {
    let mut worst = 0.0f64;
    let (h, dmp, wb, k) = (3.5, 2.0, 376.99, 1.8);
    let delta = 0.61f64;
    let kk = 1.0 / (2.0 * h);
    let swing = (
        Device::new(0, [h, dmp, wb, k], 2),
        Equilibrium { x: vec![delta, 0.013], y: vec![k * delta.sin()], u: vec![0.9] },
        [
            m(2, 2, &[0.0, wb, 0.0, -dmp * kk]),
            m(2, 1, &[0.0, -kk]),
            m(2, 1, &[0.0, kk]),
            m(1, 2, &[-k * delta.cos(), 0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
        ],
    );
    let (ka, ta, e) = (50.0, 0.05, 1.7f64);
    let dvt = (e * e + 2.0 * e) / ((1.0 + e) * (1.0 + e));
    let exciter = (
        Device::new(1, [ka, ta, 0.0, 0.0], 1),
        Equilibrium { x: vec![e], y: vec![e * e / (1.0 + e)], u: vec![1.1] },
        [
            m(1, 1, &[-1.0 / ta]),
            m(1, 1, &[-ka / ta]),
            m(1, 1, &[ka / ta]),
            m(1, 1, &[-dvt]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
        ],
    );
    let (kp, ki, v, th, thg) = (180.0, 3200.0, 1.02, 0.35f64, 0.52f64);
    let c = v * (thg - th).cos();
    let pll = (
        Device::new(2, [kp, ki, v, 0.0], 2),
        Equilibrium { x: vec![th, 0.0], y: vec![v * (thg - th).sin()], u: vec![thg] },
        [
            m(2, 2, &[0.0, ki, 0.0, 0.0]),
            m(2, 1, &[kp, 1.0]),
            m(2, 1, &[0.0, 0.0]),
            m(1, 2, &[c, 0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[-c]),
        ],
    );
    for (dev, eq, exact) in [swing, exciter, pll] {
        let j = jacobians(&dev, &eq, &[0], &[0], FD_STEP);
        for (fd, ex) in [&j.fx, &j.fy, &j.fu, &j.gx, &j.gy, &j.gu].into_iter().zip(&exact) {
            let err = fd.iter().zip(ex.iter()).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }

    let mat = |r: usize, c: usize| prop::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v));
    let strategy = (mat(4, 4), mat(4, 2), mat(4, 3), mat(3, 4), mat(3, 2), mat(2, 4), mat(2, 2), mat(2, 3));
    let recovery = std::cell::Cell::new(0.0f64);
    let result = runner(64).run(&strategy, |(a, b, e, g, h, c, d, f)| {
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<String>>();
        let dae = LinearDae { mats: [a, b, e, g, h, c, d, f], labels: [names("x", 4), names("y", 3), names("u", 2), names("z", 2)] };
        let eq = Equilibrium { x: vec![0.0; 4], y: vec![0.0; 3], u: vec![0.0; 2] };
        let ss = linearize_dae(&dae, &eq, &["u0", "u1"], &["z0", "z1"]).unwrap();
        let [a, b, e, g, h, c, d, f] = &dae.mats;
        let err = [(&ss.a, a + e * g), (&ss.b, b + e * h), (&ss.c, c + f * g), (&ss.d, d + f * h)]
            .into_iter()
            .map(|(got, want)| (got - want).amax())
            .fold(0.0, f64::max);
        recovery.set(recovery.get().max(err));
        prop_assert!(err <= 1e-9, "recovery error {err:e}");
        Ok(())
    });
    check(
        worst <= 1e-6 && result.is_ok(),
        format!("jacobian rel err {worst:.1e} (<= 1e-6, 3 devices); linear recovery err {:.1e} (<= 1e-9, 64 cases)", recovery.get()),
    )
}

// 3 ------------------------------------------------------------------------

fn siso(n: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64) -> StateSpaceModel {
    StateSpaceModel::new(
        DMatrix::from_row_slice(n, n, &a),
        DMatrix::from_column_slice(n, 1, &b),
        DMatrix::from_row_slice(1, n, &c),
        DMatrix::from_element(1, 1, d),
        (0..n).map(|i| format!("x{i}")).collect(),
        vec!["u".into()],
        vec!["y".into()],
    )
    .unwrap()
}

fn separated(set: &ModalSet) -> bool {
    let ev = set.eigenvalues();
    set.condition < 1e6 && ev.iter().enumerate().all(|(i, a)| ev[i + 1..].iter().all(|b| (a - b).norm() > 1e-3 * (1.0 + a.norm())))
}

fn dot(a: &[C64], b: &[f64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn modal_algebra() -> Outcome {
    let strategy = (2usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            -1.0..1.0f64,
        )
            .prop_map(move |(a, b, c, d)| siso(n, a, b, c, d))
    });
    let result = runner(128).run(&strategy, |ss| {
        let set = eigen_modes(&ss).unwrap();
        prop_assume!(separated(&set));
        let res = residues_with(&set, &ss, "u", "y").unwrap();
        for w in [0.03, 0.4, 1.7, 6.0, 40.0] {
            let s = C64::new(0.0, w);
            if set.eigenvalues().iter().any(|p| (s - p).norm() <= 1e-2) {
                continue;
            }
            let direct = tf_eval(&ss, "u", "y", s).unwrap();
            let sum = residue_sum(&res, ss.d[(0, 0)], s);
            prop_assert!((direct - sum).norm() <= 1e-8 * direct.norm().max(1.0), "reconstruction {direct} vs {sum}");
        }
        let b: Vec<f64> = ss.b.column(0).iter().copied().collect();
        let c: Vec<f64> = ss.c.row(0).iter().copied().collect();
        let product = |m: &psstune::modal::Mode| {
            let right: Vec<C64> = m.right.iter().copied().collect();
            let left: Vec<C64> = m.left.iter().copied().collect();
            dot(&right, &c) * dot(&left, &b)
        };
        for r in &res {
            let want = product(&set.modes[r.mode_index]);
            prop_assert!((r.residue - want).norm() <= 1e-10 * want.norm().max(1.0), "R = (cv)(wb) violated");
        }
        for md in set.modes.iter().filter(|m| m.is_oscillatory()) {
            let target = md.eigenvalue.conj();
            let partner = set.modes.iter().min_by(|x, y| (x.eigenvalue - target).norm().total_cmp(&(y.eigenvalue - target).norm())).unwrap();
            prop_assert!((partner.eigenvalue - target).norm() <= 1e-10 * md.eigenvalue.norm().max(1.0), "spectrum not conjugate-closed");
            let (r1, r2) = (product(md), product(partner));
            prop_assert!((r1 - r2.conj()).norm() <= 1e-10 * r1.norm().max(1.0), "residues not conjugate");
        }
        Ok(())
    });
    check(result.is_ok(), match result {
        Ok(()) => "reconstruction <= 1e-8, R=(cv)(wb) <= 1e-10, conjugate symmetry (128 random systems)".into(),
        Err(e) => e.to_string(),
    })
}

// shared two-area helpers --------------------------------------------------

fn two_area(share: IbrShare, pss: Option<PssParams>) -> (PowerSystemModel, OperatingPoint) {
    let mut m = build_two_area(share);
    match pss {
        Some(p) => m.set_all_pss(&p),
        None => {
            for s in m.pss_slot_names() {
                m.pss_slot_mut(&s).unwrap().enabled = false;
            }
        }
    }
    let op = solve_power_flow(&m).unwrap();
    (m, op)
}

fn spectrum_gap(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for z in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, w)| (j, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d / z.norm().max(1.0));
    }
    worst
}

fn spectrum(m: &PowerSystemModel, op: &OperatingPoint) -> Vec<C64> {
    eigenvalues(&linearize(m, op, &[], &[]).unwrap().a).unwrap()
}

fn rotor_damping_positive(m: &PowerSystemModel, op: &OperatingPoint) -> (bool, f64) {
    let a = assess(m, op).unwrap();
    let xi = a.modes.rotor_modes().iter().map(|&j| a.modes.modes[j].damping_ratio()).fold(f64::INFINITY, f64::min);
    (xi > 0.0, xi)
}

// 4 ------------------------------------------------------------------------

fn eigen_time_consistency() -> Outcome {
    let (m, op) = two_area(IbrShare::Zero, None);
    let a = assess(&m, &op).unwrap();
    let (j, _) = a.modes.least_damped_rotor_mode().unwrap();
    let mode = &a.modes.modes[j];
    let (sigma, f) = (mode.eigenvalue.re, mode.frequency_hz());
    let channels: Vec<String> = m.machines.iter().map(|g| format!("{}.dw", g.id)).collect();
    let step = apply_load_step(&m, 9, 1e-4, 1.0).unwrap();
    let tr = simulate(&m, &op, &[step], &SimOptions { channels, ..SimOptions::default() }).unwrap();
    let (mut es, mut ef) = (0.0f64, 0.0f64);
    for c in &tr.channels {
        let v = classify_stability(&tr, c).unwrap();
        es = es.max(rel(v.sigma, sigma));
        ef = ef.max(rel(v.freq_hz, f));
    }
    check(
        es <= 0.05 && ef <= 0.02 && (0.1..=0.7).contains(&f),
        format!("eigen sigma={sigma:.4} f={f:.4} Hz; fit err sigma {:.2}% (<= 5%), f {:.2}% (<= 2%)", 100.0 * es, 100.0 * ef),
    )
}

// harness runs shared by 5 and 8 -----------------------------------------

#[derive(Default)]
struct SimLog {
    runs: Vec<(String, String, bool)>,
}

impl SimLog {
    fn simulate(&mut self, ctx: &Context, out: &Path) -> BTreeMap<String, String> {
        let run = run_experiment(ctx, ExperimentKind::Simulate, out).unwrap();
        let v: BTreeMap<String, String> = run.report.values.iter().cloned().collect();
        self.runs.push((ctx.scenario.name.clone(), v["verdict"].clone(), v["modal_stable"] == "true"));
        v
    }
}

fn legacy_zero(log: &mut SimLog, out: &Path) -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for (set, p) in [("A", legacy_set_a()), ("B", legacy_set_b())] {
        let (m, op) = two_area(IbrShare::Zero, Some(p));
        let (pos, xi) = rotor_damping_positive(&m, &op);
        let v = log.simulate(&Context::load(&format!("two-area-0ibr:{set}")).unwrap(), out);
        ok &= pos && v["verdict"] == "decaying";
        parts.push(format!("set {set}: min rotor xi={xi:.4}, verdict {}", v["verdict"]));
    }
    check(ok, parts.join("; "))
}

// 6 ------------------------------------------------------------------------

fn pvref_machinery() -> Outcome {
    let (m, op) = two_area(IbrShare::Zero, None);
    let freqs = logspace(0.1, 10.0, 20);
    let mut probe_err = 0.0f64;
    for gen in ["G2", "G4"] {
        let tf = pvref_phase(&m, &op, gen, &freqs, PhaseSource::FrozenShaft).unwrap();
        let pr = pvref_phase(&m, &op, gen, &freqs, PhaseSource::Probe).unwrap();
        for (a, b) in tf.phase_deg.iter().zip(&pr.phase_deg) {
            probe_err = probe_err.max((a - b).abs());
        }
    }
    let band = logspace(0.2, 2.0, 25);
    let mut flat = 0.0f64;
    let mut cases = vec![];
    for share in [IbrShare::Zero, IbrShare::Fifty] {
        let (m, op) = two_area(share, None);
        for (slot, gen) in [("PSS2", "G2"), ("PSS4", "G4")] {
            let out = tune_pvref(&m, &op, slot, &TuningConfig::default()).unwrap();
            let phase = pvref_phase(&m, &op, gen, &band, PhaseSource::FrozenShaft).unwrap();
            let worst = band
                .iter()
                .zip(&phase.phase_deg)
                .map(|(f, p)| (p + out.params.transfer(C64::new(0.0, 2.0 * PI * f)).arg().to_degrees()).abs())
                .fold(0.0, f64::max);
            flat = flat.max(worst);
            cases.push(format!("{share:?}/{slot} TW={} {worst:.1}", out.params.tw));
        }
    }
    check(
        probe_err <= 2.0 && flat <= 10.0,
        format!("probe vs frozen-shaft {probe_err:.2} deg (<= 2, 20 pts, G2+G4); compensated |phase| {flat:.2} deg (<= 10) [{}]", cases.join(", ")),
    )
}

// 7 ------------------------------------------------------------------------

fn installed(m: &PowerSystemModel, slot: &str, p: &PssParams) -> PowerSystemModel {
    let mut out = m.clone();
    let s = out.pss_slot_mut(slot).unwrap();
    s.params = p.clone();
    s.enabled = true;
    out
}

fn zero_gain_gap(m: &PowerSystemModel, op: &OperatingPoint, slot: &str, candidate: &PssParams) -> (f64, f64) {
    let locus = root_locus(m, op, slot, candidate, &[0.0]).unwrap();
    let mut disabled = m.clone();
    disabled.pss_slot_mut(slot).unwrap().enabled = false;
    let mut expected = spectrum(&disabled, op);
    expected.extend([-1.0 / candidate.tw, -1.0 / candidate.t2, -1.0 / candidate.t4].map(|p| C64::new(p, 0.0)));
    let full = spectrum(&installed(m, slot, candidate), op);
    (spectrum_gap(&locus.poles[0], &expected), spectrum_gap(&full, &expected))
}

/// Checks each locus against paths that do not share its code: a full
/// linearization with a zero-gain stabilizer installed, and the loop closed
/// algebraically around the open-loop plant. Tied stages (T2 = T4) make a
/// defective double pole that splits by the square root of the rounding
/// error, so the installed check uses untied stages.
fn root_locus_fidelity() -> Outcome {
    let (m, op) = two_area(IbrShare::Fifty, Some(legacy_set_a()));
    let (tied_locus, tied_full) = zero_gain_gap(&m, &op, "PSS4", &legacy_set_b().with_gain(0.0));
    let (untied_locus, untied_full) = zero_gain_gap(&m, &op, "PSS4", &PssParams::new(0.0, 10.0, 0.2460, 0.0352, 0.4, 0.05));
    let zero_gap = tied_locus.max(untied_locus).max(untied_full);

    let cfg = TuningConfig::default();
    let (mut fresh_gap, mut loop_gap) = (0.0f64, 0.0f64);
    for out in [tune_residues(&m, &op, "PSS4", &cfg).unwrap(), tune_pvref(&m, &op, "PSS2", &cfg).unwrap()] {
        let k = out.locus.index_of(out.selection.gain).unwrap();
        let poles = &out.locus.poles[k];
        fresh_gap = fresh_gap.max(spectrum_gap(poles, &spectrum(&installed(&m, &out.slot, &out.params), &op)));
        let (plant, input, output) = open_loop_plant(&m, &op, &out.slot).unwrap();
        let closed = close_loop(&plant, &input, &output, &out.params, &out.slot).unwrap();
        loop_gap = loop_gap.max(spectrum_gap(poles, &eigenvalues(&closed.a).unwrap()));
    }
    check(
        zero_gap <= 1e-8 && fresh_gap <= 1e-8 && loop_gap <= 1e-8,
        format!(
            "K=0 vs disabled + stabilizer poles {zero_gap:.1e} (tied double pole in a full linearization: {tied_full:.1e}, not judged); selected gain vs fresh linearization {fresh_gap:.1e}, vs composed loop {loop_gap:.1e} (<= 1e-8)"
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn values(run: &psstune_harness::RunOutcome) -> BTreeMap<String, String> {
    run.report.values.iter().cloned().collect()
}

fn case_study(log: &mut SimLog, out: &Path) -> Outcome {
    let mut parts = vec![];

    // (a) legacy parameters on the 50% system
    let mut growing = vec![];
    for set in ["A", "B"] {
        let ctx = Context::load(&format!("two-area-50ibr:{set}")).unwrap();
        let v = log.simulate(&ctx, out);
        let (m, op) = ctx.network().unwrap();
        let a = assess(m, op).unwrap();
        let positive = a.modes.rotor_modes().iter().any(|&j| a.modes.modes[j].eigenvalue.re > 0.0);
        if v["verdict"] == "growing" && positive {
            growing.push(set);
        }
    }
    let a_ok = !growing.is_empty();
    parts.push(format!("(a) growing + positive-sigma rotor mode with set {}", if a_ok { growing.join(",") } else { "none".into() }));

    // (b) single-stabilizer residues retune
    let mut b_ok = true;
    let mut b_parts = vec![];
    for set in ["A", "B"] {
        let mut ctx = Context::load(&format!("two-area-50ibr:{set}")).unwrap();
        ctx.scenario.slots = vec!["PSS4".into()];
        ctx.scenario.method = "residues".into();
        let run = run_experiment(&ctx, ExperimentKind::RetuneSequential, out).unwrap();
        let v = values(&run);
        let before: f64 = v["before_min_rotor_damping"].parse().unwrap();
        let after: f64 = v["after_min_rotor_damping"].parse().unwrap();
        b_ok &= after > before;
        b_parts.push(format!("{set} {before:.3}->{after:.3}"));
        let next = Context::load(run.dir.join("retuned.json").to_str().unwrap()).unwrap();
        log.simulate(&next, out);
    }
    parts.push(format!("(b) residues PSS4 min xi {}", b_parts.join(", ")));

    // (c) sequential P-Vref of both stabilizers
    let mut c_ok = true;
    let mut c_parts = vec![];
    for set in ["A", "B"] {
        let mut ctx = Context::load(&format!("two-area-50ibr:{set}")).unwrap();
        ctx.scenario.slots = vec!["PSS4".into(), "PSS2".into()];
        ctx.scenario.method = "pvref".into();
        let run = run_experiment(&ctx, ExperimentKind::RetuneSequential, out).unwrap();
        let v = values(&run);
        c_ok &= v["after_all_rotor_damping_positive"] == "true";
        c_parts.push(format!("{set} min xi {}", v["after_min_rotor_damping"]));
        let next = Context::load(run.dir.join("retuned.json").to_str().unwrap()).unwrap();
        log.simulate(&next, out);
    }
    parts.push(format!("(c) sequential pvref PSS4,PSS2 all xi>0: {}", c_parts.join(", ")));

    // (d) every simulation in this suite, unstable meaning anything but decaying
    log.simulate(&Context::load("two-area-0ibr:off").unwrap(), out);
    log.simulate(&Context::load("two-area-50ibr:off").unwrap(), out);
    let disagree: Vec<String> = log
        .runs
        .iter()
        .filter(|(_, verdict, modal)| (verdict == "decaying") != *modal)
        .map(|(name, verdict, modal)| format!("{name}: {verdict} vs modal stable={modal}"))
        .collect();
    let d_ok = disagree.is_empty();
    parts.push(format!("(d) modal/sim agreement {}/{}", log.runs.len() - disagree.len(), log.runs.len()));
    if !d_ok {
        parts.push(disagree.join("; "));
    }
    check(a_ok && b_ok && c_ok && d_ok, parts.join("; "))
}

// 9 ------------------------------------------------------------------------

fn trapezoidal_order() -> Outcome {
    // pendulum swing with a nonlinear algebraic coupling
    struct Swing([Vec<String>; 4]);
    impl DaeModel for Swing {
        fn state_labels(&self) -> &[String] {
            &self.0[0]
        }
        fn algebraic_labels(&self) -> &[String] {
            &self.0[1]
        }
        fn input_labels(&self) -> &[String] {
            &self.0[2]
        }
        fn output_labels(&self) -> &[String] {
            &self.0[3]
        }
        fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
            f[0] = 6.0 * x[1];
            f[1] = u[0] - y[0] - 0.3 * x[1];
            g[0] = y[0] - 1.5 * x[0].sin() - 0.05 * y[0].powi(3);
        }
        fn output(&self, _: usize, x: &[f64], _y: &[f64], _u: &[f64]) -> f64 {
            x[0]
        }
    }
    let end = |dt: f64| {
        let l = |s: &str| vec![s.to_string()];
        let dae = Swing([vec!["d".into(), "w".into()], l("p"), l("pm"), l("d")]);
        let a = 1.5 * 1.2f64.sin();
        let mut p = a;
        for _ in 0..50 {
            p -= (p - a - 0.05 * p.powi(3)) / (1.0 - 0.15 * p * p);
        }
        let start = Equilibrium { x: vec![1.2, 0.0], y: vec![p], u: vec![0.4] };
        let opts = SimOptions { t_end: 2.0, dt, newton_tol: 1e-13, ..SimOptions::default() };
        *simulate_dae(&dae, &start, &Constant(vec![0.4]), &opts).unwrap().data[0].last().unwrap()
    };
    let reference = end(0.04 / 64.0);
    let errors: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|dt| (end(*dt) - reference).abs()).collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    check(min >= 1.9, format!("observed orders {:.3?} (>= 1.9)", orders))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut log = SimLog::default();
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut SimLog) -> Outcome>)> = vec![
        ("formula suite", Box::new(|_| formulas())),
        ("linearization", Box::new(|_| linearization())),
        ("modal algebra", Box::new(|_| modal_algebra())),
        ("eigen/time-domain consistency", Box::new(|_| eigen_time_consistency())),
        ("legacy sets stable at 0% IBR", Box::new(|l| legacy_zero(l, out))),
        ("P-Vref machinery", Box::new(|_| pvref_machinery())),
        ("root-locus fidelity", Box::new(|_| root_locus_fidelity())),
        ("50% IBR case study", Box::new(|l| case_study(l, out))),
        ("trapezoidal order", Box::new(|_| trapezoidal_order())),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = f(&mut log);
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {} {tag} {name} ({secs:.1} s): {detail}", i + 1);
    }
    if failed > 0 {
        println!("acceptance: {failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 9 criteria passed");
}
