//! Experiment drivers, registered by kind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use psstune::grid::{solve_power_flow, OperatingPoint, PowerSystemModel, PssParams};
use psstune::linear::linearize;
use psstune::modal::{classify_modes, eigen_modes, residues_with, ModalSet};
use psstune::numeric::{logspace, C64};
use psstune::sim::{classify_stability, simulate, StabilityClass, StabilityVerdict, Trajectory};
use psstune::tuning::{
    assess, critical_mode, fit_leadlag_to_phase, open_loop_plant, pvref_phase, retune_sequential,
    retune_uncoordinated, root_locus, select_gain, tune_state_space, washout_for, Assessment, MethodRegistry,
    RootLocus, TuningOutcome,
};

use crate::output::{num, Report, RunDir, Table};
use crate::scenario::{freeze, load_scenario, resolve_system, ExperimentKind, Scenario, System};
use crate::svg;

/// Imaginary-part window of pole maps (rad/s); wide enough for local modes.
const POLE_MAP_W: f64 = 20.0;

/// A loaded scenario with its system resolved and, for networks, solved.
pub struct Context {
    pub scenario: Scenario,
    pub system: System,
    pub op: Option<OperatingPoint>,
    /// Name and raw bytes of what the scenario was loaded from.
    pub source: (String, Vec<u8>),
}

impl Context {
    /// Loads a scenario file or `<preset>[:<set>]`.
    pub fn load(arg: &str) -> Result<Self> {
        let (scenario, base) = load_scenario(arg)?;
        let bytes = if Path::new(arg).is_file() { std::fs::read(arg)? } else { arg.as_bytes().to_vec() };
        Self::new(scenario, &base, (arg.to_string(), bytes))
    }

    pub fn new(scenario: Scenario, base: &Path, source: (String, Vec<u8>)) -> Result<Self> {
        let system = resolve_system(&scenario, base)?;
        let op = match &system {
            System::Network(m) => Some(solve_power_flow(m).context("power flow")?),
            System::Imported { .. } => None,
        };
        Ok(Self { scenario, system, op, source })
    }

    pub fn network(&self) -> Result<(&PowerSystemModel, &OperatingPoint)> {
        match (&self.system, &self.op) {
            (System::Network(m), Some(op)) => Ok((m, op)),
            _ => bail!("this experiment needs a network model; the scenario imports a state-space model"),
        }
    }

    /// Slots named by the scenario, or every slot of the model.
    pub fn slots(&self) -> Vec<String> {
        if !self.scenario.slots.is_empty() {
            return self.scenario.slots.clone();
        }
        match &self.system {
            System::Network(m) => m.pss_slot_names(),
            System::Imported { slot, .. } => vec![slot.clone()],
        }
    }
}

pub trait Experiment: Send + Sync {
    fn kind(&self) -> ExperimentKind;
    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report>;
}

/// Experiments keyed by kind.
pub struct ExperimentRegistry {
    map: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.map.insert(e.kind().as_str(), e);
    }

    pub fn get(&self, kind: ExperimentKind) -> Result<&dyn Experiment> {
        self.map.get(kind.as_str()).map(|e| e.as_ref()).ok_or_else(|| anyhow!("no experiment registered for {kind}"))
    }
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut r = Self { map: BTreeMap::new() };
        r.register(Box::new(Powerflow));
        r.register(Box::new(Modes));
        r.register(Box::new(Locus));
        r.register(Box::new(Tune { kind: ExperimentKind::TuneResidues, method: "residues" }));
        r.register(Box::new(Tune { kind: ExperimentKind::TunePvref, method: "pvref" }));
        r.register(Box::new(Retune { kind: ExperimentKind::RetuneSequential }));
        r.register(Box::new(Retune { kind: ExperimentKind::RetuneUncoordinated }));
        r.register(Box::new(Simulate));
        r.register(Box::new(PvrefSweep));
        r
    }
}

/// Result of [`run_experiment`].
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Report,
    /// 0, or 2 for an unstable simulation verdict.
    pub exit_status: i32,
}

fn dir_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Runs `kind` on `ctx` in `<out_root>/<scenario>/<kind>/`.
pub fn run_experiment(ctx: &Context, kind: ExperimentKind, out_root: &Path) -> Result<RunOutcome> {
    let registry = ExperimentRegistry::default();
    let experiment = registry.get(kind)?;
    let dir = out_root.join(dir_name(&ctx.scenario.name)).join(kind.as_str());
    let mut out = RunDir::create(&dir)?;
    out.input(&ctx.source.0, &ctx.source.1);
    let mut frozen = freeze(&ctx.scenario, &ctx.system);
    frozen.experiment = kind;
    out.write("scenario.json", (frozen.to_json() + "\n").as_bytes())?;
    if let System::Network(m) = &ctx.system {
        out.csv("pss.csv", &parameter_table(m, &m.pss_slot_names()))?;
    }
    let report = experiment.run(ctx, &mut out).with_context(|| format!("{kind} on {}", ctx.scenario.name))?;
    let exit_status = if kind == ExperimentKind::Simulate && report.unstable == Some(true) { 2 } else { 0 };
    let dir = out.finish(&ctx.scenario.name, kind.as_str(), &report, exit_status)?;
    Ok(RunOutcome { dir, report, exit_status })
}

fn c64(z: C64) -> String {
    if z.im >= 0.0 {
        format!("{}+{}j", num(z.re), num(z.im))
    } else {
        format!("{}-{}j", num(z.re), num(-z.im))
    }
}

/// One row per eigenvalue in the upper half plane: real modes and one member
/// of each conjugate pair.
pub fn mode_table(set: &ModalSet) -> Table {
    let mut t = Table::new(&[
        "mode", "real", "imag", "freq_hz", "damping", "class", "rotor", "state1", "pf1", "state2", "pf2", "state3", "pf3",
    ]);
    let rotor = set.rotor_modes();
    for (j, m) in set.modes.iter().enumerate().filter(|(_, m)| m.is_representative()) {
        let mut row = vec![
            j.to_string(),
            num(m.eigenvalue.re),
            num(m.eigenvalue.im),
            num(m.frequency_hz()),
            num(m.damping_ratio()),
            m.class.to_string(),
            rotor.contains(&j).to_string(),
        ];
        let top = set.top_states(j, 3);
        for k in 0..3 {
            match top.get(k) {
                Some((s, p)) => row.extend([s.clone(), num(*p)]),
                None => row.extend([String::new(), String::new()]),
            }
        }
        t.push(row);
    }
    t
}

fn classified(mut set: ModalSet) -> ModalSet {
    let labels = set.state_labels.clone();
    classify_modes(&mut set.modes, &labels);
    set
}

fn rotor_summary(report: &mut Report, prefix: &str, set: &ModalSet) {
    let stable = set.is_stable();
    report.value(&format!("{prefix}stable"), stable);
    match set.least_damped_rotor_mode() {
        Some((j, xi)) => {
            let m = &set.modes[j];
            report.value(&format!("{prefix}min_rotor_damping"), num(xi));
            report.value(&format!("{prefix}least_damped_rotor_mode"), c64(m.eigenvalue));
            report.value(&format!("{prefix}least_damped_rotor_freq_hz"), num(m.frequency_hz()));
        }
        None => report.value(&format!("{prefix}min_rotor_damping"), "none"),
    }
}

struct Powerflow;

impl Experiment for Powerflow {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Powerflow
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let (model, op) = ctx.network()?;
        let mut buses = Table::new(&["bus", "kind", "area", "vm_pu", "va_deg", "p_inj_pu", "q_inj_pu"]);
        for (i, b) in model.buses.iter().enumerate() {
            buses.push(vec![
                b.id.to_string(),
                format!("{:?}", b.kind).to_lowercase(),
                b.area.to_string(),
                num(op.vm[i]),
                num(op.va[i].to_degrees()),
                num(op.p_inj[i]),
                num(op.q_inj[i]),
            ]);
        }
        let mut devices = Table::new(&["device", "bus", "p_pu", "q_pu"]);
        for d in &op.devices {
            devices.push(vec![d.id.clone(), d.bus.to_string(), num(d.p), num(d.q)]);
        }
        out.csv("buses.csv", &buses)?;
        out.csv("devices.csv", &devices)?;
        let mut r = Report::new(format!("Power flow: {}", ctx.scenario.name));
        r.value("iterations", op.iterations);
        r.value("mismatch_pu", num(op.mismatch));
        r.value("losses_pu", num(op.p_inj.iter().sum::<f64>()));
        r.table("Buses", buses);
        r.table("Devices", devices);
        Ok(r)
    }
}

struct Modes;

impl Experiment for Modes {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Modes
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let ss = match &ctx.system {
            System::Network(m) => linearize(m, ctx.op.as_ref().expect("solved"), &[], &[])?,
            System::Imported { plant, .. } => plant.clone(),
        };
        let set = classified(eigen_modes(&ss)?);
        let table = mode_table(&set);
        out.csv("modes.csv", &table)?;
        out.write("poles.svg", svg::pole_map(&format!("Eigenvalues: {}", ctx.scenario.name), &set.eigenvalues(), POLE_MAP_W).as_bytes())?;
        let mut r = Report::new(format!("Modes: {}", ctx.scenario.name));
        r.value("states", ss.n_states());
        r.value("condition", num(set.condition));
        rotor_summary(&mut r, "", &set);
        let mut rotor = Table::new(&table.header.iter().map(String::as_str).collect::<Vec<_>>());
        rotor.rows = table.rows.iter().filter(|row| row[6] == "true").cloned().collect();
        r.table("Rotor modes", rotor);
        Ok(r)
    }
}

fn locus_csv(locus: &RootLocus) -> Table {
    let mut t = Table::new(&["gain", "score", "branch", "real", "imag"]);
    for ((g, s), poles) in locus.gains.iter().zip(&locus.scores).zip(&locus.poles) {
        for (b, z) in poles.iter().enumerate().filter(|(_, z)| z.im >= 0.0) {
            t.push(vec![num(*g), num(*s), b.to_string(), num(z.re), num(z.im)]);
        }
    }
    t
}

fn locus_svg(title: &str, locus: &RootLocus, gain: f64) -> String {
    let n = locus.poles.first().map_or(0, Vec::len);
    let consistent = locus.poles.iter().all(|p| p.len() == n);
    let branches: Vec<Vec<C64>> = if consistent {
        (0..n).map(|b| locus.poles.iter().map(|p| p[b]).collect()).collect()
    } else {
        vec![]
    };
    let selected = locus.index_of(gain).map(|k| locus.poles[k].clone()).unwrap_or_default();
    svg::root_locus(title, &branches, &locus.open_loop, &locus.zeros, &selected, POLE_MAP_W)
}

fn write_locus(out: &mut RunDir, name: &str, title: &str, locus: &RootLocus, gain: f64) -> Result<()> {
    out.csv(&format!("locus_{name}.csv"), &locus_csv(locus))?;
    out.write(&format!("rootlocus_{name}.svg"), locus_svg(title, locus, gain).as_bytes())
}

struct Locus;

impl Experiment for Locus {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::RootLocus
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let (model, op) = ctx.network()?;
        let mut r = Report::new(format!("Root locus: {}", ctx.scenario.name));
        let mut t = Table::new(&["slot", "K", "T_W", "T1", "T2", "T3", "T4", "selected_gain", "min_damping", "stabilizable"]);
        for slot in ctx.slots() {
            let p = &model.pss_slot(&slot).ok_or_else(|| anyhow!("no stabilizer {slot}"))?.params;
            let mut gains = vec![0.0];
            gains.extend(ctx.scenario.tuning.gain_grid());
            let locus = root_locus(model, op, &slot, p, &gains)?;
            let sel = select_gain(&locus)?;
            r.value(&format!("{slot}_selected_gain"), num(sel.gain));
            r.value(&format!("{slot}_min_damping"), num(sel.min_damping));
            write_locus(out, &slot, &format!("Root locus of {slot} gain"), &locus, sel.gain)?;
            let mut row = params_row(p);
            row.insert(0, slot.clone());
            row.extend([num(sel.gain), num(sel.min_damping), sel.stabilizable.to_string()]);
            t.push(row);
        }
        out.csv("rootlocus.csv", &t)?;
        r.table("Gain sweep with the installed time constants", t);
        Ok(r)
    }
}

/// `K, T_W, T1 .. T4` in the usual column order. Time constants print with
/// four decimals whenever that is exact, so `0.2460` stays `0.2460`.
pub fn params_row(p: &PssParams) -> Vec<String> {
    let t = |v: f64| {
        let s = format!("{v:.4}");
        if s.parse::<f64>().ok() == Some(v) {
            s
        } else {
            num(v)
        }
    };
    vec![num(p.k), num(p.tw), t(p.t1), t(p.t2), t(p.t3), t(p.t4)]
}

pub const TUNING_HEADER: [&str; 11] =
    ["slot", "method", "K", "T_W", "T1", "T2", "T3", "T4", "min_damping", "stabilizable", "warnings"];

fn tuning_row(o: &TuningOutcome) -> Vec<String> {
    let mut row = vec![o.slot.clone(), o.method.clone()];
    row.extend(params_row(&o.params));
    row.extend([num(o.min_damping()), o.stabilizable().to_string(), o.warnings.join("; ")]);
    row
}

fn failed_row(slot: &str, method: &str, reason: &str) -> Vec<String> {
    let mut row = vec![slot.to_string(), method.to_string()];
    row.extend(std::iter::repeat_n(String::new(), 6));
    row.extend([String::new(), "false".into(), format!("failed: {reason}")]);
    row
}

/// Installed stabilizer parameters per slot.
pub fn parameter_table(model: &PowerSystemModel, slots: &[String]) -> Table {
    let mut t = Table::new(&["slot", "enabled", "K", "T_W", "T1", "T2", "T3", "T4"]);
    for s in slots {
        if let Some(slot) = model.pss_slot(s) {
            let mut row = vec![s.clone(), slot.enabled.to_string()];
            row.extend(params_row(&slot.params));
            t.push(row);
        }
    }
    t
}

struct Tune {
    kind: ExperimentKind,
    method: &'static str,
}

impl Experiment for Tune {
    fn kind(&self) -> ExperimentKind {
        self.kind
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let cfg = &ctx.scenario.tuning;
        let mut r = Report::new(format!("Tuning ({}): {}", self.method, ctx.scenario.name));
        let mut t = Table::new(&TUNING_HEADER);
        match &ctx.system {
            System::Imported { plant, input, output, slot } => {
                if self.method != "residues" {
                    bail!("an imported state-space model can only be tuned with the residues method");
                }
                let o = tune_state_space(plant, input, output, slot, cfg)?;
                r.value(&format!("{slot}_min_damping"), num(o.min_damping()));
                write_locus(out, slot, &format!("Root locus of {slot} gain"), &o.locus, o.selection.gain)?;
                t.push(tuning_row(&o));
            }
            System::Network(model) => {
                let op = ctx.op.as_ref().expect("solved");
                let registry = MethodRegistry::default();
                let method = registry.get(self.method)?;
                let slots = ctx.slots();
                r.table("Installed parameters", parameter_table(model, &slots));
                for slot in &slots {
                    let o = method.tune(model, op, slot, cfg)?;
                    r.value(&format!("{slot}_min_damping"), num(o.min_damping()));
                    r.value(&format!("{slot}_stabilizable"), o.stabilizable());
                    write_locus(out, slot, &format!("Root locus of {slot} gain"), &o.locus, o.selection.gain)?;
                    t.push(tuning_row(&o));
                }
            }
        }
        out.csv("tuning.csv", &t)?;
        r.table("Tuned parameters", t);
        Ok(r)
    }
}

struct Retune {
    kind: ExperimentKind,
}

impl Experiment for Retune {
    fn kind(&self) -> ExperimentKind {
        self.kind
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let (model, op) = ctx.network()?;
        let cfg = &ctx.scenario.tuning;
        let registry = MethodRegistry::default();
        let method = registry.get(&ctx.scenario.method)?;
        let slots = ctx.slots();
        let order: Vec<&str> = slots.iter().map(String::as_str).collect();
        let before = assess(model, op)?;
        let (tuned, outcomes, after) = if self.kind == ExperimentKind::RetuneSequential {
            let (tuned, outcomes) = retune_sequential(model, op, &order, method, cfg)?;
            let after = assess(&tuned, op)?;
            (tuned, outcomes, after)
        } else {
            let u = retune_uncoordinated(model, op, &order, method, cfg)?;
            (u.model, u.slots, u.assessment)
        };
        let mut r = Report::new(format!("{} ({}): {}", self.kind, method.name(), ctx.scenario.name));
        r.value("order", order.join(" -> "));
        let mut t = Table::new(&TUNING_HEADER);
        for s in &outcomes {
            match &s.outcome {
                Ok(o) => {
                    write_locus(out, &s.slot, &format!("Root locus of {} gain", s.slot), &o.locus, o.selection.gain)?;
                    t.push(tuning_row(o));
                }
                Err(e) => t.push(failed_row(&s.slot, method.name(), e)),
            }
        }
        out.csv("tuning.csv", &t)?;
        let before_set = classified(before.modes.clone());
        let after_set = classified(after.modes.clone());
        out.csv("modes_before.csv", &mode_table(&before_set))?;
        out.csv("modes_after.csv", &mode_table(&after_set))?;
        out.write("poles_after.svg", svg::pole_map("Eigenvalues after re-tuning", &after_set.eigenvalues(), POLE_MAP_W).as_bytes())?;
        rotor_summary(&mut r, "before_", &before_set);
        rotor_summary(&mut r, "after_", &after_set);
        r.value("after_all_rotor_damping_positive", all_rotor_positive(&after));
        // scenario with the new parameters, ready for `simulate`
        let mut next = freeze(&ctx.scenario, &System::Network(tuned));
        next.name = format!("{}-{}", ctx.scenario.name, self.kind);
        next.experiment = ExperimentKind::Simulate;
        out.write("retuned.json", (next.to_json() + "\n").as_bytes())?;
        r.table("Installed parameters", parameter_table(model, &slots));
        r.table("Re-tuned parameters", t);
        Ok(r)
    }
}

pub fn all_rotor_positive(a: &Assessment) -> bool {
    let rotor = a.modes.rotor_modes();
    !rotor.is_empty() && rotor.iter().all(|&j| a.modes.modes[j].damping_ratio() > 0.0) && a.stable
}

/// Channels recorded by default: machine speed and power, converter power.
pub fn default_channels(model: &PowerSystemModel) -> Vec<String> {
    let mut c: Vec<String> = model.machines.iter().map(|g| format!("{}.dw", g.id)).collect();
    c.extend(model.machines.iter().map(|g| format!("{}.P", g.id)));
    c.extend(model.converters.iter().map(|g| format!("{}.P", g.id)));
    c
}

fn severity(c: StabilityClass) -> u8 {
    match c {
        StabilityClass::Decaying => 0,
        StabilityClass::Sustained => 1,
        StabilityClass::Growing => 2,
    }
}

/// Verdicts on every rotor speed channel and the worst of them.
pub fn speed_verdicts(model: &PowerSystemModel, tr: &Trajectory) -> Result<(Vec<StabilityVerdict>, StabilityVerdict)> {
    let chans: Vec<String> = model.machines.iter().map(|g| format!("{}.dw", g.id)).filter(|c| tr.channel(c).is_some()).collect();
    if chans.is_empty() {
        bail!("no rotor speed channel recorded; add G*.dw channels to judge stability");
    }
    let verdicts = chans.iter().map(|c| classify_stability(tr, c)).collect::<psstune::Result<Vec<_>>>()?;
    let worst = verdicts
        .iter()
        .max_by(|a, b| severity(a.class).cmp(&severity(b.class)).then(a.sigma.total_cmp(&b.sigma)))
        .cloned()
        .expect("non-empty");
    Ok((verdicts, worst))
}

struct Simulate;

impl Experiment for Simulate {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Simulate
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let (model, op) = ctx.network()?;
        let mut opts = ctx.scenario.simulation.clone();
        if opts.channels.is_empty() {
            opts.channels = default_channels(model);
        }
        let tr = simulate(model, op, &ctx.scenario.disturbances, &opts)?;
        let mut header = vec!["time".to_string()];
        header.extend(tr.channels.iter().cloned());
        let mut t = Table { header, rows: Vec::with_capacity(tr.len()) };
        for k in 0..tr.len() {
            let mut row = vec![num(tr.time[k])];
            row.extend(tr.data.iter().map(|d| num(d[k])));
            t.push(row);
        }
        out.csv("trajectory.csv", &t)?;
        out.write("trajectory.svg", trajectory_svg(&tr).as_bytes())?;

        let (verdicts, worst) = speed_verdicts(model, &tr)?;
        let mut vt = Table::new(&["channel", "class", "sigma", "freq_hz", "oscillatory", "fallback"]);
        for v in &verdicts {
            vt.push(vec![
                v.channel.clone(),
                v.class.as_str().into(),
                num(v.sigma),
                num(v.freq_hz),
                v.oscillatory.to_string(),
                v.fallback.to_string(),
            ]);
        }
        out.csv("verdicts.csv", &vt)?;
        let modal = assess(model, op)?;
        let unstable = worst.class != StabilityClass::Decaying;
        let mut r = Report::new(format!("Simulation: {}", ctx.scenario.name));
        r.value("verdict", worst.class.as_str());
        r.value("verdict_channel", &worst.channel);
        r.value("sigma", num(worst.sigma));
        r.value("freq_hz", num(worst.freq_hz));
        r.value("modal_stable", modal.stable);
        r.value("modal_agrees", modal.stable == !unstable);
        r.value("dt", num(tr.dt));
        r.value("t_end", num(opts.t_end));
        r.table("Verdicts on rotor speed channels", vt);
        r.unstable = Some(unstable);
        Ok(r)
    }
}

fn trajectory_svg(tr: &Trajectory) -> String {
    let groups: [(&str, &str, fn(&str) -> bool); 3] = [
        ("Active power", "P (pu)", |c| c.ends_with(".P")),
        ("Rotor speed deviation", "Δω (pu)", |c| c.ends_with(".dw")),
        ("Other channels", "value", |c| !c.ends_with(".P") && !c.ends_with(".dw")),
    ];
    let mut charts = Vec::new();
    for (title, unit, pick) in groups {
        let mut chart = svg::Chart::new(title, "time (s)", unit);
        let mut any = false;
        for (i, (c, d)) in tr.channels.iter().zip(&tr.data).filter(|(c, _)| pick(c)).enumerate() {
            chart.line(Some(c), tr.time.iter().copied().zip(d.iter().copied()).collect(), svg::color(i));
            any = true;
        }
        if any {
            charts.push(chart);
        }
    }
    svg::stack(&charts)
}

struct PvrefSweep;

impl Experiment for PvrefSweep {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::PvrefSweep
    }

    fn run(&self, ctx: &Context, out: &mut RunDir) -> Result<Report> {
        let (model, op) = ctx.network()?;
        let cfg = &ctx.scenario.tuning;
        let freqs = logspace(cfg.freq_min_hz, cfg.freq_max_hz, cfg.freq_points);
        let mut r = Report::new(format!("P-Vref phase sweep: {}", ctx.scenario.name));
        let mut summary = Table::new(&["slot", "generator", "T_W", "T1", "T2", "T3", "T4", "rms_deg", "max_band_deg", "warning"]);
        for slot in ctx.slots() {
            let host = model.pss_host(&slot).ok_or_else(|| anyhow!("no stabilizer {slot}"))?;
            let gen = model.machines[host].id.clone();
            let (plant, input, output) = open_loop_plant(model, op, &slot)?;
            let modes = eigen_modes(&plant)?;
            let res = residues_with(&modes, &plant, &input, &output)?;
            let crit = critical_mode(&modes, &res).ok_or_else(|| anyhow!("{slot}: no rotor mode"))?;
            let tw = washout_for(crit.eigenvalue.im / (2.0 * std::f64::consts::PI));
            let phase = pvref_phase(model, op, &gen, &freqs, ctx.scenario.sweep_source)?;
            let band = (cfg.band_lo_hz, cfg.band_hi_hz);
            let fit = fit_leadlag_to_phase(&phase, cfg.fit_blocks, band, cfg.band_weight, Some(tw))?;
            let pss = fit.params(1.0, tw);
            let mut t = Table::new(&["freq_hz", "plant_phase_deg", "plant_magnitude", "pss_phase_deg", "compensated_deg"]);
            let (mut plant_line, mut pss_line, mut total_line) = (vec![], vec![], vec![]);
            let mut max_band = 0.0f64;
            for ((f, p), m) in freqs.iter().zip(&phase.phase_deg).zip(&phase.magnitude) {
                let s = C64::new(0.0, 2.0 * std::f64::consts::PI * f);
                let c = pss.shape(s).arg().to_degrees();
                let total = p + c;
                if (band.0..=band.1).contains(f) {
                    max_band = max_band.max(total.abs());
                }
                t.push(vec![num(*f), num(*p), num(*m), num(c), num(total)]);
                plant_line.push((f.log10(), *p));
                pss_line.push((f.log10(), c));
                total_line.push((f.log10(), total));
            }
            out.csv(&format!("phase_{slot}.csv"), &t)?;
            let mut chart = svg::Chart::new(&format!("P-Vref phase of {gen} and fitted {slot}"), "log10 f (Hz)", "phase (deg)");
            chart.line(Some("plant ∠G"), plant_line, svg::color(0));
            chart.line(Some("stabilizer"), pss_line, svg::color(1));
            chart.line(Some("compensated"), total_line, svg::color(2));
            chart.guide(vec![(band.0.log10(), 0.0), (band.1.log10(), 0.0)]);
            out.write(&format!("phase_{slot}.svg"), chart.render().as_bytes())?;
            summary.push(vec![
                slot.clone(),
                gen,
                num(tw),
                num(fit.t1),
                num(fit.t2),
                num(fit.t3),
                num(fit.t4),
                num(fit.rms_deg),
                num(max_band),
                fit.warning.clone().unwrap_or_default(),
            ]);
        }
        out.csv("sweep.csv", &summary)?;
        r.value("source", format!("{:?}", ctx.scenario.sweep_source));
        r.table("Fitted compensators", summary);
        Ok(r)
    }
}
