use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use psstune::tuning::PhaseSource;
use psstune_harness::{run_experiment, Context, ExperimentKind};

/// Small-signal analysis, PSS tuning and time-domain validation.
///
/// `--scenario` takes a scenario JSON file or a preset name with an optional
/// parameter set: `two-area-0ibr`, `two-area-50ibr:B`, `two-area-50ibr:off`.
/// Results go to `<out-dir>/<scenario>/<experiment>/`.
#[derive(Parser)]
#[command(name = "psstune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file or `<preset>[:<set>]`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SlotArgs {
    /// Stabilizer slots, comma separated; defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    slot: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Residues,
    Pvref,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Uncoordinated,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow.
    Powerflow(Common),
    /// Eigenvalues, damping, classes and participation.
    Modes(Common),
    /// Gain sweep of installed stabilizers.
    Rootlocus {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slots: SlotArgs,
    },
    /// Tune each listed stabilizer against the scenario as loaded.
    Tune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slots: SlotArgs,
        #[arg(long, value_enum, default_value = "residues")]
        method: Method,
    },
    /// Re-tune several stabilizers sequentially or independently.
    Retune {
        #[command(flatten)]
        common: Common,
        /// Slots in tuning order.
        #[arg(long, value_delimiter = ',')]
        order: Vec<String>,
        #[arg(long, value_enum, default_value = "sequential")]
        mode: Mode,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Time-domain simulation; exit status 0 when stable, 2 when not.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// P-Vref phase sweep and lead-lag fit per stabilizer.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slots: SlotArgs,
        /// Measure the phase with the time-domain probe instead of the
        /// frozen-shaft transfer function.
        #[arg(long)]
        probe: bool,
    },
    /// Run the experiment named in the scenario.
    Report(Common),
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Residues => "residues",
        Method::Pvref => "pvref",
    }
}

fn run(cli: Cli) -> Result<i32> {
    let (common, kind, edit): (Common, Option<ExperimentKind>, Box<dyn FnOnce(&mut Context)>) = match cli.command {
        Command::Powerflow(c) => (c, Some(ExperimentKind::Powerflow), Box::new(|_| {})),
        Command::Modes(c) => (c, Some(ExperimentKind::Modes), Box::new(|_| {})),
        Command::Rootlocus { common, slots } => (common, Some(ExperimentKind::RootLocus), set_slots(slots.slot)),
        Command::Tune { common, slots, method } => {
            let kind = match method {
                Method::Residues => ExperimentKind::TuneResidues,
                Method::Pvref => ExperimentKind::TunePvref,
            };
            (common, Some(kind), set_slots(slots.slot))
        }
        Command::Retune { common, order, mode, method } => {
            let kind = match mode {
                Mode::Sequential => ExperimentKind::RetuneSequential,
                Mode::Uncoordinated => ExperimentKind::RetuneUncoordinated,
            };
            let slots = set_slots(order);
            (
                common,
                Some(kind),
                Box::new(move |ctx: &mut Context| {
                    slots(ctx);
                    if let Some(m) = method {
                        ctx.scenario.method = method_name(m).into();
                    }
                }),
            )
        }
        Command::Simulate { common, t_end, dt } => (
            common,
            Some(ExperimentKind::Simulate),
            Box::new(move |ctx: &mut Context| {
                if let Some(t) = t_end {
                    ctx.scenario.simulation.t_end = t;
                }
                if let Some(h) = dt {
                    ctx.scenario.simulation.dt = h;
                }
            }),
        ),
        Command::Sweep { common, slots, probe } => {
            let slots = set_slots(slots.slot);
            (
                common,
                Some(ExperimentKind::PvrefSweep),
                Box::new(move |ctx: &mut Context| {
                    slots(ctx);
                    if probe {
                        ctx.scenario.sweep_source = PhaseSource::Probe;
                    }
                }),
            )
        }
        Command::Report(c) => (c, None, Box::new(|_| {})),
    };
    let mut ctx = Context::load(&common.scenario)?;
    edit(&mut ctx);
    let kind = kind.unwrap_or(ctx.scenario.experiment);
    if let psstune_harness::scenario::System::Network(m) = &ctx.system {
        let names = m.pss_slot_names();
        if let Some(bad) = ctx.scenario.slots.iter().find(|s| !names.contains(s)) {
            anyhow::bail!("stabilizer slot `{bad}` does not exist (model has: {})", names.join(", "));
        }
    }
    let outcome = run_experiment(&ctx, kind, &common.out_dir)?;
    // a closed pipe (e.g. `| head`) must not turn a finished run into a panic
    let mut out = std::io::stdout().lock();
    for (k, v) in &outcome.report.values {
        let _ = writeln!(out, "{k}: {v}");
    }
    let _ = writeln!(out, "output: {}", outcome.dir.display());
    Ok(outcome.exit_status)
}

fn set_slots(slots: Vec<String>) -> Box<dyn FnOnce(&mut Context)> {
    Box::new(move |ctx: &mut Context| {
        if !slots.is_empty() {
            ctx.scenario.slots = slots;
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
