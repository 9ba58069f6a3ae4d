//! Versioned scenario files and the built-in presets.
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "two-area-50ibr-A",
//!   "system": { "preset": "two-area-50ibr" },
//!   "pss": { "default": "A", "slots": { "PSS4": "B", "PSS2": "off" } },
//!   "disturbances": [{ "kind": "load-step", "bus": 9, "fraction": 0.01, "start": 1.0 }],
//!   "experiment": "simulate"
//! }
//! ```
//!
//! `system` is a preset name, an inline model (`{"model": {...}}`) or an
//! exported state-space file (`{"state_space": {"path": ..., "input": ...,
//! "output": ...}}`). A PSS choice is `"A"`, `"B"`, `"off"` or an explicit
//! parameter object `{"k": .., "tw": .., "t1": .., "t2": .., "t3": .., "t4": ..}`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use psstune::grid::{build_two_area, legacy_set_a, legacy_set_b, IbrShare, PowerSystemModel, PssParams};
use psstune::linear::{read_state_space, StateSpaceModel};
use psstune::sim::{Disturbance, SimOptions};
use psstune::tuning::{PhaseSource, TuningConfig};
use serde::{Deserialize, Serialize};

pub const SCENARIO_VERSION: u32 = 1;

pub const PRESETS: [&str; 2] = ["two-area-0ibr", "two-area-50ibr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub pss: PssAssignment,
    #[serde(default = "default_disturbances")]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub experiment: ExperimentKind,
    /// Tuning method for `retune-*` experiments.
    #[serde(default = "default_method")]
    pub method: String,
    /// Stabilizer slots to tune, in order; empty means every slot.
    #[serde(default)]
    pub slots: Vec<String>,
    #[serde(default)]
    pub simulation: SimOptions,
    #[serde(default)]
    pub tuning: TuningConfig,
    /// Phase source for `pvref-sweep`; the time-domain probe is slow.
    #[serde(default = "default_sweep_source")]
    pub sweep_source: PhaseSource,
}

fn default_disturbances() -> Vec<Disturbance> {
    vec![Disturbance::LoadStep { bus: 9, fraction: 0.01, start: 1.0 }]
}

fn default_method() -> String {
    "pvref".into()
}

fn default_sweep_source() -> PhaseSource {
    PhaseSource::FrozenShaft
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset { preset: String },
    Model { model: Box<PowerSystemModel> },
    StateSpace { state_space: StateSpaceSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceSpec {
    /// Relative paths resolve against the scenario file.
    pub path: PathBuf,
    pub input: String,
    pub output: String,
    #[serde(default = "default_imported_slot")]
    pub slot: String,
}

fn default_imported_slot() -> String {
    "PSS".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PssAssignment {
    /// Applied to every slot not listed in `slots`; absent keeps the model's
    /// own parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<PssChoice>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slots: BTreeMap<String, PssChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PssChoice {
    Named(String),
    Explicit(PssParams),
}

impl PssChoice {
    /// `None` disables the slot.
    pub fn resolve(&self) -> Result<Option<PssParams>> {
        match self {
            PssChoice::Explicit(p) => Ok(Some(p.clone())),
            PssChoice::Named(n) => named_set(n),
        }
    }
}

/// Named legacy parameter sets: `A`, `B` (also `set-A`, `set-B`) and `off`.
pub fn named_set(name: &str) -> Result<Option<PssParams>> {
    match name.trim_start_matches("set-").to_ascii_uppercase().as_str() {
        "A" => Ok(Some(legacy_set_a())),
        "B" => Ok(Some(legacy_set_b())),
        "OFF" | "NONE" => Ok(None),
        _ => bail!("unknown parameter set `{name}` (known: A, B, off)"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Powerflow,
    #[default]
    Modes,
    RootLocus,
    TuneResidues,
    TunePvref,
    RetuneSequential,
    RetuneUncoordinated,
    Simulate,
    PvrefSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Powerflow,
        ExperimentKind::Modes,
        ExperimentKind::RootLocus,
        ExperimentKind::TuneResidues,
        ExperimentKind::TunePvref,
        ExperimentKind::RetuneSequential,
        ExperimentKind::RetuneUncoordinated,
        ExperimentKind::Simulate,
        ExperimentKind::PvrefSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Powerflow => "powerflow",
            ExperimentKind::Modes => "modes",
            ExperimentKind::RootLocus => "root-locus",
            ExperimentKind::TuneResidues => "tune-residues",
            ExperimentKind::TunePvref => "tune-pvref",
            ExperimentKind::RetuneSequential => "retune-sequential",
            ExperimentKind::RetuneUncoordinated => "retune-uncoordinated",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::PvrefSweep => "pvref-sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Scenario {
    /// Scenario on a preset with every slot at `set` (`A`, `B` or `off`).
    pub fn preset(preset: &str, set: &str) -> Result<Self> {
        preset_share(preset)?;
        named_set(set)?;
        Ok(Self {
            version: SCENARIO_VERSION,
            name: format!("{preset}-{set}"),
            description: String::new(),
            system: SystemSpec::Preset { preset: preset.into() },
            pss: PssAssignment { default: Some(PssChoice::Named(set.into())), slots: BTreeMap::new() },
            disturbances: default_disturbances(),
            experiment: ExperimentKind::default(),
            method: default_method(),
            slots: vec![],
            simulation: SimOptions::default(),
            tuning: TuningConfig::default(),
            sweep_source: default_sweep_source(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("scenario schema error at `{path}`: {}", e.into_inner())
        })?;
        if s.version != SCENARIO_VERSION {
            bail!("scenario version {} is not supported (expected {SCENARIO_VERSION})", s.version);
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }
}

fn preset_share(name: &str) -> Result<IbrShare> {
    match name {
        "two-area-0ibr" => Ok(IbrShare::Zero),
        "two-area-50ibr" => Ok(IbrShare::Fifty),
        _ => bail!("unknown preset `{name}` (known: {})", PRESETS.join(", ")),
    }
}

/// Loads a scenario from a file, or from `<preset>` / `<preset>:<set>`.
/// Returns the scenario and the directory relative paths resolve against.
pub fn load_scenario(arg: &str) -> Result<(Scenario, PathBuf)> {
    let (head, set) = arg.split_once(':').unwrap_or((arg, "A"));
    if PRESETS.contains(&head) {
        return Ok((Scenario::preset(head, set)?, PathBuf::from(".")));
    }
    let path = Path::new(arg);
    if !path.exists() && path.extension().is_none() {
        bail!("`{arg}` is neither a scenario file nor a preset (known presets: {})", PRESETS.join(", "));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let s = Scenario::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((s, base))
}

/// What a scenario's `system` resolves to.
#[derive(Debug, Clone)]
pub enum System {
    Network(PowerSystemModel),
    Imported { plant: StateSpaceModel, input: String, output: String, slot: String },
}

/// Builds the model with the scenario's stabilizer assignment applied.
pub fn resolve_system(s: &Scenario, base: &Path) -> Result<System> {
    let mut model = match &s.system {
        SystemSpec::Preset { preset } => build_two_area(preset_share(preset)?),
        SystemSpec::Model { model } => (**model).clone(),
        SystemSpec::StateSpace { state_space: spec } => {
            let path = base.join(&spec.path);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let plant = read_state_space(&text).with_context(|| format!("in {}", path.display()))?;
            plant.input_index(&spec.input)?;
            plant.output_index(&spec.output)?;
            return Ok(System::Imported {
                plant,
                input: spec.input.clone(),
                output: spec.output.clone(),
                slot: spec.slot.clone(),
            });
        }
    };
    let names = model.pss_slot_names();
    for slot in s.pss.slots.keys() {
        if !names.contains(slot) {
            bail!("stabilizer slot `{slot}` does not exist (model has: {})", names.join(", "));
        }
    }
    for name in &names {
        let choice = s.pss.slots.get(name).or(s.pss.default.as_ref());
        if let Some(choice) = choice {
            let params = choice.resolve()?;
            let slot = model.pss_slot_mut(name).expect("listed slot");
            match params {
                Some(p) => {
                    p.validate(name)?;
                    slot.params = p;
                    slot.enabled = true;
                }
                None => slot.enabled = false,
            }
        }
    }
    for slot in &s.slots {
        if !names.contains(slot) {
            bail!("stabilizer slot `{slot}` does not exist (model has: {})", names.join(", "));
        }
    }
    Ok(System::Network(model))
}

/// The scenario with its system replaced by the fully resolved model, so
/// that it no longer depends on presets or named sets.
pub fn freeze(s: &Scenario, system: &System) -> Scenario {
    let mut out = s.clone();
    if let System::Network(model) = system {
        out.system = SystemSpec::Model { model: Box::new(model.clone()) };
        out.pss = PssAssignment::default();
    }
    out
}
