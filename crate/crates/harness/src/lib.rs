//! Scenario files, experiment drivers and report emission for `psstune`.
//!
//! A run loads a [`scenario::Scenario`] (a file or a preset name), resolves
//! it into a model, executes one experiment from the
//! [`experiments::ExperimentRegistry`] and writes CSV tables, SVG plots, a
//! Markdown report and `manifest.json` into a per-run directory.

pub mod experiments;
pub mod output;
pub mod scenario;
pub mod svg;

pub use experiments::{run_experiment, Context, Experiment, ExperimentRegistry, RunOutcome};
pub use scenario::{load_scenario, ExperimentKind, Scenario};
