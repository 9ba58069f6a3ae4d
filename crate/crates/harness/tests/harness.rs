use std::path::Path;
use std::process::Command;

use psstune::grid::{build_two_area, legacy_set_b, solve_power_flow, IbrShare};
use psstune::linear::write_state_space;
use psstune::tuning::{open_loop_plant, tune_residues, TuningConfig};
use psstune_harness::experiments::{params_row, parameter_table};
use psstune_harness::scenario::{resolve_system, System};
use psstune_harness::{run_experiment, Context, ExperimentKind, Scenario};

fn network(arg: &str) -> psstune::grid::PowerSystemModel {
    match Context::load(arg).unwrap().system {
        System::Network(m) => m,
        System::Imported { .. } => panic!("expected a network"),
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn named_sets_expand_to_the_legacy_strings() {
    let m = network("two-area-0ibr:set-A");
    let t = parameter_table(&m, &m.pss_slot_names());
    assert_eq!(t.rows.len(), 4);
    for row in &t.rows {
        assert_eq!(row[1..], ["true", "20", "10", "0.4863", "0.1415", "0.4863", "0.1415"]);
    }
    let m = network("two-area-50ibr:B");
    assert_eq!(m.pss_slot_names(), ["PSS2", "PSS4"]);
    let hosts: Vec<u32> = m.machines.iter().map(|g| g.bus).collect();
    assert_eq!(hosts, [2, 4]);
    for s in m.pss_slot_names() {
        assert_eq!(params_row(&m.pss_slot(&s).unwrap().params), ["40", "10", "0.2460", "0.0352", "0.2460", "0.0352"]);
    }
    let m = network("two-area-50ibr:off");
    assert!(m.machines.iter().all(|g| !g.pss.as_ref().unwrap().enabled));
}

#[test]
fn per_slot_assignment_overrides_the_default() {
    let text = r#"{
        "version": 1, "name": "mixed",
        "system": {"preset": "two-area-50ibr"},
        "pss": {"default": "A", "slots": {"PSS2": "off", "PSS4": {"k": 5, "tw": 10, "t1": 0.3, "t2": 0.1, "t3": 1, "t4": 1}}}
    }"#;
    let s = Scenario::from_json(text).unwrap();
    let System::Network(m) = resolve_system(&s, Path::new(".")).unwrap() else { panic!() };
    assert!(!m.pss_slot("PSS2").unwrap().enabled);
    let p = &m.pss_slot("PSS4").unwrap().params;
    assert_eq!((p.k, p.t1, p.v_max), (5.0, 0.3, 0.1));
}

#[test]
fn schema_errors_name_the_key() {
    let bad_type = r#"{"version": 1, "name": "x", "system": {"preset": "two-area-0ibr"}, "tuning": {"gain_points": "many"}}"#;
    let e = Scenario::from_json(bad_type).unwrap_err().to_string();
    assert!(e.contains("tuning.gain_points"), "{e}");
    let unknown = r#"{"version": 1, "name": "x", "system": {"preset": "two-area-0ibr"}, "disturbance": []}"#;
    let e = Scenario::from_json(unknown).unwrap_err().to_string();
    assert!(e.contains("disturbance"), "{e}");
    let version = r#"{"version": 7, "name": "x", "system": {"preset": "two-area-0ibr"}}"#;
    assert!(Scenario::from_json(version).is_err());
    assert!(Context::load("two-area-75ibr").is_err());
    assert!(Context::load("two-area-0ibr:C").is_err());
}

#[test]
fn frozen_scenario_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::load("two-area-50ibr:B").unwrap();
    let first = run_experiment(&ctx, ExperimentKind::Modes, dir.path()).unwrap();
    let frozen = first.dir.join("scenario.json");
    let again = Context::load(frozen.to_str().unwrap()).unwrap();
    let second = run_experiment(&again, ExperimentKind::Modes, &dir.path().join("again")).unwrap();
    for f in ["modes.csv", "pss.csv", "scenario.json", "poles.svg"] {
        let a = std::fs::read(first.dir.join(f)).unwrap();
        let b = std::fs::read(second.dir.join(f)).unwrap();
        assert!(a == b, "{f} differs after the round trip");
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::load("two-area-50ibr:A").unwrap();
    let a = run_experiment(&ctx, ExperimentKind::TuneResidues, &dir.path().join("a")).unwrap();
    let b = run_experiment(&ctx, ExperimentKind::TuneResidues, &dir.path().join("b")).unwrap();
    let ma = std::fs::read_to_string(a.dir.join("manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.dir.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let manifest: serde_json::Value = serde_json::from_str(&ma).unwrap();
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for f in ["tuning.csv", "rootlocus_PSS2.svg", "locus_PSS4.csv", "report.md", "pss.csv"] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
    }
}

#[test]
fn mode_table_labels_electromechanical_modes() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::load("two-area-0ibr:off").unwrap();
    let out = run_experiment(&ctx, ExperimentKind::Modes, dir.path()).unwrap();
    let rows = csv_rows(&out.dir.join("modes.csv"));
    let rotor: Vec<&Vec<String>> = rows.iter().filter(|r| r[6] == "true").collect();
    assert!(rotor.iter().any(|r| r[5] == "inter-area"));
    assert_eq!(rotor.iter().filter(|r| r[5] == "local").count(), 2);
    // oracle: the same eigenvalues straight from the library
    let m = network("two-area-0ibr:off");
    let op = solve_power_flow(&m).unwrap();
    let ss = psstune::linear::linearize(&m, &op, &[], &[]).unwrap();
    let set = psstune::modal::eigen_modes(&ss).unwrap();
    let (j, xi) = set.least_damped_rotor_mode().unwrap();
    let row = rows.iter().find(|r| r[0] == j.to_string()).unwrap();
    assert_eq!(row[4].parse::<f64>().unwrap(), xi);
    assert_eq!(row[1].parse::<f64>().unwrap(), set.modes[j].eigenvalue.re);
}

#[test]
fn retune_writes_a_runnable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut ctx = Context::load("two-area-50ibr:B").unwrap();
    ctx.scenario.slots = vec!["PSS4".into(), "PSS2".into()];
    let out = run_experiment(&ctx, ExperimentKind::RetuneSequential, dir.path()).unwrap();
    let rows = csv_rows(&out.dir.join("tuning.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["PSS4", "PSS2"]);
    let next = Context::load(out.dir.join("retuned.json").to_str().unwrap()).unwrap();
    let sim = run_experiment(&next, ExperimentKind::Simulate, dir.path()).unwrap();
    assert_eq!(sim.exit_status, 0);
    let values: std::collections::BTreeMap<_, _> = sim.report.values.iter().cloned().collect();
    assert_eq!(values["verdict"], "decaying");
    assert_eq!(values["modal_agrees"], "true");
}

#[test]
fn imported_state_space_is_tunable() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = build_two_area(IbrShare::Fifty);
    m.set_all_pss(&legacy_set_b());
    let op = solve_power_flow(&m).unwrap();
    let (plant, input, output) = open_loop_plant(&m, &op, "PSS4").unwrap();
    std::fs::write(dir.path().join("plant.csv"), write_state_space(&plant)).unwrap();
    let scenario = format!(
        r#"{{"version": 1, "name": "imported", "experiment": "tune-residues",
            "system": {{"state_space": {{"path": "plant.csv", "input": "{input}", "output": "{output}", "slot": "PSS4"}}}}}}"#
    );
    let path = dir.path().join("imported.json");
    std::fs::write(&path, scenario).unwrap();
    let ctx = Context::load(path.to_str().unwrap()).unwrap();
    let out = run_experiment(&ctx, ExperimentKind::TuneResidues, &dir.path().join("out")).unwrap();
    let rows = csv_rows(&out.dir.join("tuning.csv"));
    let direct = tune_residues(&m, &op, "PSS4", &TuningConfig::default()).unwrap();
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), direct.params.tw);
    let t1: f64 = rows[0][4].parse().unwrap();
    assert!((t1 - direct.params.t1).abs() <= 1e-9 * direct.params.t1);
    let xi: f64 = rows[0][8].parse().unwrap();
    assert!((xi - direct.min_damping()).abs() <= 1e-6);
    // network-only experiments refuse an imported model
    assert!(run_experiment(&ctx, ExperimentKind::Simulate, &dir.path().join("out")).is_err());
    assert!(run_experiment(&ctx, ExperimentKind::TunePvref, &dir.path().join("out")).is_err());
    // modes work on the imported matrix alone
    assert!(run_experiment(&ctx, ExperimentKind::Modes, &dir.path().join("out")).is_ok());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_psstune")).args(args).output().unwrap()
}

#[test]
fn simulate_exit_status_reflects_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let stable = cli(&["simulate", "--scenario", "two-area-0ibr:A", "--out-dir", d, "--t-end", "12"]);
    assert_eq!(stable.status.code(), Some(0), "{}", String::from_utf8_lossy(&stable.stderr));
    let unstable = cli(&["simulate", "--scenario", "two-area-50ibr:A", "--out-dir", d, "--t-end", "12"]);
    assert_eq!(unstable.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unstable.stdout).contains("verdict: growing"));
    let error = cli(&["simulate", "--scenario", "no-such-file.json", "--out-dir", d]);
    assert_eq!(error.status.code(), Some(1));
    assert!(!error.stderr.is_empty());
    let bad_slot = cli(&["tune", "--scenario", "two-area-50ibr:A", "--slot", "PSS1", "--out-dir", d]);
    assert_eq!(bad_slot.status.code(), Some(1));
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let runs: [&[&str]; 8] = [
        &["powerflow", "--scenario", "two-area-0ibr"],
        &["modes", "--scenario", "two-area-0ibr"],
        &["rootlocus", "--scenario", "two-area-50ibr:B", "--slot", "PSS4"],
        &["tune", "--scenario", "two-area-50ibr:B", "--slot", "PSS4", "--method", "pvref"],
        &["retune", "--scenario", "two-area-50ibr:A", "--mode", "uncoordinated", "--method", "residues"],
        &["simulate", "--scenario", "two-area-0ibr:off", "--t-end", "20"],
        &["sweep", "--scenario", "two-area-0ibr:off", "--slot", "PSS2"],
        &["report", "--scenario", "two-area-50ibr:off"],
    ];
    let dirs = ["powerflow", "modes", "root-locus", "tune-pvref", "retune-uncoordinated", "simulate", "pvref-sweep", "modes"];
    for (args, sub) in runs.iter().zip(dirs) {
        let mut full = args.to_vec();
        full.extend(["--out-dir", d]);
        let o = cli(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let scenario = args[2].replace(':', "-");
        let scenario = if scenario.contains('-') && !scenario.ends_with("ibr") { scenario } else { format!("{scenario}-A") };
        let run = dir.path().join(&scenario).join(sub);
        assert!(run.join("manifest.json").is_file(), "{}", run.display());
        assert!(run.join("report.md").is_file());
    }
    let svg = std::fs::read_to_string(dir.path().join("two-area-0ibr-off/simulate/trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("G4.P"));
}
