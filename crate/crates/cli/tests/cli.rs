use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mvflow::Error;
use mvflow_cli::config::ScenarioConfig;
use mvflow_cli::{emit_plot_data, load_config, run_scenario, RunManifest, RunOptions, ScenarioKind};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&configs_dir().join(name)).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvflow"))
}

#[test]
fn shipped_configs_round_trip_and_validate() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn round_trip_ignores_key_order() {
    let a = ScenarioConfig::from_toml(
        "scenario = \"lions\"\n[lions]\nfunctional = \"second_moment\"\npoints = [0.0, 1.0]\nys = [0.5]\n",
    )
    .unwrap();
    let b = ScenarioConfig::from_toml(
        "scenario = \"lions\"\n[lions]\nys = [0.5]\npoints = [0.0, 1.0]\nfunctional = \"second_moment\"\n",
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_names_list_the_valid_ones() {
    let mut cfg = config("heat_density.toml");
    cfg.model.as_mut().unwrap().name = "brownian".into();
    match cfg.validate() {
        Err(Error::Usage(m)) => assert!(m.contains("first_order") && m.contains("polynomial"), "{m}"),
        other => panic!("{other:?}"),
    }
    let err = ScenarioConfig::from_toml("scenario = \"sample\"\n").unwrap_err();
    assert!(matches!(err, Error::Usage(ref m) if m.contains("density") && m.contains("lions")), "{err:?}");
    assert!(ScenarioKind::parse("pde").is_ok());
    assert!(matches!(ScenarioKind::parse("pdes"), Err(Error::Usage(_))));
}

#[test]
fn simulate_without_seed_is_a_field_error() {
    let mut cfg = config("simulate_mf_ou.toml");
    cfg.seed = None;
    match cfg.validate() {
        Err(Error::Usage(m)) => assert!(m.contains("missing field `seed`"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn density_run_is_reproducible_and_plottable() {
    let cfg = config("heat_density.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_scenario(&cfg, a.path(), &RunOptions::default()).unwrap();
    let mb = run_scenario(&cfg, b.path(), &RunOptions::default()).unwrap();
    assert_eq!(ma.checksums(), mb.checksums());
    assert!(ma.files.iter().any(|f| f.path == "density.csv"));
    ma.check_files(a.path()).unwrap();
    let read = RunManifest::read(a.path()).unwrap();
    assert_eq!(read.files, ma.files);
    assert_eq!(read.config, cfg);

    let plots = emit_plot_data(a.path()).unwrap();
    let dat = plots.iter().find(|p| p.ends_with("density.dat")).unwrap();
    let text = fs::read_to_string(dat).unwrap();
    assert!(text.starts_with("# s=0 t=0.5 x=(0) K=3\n"), "{}", &text[..60]);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1025);
    let peak = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    assert!((peak - 1.0 / std::f64::consts::PI.sqrt()).abs() <= 1e-6);
}

#[test]
fn tampered_artifacts_fail_the_manifest_check() {
    let cfg = config("lions_sin.toml");
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    fs::write(dir.path().join("lions.json"), "{}").unwrap();
    assert!(matches!(m.check_files(dir.path()), Err(Error::Usage(_))));
    fs::remove_file(dir.path().join("lions.json")).unwrap();
    assert!(matches!(m.check_files(dir.path()), Err(Error::Usage(_))));
}

#[test]
fn picard_history_contracts() {
    let cfg = config("picard_mf_ou.toml");
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(m.verified, Some(true));
    let history: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("history.json")).unwrap()).unwrap();
    let ratios: Vec<f64> = history
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["ratio"].as_f64())
        .collect();
    assert!(ratios.len() >= 2);
    assert!(ratios.iter().all(|r| *r < 1.0), "{ratios:?}");
    let plots = emit_plot_data(dir.path()).unwrap();
    assert!(plots.iter().any(|p| p.ends_with("ratios.dat")));
}

#[test]
fn chaos_table_is_ascending_in_n() {
    let mut cfg = config("chaos_attraction.toml");
    let sim = cfg.simulate.as_mut().unwrap();
    sim.counts = vec![50, 200, 800];
    sim.reference_particles = 5000;
    sim.dt = 0.05;
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    emit_plot_data(dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("chaos.dat")).unwrap();
    let ns: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ns, vec![50.0, 200.0, 800.0]);
}

#[test]
fn plot_data_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_plot_data(dir.path()), Err(Error::Usage(_))));
}

#[test]
fn seed_override_and_scenario_mismatch() {
    let path = configs_dir().join("simulate_mf_ou.toml");
    let cfg = load_config(&path, Some(ScenarioKind::Simulate), Some(99)).unwrap();
    assert_eq!(cfg.seed, Some(99));
    assert!(matches!(load_config(&path, Some(ScenarioKind::Pde), None), Err(Error::Usage(_))));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lions");
    let ok = bin()
        .args(["lions", "--config"])
        .arg(configs_dir().join("lions_sin.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("manifest.json").is_file());

    // An unattainable tolerance is a verification failure, not an error.
    let strict = dir.path().join("strict.toml");
    let text = fs::read_to_string(configs_dir().join("lions_sin.toml")).unwrap().replace("tol = 1e-4", "tol = 1e-30");
    fs::write(&strict, text).unwrap();
    let fail = bin().args(["run", "--config"]).arg(&strict).arg("--out").arg(dir.path().join("f")).output().unwrap();
    assert_eq!(fail.status.code(), Some(2));

    let no_seed = dir.path().join("noseed.toml");
    let text = fs::read_to_string(configs_dir().join("simulate_mf_ou.toml")).unwrap().replace("seed = 20240611\n", "");
    fs::write(&no_seed, text).unwrap();
    let err = bin().args(["simulate", "--config"]).arg(&no_seed).arg("--out").arg(dir.path().join("s")).output().unwrap();
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("missing field `seed`"));

    let bad_env = bin()
        .env("MV_PARAMETRIX_CACHE_MB", "lots")
        .args(["run", "--config"])
        .arg(configs_dir().join("lions_sin.toml"))
        .arg("--out")
        .arg(dir.path().join("e"))
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn binary_runs_are_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    let text = fs::read_to_string(configs_dir().join("simulate_mf_ou.toml"))
        .unwrap()
        .replace("particles = 20000", "particles = 500");
    fs::write(&cfg, text).unwrap();
    let mut sums = Vec::new();
    for (threads, seed) in [("1", "5"), ("4", "5"), ("2", "6")] {
        let out = dir.path().join(format!("t{threads}s{seed}"));
        let st = bin()
            .args(["simulate", "--threads", threads, "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(st.status.success());
        sums.push(RunManifest::read(&out).unwrap().checksums());
    }
    assert_eq!(sums[0], sums[1]);
    assert_ne!(sums[0], sums[2]);
}

#[test]
fn plot_subcommand_lists_files() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--config"])
        .arg(configs_dir().join("lions_sin.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(st.status.success());
    let out = bin().arg("plot").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("relation.dat"));
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(bin().arg("plot").arg(empty.path()).output().unwrap().status.code(), Some(1));
}
