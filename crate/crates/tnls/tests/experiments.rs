use std::path::Path;
use std::process::Command;

use tnls::experiments::{bundle, run_scenario, Config, InitSpec, ScenarioName};
use tnls::Error;

fn cfg(text: &str) -> Config {
    Config::from_toml(text).unwrap()
}

fn tnls_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_tnls")).args(args).output().unwrap().status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sections_parse_and_fill_defaults() {
    let c = cfg("[grid]\ndim = 5\nm = 2000\n\n[evolution]\ndt = 0.001\n\n[profiles]\nk = 2\n\n[scenario]\nseed = 9\nname = \"classify-crit\"\n");
    assert_eq!((c.grid.dim, c.grid.m, c.grid.r_max), (5, 2000, 100.0));
    assert_eq!(c.evolution.dt, 0.001);
    assert_eq!(c.profiles.k, 2);
    assert_eq!(c.scenario.seed, 9);
    assert_eq!(c.resolve("classify").unwrap(), ScenarioName::ClassifyCrit);
    assert!(c.resolve("special").is_err());
    assert_eq!(cfg("").resolve("special").unwrap(), ScenarioName::SpecialMinus);
    assert_eq!(cfg("[profiles]\na = 1.0").resolve("special").unwrap(), ScenarioName::SpecialPlus);
    assert_eq!(cfg("").resolve("classify").unwrap(), ScenarioName::ClassifySub);
    for name in ScenarioName::ALL {
        assert_eq!(name.as_str().parse::<ScenarioName>().unwrap(), name);
    }
}

#[test]
fn bad_configs_are_rejected() {
    assert!(matches!(Config::from_toml("[grid]\nbogus = 1"), Err(Error::Config(_))));
    assert!(matches!(Config::from_toml("[grid]\ndim = \"three\""), Err(Error::Config(_))));
    assert!(matches!(Config::from_toml("[nope]\nx = 1"), Err(Error::Config(_))));
    for bad in ["[profiles]\nk = 0", "[profiles]\ns0 = 1.5", "[scenario]\ndelta = 0.0", "[scenario]\nresolutions = [4000]", "[evolution]\ndt = -1.0", "[grid]\ndim = 2"] {
        assert!(cfg(bad).validate().is_err(), "{bad}");
        assert!(run_scenario(&cfg(bad), ScenarioName::Ground, None).is_err(), "{bad}");
    }
    assert!("gauss".parse::<InitSpec>().is_err());
    assert!(Config::load("/nonexistent/config.toml").is_err());
}

#[test]
fn ground_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&Config::default(), ScenarioName::Ground, Some(dir.path())).unwrap();
    assert!(s.pass, "{:?}", s.failed_checks());
    for f in ["summary.json", "ground.json", "W.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ground.json")).unwrap()).unwrap();
    for k in ["dim", "h1_W", "energy_W", "sobolev_CN", "checks"] {
        assert!(!g[k].is_null(), "{k}");
    }
}

#[test]
fn spectrum_summary_and_determinism() {
    let c = cfg("[scenario]\ncoercivity_trials = 20\nseed = 3\ndrift_m = 6000");
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = run_scenario(&c, ScenarioName::Spectrum, Some(d1.path())).unwrap();
    run_scenario(&c, ScenarioName::Spectrum, Some(d2.path())).unwrap();
    assert!(s.pass, "{:?}", s.failed_checks());
    for k in ["e0", "residual", "Q_W_ratio", "coercivity_min"] {
        assert!(s.values[k].is_finite(), "{k}");
    }
    let b = bundle(&s);
    for k in ["dim", "e0", "residual", "QW_over_h1W", "coercivity_min", "B_Yp_Ym"] {
        assert!(!b[k].is_null(), "{k}");
    }
    for f in ["summary.json", "spectrum.json", "Y1.csv", "plot_data.csv"] {
        let (a, b) = (std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn evolve_scenario_reports_a_completed_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[evolution]\nt_end = 0.5\n\n[scenario]\ninit = \"scaledW:0.9\"");
    let s = run_scenario(&c, ScenarioName::Evolve, Some(dir.path())).unwrap();
    assert!(s.pass, "{:?}", s.failed_checks());
    assert_eq!(s.notes["forward_endpoint"], "completed");
    assert!(s.values["forward_sup_h1_ratio"] < 1.0);
    assert!(dir.path().join("trajectory.csv").exists() && dir.path().join("endpoint.json").exists());
    // an unreadable initial datum fails a stage, not the call
    let bad = cfg("[scenario]\ninit = \"file:/nonexistent.csv\"");
    let s = run_scenario(&bad, ScenarioName::Evolve, None).unwrap();
    assert!(!s.pass && s.stages.iter().any(|st| !st.ok));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "[grid]\ndim = 4\n");
    let coarse = write(dir.path(), "coarse.toml", "[grid]\nm = 40\n");
    let broken = write(dir.path(), "broken.toml", "[grid\n");
    let out = dir.path().join("out");
    assert_eq!(tnls_cli(&["ground", "--config", &good, "--out", out.to_str().unwrap(), "--seed", "5"]), 0);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!((s["dim"].as_u64(), s["seed"].as_u64()), (Some(4), Some(5)));
    // a 40-node grid misses the 1e-8 identities
    assert_eq!(tnls_cli(&["ground", "--config", &coarse]), 1);
    assert_eq!(tnls_cli(&["ground", "--config", &broken]), 2);
    assert_eq!(tnls_cli(&["special", "--config", &good, "--sign", "plus", "--dim", "0"]), 2);
    assert_ne!(tnls_cli(&["ground"]), 0);
}
