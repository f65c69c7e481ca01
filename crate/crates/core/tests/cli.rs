use mssfm::cli::*;
use std::path::{Path, PathBuf};

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SIMULATE: &str = r#"{
  "params": {"n": 2, "gamma": 1.0, "beta": [1.0], "loss": {"kind": "constant", "alpha0": 0.05},
             "epsilon": 1.0, "m_units": 1, "noise_density": 0.5},
  "master_seed": 3,
  "options": {"input": [[1.0, 0.0], [0.0, 2.0]], "trials": 400}
}"#;

const INEQUALITIES: &str = r#"{
  "params": {"gamma": 1.0, "noise_density": 1.0, "z": 1.0},
  "options": {"points": 500}
}"#;

fn flags(seed: Option<u64>, workers: Option<usize>, out: &Path) -> Overrides {
    Overrides { seed, workers, out: Some(out.to_path_buf()) }
}

#[test]
fn minimal_config_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "c.json", SIMULATE);
    let cfg = parse_config(Command::Simulate, Some(&cfg_path), &Overrides::default(), None).unwrap();
    let Some(ModelParams::Fiber(p)) = &cfg.params else { panic!("fiber params expected") };
    assert_eq!(p.sub_steps, 64);
    assert_eq!(p.time_step, 1.0);
    assert_eq!(cfg.workers_source, WorkerSource::Default);
    assert!(cfg.workers >= 1);
}

#[test]
fn negative_gamma_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "c.json", &SIMULATE.replace("\"gamma\": 1.0", "\"gamma\": -1.0"));
    let err = parse_config(Command::Simulate, Some(&cfg_path), &Overrides::default(), None).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    assert!(err.to_string().contains("gamma"), "{err}");
}

#[test]
fn unknown_and_missing_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "a.json", &SIMULATE.replace("\"master_seed\"", "\"master_sead\""));
    let err = parse_config(Command::Simulate, Some(&p), &Overrides::default(), None).unwrap_err();
    assert!(err.to_string().contains("master_sead"), "{err}");
    let p = write_config(dir.path(), "b.json", &SIMULATE.replace("\"epsilon\": 1.0,", ""));
    let err = parse_config(Command::Simulate, Some(&p), &Overrides::default(), None).unwrap_err();
    assert!(err.to_string().contains("epsilon"), "{err}");
    let p = write_config(dir.path(), "c.json", &SIMULATE.replace("\"n\": 2", "\"n\": \"two\""));
    let err = parse_config(Command::Simulate, Some(&p), &Overrides::default(), None).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn flags_override_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let body = SIMULATE.replace("\"master_seed\": 3", "\"master_seed\": 3, \"workers\": 2");
    let cfg_path = write_config(dir.path(), "c.json", &body);
    let out = dir.path().join("out");
    let cfg = parse_config(Command::Simulate, Some(&cfg_path), &flags(Some(7), None, &out), Some("5")).unwrap();
    assert_eq!(cfg.master_seed, 7);
    assert_eq!((cfg.workers, cfg.workers_source), (5, WorkerSource::Env));
    let cfg = parse_config(Command::Simulate, Some(&cfg_path), &flags(None, Some(1), &out), Some("5")).unwrap();
    assert_eq!((cfg.master_seed, cfg.workers, cfg.workers_source), (3, 1, WorkerSource::Flag));
    let cfg = parse_config(Command::Simulate, Some(&cfg_path), &Overrides::default(), None).unwrap();
    assert_eq!((cfg.workers, cfg.workers_source), (2, WorkerSource::File));
    assert!(parse_config(Command::Simulate, Some(&cfg_path), &Overrides::default(), Some("many")).is_err());

    let (_, manifest) = run(&parse_config(Command::Simulate, Some(&cfg_path), &flags(Some(7), None, &out), Some("5")).unwrap()).unwrap();
    let text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let back: RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back, manifest);
    assert_eq!(back.config.master_seed, 7);
    assert_eq!(back.config.workers_source, WorkerSource::Env);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "c.json", SIMULATE);
    let mut digests = Vec::new();
    for (i, w) in [1usize, 4, 1].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let cfg = parse_config(Command::Simulate, Some(&cfg_path), &flags(None, Some(*w), &out), None).unwrap();
        let (_, m) = run(&cfg).unwrap();
        digests.push(m.outputs);
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0], digests[2]);
    let a = std::fs::read(dir.path().join("run0/simulate.csv")).unwrap();
    let b = std::fs::read(dir.path().join("run1/simulate.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "c.json", SIMULATE);
    let out = dir.path().join("o");
    let cfg = parse_config(Command::Simulate, Some(&cfg_path), &flags(None, Some(1), &out), None).unwrap();
    run(&cfg).unwrap();
    let text = std::fs::read_to_string(out.join("simulate.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "trial,coordinate,re,im");
    for line in lines.take(20) {
        let f: Vec<&str> = line.split(',').collect();
        let v: f64 = f[2].parse().unwrap();
        assert_eq!(format!("{v:.16e}"), f[2]);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "ok.json", INEQUALITIES);
    let out = dir.path().join("o");
    let status = main_with(["mssfm", "check-inequalities", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(status, EXIT_OK);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["checks"].as_array().unwrap().len(), 4);

    let bad = write_config(dir.path(), "bad.json", &INEQUALITIES.replace("\"z\": 1.0", "\"z\": -1.0"));
    assert_eq!(main_with(["mssfm", "check-inequalities", "--config", bad.to_str().unwrap()], None), EXIT_CONFIG);
    assert_eq!(main_with(["mssfm", "no-such-command"], None), EXIT_CONFIG);
    let missing = dir.path().join("missing.json");
    assert_eq!(main_with(["mssfm", "check-inequalities", "--config", missing.to_str().unwrap()], None), EXIT_IO);
    // output directory blocked by a regular file
    let blocker = write_config(dir.path(), "blocker", "x");
    let status = main_with(
        ["mssfm", "check-inequalities", "--config", good.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()],
        None,
    );
    assert_eq!(status, EXIT_IO);

    // an assertion failure: an escape grid whose top point is still inside the disk
    let escape = r#"{
      "params": {"n": 2, "gamma": 1.0, "beta": [1.0], "epsilon": 1.0, "m_units": 1, "noise_density": 1.0},
      "options": {"kappa_grid": [0.01, 0.02], "c": 1.0, "trials": 2000}
    }"#;
    let esc = write_config(dir.path(), "esc.json", escape);
    let out = dir.path().join("esc");
    assert_eq!(main_with(["mssfm", "escape", "--config", esc.to_str().unwrap(), "--out", out.to_str().unwrap()], None), EXIT_ASSERTION);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn command_mismatch_and_misplaced_params() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &SIMULATE.replacen('{', "{\"command\": \"escape\",", 1));
    assert!(parse_config(Command::Simulate, Some(&p), &Overrides::default(), None).is_err());
    let p = write_config(dir.path(), "d.json", INEQUALITIES);
    assert!(parse_config(Command::Simulate, Some(&p), &Overrides::default(), None).is_err());
    assert!(parse_config(Command::IdentityCheck, Some(&p), &Overrides::default(), None).is_err());
}

#[test]
fn sweep_writes_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
      "params": {"n": 2, "gamma": 1.0, "beta": [1.0], "loss": {"kind": "constant", "alpha0": 0.05},
                 "epsilon": 1.0, "sub_steps": 8, "m_units": 1, "noise_density": 1.0},
      "sweep": {"p_grid": [10, 100, 1000, 10000, 100000, 1000000], "trials_per_point": 3000,
                "input_law": {"kind": "half_gaussian_amplitude"}}
    }"#;
    let p = write_config(dir.path(), "s.json", body);
    let out = dir.path().join("o");
    let cfg = parse_config(Command::Sweep, Some(&p), &flags(Some(1), Some(1), &out), None).unwrap();
    let (outcome, _) = run(&cfg).unwrap();
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(text.starts_with("P_watts,mi_nats,stderr,near_singular\n"));
    let slope = outcome.summary["top_fit"]["slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() < 0.1, "{slope}");
}
