use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn biaslab(args: &[&str], out: &Path) -> (i32, String) {
    let o =
        Command::new(env!("CARGO_BIN_EXE_biaslab")).args(args).arg("--out-dir").arg(out).output().expect("binary runs");
    let text = String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap_or(-1), text)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn step_above_the_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = biaslab(&["sgdr", "--seed", "1", "--eta", "0.5"], dir.path());
    assert_eq!(code, 2, "{text}");
    assert!(!dir.path().join("sgdr.json").exists());
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["sgdr", "nouc", "nonconvex", "becheck", "feldman"] {
        let (code, text) = biaslab(&[cmd, "--trials", "2"], dir.path());
        assert_eq!(code, 2, "{cmd}: {text}");
        assert!(text.contains("--seed"));
    }
}

#[test]
fn bad_names_and_paths_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = biaslab(&["warmup", "--regularizer", "no-such-thing"], dir.path());
    assert_eq!(code, 2);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let (code, _) = biaslab(&["warmup"], &blocker.join("sub"));
    assert_eq!(code, 2);
    let (code, _) = biaslab(&["nonconvex", "--seed", "1", "--c", "0.01"], dir.path());
    assert_eq!(code, 2, "no positive β at c = 0.01");
}

#[test]
fn warmup_emits_a_valid_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) =
        biaslab(&["warmup", "--regularizer", "sq-norm", "--eta", "0.5", "--steps", "100000"], dir.path());
    assert_eq!(code, 0, "{text}");
    let rep = json(&dir.path().join("warmup.json"));
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["passed"], true);
    assert!(rep["regime_checks"].as_array().is_some_and(|c| !c.is_empty()));
    assert_eq!(rep["report"]["certificate"]["valid"], true);
    assert!(rep["report"]["certificate"]["f_gap"].as_f64().unwrap() >= 0.0);
}

#[test]
fn becheck_default_grid_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = biaslab(&["becheck", "--seed", "3"], dir.path());
    assert_eq!(code, 0, "{text}");
    let rep = json(&dir.path().join("becheck.json"));
    let checks = rep["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 36);
    assert!(checks.iter().all(|c| c["pass"] == true));
}

#[test]
fn failed_assertions_exit_with_one() {
    // for the squared norm T_r is far beyond the step cap and the certificate fails
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = biaslab(&["gdr", "--regularizer", "sq-norm", "--max-steps", "20000"], dir.path());
    assert_eq!(code, 1, "{text}");
    let rep = json(&dir.path().join("gdr.json"));
    assert_eq!(rep["passed"], false);
    assert!(!rep["failures"].as_array().unwrap().is_empty());
}

#[test]
fn manifests_reproduce_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for args in [
        &["field", "--grid", "9"][..],
        &["trajectory", "--b", "0,0.1"][..],
        &["sgdr", "--seed", "4", "--trials", "20"][..],
    ] {
        assert_eq!(biaslab(args, a.path()).0, 0);
        assert_eq!(biaslab(args, b.path()).0, 0);
        let manifest = json(&a.path().join("manifest.json"));
        let files = manifest["files"].as_array().unwrap();
        assert!(!files.is_empty());
        for f in files {
            let name = f.as_str().unwrap();
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert!(x == y, "{name} differs between runs");
        }
        assert!(manifest["wall_clock_seconds"].as_f64().is_some());
        assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn flags_beat_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 8\ntrials = 5\n[sgdr]\nsteps = 50\nconstant = 4.0\n").unwrap();
    let out = dir.path().join("out");
    let (code, text) = biaslab(&["sgdr", "--config", cfg.to_str().unwrap(), "--steps", "60"], &out);
    assert_eq!(code, 0, "{text}");
    let rep = json(&out.join("sgdr.json"));
    assert_eq!(rep["seed"], 8);
    assert_eq!(rep["params"]["steps"], 60);
    assert_eq!(rep["params"]["trials"], 5);
    assert_eq!(rep["params"]["constant"], 4.0);

    fs::write(&cfg, "[sgdr]\nstepz = 50\n").unwrap();
    let (code, _) = biaslab(&["sgdr", "--seed", "1", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code, 2);
}

#[test]
fn format_selects_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = biaslab(&["field", "--b", "0.1", "--format", "csv"], dir.path());
    assert_eq!(code, 0);
    assert!(dir.path().join("field_b0.1.csv").exists());
    assert!(!dir.path().join("field_b0.1.svg").exists());
    assert!(!dir.path().join("field.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn field_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = biaslab(&["field", "--b", "0.1", "--grid", "3", "--half-width", "1"], dir.path());
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("field_b0.1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    // (0, 1) lies on the segment: zero arrow
    assert!(rows.contains(&"0,1,0,0"), "{csv}");
    // (0, 0): projection is (0, 1), gradient Σ(w − (0, 1)) = (−½, −1)
    assert!(rows.contains(&"0,0,-0.5,-1"), "{csv}");
}

#[test]
fn trajectory_reports_the_oracle_gap() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = biaslab(&["trajectory", "--b", "0,0.1"], dir.path());
    assert_eq!(code, 0, "{text}");
    let rep = json(&dir.path().join("trajectory.json"));
    for p in rep["report"]["panels"].as_array().unwrap() {
        assert!(p["max_oracle_gap"].as_f64().unwrap() <= 1e-9);
    }
    let svg = fs::read_to_string(dir.path().join("trajectory_b0.1.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray"), "oracle overlay missing");
    let (code, _) = biaslab(&["trajectory", "--eta", "0.4"], dir.path());
    assert_eq!(code, 2);
}
