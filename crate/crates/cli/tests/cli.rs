use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn eotlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eotlab"))
        .args(args)
        .env_remove("EOTLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut all = vec!["run", "--out", out];
    all.extend_from_slice(args);
    eotlab(&all)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect()
}

#[test]
fn presets_table_names_every_hypothesis() {
    let out = eotlab(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, hyp) in [
        ("gaussian1d", "H1/H2"),
        ("gaussian2d", "H1/H2"),
        ("gaussian_lipschitz", "H1/H2"),
        ("cosh_compact", "H3"),
        ("discrete2x2", "closed form"),
        ("custom", "H3"),
    ] {
        let row = text
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("no row for {name}"));
        assert!(row.contains(hyp), "{row}");
    }
}

#[test]
fn presets_json_is_machine_readable() {
    let out = eotlab(&["presets", "--json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 6);
    for p in list {
        for key in [
            "name",
            "hypothesis",
            "description",
            "default_resolution",
            "default_eps",
            "targets",
        ] {
            assert!(p.get(key).is_some(), "{key} missing in {p}");
        }
    }
}

#[test]
fn discrete_run_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = run_in(dir.path(), &["--preset", "discrete2x2"]);
    assert!(t.elapsed() < Duration::from_secs(1), "{:?}", t.elapsed());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert_eq!(csv_rows(&dir.path().join("sweep.csv")).len(), 5);
    let verdicts = json(&dir.path().join("verdicts.json"));
    assert_eq!(verdicts["pass"], true);
    for v in verdicts["verdicts"].as_array().unwrap() {
        for key in [
            "claim_id",
            "paper_anchor",
            "measured",
            "target",
            "tolerance",
            "pass",
        ] {
            assert!(v.get(key).is_some(), "{key} missing in {v}");
        }
    }
    let meta = json(&dir.path().join("run_meta.json"));
    assert_eq!(
        meta["tolerance_table_version"],
        eotlab_core::tolerances::TABLE_VERSION
    );
    assert_eq!(meta["config"]["seed"], 0);
    assert!(meta["wall_time_seconds"]["total"].as_f64().unwrap() >= 0.0);
    // no temporaries are left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}

#[test]
fn gaussian1d_default_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--preset", "gaussian1d"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    let eps: f64 = rows[0].split(',').next().unwrap().parse().unwrap();
    assert_eq!(eps, 0.4);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "--preset",
        "gaussian1d",
        "--resolution",
        "64",
        "--seed",
        "11",
    ];
    for d in [&a, &b] {
        let out = run_in(d.path(), &args);
        assert!(out.status.code().is_some_and(|c| c <= 1));
    }
    for f in ["sweep.csv", "verdicts.json"] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn invalid_configurations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        vec!["--preset", "gaussian1d", "--eps", "0.025,0.05,0.1,0.2,0.4"],
        vec!["--preset", "gaussian1d", "--eps", "0.4,0.2,-0.1"],
        vec!["--preset", "gaussian1d", "--resolution", "100"],
        vec!["--preset", "gaussian1d", "--resolution", "8192"],
        vec!["--preset", "gaussian2d", "--resolution", "128"],
        vec!["--preset", "no_such_preset"],
        vec![],
    ];
    for args in bad {
        let out = run_in(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(
        std::fs::read_dir(dir.path())
            .map(|d| d.count())
            .unwrap_or(0),
        0
    );
}

#[test]
fn config_files_are_fail_closed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    let out_dir = dir.path().join("out");
    let cases = [
        ("preset = discrete2x2\nsigma = 1\n", Some(2)),
        ("preset = discrete2x2\ntolerance.identty = 1\n", Some(2)),
        ("preset = discrete2x2\ntolerance.identity = 1\n", Some(2)),
        ("preset = discrete2x2\nsd0 = 2\n", Some(2)),
        ("preset = custom\ncost = sinh\n", Some(2)),
        (
            "# two atoms\npreset = discrete2x2\nseed = 4\neps_list = 0.4, 0.2, 0.1\n",
            Some(0),
        ),
    ];
    for (text, code) in cases {
        std::fs::write(&path, format!("{text}output_dir = {}\n", out_dir.display())).unwrap();
        let out = eotlab(&["run", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), code, "{text}");
    }
    assert_eq!(csv_rows(&out_dir.join("sweep.csv")).len(), 3);
    assert_eq!(json(&out_dir.join("run_meta.json"))["config"]["seed"], 4);
    let missing = eotlab(&["run", "--config", "/nonexistent/exp.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verdict_failure_exits_1_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.cfg");
    std::fs::write(&cfg, "preset = discrete2x2\ntolerance.envelope_rel = 0\n").unwrap();
    let out_dir = dir.path().join("o");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    // overrides need the explicit flag
    assert_eq!(eotlab(&args).status.code(), Some(2));
    assert!(!out_dir.exists());
    let mut with_flag = args.to_vec();
    with_flag.push("--override-tolerances");
    let out = eotlab(&with_flag);
    assert_eq!(out.status.code(), Some(1));
    let meta = json(&dir.path().join("o/run_meta.json"));
    assert_eq!(meta["tolerance_overrides"], Value::Null);
    assert_eq!(meta["config"]["tolerance_overrides"]["envelope_rel"], 0.0);
    assert_eq!(meta["exit_code"], 1);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    for (v, code) in [("0", 2), ("many", 2), ("1", 0)] {
        let out = Command::new(env!("CARGO_BIN_EXE_eotlab"))
            .args([
                "run",
                "--preset",
                "discrete2x2",
                "--out",
                dir.path().to_str().unwrap(),
            ])
            .env("EOTLAB_THREADS", v)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(code), "EOTLAB_THREADS={v}");
    }
    let meta = json(&dir.path().join("run_meta.json"));
    assert_eq!(meta["threads"], 1);
}
