//! End-to-end runs of the `wioptnd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn wioptnd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wioptnd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 4] = ["--set", "sim.duration_s=0.5", "--set", "sim.device_count=3"];

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", p(dir)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    wioptnd(&args)
}

#[test]
fn run_writes_every_artifact() {
    let d = tempdir().unwrap();
    let o = run_into(d.path(), &["--seed", "42"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "raster.csv",
        "trace.jsonl",
        "trace_summary.json",
        "metrics.csv",
        "config.json",
    ] {
        assert!(d.path().join(f).exists(), "{f} missing");
    }
    assert!(!d.path().join("bank.json").exists());
    assert!(stdout(&o).contains("gamma_stim="));

    let r = wioptnd(&["replay", "--dir", p(d.path())]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("\"total_spikes\""));
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let args = [
        "--seed",
        "7",
        "--set",
        "sim.protocol=psdw_markov",
        "--set",
        "sim.frequency_count=6",
    ];
    assert_eq!(code(&run_into(a.path(), &args)), 0);
    assert_eq!(code(&run_into(b.path(), &args)), 0);
    for f in [
        "raster.csv",
        "trace.jsonl",
        "trace_summary.json",
        "metrics.csv",
        "bank.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempdir().unwrap();
    let mut other = args;
    other[1] = "8";
    run_into(c.path(), &other);
    assert_ne!(
        fs::read(a.path().join("raster.csv")).unwrap(),
        fs::read(c.path().join("raster.csv")).unwrap()
    );
}

#[test]
fn sidecar_reproduces_the_run() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    assert_eq!(
        code(&run_into(
            a.path(),
            &["--seed", "3", "--set", "sim.protocol=psdw_random"]
        )),
        0
    );
    let sidecar = a.path().join("config.json");
    let o = wioptnd(&["run", "--config", p(&sidecar), "--out", p(b.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.jsonl", "metrics.csv", "config.json", "bank.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn json_format() {
    let d = tempdir().unwrap();
    assert_eq!(code(&run_into(d.path(), &["--format", "json"])), 0);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("metrics.json")).unwrap()).unwrap();
    assert!(m.to_string().contains("gamma_stim"));
    assert!(d.path().join("raster.json").exists());
}

#[test]
fn exit_codes() {
    let d = tempdir().unwrap();
    let bad_key = wioptnd(&["validate", "--set", "sim.bogus=1"]);
    assert_eq!(code(&bad_key), 2);
    let bad_value = wioptnd(&["validate", "--set", "sim.window_width=0"]);
    assert_eq!(code(&bad_value), 2);
    assert!(stdout(&bad_value).contains("sim.window_width"));

    let over_cap = wioptnd(&["validate", "--set", "energy.i_s_mw_cm2=800"]);
    assert_eq!(code(&over_cap), 3);
    assert!(String::from_utf8_lossy(&over_cap.stderr).contains("720"));

    let missing = wioptnd(&["run", "--config", "/nonexistent/cfg.txt", "--out", p(d.path())]);
    assert_eq!(code(&missing), 4);

    let bank = d.path().join("bank.json");
    fs::write(
        &bank,
        r#"{"kind":"custom","window_width":4,"device_count":3,"patterns":{"f1":{"devices":{"0":0,"1":1,"2":2}}}}"#,
    )
    .unwrap();
    let mismatch = run_into(d.path(), &["--bank", p(&bank)]);
    assert_eq!(code(&mismatch), 5, "{}", String::from_utf8_lossy(&mismatch.stderr));

    assert_eq!(code(&wioptnd(&["validate"])), 0);
}

#[test]
fn supplied_bank_is_used() {
    let d = tempdir().unwrap();
    let bank = d.path().join("in.json");
    fs::write(
        &bank,
        r#"{"kind":"custom","window_width":2,"device_count":3,"patterns":{"f1":{"devices":{"0":0,"1":1,"2":0}},"f2":{"devices":{"0":1,"1":0,"2":1}}}}"#,
    )
    .unwrap();
    let out = d.path().join("o");
    let args = [
        "--set",
        "sim.protocol=psdw_random",
        "--set",
        "sim.frequency_count=2",
        "--set",
        "sim.window_width=2",
        "--bank",
        p(&bank),
    ];
    let o = run_into(&out, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("bank.json"))
        .unwrap()
        .contains("\"custom\""));
}

#[test]
fn sweep_preset_is_deterministic_and_plots() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let sweep = |dir: &Path, jobs: &str| {
        wioptnd(&[
            "sweep",
            "--preset",
            "fig14",
            "--replicates",
            "2",
            "--jobs",
            jobs,
            "--set",
            "sim.duration_s=0.3",
            "--out",
            p(dir),
        ])
    };
    assert_eq!(code(&sweep(a.path(), "1")), 0);
    assert_eq!(code(&sweep(b.path(), "3")), 0);
    for f in ["metrics.csv", "aggregate.csv", "sweep.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let plot = wioptnd(&[
        "plot-data",
        "--aggregate",
        p(&a.path().join("aggregate.csv")),
        "--kind",
        "fig14",
    ]);
    assert_eq!(code(&plot), 0);
    let text = stdout(&plot);
    assert!(text.starts_with("# rate_hz"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 7);
}

#[test]
fn curve_presets() {
    let d = tempdir().unwrap();
    for name in ["fig7", "fig8"] {
        let o = wioptnd(&["sweep", "--preset", name, "--out", p(d.path())]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(fs::read_to_string(d.path().join("curves.csv")).unwrap().lines().count() > 10);
    }
    let bad = wioptnd(&["sweep", "--preset", "fig99", "--out", p(d.path())]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn tables() {
    let o = wioptnd(&["optics", "--from", "0", "--to", "1", "--step", "0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 4);

    let r = wioptnd(&["rank-table"]);
    let text = stdout(&r);
    assert_eq!(text.lines().count(), 25);
    assert!(text.lines().nth(1).unwrap().starts_with("1,L4->L2/3->L5->L6,"));
    assert_eq!(stdout(&wioptnd(&["rank-table"])), text);

    let e = wioptnd(&["energy-curve", "--phase", "discharging", "--max-points", "20"]);
    assert_eq!(code(&e), 0);
    assert!(stdout(&e).lines().count() >= 3);
    assert_eq!(code(&wioptnd(&["energy-curve", "--phase", "sideways"])), 2);
}
