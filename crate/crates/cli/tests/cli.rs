use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const NON_STACK: &str = "# fixture\n0.0625\n0.1875\n0.1875\n0\n0.25\n0\n0\n0.3125\n";

fn lpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(dir: &TempDir) -> PathBuf {
    let p = dir.path().join("non_stack.txt");
    fs::write(&p, NON_STACK).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn segments_report() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let v = stdout_json(&lpr(&["segments", "--dist", s(&d)]));
    assert_eq!(v["q"], serde_json::json!([1, 3, 5, 8]));
    assert_eq!(v["kl"][0], serde_json::json!({"C": 2, "K": 1, "L": 3}));
    assert_eq!(v["xi"].as_array().unwrap().len(), 7);
}

#[test]
fn counterexample_report() {
    let v = stdout_json(&lpr(&["counterexample"]));
    assert_eq!(v["C2_eviction_depth"], 2);
    assert_eq!(v["C3_eviction_depth"], 5);
    assert_eq!(v["horizon"], 5);
    assert_eq!(v["infinite_horizon_agrees"], true);
    assert_eq!(v["inclusion_violated"], true);
}

#[test]
fn empty_trace_gives_zero_curve() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let o = lpr(&["miss-curve", "--dist", s(&d), "--n", "0"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("capacity,misses,miss_rate"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    for (c, row) in rows.iter().enumerate() {
        assert_eq!(*row, format!("{},0,0", c + 1));
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let mut seen = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("sim{run}.csv"));
        let o = lpr(&[
            "simulate",
            "--dist",
            s(&d),
            "--n",
            "5000",
            "--seed",
            "9",
            "--policy",
            "lpr",
            "--policy",
            "lru",
            "--policy",
            "opt",
            "--capacities",
            "1..8",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success());
        seen.push(fs::read(&out).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
    let text = String::from_utf8(seen[0].clone()).unwrap();
    assert!(text.starts_with("capacity,policy,accesses,misses,miss_rate\n"));
    assert_eq!(text.lines().count(), 1 + 8 * 3);
}

#[test]
fn generated_trace_round_trips_through_both_formats() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let text = dir.path().join("t.txt");
    let bin = dir.path().join("t.bin");
    for (path, extra) in [(&text, None), (&bin, Some("--binary"))] {
        let mut args = vec![
            "gen-trace",
            "--dist",
            s(&d),
            "--n",
            "3000",
            "--seed",
            "4",
            "--out",
            s(path),
        ];
        args.extend(extra);
        assert!(lpr(&args).status.success());
    }
    assert_eq!(&fs::read(&bin).unwrap()[..4], b"LPRT");
    let via = |trace: &Path| lpr(&["miss-curve", "--dist", s(&d), "--trace", s(trace)]).stdout;
    let direct = lpr(&["miss-curve", "--dist", s(&d), "--n", "3000", "--seed", "4"]).stdout;
    assert_eq!(via(&text), direct);
    assert_eq!(via(&bin), direct);
}

#[test]
fn miss_curve_agrees_with_simulate() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let curve = String::from_utf8(
        lpr(&["miss-curve", "--dist", s(&d), "--n", "4000", "--seed", "2"]).stdout,
    )
    .unwrap();
    let sim = String::from_utf8(
        lpr(&[
            "simulate",
            "--dist",
            s(&d),
            "--n",
            "4000",
            "--seed",
            "2",
            "--policy",
            "lpr",
        ])
        .stdout,
    )
    .unwrap();
    let a: Vec<String> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    let b: Vec<String> = sim
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().to_string())
        .collect();
    assert_eq!(a, b);
}

#[test]
fn bounds_and_bellman() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let v = stdout_json(&lpr(&[
        "bounds",
        "--dist",
        s(&d),
        "--capacity",
        "2",
        "--n",
        "0",
    ]));
    assert_eq!(v["best_G"], 3);
    assert_eq!(v["M_lpr"], 0.75);
    assert!(v["empirical_chi"].is_null());
    let v = stdout_json(&lpr(&["bellman-c2", "--dist", s(&d)]));
    assert_eq!(v["lambda"], 0.8125);
    assert_eq!(v["lambda_miss_rate"], 0.75);
}

#[test]
fn dp_table() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let v = stdout_json(&lpr(&[
        "dp",
        "--dist",
        s(&d),
        "--capacity",
        "2",
        "--horizon",
        "3",
        "--format",
        "json",
    ]));
    let states = v["states"].as_array().unwrap();
    assert_eq!(states.len(), 1 + 8 + 28);
    let top = states
        .iter()
        .find(|x| x["resident"] == serde_json::json!([1, 2]))
        .unwrap();
    // one step: miss unless depth 1 or 2
    assert!((top["cost"][1].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn allocate_and_partition() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("a.json");
    fs::write(
        &spec,
        r#"{"items":[{"name":"A","seps":[[1,0.5],[2,0.1]]},{"name":"B","seps":[[1,0.4],[2,0.35]]}]}"#,
    )
    .unwrap();
    let v = stdout_json(&lpr(&["allocate", "--spec", s(&spec), "--capacity", "3"]));
    assert_eq!(v["items"][0]["name"], "A");
    assert_eq!(v["items"][0]["sep"], 1);
    assert!((v["M"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let part = dir.path().join("p.json");
    fs::write(
        &part,
        r#"{"processes":[{"weight":0.5,"dist":[5,4,3,2,1]},{"weight":0.5,"dist":[5,4,3,2,1]}]}"#,
    )
    .unwrap();
    // raw weights are rejected unless they already sum to one
    let o = lpr(&["partition", "--spec", s(&part), "--capacity", "4"]);
    assert_eq!(o.status.code(), Some(1));
    fs::write(
        &part,
        r#"{"processes":[{"weight":0.5,"dist":[0.3,0.25,0.2,0.15,0.1]},{"weight":0.5,"dist":[0.3,0.25,0.2,0.15,0.1]}]}"#,
    )
    .unwrap();
    let v = stdout_json(&lpr(&["partition", "--spec", s(&part), "--capacity", "4"]));
    let caps = v["capacities"].as_array().unwrap();
    assert!((caps[0].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((caps[1].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn validation_errors_exit_one_without_output() {
    let dir = TempDir::new().unwrap();
    let d = fixture(&dir);
    let out = dir.path().join("never.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "simulate",
            "--dist",
            s(&d),
            "--n",
            "10",
            "--policy",
            "lfu",
            "--out",
            s(&out),
        ],
        vec![
            "simulate",
            "--dist",
            s(&d),
            "--n",
            "10",
            "--policy",
            "kl:3:2",
            "--capacity",
            "2",
            "--out",
            s(&out),
        ],
        vec![
            "simulate",
            "--dist",
            s(&d),
            "--n",
            "10",
            "--policy",
            "lru",
            "--capacity",
            "9",
            "--out",
            s(&out),
        ],
        vec![
            "segments",
            "--dist",
            "/nonexistent/dist.txt",
            "--out",
            s(&out),
        ],
        vec![
            "dp",
            "--dist",
            s(&d),
            "--capacity",
            "0",
            "--horizon",
            "2",
            "--out",
            s(&out),
        ],
        vec!["miss-curve", "--trace", s(&d), "--out", s(&out)],
        vec!["no-such-command"],
    ];
    for args in cases {
        let o = lpr(&args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!out.exists(), "{args:?} left output behind");
    }
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0.5\n0.4\n").unwrap();
    assert_eq!(lpr(&["segments", "--dist", s(&bad)]).status.code(), Some(1));
    assert!(lpr(&["segments", "--dist", s(&bad), "--normalize"])
        .status
        .success());
}

#[test]
fn help_exits_zero() {
    assert!(lpr(&["--help"]).status.success());
}
