use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefattach")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SIM: &str = r#"
n0 = 30
steps = 40
seed = 1
seed_graph = { kind = "ring" }
[external]
rate = 4.0
params = { kind = "power", alpha = 1.1, beta = 1.0, gamma = 1.0, delta = 1.0, delta_fixed = false }
[internal]
rate = 1.0
params = { kind = "power", alpha = 1.0, beta = 1.0, gamma = 1.0, delta = 1.0, delta_fixed = false }
[deletion]
rate = 0.0
params = { kind = "power", alpha = 1.0, beta = 1.0, gamma = 1.0, delta = 0.0, delta_fixed = true }
"#;

const RUN: &str = "[chain]\nburn_in = 100\nthin = 1\ndraws = 200\n[selection]\npilot_draws = 150\n";

/// Simulated events, their ingested statistics and a short-chain config.
fn workspace() -> (tempfile::TempDir, PathBuf, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.toml");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&sim, SIM).unwrap();
    std::fs::write(&cfg, RUN).unwrap();
    let events = dir.path().join("events.csv");
    let ingest = dir.path().join("ingest");
    assert_eq!(code(&["simulate", "--config", s(&sim), "--out", s(&events)]), 0);
    assert_eq!(code(&["ingest", "--events", s(&events), "--out", s(&ingest)]), 0);
    (dir, events, ingest, cfg)
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&["ingest", "--events", "/no/such/file.csv", "--out", s(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let (_dir, events, ingest, cfg) = workspace();
    let bad = run(&["ingest", "--events", s(&events), "--types", "Imprts", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Imports"));

    let bogus = dir.path().join("bogus.toml");
    std::fs::write(&bogus, "nonsense = 3\n").unwrap();
    let fit = |extra: &[&str]| {
        let mut args = vec!["fit", "--stats", s(&ingest), "--category", "external", "--out", s(&out)];
        args.extend_from_slice(extra);
        code(&args)
    };
    assert_eq!(fit(&["--config", s(&bogus)]), 2);
    assert_eq!(fit(&["--config", s(&cfg), "--hier", "--periods", "fixed:1000"]), 2);
    assert_eq!(fit(&["--config", s(&cfg), "--hier", "--periods", "weekly"]), 2);
    assert_eq!(code(&["select", "--stats", s(&ingest), "--category", "external", "--p", "1.5", "--out", s(&out)]), 2);
}

#[test]
fn fit_writes_trace_and_summary_and_reruns_identically() {
    let (dir, _events, ingest, cfg) = workspace();
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    let tmp = dir.path().join("fit");
    for out in &outs {
        let args = ["fit", "--stats", s(&ingest), "--category", "external", "--config", s(&cfg), "--seed", "3", "--out", s(&tmp)];
        assert_eq!(code(&args), 0);
        std::fs::rename(&tmp, out).unwrap();
    }
    for file in ["trace.csv", "summary.json", "config.toml"] {
        assert_eq!(std::fs::read(outs[0].join(file)).unwrap(), std::fs::read(outs[1].join(file)).unwrap(), "{file}");
    }
    let trace = std::fs::read_to_string(outs[0].join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "draw,alpha,delta,mu,log_post");
    assert_eq!(trace.lines().count(), 201);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(outs[0].join("summary.json")).unwrap()).unwrap();
    assert!(summary["parameters"]["alpha"]["mean"].is_f64(), "{summary}");
}

#[test]
fn selection_output_carries_bound_flag() {
    let (dir, _events, ingest, cfg) = workspace();
    let out = dir.path().join("sel");
    let args = ["select", "--stats", s(&ingest), "--category", "external", "--config", s(&cfg), "--out", s(&out)];
    assert_eq!(code(&args), 0);
    let sel: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("selection.json")).unwrap()).unwrap();
    let flag = sel["bound_flag"].as_str().unwrap();
    assert!(["none", "greater_than", "less_than"].contains(&flag));
    let r0 = sel["posterior_prob_r0"].as_f64().unwrap();
    let r1 = sel["posterior_prob_r1"].as_f64().unwrap();
    assert!((r0 + r1 - 1.0).abs() < 1e-12);
    let rtrace = std::fs::read_to_string(out.join("r_trace.csv")).unwrap();
    assert_eq!(rtrace.lines().count() - 1, 200);
}
