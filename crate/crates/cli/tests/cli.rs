use std::path::Path;
use std::process::{Command, Output};

fn spinstein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinstein"))
        .args(args)
        .env_remove("SPINSTEIN_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn macrostates_high_temperature() {
    let o = spinstein(&["macrostates", "--q", "3", "--beta", "1.0"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,0.333333333333,0.333333333333,0.333333333333,"));
}

#[test]
fn macrostates_json_lists_ordered_points() {
    let o = spinstein(&["macrostates", "--q", "4", "--beta", "2.0", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["macrostates"].as_array().unwrap().len(), 4);
}

#[test]
fn validation_exits_two() {
    let o = spinstein(&["simulate", "--q", "2", "--beta", "1", "--n", "10", "--steps", "5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("q must be ≥ 3"));
    let o = spinstein(&["exact", "tmix", "--n", "10", "--beta", "1", "--epsilon", "0.7"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--epsilon"));
    let o = spinstein(&["couple", "--n", "30", "--beta", "1.6", "--r", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--r"));
}

#[test]
fn unknown_subcommand_exits_two() {
    let o = spinstein(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn resource_guard_exits_three() {
    let o = spinstein(&["exact", "tmix", "--n", "5000", "--q", "3", "--beta", "1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("12507501"));
}

#[test]
fn unwritable_output_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("t.csv");
    let o = spinstein(&["macrostates", "--beta", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}

#[test]
fn manifest_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let o = spinstein(&[
        "simulate", "--q", "3", "--beta", "1.6", "--n", "200", "--steps", "20000", "--seed", "11",
        "--restrict", "ordered:1:0.05", "--stride", "100", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&out);
    assert!(csv.starts_with("step,counts_1,counts_2,counts_3,rejected_cum,tau_out,tau_in\n"));
    assert_eq!(csv.lines().count(), 202);
    let manifest = dir.path().join("sim.csv.manifest.json");
    let m: serde_json::Value = serde_json::from_str(&read(&manifest)).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["subcommand"], "simulate");
    let o = spinstein(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("identical"));

    // Tampering with the output is detected.
    let mut m = m;
    m["outputs"][0]["sha256"] = "00".into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, m.to_string()).unwrap();
    let o = spinstein(&["replay", bad.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
}

#[test]
fn seeds_change_stochastic_output_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str]| {
        let p = dir.path().join(name);
        let mut all: Vec<&str> = args.to_vec();
        let ps = p.to_str().unwrap().to_string();
        all.extend(["--out", &ps]);
        assert_eq!(code(&spinstein(&all)), 0);
        read(&p)
    };
    let base = ["couple", "--n", "60", "--beta", "1.6", "--replicas", "8"];
    let a = run("a.csv", &[&base[..], &["--seed", "1"]].concat());
    let b = run("b.csv", &[&base[..], &["--seed", "1"]].concat());
    let c = run("c.csv", &[&base[..], &["--seed", "2"]].concat());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("replica,tau_couple,phase1_len,max_hamming,event_B_violated_at\n"));

    let ex = ["exact", "stationary", "--n", "20", "--beta", "1.2"];
    let e1 = run("e1.csv", &ex);
    let e2 = run("e2.csv", &ex);
    assert_eq!(e1, e2);
}

#[test]
fn decimal_point_under_comma_locale() {
    let o = Command::new(env!("CARGO_BIN_EXE_spinstein"))
        .args(["bench", "clt", "--n", "30", "--beta", "0.5"])
        .env("LC_ALL", "de_DE.UTF-8")
        .env("LANG", "de_DE.UTF-8")
        .env("LC_NUMERIC", "de_DE.UTF-8")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let line = out.lines().find(|l| l.starts_with("limit_diag_y,")).unwrap();
    assert_eq!(line, "limit_diag_y,0.222222222222");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spinstein"))
        .args(["bench", "theta-trend", "--x", "e", "--betas", "0.5,0.2,0.05"])
        .env("SPINSTEIN_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv = read(&dir.path().join("bench-theta-trend.csv"));
    assert!(csv.starts_with("beta,theta,proxy\n0.5,0.333333333333,"));
    assert!(dir.path().join("bench-theta-trend.csv.manifest.json").exists());
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "q = 4\nbeta = 3.0\n").unwrap();
    let o = spinstein(&["macrostates", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).lines().next().unwrap().contains("x_4"));
    let o = spinstein(&["macrostates", "--config", cfg.to_str().unwrap(), "--q", "3", "--beta", "1"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}

#[test]
fn exact_outputs_and_matrix_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tmix.csv");
    let mat = dir.path().join("p.txt");
    let o = spinstein(&[
        "exact", "tmix", "--n", "30", "--beta", "1.6", "--restrict", "ordered:1:0.05",
        "--out", out.to_str().unwrap(), "--matrix", mat.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("t_mix(0.25) = 18"));
    let first = read(&mat).lines().next().unwrap().to_string();
    assert_eq!(first.split_whitespace().count(), 3);

    let o = spinstein(&["exact", "stein", "--n", "12", "--beta", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("counts_1,counts_2,counts_3,h,f\n"));

    let o = spinstein(&["exact", "wasserstein", "--n", "20", "--beta", "0"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn bench_wscaling_with_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("w.svg");
    let o = spinstein(&["bench", "wscaling", "--beta", "1.0", "--ns", "20,40", "--svg", svg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&svg);
    assert!(text.starts_with("<svg") && text.contains("<polyline"));
}

#[test]
fn bench_bounded_degree_regression() {
    let o = spinstein(&["bench", "bounded-degree", "--beta", "0.5", "--topology", "cycle", "--n", "100"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let bound: f64 = row[7].parse().unwrap();
    assert!((bound - 1.0101).abs() < 1e-4);
    let o = spinstein(&["bench", "tnorm", "--beta", "0.3", "--topology", "regular:4", "--n", "50", "--samples", "200"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn graph_model_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    std::fs::write(&g, "4 3\n1 2\n2 3\n3 4\n").unwrap();
    let init = dir.path().join("c.txt");
    std::fs::write(&init, "1 1 2 3\n").unwrap();
    let o = spinstein(&[
        "simulate", "--model", "graph", "--graph", g.to_str().unwrap(), "--init", init.to_str().unwrap(),
        "--beta", "1", "--steps", "10", "--stride", "5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().nth(1).unwrap().starts_with("0,2,1,1,0"));
    let o = spinstein(&["simulate", "--model", "graph", "--graph", "/nonexistent", "--beta", "1", "--steps", "1"]);
    assert_eq!(code(&o), 4);
}
