use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ticopd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ticopd"))
        .args(args)
        .env_remove("TICOPD_OUT")
        .output()
        .expect("spawn ticopd")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn run_ok(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = ticopd(&args);
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

fn quadratic_base(runs: Value) -> Value {
    json!({
        "schema_version": 1,
        "seed": 3,
        "graph": { "kind": "ring", "n": 10 },
        "objective": { "objective": "quadratic", "dim": 8 },
        "runs": runs
    })
}

fn least_squares_base(runs: Value) -> Value {
    json!({
        "schema_version": 1,
        "seed": 11,
        "graph": { "kind": "ring", "n": 6 },
        "objective": { "objective": "least_squares", "dim": 5, "rows": 8 },
        "stride": 50,
        "runs": runs
    })
}

#[test]
fn fixture_run_writes_one_row_per_stride() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_ok(&fixture("quadratic_ring10.json"), &out, &[]);
    assert!(stdout(&o).contains("ticopd_qsgd4: completed"));

    let m = manifest(&out);
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["runs"].as_array().unwrap().len(), 2);
    for run in m["runs"].as_array().unwrap() {
        assert_eq!(run["status"], "completed");
        let csv = fs::read_to_string(out.join(run["csv"].as_str().unwrap())).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        // header + t = 0 + T / stride
        assert_eq!(lines.len(), 1 + 1 + 2000 / 10);
        assert_eq!(run["rows"], 201);
        assert!(lines[0].starts_with("t,loss_max,grad_norm_avg,consensus_err,bits_cum"));
        let ts: Vec<usize> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] == w[0] + 10));
        assert_eq!(ts[0], 0);
    }
    let last = &m["runs"][0]["final_metrics"];
    assert!(last["grad_norm_avg"].as_f64().unwrap() < 1e-20);
    assert!(out.join("config.json").exists());
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.json", "{ \"schema_version\": 1, ".to_string()),
        (
            "unknown_field.json",
            quadratic_base(json!([{ "algorithm": "dgd", "stepsize": 0.1, "T": 5, "bogus": 1 }])).to_string(),
        ),
        (
            "bad_steps.json",
            quadratic_base(json!([{ "algorithm": "ticopd", "alpha_tilde": -1.0, "theta": 1.0, "T": 5 }])).to_string(),
        ),
        (
            "disconnected.json",
            json!({
                "schema_version": 1,
                "graph": { "kind": "custom", "n": 4, "edges": [[0, 1], [2, 3]] },
                "objective": { "objective": "quadratic", "dim": 2 },
                "runs": [{ "algorithm": "dgd", "stepsize": 0.1, "T": 5 }]
            })
            .to_string(),
        ),
        (
            "schema.json",
            json!({
                "schema_version": 99,
                "graph": { "kind": "ring", "n": 4 },
                "objective": { "objective": "quadratic", "dim": 2 },
                "runs": [{ "algorithm": "dgd", "stepsize": 0.1, "T": 5 }]
            })
            .to_string(),
        ),
    ];
    for (name, text) in cases {
        let cfg = tmp.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = tmp.path().join(format!("out_{name}"));
        let o = ticopd(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{name}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"), "{name}");
        assert!(!out.exists(), "{name} created output");
    }
    let o = ticopd(&["run", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn rerun_is_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        &quadratic_base(json!([
            { "name": "t", "algorithm": "ticopd", "alpha_tilde": 0.5, "theta": 0.5,
              "compressor": { "kind": "randk", "k": 2 }, "inner_steps": 2, "T": 300,
              "init": { "kind": "gaussian", "scale": 1.0 } },
            { "name": "q", "algorithm": "dgd_quantized", "stepsize": 0.05,
              "compressor": { "kind": "qsgd", "s": 2 }, "T": 300 },
            { "name": "c", "algorithm": "choco", "stepsize": 0.05, "gossip": 0.3,
              "compressor": { "kind": "topk", "k": 3 }, "T": 300 }
        ])),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_ok(&cfg, &a, &[]);
    run_ok(&cfg, &b, &[]);
    run_ok(&cfg, &c, &["--threads", "4"]);
    for name in ["t.csv", "q.csv", "c.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.join(name)).unwrap(), "{name} with 4 threads");
    }
    assert_eq!(manifest(&a)["config_hash"], manifest(&c)["config_hash"]);

    // --seed changes the random parts
    let d = tmp.path().join("d");
    run_ok(&cfg, &d, &["--seed", "4"]);
    assert_ne!(fs::read(a.join("t.csv")).unwrap(), fs::read(d.join("t.csv")).unwrap());
    assert_ne!(manifest(&a)["problem_hash"], manifest(&d)["problem_hash"]);
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        &quadratic_base(json!([{ "algorithm": "dgd", "stepsize": 0.1, "T": 4 }])),
    );
    let env_dir = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_ticopd"))
        .args(["run", "--quiet", "--config", cfg.to_str().unwrap()])
        .env("TICOPD_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert!(env_dir.join("00_dgd.csv").exists());

    let flag_dir = tmp.path().join("from_flag");
    let o = Command::new(env!("CARGO_BIN_EXE_ticopd"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", flag_dir.to_str().unwrap(), "--stride", "2"])
        .env("TICOPD_OUT", tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(!tmp.path().join("unused").exists());
    assert_eq!(fs::read_to_string(flag_dir.join("00_dgd.csv")).unwrap().lines().count(), 1 + 3);
}

#[test]
fn divergence_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        &quadratic_base(json!([
            { "name": "ok", "algorithm": "dgd", "stepsize": 0.1, "T": 600 },
            { "name": "boom", "algorithm": "dgd", "stepsize": 5.0, "T": 600 }
        ])),
    );
    let out = tmp.path().join("out");
    let o = ticopd(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["runs"][0]["status"], "completed");
    assert_eq!(m["runs"][1]["status"], "diverged");
    let t = m["runs"][1]["t"].as_u64().unwrap();
    assert!(t > 0 && t < 600);
    // the diverged run keeps the rows recorded before the blow-up
    let rows = m["runs"][1]["rows"].as_u64().unwrap();
    assert_eq!(rows, t);
}

#[test]
fn sweep_grid_selects_minimizer() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_base(json!([
        { "name": "pd", "algorithm": "ticopd", "compressor": { "kind": "qsgd", "s": 4 },
          "alpha_tilde": 1.0, "theta": 1.0, "T": 60 }
    ]));
    cfg["sweep"] = json!({ "alpha_tilde": [0.05, 0.2, 0.5], "theta": [0.1, 0.5, 1.0] });
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("out");
    let o = ticopd(&["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 9);
    let (best_name, best_g) = runs
        .iter()
        .map(|r| (r["name"].as_str().unwrap(), r["final_metrics"]["grad_norm_avg"].as_f64().unwrap()))
        .fold(("", f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let best = m["best"][0].as_str().unwrap();
    assert!(best.starts_with(&format!("ticopd: {best_name} (")), "{best} vs {best_name} {best_g}");
    assert!(stdout(&o).contains("best per algorithm"));

    // rerunning the selected cell alone reproduces its CSV
    let cell = runs.iter().find(|r| r["name"] == best_name).unwrap();
    let mut single = quadratic_base(json!([cell["config"].clone()]));
    single["seed"] = cfg["seed"].clone();
    let single_path = write_config(tmp.path(), "best.json", &single);
    let again = tmp.path().join("again");
    run_ok(&single_path, &again, &[]);
    let csv = format!("{best_name}.csv");
    assert_eq!(fs::read(out.join(&csv)).unwrap(), fs::read(again.join(&csv)).unwrap());
}

#[test]
fn sweep_marks_diverged_cells_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_base(json!([{ "name": "g", "algorithm": "dgd", "stepsize": 0.1, "T": 600 }]));
    cfg["sweep"] = json!({ "stepsize": [0.05, 5.0, 0.2] });
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("out");
    let o = ticopd(&["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let m = manifest(&out);
    let status: Vec<&str> = m["runs"].as_array().unwrap().iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert_eq!(status, ["completed", "diverged", "completed"]);
    assert!(m["best"][0].as_str().unwrap().starts_with("dgd: g__stepsize="));
    assert!(!m["best"][0].as_str().unwrap().contains("=5"));
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_base(json!([{ "algorithm": "dgd", "stepsize": 0.1, "T": 4 }]));
    let path = write_config(tmp.path(), "a.json", &cfg);
    let out = tmp.path().join("out");
    let o = ticopd(&["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    cfg["sweep"] = json!({});
    let path = write_config(tmp.path(), "b.json", &cfg);
    assert_eq!(code(&ticopd(&["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    cfg["sweep"] = json!({ "T": [1.0] });
    let path = write_config(tmp.path(), "c.json", &cfg);
    assert_eq!(code(&ticopd(&["sweep", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    assert!(!out.exists());
}

#[test]
fn check_reports_contraction_graph_and_gradients() {
    let tmp = tempfile::tempdir().unwrap();
    let qsgd = write_config(tmp.path(), "q.json", &json!({ "compressor": { "kind": "qsgd", "s": 4 }, "d": 16 }));
    let o = ticopd(&["check", "--config", qsgd.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("PASS contraction qsgd s=4 d=16"), "{s}");
    assert!(s.contains("mean ratio") && s.contains("(1-delta)^2") && s.contains("10000 trials"), "{s}");

    let disc = write_config(
        tmp.path(),
        "g.json",
        &json!({ "graph": { "kind": "custom", "n": 5, "edges": [[0, 1], [1, 2], [3, 4]] } }),
    );
    let o = ticopd(&["check", "--config", disc.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("FAIL graph custom n=5"), "{s}");
    assert!(s.contains("rho2 = 0.000000") && s.contains("2 zero eigenvalue(s)"), "{s}");

    let logistic = write_config(
        tmp.path(),
        "l.json",
        &json!({
            "graph": { "kind": "ring", "n": 4 },
            "objective": { "objective": "logistic", "l2": 0.01,
                "data": { "source": "gaussian_mixture", "classes": 4, "per_class": 20, "dim": 6 } }
        }),
    );
    let o = ticopd(&["check", "--config", logistic.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("PASS gradient logistic"), "{s}");
    assert!(s.contains("tolerance 1e-5"), "{s}");
    assert!(s.contains("PASS smoothness logistic"), "{s}");
    assert!(s.contains("PASS graph ring n=4"), "{s}");
}

#[test]
fn check_accepts_experiment_configs() {
    let o = ticopd(&["check", "--config", fixture("quadratic_ring10.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("PASS contraction qsgd s=4 d=20"), "{s}");
    assert!(!s.contains("FAIL"), "{s}");
}

#[test]
fn compare_aligns_runs_and_rejects_other_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = json!([
        { "name": "ticopd", "algorithm": "ticopd", "alpha_tilde": 0.2, "theta": 0.5,
          "compressor": { "kind": "qsgd", "s": 4 }, "T": 3000 },
        { "name": "exact", "algorithm": "exact_pd", "alpha_tilde": 0.2, "theta": 0.5, "T": 3000 },
        { "name": "dgd", "algorithm": "dgd", "stepsize": 0.1, "T": 3000 }
    ]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&write_config(tmp.path(), "a.json", &least_squares_base(runs.clone())), &a, &[]);
    run_ok(&write_config(tmp.path(), "b.json", &least_squares_base(runs.clone())), &b, &[]);

    let o = ticopd(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("matched iterations") && s.contains("matched bit budgets"), "{s}");
    // identical runs give identical columns
    for line in s.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells[1..4], cells[4..7], "{line}");
    }

    // heterogeneous Hessians: DGD's constant step leaves a gradient floor
    let m = manifest(&a);
    let g = |i: usize| m["runs"][i]["final_metrics"]["grad_norm_avg"].as_f64().unwrap();
    assert!(g(0) < 1e-20, "ticopd {}", g(0));
    assert!(g(2) > 1e-6, "dgd {}", g(2));
    assert!(g(0) < g(2));

    // identity payloads cost 32 bits per real; qsgd costs ⌈log₂(s+1)⌉ + 1 per
    // coordinate plus a 32-bit norm
    let (d, s_levels) = (5u64, 4u64);
    let lb = 64 - s_levels.leading_zeros() as u64;
    let bits_q = m["runs"][0]["bits_cum"].as_u64().unwrap();
    let bits_id = m["runs"][1]["bits_cum"].as_u64().unwrap();
    assert!(bits_id * (d * (lb + 1) + 32) >= 32 * d * bits_q);

    let mut other = least_squares_base(runs);
    other["seed"] = json!(12);
    let c = tmp.path().join("c");
    run_ok(&write_config(tmp.path(), "c.json", &other), &c, &[]);
    let o = ticopd(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("problem_hash"), "{}", stderr(&o));
}
