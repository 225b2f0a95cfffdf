use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use trinity_core::tradeoff::read_samples_csv;
use trinity_core::{
    comm_cost, expected_compute, frontier_min_bandwidth, generate_trace, load_trace, memory_deficit,
    replay, CacheCostParams, DeficitParams, GeneratorConfig, HitRateModel, PerResolution, SimConfig,
};

fn trinity(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trinity"))
        .args(args)
        .current_dir(dir)
        .env_remove("TRINITY_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

fn gen_small(dir: &Path, out: &str, seed: &str) {
    let o = trinity(
        dir,
        &[
            "gen", "--requests", "1500", "--clusters", "30", "--zipf", "1.1", "--sigma", "0.05",
            "--dim", "24", "--mix", "720p=0.6,1080p=0.3,2k=0.1", "--seed", seed, "--out", out,
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn deficit_examples_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [(1000.0, 8, 100.0, 1.0, 200.0), (500.0, 8, 100.0, 1.0, 0.0)];
    for (total, n, dev, k, expect) in cases {
        let v = stdout_json(&trinity(
            dir.path(),
            &["deficit", "--total", &total.to_string(), "--devices", &n.to_string(),
              "--per-device", &dev.to_string(), "--k", &k.to_string()],
        ));
        let p = DeficitParams::deficit_only(total, n, dev, k);
        assert_eq!(v["memory_deficit_gb"].as_f64(), Some(memory_deficit(&p)));
        assert_eq!(v["comm_cost"].as_f64(), Some(comm_cost(&p)));
        assert_eq!(v["comm_cost"].as_f64(), Some(expect));
    }
}

#[test]
fn deficit_with_synchronization_term() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&trinity(
        dir.path(),
        &["deficit", "--total", "1000", "--devices", "8", "--per-device", "100", "--k", "2",
          "--allreduce", "2", "--state", "108"],
    ));
    assert_eq!(v["memory_deficit_gb"].as_f64(), Some(200.0));
    assert_eq!(v["comm_cost"].as_f64(), Some(616.0));
}

#[test]
fn expected_compute_constant_hit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&trinity(dir.path(), &["expected-compute", "--reuse", "25", "--hit", "0.4"]));
    assert_eq!(v["economics"]["expected_cost"].as_f64(), Some(40e9));
    assert_eq!(v["economics"]["expected_saved"].as_f64(), Some(10e9));
}

#[test]
fn expected_compute_matches_library_for_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&trinity(
        dir.path(),
        &["expected-compute", "--reuse", "15", "--kappa", "0.3", "--gamma", "0.7",
          "--capacity", "50GB", "--entry-size", "80MB"],
    ));
    let cost = CacheCostParams { total_steps: 50, step_cost: 1e9, reuse_depth: 15, entry_size: 0.08 };
    let model = HitRateModel::power_law(0.3, 0.7).unwrap();
    let econ = expected_compute(&cost, &model, 50.0).unwrap();
    assert_eq!(v["economics"]["expected_cost"].as_f64(), Some(econ.expected_cost));
    assert_eq!(v["economics"]["hit_rate"].as_f64(), Some(econ.hit_rate));
    assert_eq!(v["economics"]["entry_count"].as_u64(), Some(625));
}

#[test]
fn marginal_of_empirical_model_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = trinity(dir.path(), &["marginal", "--reuse", "25", "--points", "0:0,10:0.5,20:0.7"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "NonDifferentiableModel");
}

#[test]
fn model_flags_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let o = trinity(dir.path(), &["expected-compute", "--reuse", "25", "--hit", "0.4", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = trinity(dir.path(), &["expected-compute", "--reuse", "25"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frontier_feasible_and_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "bandwidth_bpp,compute_flops,quality\n0.30,1e9,0.95\n0.10,5e9,0.95\n0.05,2e10,0.97\n0.02,1e9,0.80\n";
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    let v = stdout_json(&trinity(
        dir.path(),
        &["frontier", "--samples", "s.csv", "--quality", "0.9", "--budget", "1e10"],
    ));
    let samples = read_samples_csv(csv.as_bytes()).unwrap();
    let lib = frontier_min_bandwidth(&samples, 0.9, 1e10).unwrap();
    assert_eq!(v["bandwidth"].as_f64(), Some(lib.bandwidth));
    assert_eq!(v["sample_index"].as_u64(), Some(1));

    let o = trinity(dir.path(), &["frontier", "--samples", "s.csv", "--quality", "0.99", "--budget", "1e10"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "Infeasible");
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = trinity(dir.path(), &["replay", "--trace", "missing.jsonl", "--capacity", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "IoError");

    fs::write(dir.path().join("bad.jsonl"), "{\"dim\":3}\nnot json\n").unwrap();
    let o = trinity(dir.path(), &["replay", "--trace", "bad.jsonl", "--capacity", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "ParseError");
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(trinity(dir.path(), &["nope"]).status.code(), Some(2));
    assert_eq!(trinity(dir.path(), &["deficit", "--total", "x"]).status.code(), Some(2));
    assert_eq!(trinity(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(trinity(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn gen_matches_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "a.jsonl", "7");
    gen_small(dir.path(), "b.jsonl", "7");
    gen_small(dir.path(), "c.jsonl", "8");
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_ne!(a, fs::read(dir.path().join("c.jsonl")).unwrap());

    let cfg = GeneratorConfig {
        num_requests: 1500,
        num_clusters: 30,
        zipf_exponent: 1.1,
        noise_sigma: 0.05,
        dimension: 24,
        resolution_mix: PerResolution { p720: 0.6, p1080: 0.3, k2: 0.1 },
        seed: 7,
    };
    let lib = generate_trace(&cfg).unwrap();
    let loaded = load_trace(a.as_slice(), None).unwrap();
    assert_eq!(loaded, lib);
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "flag.jsonl", "11");
    let o = Command::new(env!("CARGO_BIN_EXE_trinity"))
        .args(["gen", "--requests", "1500", "--clusters", "30", "--zipf", "1.1", "--sigma", "0.05",
               "--dim", "24", "--mix", "720p=0.6,1080p=0.3,2k=0.1", "--seed", "0", "--out", "env.jsonl"])
        .current_dir(dir.path())
        .env("TRINITY_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("flag.jsonl")).unwrap(),
        fs::read(dir.path().join("env.jsonl")).unwrap()
    );
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("env.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"].as_u64(), Some(11));
}

#[test]
fn replay_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "t.jsonl", "3");
    let o = trinity(
        dir.path(),
        &["replay", "--trace", "t.jsonl", "--capacity", "0.5GB", "--out", "r.json", "--log", "r.log"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();

    let trace = load_trace(fs::read(dir.path().join("t.jsonl")).unwrap().as_slice(), None).unwrap();
    let report = replay(&trace, &SimConfig::new(500_000_000)).unwrap();
    assert_eq!(v["summary"], serde_json::to_value(&report.summary).unwrap());
    let log = fs::read_to_string(dir.path().join("r.log")).unwrap();
    assert_eq!(log.lines().count(), trace.len());
    assert!(dir.path().join("r.json.manifest.json").exists());
}

#[test]
fn sweep_csv_is_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "t.jsonl", "5");
    for (out, jobs) in [("a.csv", "1"), ("b.csv", "3")] {
        let o = trinity(
            dir.path(),
            &["sweep", "--trace", "t.jsonl", "--capacities", "0.08,0.16,0.32,0.64", "--jobs", jobs, "--out", out],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert!(a.starts_with("capacity_gb,hit_rate,saved_flops,expected_cost_flops\n"));
    assert_eq!(a.lines().count(), 5);

    let v = stdout_json(&trinity(
        dir.path(),
        &["fit", "--curve", "a.csv", "--family", "exp", "--entry-size", "80MB"],
    ));
    assert_eq!(v["model"]["family"], "exponential_saturation");
    assert!(v["residual"].as_f64().unwrap().is_finite());
}

#[test]
fn rerun_reproduces_outputs_and_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "t.jsonl", "21");
    let o = trinity(dir.path(), &["sweep", "--trace", "t.jsonl", "--capacities", "0.1,0.2", "--out", "c.csv"]);
    assert!(o.status.success());
    let before = fs::read(dir.path().join("c.csv")).unwrap();

    for manifest in ["t.jsonl.manifest.json", "c.csv.manifest.json"] {
        let o = Command::new(env!("CARGO_BIN_EXE_trinity"))
            .args(["rerun", manifest])
            .current_dir(dir.path())
            .env("TRINITY_SEED", "999")
            .output()
            .unwrap();
        let v = stdout_json(&o);
        assert_eq!(v["reproduced"], true, "{manifest}");
    }
    assert_eq!(before, fs::read(dir.path().join("c.csv")).unwrap());

    let mut trace = fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    trace.push('\n');
    fs::write(dir.path().join("t.jsonl"), trace).unwrap();
    let o = trinity(dir.path(), &["rerun", "c.csv.manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "InputChanged");
}
