use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srk-diffusion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(&format!("{key} "))).unwrap_or_else(|| panic!("no {key}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

fn config(dir: &TempDir, name: &str, json: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, json).unwrap();
    p
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

const ORDER: &str = r#"{
  "target": {"variant": "gaussian", "mean": [0, 0, 0, 0], "cov": [0.25, 0.25, 0.25, 0.25]},
  "schedule": {"mode": "uniform", "T": 4, "K": [16, 32, 64, 128, 256, 512, 1024], "delta": 0.01},
  "samplers": ["srk", "ddpm_ei"]
}"#;

const TWO_ATOMS: &str = r#"{
  "target": {"variant": "finite", "atoms": [[1], [-1]], "weights": [0.25, 0.75], "bounded": true},
  "schedule": {"mode": "uniform", "T": 3, "K": 40, "delta": 0.05},
  "samplers": ["srk"],
  "seeds": {"base": 0, "count": 4000}
}"#;

#[test]
fn corollary_schedule_report() {
    let o = run(&["schedule", "--d", "4", "--eps", "0.5", "--delta", "0.1"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let kappa = field(&text, "kappa");
    let expect = (0.5 / (8.0 * (0.5 * 16f64.ln()).sqrt())).min(1.0 / 16.0);
    assert!((kappa - expect).abs() < 1e-15, "{kappa}");
    assert!((field(&text, "min_width") - kappa * 0.01).abs() < 1e-15);
    assert!(text.contains("envelope PASS"));
    assert!(text.contains("kappa_dimension PASS"));
}

#[test]
fn uniform_schedule_widths() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("grid.json");
    let o = run(&[
        "schedule", "--uniform", "--T", "1.1", "--K", "10", "--delta", "0.1", "--output", grid.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&stdout(&o), "K"), 10.0);
    let g: Value = serde_json::from_str(&fs::read_to_string(grid).unwrap()).unwrap();
    let times: Vec<f64> = g["times"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(times.len(), 11);
    for w in times.windows(2) {
        assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
    }
}

#[test]
fn schedule_json_summary() {
    let o = run(&["schedule", "--d", "2", "--eps", "0.3", "--delta", "0.05", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mode"], "corollary");
    assert_eq!(v["passed"], true);
    assert!(v["K"].as_u64().unwrap() as f64 <= v["step_bound"].as_f64().unwrap());
}

#[test]
fn schedule_exit_codes() {
    // κd² = 4 violates the dimension condition
    assert_eq!(code(&run(&["schedule", "--d", "4", "--eps", "0.5", "--delta", "0.1", "--kappa", "0.25"])), 1);
    assert_eq!(code(&run(&["schedule", "--d", "4", "--eps", "-1", "--delta", "0.1"])), 2);
    assert_eq!(code(&run(&["schedule", "--d", "4", "--delta", "0.1"])), 2);
    assert_eq!(code(&run(&["schedule", "--d", "1", "--eps", "1", "--delta", "0.5"])), 2);
    assert_eq!(code(&run(&["schedule", "--uniform", "--T", "1", "--K", "10", "--delta", "2"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
}

#[test]
fn sweep_steps_rows_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "order.json", ORDER);
    let out = |name: &str| {
        let p = dir.path().join(name);
        let o = run(&["sweep-steps", "--config", cfg.to_str().unwrap(), "--output", p.to_str().unwrap(), "--no-wall-time"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(p).unwrap()
    };
    let (a, b) = (out("a.csv"), out("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,K,d,metric,value,nfe,seed,wall_time_s");
    assert_eq!(lines.len(), 1 + 2 * 7 + 2);
    for l in &lines[1..15] {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols[1], cols[5], "nfe equals K: {l}");
        assert_eq!(cols[3], "gaussian_kl");
    }
    let slope = |kind: &str| -> f64 {
        let l = lines.iter().find(|l| l.starts_with(&format!("{kind},slope_vs_K"))).unwrap();
        l.split(',').nth(4).unwrap().parse().unwrap()
    };
    assert!(slope("srk") <= -1.8);
    assert!(slope("srk") < slope("ddpm_ei"));
}

#[test]
fn empty_sampler_list_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("never.csv");
    let cfg = config(
        &dir,
        "empty.json",
        &ORDER.replace(r#""samplers": ["srk", "ddpm_ei"]"#, r#""samplers": [], "output": "never.csv""#),
    );
    let o = bin()
        .current_dir(dir.path())
        .args(["sweep-steps", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn bad_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let unknown = config(&dir, "unknown.json", &ORDER.replace(r#""samplers""#, r#""samplerz""#));
    let broken = config(&dir, "broken.json", "{ not json");
    let kl_on_atoms = config(&dir, "kl.json", &TWO_ATOMS.replace(r#""samplers""#, r#""metric": "gaussian_kl", "samplers""#));
    for c in [&unknown, &broken, &kl_on_atoms] {
        assert_eq!(code(&run(&["sweep-steps", "--config", c.to_str().unwrap()])), 2, "{}", c.display());
    }
    assert_eq!(code(&run(&["sample", "--config", dir.path().join("missing.json").to_str().unwrap()])), 2);
}

#[test]
fn sample_trajectories() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "traj.json",
        r#"{
  "target": {"variant": "gaussian", "mean": [1, -1], "cov": [0.5, 0.5]},
  "schedule": {"mode": "uniform", "T": 1.1, "K": 5, "delta": 0.1},
  "samplers": ["srk"],
  "seeds": [3, 4]
}"#,
    );
    let out = dir.path().join("traj.jsonl");
    let o = run(&["sample", "--config", cfg.to_str().unwrap(), "--record-trajectory", "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1 + 2 * 6);
    assert_eq!(lines[0]["kind"], "srk");
    assert_eq!(lines[0]["K"], 5);
    assert_eq!(lines[0]["nfe"], 5);
    for seed in [3, 4] {
        let steps: Vec<u64> =
            lines[1..].iter().filter(|v| v["seed"] == seed).map(|v| v["step"].as_u64().unwrap()).collect();
        assert_eq!(steps, vec![0, 1, 2, 3, 4, 5]);
    }
    let again = dir.path().join("again.jsonl");
    run(&["sample", "--config", cfg.to_str().unwrap(), "--record-trajectory", "--output", again.to_str().unwrap()]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn two_atom_sample_mean() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "atoms.json", TWO_ATOMS);
    let out = dir.path().join("atoms.jsonl");
    let o = run(&["sample", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    let finals: Vec<f64> =
        text.lines().skip(1).map(|l| serde_json::from_str::<Value>(l).unwrap()["state"][0].as_f64().unwrap()).collect();
    assert_eq!(finals.len(), 4000);
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let expect = -0.5 * (-0.05f64).exp();
    // standard deviation of the mean is about 0.014
    assert!((mean - expect).abs() < 0.06, "{mean} vs {expect}");
}

#[test]
fn validate_battery() {
    let o = run(&["validate"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("covariance-reconstruction PASS"));
    let o = run(&["validate", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.to_string().contains("projection-contraction"));
}

#[test]
fn sweep_dim_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("dim.csv");
    let o = run(&[
        "sweep-dim",
        "--config",
        shipped("dimension_sweep.json").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--no-wall-time",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 5 + 4);
    let nfe_slope: f64 = lines
        .iter()
        .find(|l| l.starts_with("srk,slope_vs_d,,nfe_loglog_slope"))
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert!(nfe_slope > 1.0 && nfe_slope < 2.5, "{nfe_slope}");
}

#[test]
fn shipped_configs_parse() {
    for name in ["order_gaussian.json", "two_atom_energy.json", "dimension_sweep.json"] {
        let text = fs::read_to_string(shipped(name)).unwrap();
        srk_diffusion::config::RunConfig::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
