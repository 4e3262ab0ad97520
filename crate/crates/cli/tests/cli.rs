use std::path::Path;
use std::process::{Command, Output};

fn mlpcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlpcm")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const OUTAGE_TOML: &str = r#"
snr_db = [6.0, 10.0]
nr = 1
r_tot = 0.5
realizations = 200
seed = 5

[code]
family = "alamouti"
constellation = "qpsk"
"#;

#[test]
fn outage_csv_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", OUTAGE_TOML);
    let a = mlpcm(&["outage", "--config", &cfg, "--threads", "1"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("snr_db,metric,value,events,trials,seed"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert_eq!(r[1], "outage");
        assert_eq!(r[4], "200");
        assert_eq!(r[5], "5");
        let v: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(!text.contains('\r'));
    let b = mlpcm(&["outage", "--config", &cfg, "--threads", "1"]);
    assert_eq!(text.as_bytes(), &b.stdout[..]);
}

#[test]
fn json_and_toml_configs_match() {
    let dir = tempfile::tempdir().unwrap();
    let t = write(dir.path(), "o.toml", OUTAGE_TOML);
    let j = write(
        dir.path(),
        "o.json",
        r#"{"snr_db": [6, 10], "nr": 1, "r_tot": 0.5, "realizations": 200, "seed": 5,
            "code": {"family": "alamouti", "constellation": "qpsk"}}"#,
    );
    let a = mlpcm(&["outage", "--config", &t]);
    let b = mlpcm(&["outage", "--config", &j]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", OUTAGE_TOML);
    let out = mlpcm(&["outage", "--config", &cfg, "--seed", "77"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",77")));
}

#[test]
fn json_output_carries_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", OUTAGE_TOML);
    let out = mlpcm(&["outage", "--config", &cfg, "--out", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(v["manifest"]["rng_method"].is_string());
    assert!(v["manifest"]["snr_convention"].is_string());
    assert_eq!(v["manifest"]["config"]["seed"], 5);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.toml", "snr_db = []\n[code]\nfamily = \"alamouti\"\nconstellation = \"qpsk\"\n");
    assert_eq!(mlpcm(&["fer", "--config", &empty]).status.code(), Some(2));
    let junk = write(dir.path(), "j.toml", "unknown_key = 1\n");
    assert_eq!(mlpcm(&["outage", "--config", &junk]).status.code(), Some(2));
    assert_eq!(mlpcm(&["outage", "--config", "/nonexistent/cfg.toml"]).status.code(), Some(2));
    assert_eq!(mlpcm(&["outage"]).status.code(), Some(2));
    assert_eq!(mlpcm(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    // Almost full rate at -20 dB: every channel is in outage, so the
    // outage rate rule has nothing feasible to return.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        r#"
snr_db = [-20.0]
nr = 1
r_tot = 0.99
n = 8
realizations = 50
mi_samples = 32
ranking_trials = 20
rate_rule = "outage"
outage_growth = 1.05

[code]
family = "alamouti"
constellation = "qpsk"
"#,
    );
    let out = mlpcm(&["design-code", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn design_bundle_feeds_fer() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle.json");
    let design = write(
        dir.path(),
        "d.toml",
        r#"
snr_db = [8.0]
nr = 2
r_tot = 0.5
n = 16
ranking_trials = 100
seed = 3

[code]
family = "alamouti"
constellation = "qpsk"
"#,
    );
    let out = mlpcm(&["design-code", "--config", &design, "--save", bundle.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);

    let fer = write(
        dir.path(),
        "f.toml",
        &format!(
            "snr_db = [4.0, 300.0]\nnr = 2\nmax_frames = 200\nmin_errors = 20\nseed = 3\nbundle = {:?}\n",
            bundle.to_str().unwrap()
        ),
    );
    let out = mlpcm(&["fer", "--config", &fer]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert_eq!(last, "300,fer,0,0,200,3");
}

#[test]
fn label_threshold_sweep_and_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "l.toml",
        "snr_db = [10.0]\nranking_trials = 50\nn = 8\n[code]\nfamily = \"alamouti\"\nconstellation = \"qpsk\"\n[labelling]\nmeasure = \"frobenius\"\n",
    );
    let out = mlpcm(&["label", "--config", &cfg, "--thresholds", "0,0.15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.contains("t0.15_level1_min_distance"));

    let out = mlpcm(&["rank", "--config", &cfg]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 4);
}

#[test]
fn bound_check_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.toml",
        "snr_db = [10.0]\nnr = 2\nrealizations = 300\n[code]\nfamily = \"matrix-c\"\nconstellation = \"qpsk\"\n",
    );
    let out = mlpcm(&["bound-check", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",bound_0_1,"));
    assert!(text.contains(",monte_carlo_0_1,"));
}

#[test]
fn optimize_stbc_small_swarm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.toml",
        r#"
snr_db = [12.0]
nr = 1
r_tot = 0.5
realizations = 64

[code]
family = "matrix-d"
constellation = "qpsk"

[pso]
particles = 4
iterations = 2
mc_schedule = [{ samples = 32 }]
seed = 4
"#,
    );
    let out = mlpcm(&["optimize-stbc", "--config", &cfg, "--out", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["manifest"]["artifacts"]["params"].as_array().unwrap().len(), 4);
}

#[test]
fn golden_outage_csv() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let out = mlpcm(&["outage", "--config", dir.join("outage.toml").to_str().unwrap()]);
    assert!(out.status.success());
    let want = std::fs::read_to_string(dir.join("outage.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), want);
}
