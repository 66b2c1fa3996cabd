use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_netcascade");

const SMALL_TREE: &str = r#"
graph = "regular_tree"
k = 3
height = 8
model = "gaussian"
mu0 = 0.0
mu1 = 2.0
alpha = 0.1
n_grid = [10, 40, 100]
trials_per_point = 12
base_seed = 5
series = "small"
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_TREE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "sweep",
            "custom",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["sweep.csv", "trials_small.csv", "theory.csv", "divergence.csv", "manifest.json"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs");
        assert!(!x.contains(&b'\r'));
    }
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(
        lines.next().unwrap(),
        "series,n,R,trials,timeouts,mean_T,stderr_T,empirical_failure_rate,lower_T,upper_T,failure_wilson_high"
    );
    assert_eq!(lines.count(), 3);
    let trials = fs::read_to_string(a.join("trials_small.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["configs"][0]["base_seed"], 5);
}

#[test]
fn seed_and_trial_overrides_change_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_TREE);
    let c = config.to_str().unwrap();
    let first = run(&["simulate", "--config", c, "--n", "40"]);
    let again = run(&["simulate", "--config", c, "--n", "40"]);
    let other = run(&["simulate", "--config", c, "--n", "40", "--seed", "6"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, again.stdout);
    assert_ne!(first.stdout, other.stdout);
    let result: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(result["true_source"], 1);
    assert_eq!(result["n"], 40);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &format!("{SMALL_TREE}\ncolour = \"red\"\n"));
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn theory_table_for_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_TREE);
    let out = run(&["theory", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("graph,k_or_dim,n,R,alpha,sym_kl,c_constant,lower_T,upper_T,corollary_value,regime"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn verify_suites() {
    let out = run(&["verify", "f_closed_forms"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("f_closed_forms: PASS"));
    let out = run(&["verify", "nonsense"]);
    assert!(!out.status.success());
}
