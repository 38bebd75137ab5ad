use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memoplate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memoplate"))
        .args(args)
        .env_remove("MEMOPLATE_THREADS")
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn kernel_check_on_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoplate(&["kernel-check", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoplate(&["decay", "--preset", "thm-zz", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[integrator]\nt_end = \"forever\"\n").unwrap();
    let out = memoplate(&["decay", "--preset", "thm-edec", "--config", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrator.t_end"));

    let out = memoplate(&["decay", "--config", arg(&dir.path().join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three_and_keep_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scan.toml");
    // a decreasing eigenvalue list is rejected by the scan itself
    fs::write(&cfg, "[probe.gammas]\nfrom = 3.0\nto = 1.0\ncount = 8\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = memoplate(&["pruss-scan", "--preset", "thm-a2", "--config", arg(&cfg), "--out", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"ok\": false"));
}

#[test]
fn a2_scan_writes_table_summary_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoplate(&["pruss-scan", "--preset", "thm-a2", "--out", arg(dir.path()), "--plots", "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope of log|z|"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "py")));
}

#[test]
fn identical_configs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, "[integrator]\nt_end = 0.5\n").unwrap();
    let mut tables = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(name);
        let out = memoplate(&[
            "simulate",
            "--preset",
            "oracle-crosscheck",
            "--config",
            arg(&cfg),
            "--out",
            arg(&out_dir),
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read(out_dir.join("trajectory_0.csv")).unwrap());
        tables.push(fs::read(out_dir.join("oracle_0.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[2]);
    assert_eq!(tables[1], tables[3]);
}
