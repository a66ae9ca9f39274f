use std::fs;
use std::path::Path;
use std::process::Command;

fn lab(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "lab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or("").to_string()
}

#[test]
fn spectral_eigs_writes_sorted_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eigs.csv");
    lab(&["spectral", "eigs", "--kernel", "ntk2", "--dim", "3", "--count", "50", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index,degree,eigenvalue,multiplicity");
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 50);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn spectral_bound_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["linf", "l2"] {
        let out = dir.path().join(format!("{mode}.csv"));
        lab(&["spectral", "bound", "--mode", mode, "--count", "400", "--points", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(header(&out), "n,bound");
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 6);
    }
}

#[test]
fn rates_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rates.toml");
    fs::write(
        &cfg,
        "env = \"finite:s6a2h2:seed3\"\ngrid = [16, 64]\nseeds = [0, 1]\nlambda = 0.05\n\n[backend]\nkind = \"kernel\"\nkernel = \"delta\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = lab(&["rates", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("slope"), "{stdout}");
    assert_eq!(header(&out.join("rows.csv")), "n,seed,gap,slope_step_residual_max,lambda,runtime_s");
    assert_eq!(fs::read_to_string(out.join("rows.csv")).unwrap().lines().count(), 5);
    assert!(out.join("aggregate.csv").exists());
    assert!(out.join("metadata.json").exists());
}

#[test]
fn assumptions_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("assumptions.toml");
    fs::write(&cfg, "env = \"finite:s6a2h2:seed3\"\nn = 32\ntrials = 10\n").unwrap();
    let out = dir.path().join("out");
    lab(&["assumptions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(out.join("rademacher.csv").exists());
    assert!(out.join("assumptions.json").exists());
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "env = \"finite:s6a2h2:seed3\"\ngrid = [64, 16]\nseeds = [0]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["rates", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
