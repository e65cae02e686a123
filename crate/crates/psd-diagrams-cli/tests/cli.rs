use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psd-diagrams"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const TMATRIX: &str = "random_levels = 3\nseed = 5\nfamily = tmatrix_pp\norder = 3\ngrid_points = 301\n";

#[test]
fn spectra_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TMATRIX);
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&["spectra", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push((
            std::fs::read(out.join("spectral.csv")).unwrap(),
            std::fs::read(out.join("sigma_gamma.csv")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(text.ends_with("# PSD: PASS\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn non_psd_fixture_fails_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TMATRIX);
    let out = dir.path().join("fx");
    let o = run(&["spectra", cfg.to_str().unwrap(), "--fixture", "non-psd", "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PSD: FAIL"));
    assert!(std::fs::read_to_string(out.join("spectral.csv")).unwrap().ends_with("# PSD: FAIL\n"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "levels = 0, 1\nvmat 0 1 0 0 0.3 0.2\n");
    let o = run(&["expand", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = run(&["expand", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let big = write_config(dir.path(), "random_levels = 11\nv_norm = 0.1\n");
    let o = run(&["oracle", big.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn expand_lists_terms_and_writes_dot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dot");
    let cfg = write_config(dir.path(), &format!("random_levels = 2\nfamily = tmatrix_pp\norder = 4\npsd_extend = false\noutput_dir = {}\n", out.display()));
    let o = run(&["expand", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("diagram tmatrix_pp direct order 4 terms 3"));
    assert_eq!(text.lines().filter(|l| l.starts_with("term ")).count(), 6);
    assert!(std::fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("half_")));
}

#[test]
fn check_reports_and_filters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TMATRIX);
    let o = run(&["check", cfg.to_str().unwrap()]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("CHECK ") && l.ends_with(" PASS")).count(), 4);
    let o = run(&["check", cfg.to_str().unwrap(), "--check", "adjoint", "--eta-sweep"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("CHECK adjoint")).count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("# eta")).count(), 3);
}

#[test]
fn oracle_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ed");
    let cfg = write_config(dir.path(), "preset = hubbard_dimer\nt = 1\nu = 2\nmu = 1\nbeta = 2\ngrid_points = 101\n");
    let o = run(&["oracle", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("EXACT_PSD "));
    assert!(text.lines().next().unwrap().ends_with("PASS"));
    assert_eq!(text.lines().filter(|l| l.starts_with("SCALING")).count(), 3);
    let header = std::fs::read_to_string(out.join("oracle_sigma.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with(",singular"));
}
