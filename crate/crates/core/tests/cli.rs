use std::path::{Path, PathBuf};
use std::process::Command;

use qdslab::fock_oracle::{integrate_moments, MomentGenerator, MomentState};
use qdslab::model::parse_experiment;
use qdslab::propagator::PhaseSpaceMoments;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn qdslab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qdslab")).args(args).env("QDSLAB_THREADS", "2").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn run_in(dir: &Path, sub: &str, cfg: &str, extra: &[&str]) -> i32 {
    let cfg = config(cfg);
    let mut args = vec![sub, cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qdslab(&args).0
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn validation_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "validate", "linear_harmonic.cfg", &[]), 0);
    assert_eq!(run_in(dir.path(), "validate", "boundary.cfg", &[]), 0);
    assert_eq!(run_in(dir.path(), "validate", "caldeira_leggett.cfg", &[]), 1);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qdslab(&["transmogrify"]).0, 2);
    assert_eq!(qdslab(&["simulate"]).0, 2);
    assert_eq!(qdslab(&["simulate", "/nonexistent/model.cfg", "--bogus"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "compare", "hartree_1d.cfg", &[]), 2);
}

#[test]
fn caldeira_leggett_fails_the_choi_check() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "oracle", "caldeira_leggett.cfg", &[]), 1);
    assert!(dir.path().join("oracle.csv").exists());
}

#[test]
fn linear_harmonic_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "simulate", "linear_harmonic.cfg", &[]), 0);
    let table = rows(&dir.path().join("diagnostics.csv"));
    assert!(table.len() >= 2000, "{} rows", table.len());
    let drift = table.iter().map(|r| r[7].abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-10, "mass drift {drift}");
    let min_eig = table.iter().map(|r| r[2]).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    assert!(min_eig >= -1e-6, "min eigenvalue {min_eig}");

    // Coherent packet at (1, 0.5) evolved by the moment equations.
    let text = std::fs::read_to_string(config("linear_harmonic.cfg")).unwrap();
    let model = parse_experiment(&text).unwrap().model;
    let start = PhaseSpaceMoments { trace: 1.0, x: 1.0, p: 0.5, xx: 1.5, xp: 0.5, pp: 0.75 };
    let gen = MomentGenerator::from_parsed(&model).unwrap();
    let exact = integrate_moments(&gen, &MomentState::from_phase_space(&start), 2.0, 4000).unwrap();
    let end = exact.last().unwrap().to_phase_space().unwrap();
    let last = table.last().unwrap();
    assert!((last[0] - 2.0).abs() < 1e-12);
    assert!((last[3] - 0.5 * end.pp).abs() < 1e-6, "ekin {} vs {}", last[3], 0.5 * end.pp);
    assert!((last[4] - 0.5 * end.xx).abs() < 1e-6, "eext {} vs {}", last[4], 0.5 * end.xx);
}

#[test]
fn runs_are_deterministic_and_seeded() {
    let work = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("linear_harmonic.cfg")).unwrap();
    let head = &text[..text.find("[initial]").unwrap()];
    let cfg = work.path().join("random.cfg");
    let body = "[initial]\nkind = \"random\"\nrank = 2\nlevels = 4\n\n[run]\nt_end = 0.05\ndt = 0.001\n";
    std::fs::write(&cfg, format!("{head}{body}")).unwrap();
    let runs = std::cell::Cell::new(0);
    let run = |seed: &str| {
        runs.set(runs.get() + 1);
        let out = work.path().join(format!("run{}", runs.get()));
        let (code, _) = qdslab(&["simulate", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code, 0);
        std::fs::read(out.join("diagnostics.csv")).unwrap()
    };
    let first = run("7");
    assert_eq!(first, run("7"));
    assert_ne!(first, run("8"));
}

#[test]
fn benchmark_comparison_passes_and_coarse_steps_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "compare", "benchmark_compare.cfg", &[]), 0);
    assert!(dir.path().join("compare.csv").exists());
    assert_eq!(run_in(dir.path(), "compare", "benchmark_compare.cfg", &["-s", "run.dt=0.05"]), 1);
}
