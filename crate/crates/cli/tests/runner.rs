use std::path::Path;
use std::process::Command;

use ricci_lab_cli::config::{self, Experiment};
use ricci_lab_cli::output::read_manifest;
use ricci_lab_cli::report::report;
use ricci_lab_cli::suites::{check_config, run_config, RunOptions};
use ricci_lab_cli::verify::{select, BUNDLED};

const ORACLE: &str = include_str!("../configs/oracle.toml");
const GREEN: &str = include_str!("../configs/green_flat.toml");
const MAXPRIN: &str = include_str!("../configs/maxprin_flat.toml");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ricci-lab"))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn every_bundled_config_parses_strictly() {
    for b in &BUNDLED {
        assert_eq!(check_config(b.text).unwrap(), b.experiment, "{}", b.name);
    }
}

#[test]
fn misspelled_key_is_rejected_with_position_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let bad = GREEN.replace("gap_tolerance", "gap_tolerence");
    let err = run_config(&bad, dir.path(), None, &RunOptions::default()).unwrap_err().to_string();
    assert!(err.contains("gap_tolerence"), "{err}");
    assert!(err.contains("line"), "{err}");
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing may be written");

    let nested = GREEN.replace("dim = 2", "dim = 2\nlayuot = \"radial\"");
    assert!(check_config(&nested).unwrap_err().to_string().contains("layuot"));
}

#[test]
fn unknown_experiment_and_bad_numbers_are_rejected() {
    let e = config::experiment_of("experiment = \"sorting\"\n").unwrap_err().to_string();
    assert!(e.contains("sorting"), "{e}");
    assert!(config::experiment_of("[suite]\n").is_err());
    let negative = GREEN.replace("gap_tolerance = 1e-3", "gap_tolerance = -1e-3");
    assert!(check_config(&negative).unwrap_err().to_string().contains("gap_tolerance"));
    let unordered = GREEN.replace("ks = [1.0, 2.0, 3.0, 4.0]", "ks = [1.0, 3.0, 2.0, 4.0]");
    assert!(check_config(&unordered).is_err());
    assert!(Experiment::parse("convseq").is_some() && Experiment::parse("all").is_none());
}

#[test]
fn oracle_run_passes_and_writes_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(ORACLE, dir.path(), None, &RunOptions::default()).unwrap();
    assert!(out.manifest.pass, "{:?}", out.manifest.checks);
    assert_eq!(out.dir, dir.path().join("oracle"));
    let names: Vec<&str> = out.manifest.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(names, ["config.toml", "oracle.csv", "reference.csv", "summary.json"]);
    assert_eq!(out.manifest.config_sha256.len(), 64);
    let back = read_manifest(&out.dir).unwrap();
    assert_eq!(back, out.manifest);
    let first = std::fs::read_to_string(out.dir.join("oracle.csv")).unwrap();
    assert!(first.starts_with("tau,tau_over_h2,sup_relative_error\n"));
    // 17 significant digits
    let cell = first.lines().nth(1).unwrap().split(',').next().unwrap();
    let mantissa = cell.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{cell}");
}

#[test]
fn green_run_is_deterministic_and_converges() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = RunOptions { jobs: 2, ..Default::default() };
    let ra = run_config(GREEN, a.path(), None, &opts).unwrap();
    let rb = run_config(GREEN, b.path(), None, &opts).unwrap();
    assert!(ra.manifest.pass);
    let rows = csv_rows(&ra.dir.join("convergence.csv"));
    assert_eq!(rows.len(), 4);
    let d: Vec<f64> = rows[..3].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    let mut ma = ra.manifest.clone();
    let mut mb = rb.manifest.clone();
    ma.wall_clock_seconds = 0.0;
    mb.wall_clock_seconds = 0.0;
    assert_eq!(ma, mb);
    for f in &ra.manifest.files {
        assert_eq!(
            std::fs::read(ra.dir.join(&f.path)).unwrap(),
            std::fs::read(rb.dir.join(&f.path)).unwrap(),
            "{}",
            f.path
        );
    }
}

#[test]
fn seed_override_and_jobs_do_not_change_verdicts() {
    let small = MAXPRIN.replace("seeds = 20", "seeds = 3");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = run_config(&small, a.path(), None, &RunOptions { seed: Some(40), ..Default::default() }).unwrap();
    let many =
        run_config(&small, b.path(), None, &RunOptions { seed: Some(40), jobs: 3, ..Default::default() }).unwrap();
    let rows = csv_rows(&one.dir.join("verdicts.csv"));
    let seeds: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(seeds, ["40", "41", "42"]);
    assert_eq!(rows, csv_rows(&many.dir.join("verdicts.csv")));
    assert!(one.manifest.pass);
}

#[test]
fn tight_tolerance_scale_reports_measured_against_required() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(ORACLE, dir.path(), None, &RunOptions { tol_scale: 1e-6, ..Default::default() }).unwrap();
    assert!(!out.manifest.pass);
    let failed: Vec<_> = out.manifest.failures().map(|c| c.name.as_str()).collect();
    assert!(failed.contains(&"kernel_vs_gaussian_sup_relative"), "{failed:?}");
    let c = out.manifest.failures().next().unwrap();
    assert!(c.required.starts_with("<=") || c.required.starts_with(">="));
}

#[test]
fn report_sorts_tables_and_emits_plot_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(GREEN, dir.path(), None, &RunOptions::default()).unwrap();
    // shuffle the rows on disk; the report must still list k in order
    let path = out.dir.join("convergence.csv");
    let body = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = body.lines().collect();
    lines[1..].reverse();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let text = report(dir.path()).unwrap();
    let table = &text[text.find("-- convergence.csv --").unwrap()..];
    let ks: Vec<&str> = table.lines().skip(3).take(4).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ks, ["1.000000e0", "2.000000e0", "3.000000e0", "4.000000e0"]);
    let plot = std::fs::read_to_string(out.dir.join("plot/convergence.dat")).unwrap();
    assert!(plot.starts_with("# k d_k gap_k mass_err_k"));
    assert_eq!(plot.lines().count(), 5);
}

#[test]
fn report_rejects_missing_or_corrupt_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(report(dir.path()).unwrap_err().to_string().contains("manifest.json"));
    std::fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    assert!(format!("{:#}", report(dir.path()).unwrap_err()).contains("corrupt"));
}

#[test]
fn verify_selection() {
    assert_eq!(select("all").unwrap().len(), BUNDLED.len());
    let m: Vec<_> = select("maxprin").unwrap().iter().map(|b| b.name).collect();
    assert_eq!(m, ["maxprin-flat", "maxprin-bump"]);
    assert!(select("everything").unwrap_err().to_string().contains("unknown suite"));
}

#[test]
fn binary_exit_codes_and_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.toml");
    std::fs::write(&cfg, ORACLE).unwrap();
    let root = dir.path().join("root");
    let ok = bin().args(["run", "--config"]).arg(&cfg).env("RICCI_LAB_OUT", &root).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(root.join("oracle/manifest.json").is_file());

    let fail =
        bin().args(["run", "--tol-scale", "1e-6", "--out"]).arg(&root).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, ORACLE.replace("tau_max", "tau_maks")).unwrap();
    let err = bin().args(["run", "--config"]).arg(&bad).arg("--out").arg(&root).output().unwrap();
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("tau_maks"));

    let unknown = bin().args(["verify", "nonsense", "--out"]).arg(&root).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    let rep = bin().arg("report").arg(root.join("oracle")).output().unwrap();
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("kernel_vs_gaussian_sup_relative"));
}

#[test]
fn verify_prints_the_statement_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["verify", "oracle", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().starts_with("statement"));
    assert!(text.contains("oracle equivalence") && text.contains("mass identity"));
    assert!(dir.path().join("verify/oracle/manifest.json").is_file());
}
