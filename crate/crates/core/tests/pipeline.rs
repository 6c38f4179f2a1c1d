use std::fs;
use std::path::Path;
use std::process::Command;

use invmeas::pipeline::replicate::{logistic_fit_config, two_fixed_point_config};
use invmeas::pipeline::{run_pipeline, ExperimentConfig};
use invmeas::Error;

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn rerun_reuses_every_stage_and_keeps_bytes() {
    let root = tempfile::tempdir().unwrap();
    let cfg = logistic_fit_config(Some(1000), 6);
    let first = run_pipeline(&cfg, root.path()).unwrap();
    assert!(first.reused.is_empty());
    let before = artifact_bytes(&first.dir);
    let second = run_pipeline(&cfg, root.path()).unwrap();
    for stage in ["snapshots", "edmd", "assemble", "solve", "recover"] {
        assert!(second.reused.iter().any(|s| s == stage), "{stage} not reused: {:?}", second.reused);
    }
    assert_eq!(before, artifact_bytes(&second.dir));
}

#[test]
fn independent_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = logistic_fit_config(Some(1000), 6);
    let ra = run_pipeline(&cfg, a.path()).unwrap();
    let rb = run_pipeline(&cfg, b.path()).unwrap();
    assert_eq!(artifact_bytes(&ra.dir), artifact_bytes(&rb.dir));
}

#[test]
fn changed_settings_invalidate_downstream_stages() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = logistic_fit_config(Some(1000), 6);
    run_pipeline(&cfg, root.path()).unwrap();
    cfg.solver.polish = false;
    let again = run_pipeline(&cfg, root.path()).unwrap();
    assert!(again.reused.iter().any(|s| s == "assemble"));
    assert!(!again.reused.iter().any(|s| s == "solve"));
    assert!(!again.reused.iter().any(|s| s == "recover"));
}

#[test]
fn config_with_l_below_k_is_rejected() {
    let mut cfg = two_fixed_point_config();
    cfg.basis.k = 3;
    cfg.basis.l = 2;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let root = tempfile::tempdir().unwrap();
    assert!(matches!(run_pipeline(&cfg, root.path()), Err(Error::Config(_))));
}

#[test]
fn config_survives_toml() {
    let cfg = logistic_fit_config(Some(100), 5);
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn logistic_density_is_close_to_arcsine() {
    let root = tempfile::tempdir().unwrap();
    let b = run_pipeline(&logistic_fit_config(Some(10_000), 10), root.path()).unwrap();
    let l1 = b.report.l1_cdf.unwrap();
    assert!(l1 < 0.02, "L1 CDF error {l1}");
}

fn trapezoid_mass(csv: &str, res: usize, h: f64) -> f64 {
    let mut mass = 0.0;
    for (i, line) in csv.lines().skip(1).enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let d = cols[cols.len() - 1];
        assert!(d.is_finite());
        let (a, b) = (i / res, i % res);
        let w = |j: usize| if j == 0 || j == res - 1 { 0.5 } else { 1.0 };
        mass += w(a) * w(b) * d * h * h;
    }
    mass
}

#[test]
fn double_well_density_grid_integrates_to_one() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = invmeas::pipeline::replicate::double_well_config(1000, 10, 12, 1);
    cfg.name = "double-well-exact-grid".into();
    cfg.data = None;
    cfg.edmd.exact = true;
    cfg.edmd.threshold = None;
    cfg.recovery.grid = Some(101);
    let b = run_pipeline(&cfg, root.path()).unwrap();
    let csv = fs::read_to_string(b.dir.join("density_grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 101 * 101);
    let mass = trapezoid_mass(&csv, 101, 2.0 / 100.0);
    assert!((mass - 1.0).abs() < 0.02, "grid mass {mass}");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_invmeas"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");

    let good = dir.path().join("good.toml");
    two_fixed_point_config().save(&good).unwrap();
    let s = cli().env("INVMEAS_OUTPUT_ROOT", &out).args(["solve"]).arg(&good).output().unwrap();
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(out.join("two-fixed-point").exists());

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "name = [").unwrap();
    let s = cli().env("INVMEAS_OUTPUT_ROOT", &out).arg("solve").arg(&broken).output().unwrap();
    assert_eq!(s.status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    let s = cli().env("INVMEAS_OUTPUT_ROOT", &out).arg("recover").arg(&missing).output().unwrap();
    assert_eq!(s.status.code(), Some(2));

    let mut bad = two_fixed_point_config();
    bad.basis.l = 0;
    let bad_path = dir.path().join("bad.toml");
    bad.save(&bad_path).unwrap();
    let s = cli().env("INVMEAS_OUTPUT_ROOT", &out).arg("edmd").arg(&bad_path).output().unwrap();
    assert_eq!(s.status.code(), Some(2));

    let mut escaping = logistic_fit_config(Some(100), 4);
    escaping.name = "escaping".into();
    escaping.basis.domain = Some(vec![(-0.5, 0.5)]);
    let esc_path = dir.path().join("escape.toml");
    escaping.save(&esc_path).unwrap();
    let s = cli().env("INVMEAS_OUTPUT_ROOT", &out).arg("simulate").arg(&esc_path).output().unwrap();
    assert_eq!(s.status.code(), Some(3), "{}", String::from_utf8_lossy(&s.stderr));
}

#[test]
fn cli_output_root_flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    two_fixed_point_config().save(&cfg).unwrap();
    let flag_root = dir.path().join("flag");
    let s = cli()
        .env("INVMEAS_OUTPUT_ROOT", dir.path().join("env"))
        .arg("--output-root")
        .arg(&flag_root)
        .arg("recover")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(0));
    assert!(flag_root.join("two-fixed-point").join("report.json").exists());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}
