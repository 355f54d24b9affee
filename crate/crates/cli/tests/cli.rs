use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phasefield"));
    c.env_remove("PHASEFIELD_OUT").env_remove("RUST_LOG");
    c
}

fn run_in(root: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(root).args(args).output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    let text = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(text.lines().last().expect("run directory on stdout").trim())
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn profile_check_writes_table_and_manifest() {
    let root = tempfile::tempdir().unwrap();
    let out = run_in(root.path(), &["profile-check", "--eps", "1e-2,1e-3,1e-4", "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("profile-check-"));
    let table = std::fs::read_to_string(dir.join("profile.csv")).unwrap();
    assert!(table.starts_with("eps,delta,kinetic,potential,tail,kinetic_error,kinetic_target,residual,eps_squared"));
    assert_eq!(table.lines().count(), 4);
    let m = manifest(&dir);
    assert_eq!(m["command"], "profile-check");
    assert_eq!(m["passed"], true);
    assert!(m["timings"].as_array().unwrap().len() >= 1);
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "profile.csv"));
    let cfg = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(cfg.contains("[profile]"), "{cfg}");
    assert!(cfg.contains("lambda = 2.0"), "{cfg}");
}

#[test]
fn reruns_are_bit_identical_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["recovery-energy", "--shape", "circle", "--R", "1", "--phi", "iso", "--eps", "0.04,0.02", "--n", "128"];
    let oa = run_in(a.path(), &args);
    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "2"]);
    let ob = run_in(b.path(), &with_jobs);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(ob.status.code(), Some(0));
    let (da, db) = (run_dir(&oa), run_dir(&ob));
    assert_eq!(da.file_name(), db.file_name());
    let ta = std::fs::read(da.join("convergence.csv")).unwrap();
    let tb = std::fs::read(db.join("convergence.csv")).unwrap();
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let totals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    for t in totals {
        assert!((t / (4.0 * std::f64::consts::PI) - 1.0).abs() < 0.05, "{t}");
    }
}

#[test]
fn output_root_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let out = bin()
        .env("PHASEFIELD_OUT", root.path())
        .args(["point-energy", "--eps", "1e-3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir(&out).starts_with(root.path()));
}

#[test]
fn config_file_and_overrides() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, "[point]\neps = [1e-2, 1e-4]\ntolerance = 0.5\n").unwrap();
    let out = run_in(
        root.path(),
        &["point-energy", "--config", cfg.to_str().unwrap(), "--set", "point.tolerance=1e-12"],
    );
    // the override tightens the tolerance past what the radial profile achieves
    assert_eq!(out.status.code(), Some(2));
    let dir = run_dir(&out);
    let resolved = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(resolved.contains("tolerance = 0.000000000001"), "{resolved}");
    assert_eq!(manifest(&dir)["passed"], false);
    let table = std::fs::read_to_string(dir.join("point_energy.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn schema_violations_exit_with_one() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.toml");
    std::fs::write(&cfg, "[recovery]\nn = 64\nresolution = 3\n").unwrap();
    let out = run_in(root.path(), &["recovery-energy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("resolution") && err.contains("line 3"), "{err}");

    let out = run_in(root.path(), &["profile-check", "--eps", "-1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(root.path(), &["profile-check", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(root.path(), &["recovery-energy", "--shape", "segment"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(root.path(), &["convexify", "--phi", "hexagonal:2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn polygon_total_curvature_is_refused_not_failed() {
    let root = tempfile::tempdir().unwrap();
    let out = run_in(root.path(), &["varifold-check", "--shape", "polygon", "--sides", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.contains("gauss_bonnet_refused"));
    let dens = std::fs::read_to_string(dir.join("densities.csv")).unwrap();
    assert_eq!(dens.lines().count(), 5);
}

#[test]
fn ellipse_varifold_check() {
    let root = tempfile::tempdir().unwrap();
    let out = run_in(root.path(), &["varifold-check", "--shape", "ellipse", "--a", "2", "--b", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let sweep = std::fs::read_to_string(dir.join("monotonicity.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 101);
}

#[test]
fn descent_runs_record_traces() {
    let root = tempfile::tempdir().unwrap();
    let out = run_in(
        root.path(),
        &["minimize", "--shape", "circle", "--R", "1", "--eps", "0.2", "--n", "32", "--steps", "50", "--perturbation", "0.05", "--seed", "9"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,stage,dt,bulk,anisotropic_mm,curvature,point,penalty_v,penalty_w,fidelity,total"));
    assert!(dir.join("v.bin").exists() && dir.join("v0.bin").exists());
    assert_eq!(manifest(&dir)["seed"], 9);

    let out = run_in(root.path(), &["ms-minimize", "--n", "32", "--cycles", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    for f in ["trace.csv", "u.bin", "v.bin", "w.bin", "g.bin"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}
