//! Run directories, manifests and tabular output.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const OUT_ENV: &str = "PHASEFIELD_OUT";

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    config_file: &'a str,
    output_root: String,
    jobs: usize,
    seed: u64,
    timings: &'a [Timing],
    outputs: &'a [String],
    checks: &'a [Check],
    passed: bool,
}

/// One run: a directory named after the command and the hash of its resolved config.
pub struct Run {
    command: String,
    dir: PathBuf,
    root: PathBuf,
    hash: String,
    jobs: usize,
    seed: u64,
    timings: Vec<Timing>,
    outputs: Vec<String>,
    checks: Vec<Check>,
}

impl Run {
    pub fn create(root: &Path, command: &str, config_toml: &str, jobs: usize, seed: u64) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(config_toml.as_bytes());
        let hash = hex::encode(h.finalize());
        let dir = root.join(format!("{command}-{}", &hash[..12]));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("config.toml"), config_toml)?;
        Ok(Self {
            command: command.to_string(),
            dir,
            root: root.to_path_buf(),
            hash,
            jobs,
            seed,
            timings: Vec::new(),
            outputs: vec!["config.toml".into()],
            checks: Vec::new(),
        })
    }

    #[cfg(test)]
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    /// Records `value <= threshold`.
    pub fn check_below(&mut self, name: &str, value: f64, threshold: f64) {
        self.check(name, value, threshold, value <= threshold);
    }

    /// Records `value >= threshold`.
    pub fn check_above(&mut self, name: &str, value: f64, threshold: f64) {
        self.check(name, value, threshold, value >= threshold);
    }

    pub fn check(&mut self, name: &str, value: f64, threshold: f64, passed: bool) {
        log::info!("{name}: {value:.6e} (threshold {threshold:.3e}) {}", if passed { "ok" } else { "MISSED" });
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            passed,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn finish(self) -> Result<RunSummary> {
        let passed = self.passed();
        let m = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: &self.hash,
            config_file: "config.toml",
            output_root: self.root.display().to_string(),
            jobs: self.jobs,
            seed: self.seed,
            timings: &self.timings,
            outputs: &self.outputs,
            checks: &self.checks,
            passed,
        };
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(RunSummary { dir: self.dir, passed })
    }
}

pub struct RunSummary {
    pub dir: PathBuf,
    pub passed: bool,
}

/// Writes a header and rows of numbers with round-trip precision.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dir_depends_on_config_only() {
        let root = tempfile::tempdir().unwrap();
        let a = Run::create(root.path(), "profile-check", "x = 1\n", 1, 0).unwrap();
        let b = Run::create(root.path(), "profile-check", "x = 1\n", 4, 0).unwrap();
        let c = Run::create(root.path(), "profile-check", "x = 2\n", 1, 0).unwrap();
        assert_eq!(a.dir(), b.dir());
        assert_ne!(a.dir(), c.dir());
        assert!(a.dir().file_name().unwrap().to_str().unwrap().starts_with("profile-check-"));
    }

    #[test]
    fn manifest_lists_checks() {
        let root = tempfile::tempdir().unwrap();
        let mut r = Run::create(root.path(), "t", "", 1, 3).unwrap();
        r.check_below("err", 0.5, 1.0);
        r.check_above("gap", -1.0, 0.0);
        assert!(!r.passed());
        let s = r.finish().unwrap();
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(s.dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["checks"].as_array().unwrap().len(), 2);
        assert_eq!(m["seed"], 3);
        assert_eq!(m["passed"], false);
    }
}
