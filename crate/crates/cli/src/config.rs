//! Run configuration: one TOML table per subcommand, merged with command-line overrides.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Raised for anything the user can fix by editing the config or flags.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunCfg,
    pub anisotropy: AnisotropyCfg,
    pub shape: ShapeCfg,
    pub profile: ProfileCfg,
    pub convexify: ConvexifyCfg,
    pub recovery: RecoveryCfg,
    pub point: PointCfg,
    pub ms: MsCfg,
    pub varifold: VarifoldCfg,
    pub minimize: MinimizeCfg,
    pub ms_minimize: MsMinimizeCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunCfg {
    pub seed: u64,
}

impl Default for RunCfg {
    fn default() -> Self {
        Self { seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisotropyCfg {
    /// `iso`, `four-fold:B`, `smoothed-l1:S`, `ellipse:A,B` or `table:PATH`
    pub phi: String,
    /// rotation of the anisotropy in radians
    pub rotation: f64,
}

impl Default for AnisotropyCfg {
    fn default() -> Self {
        Self {
            phi: "iso".into(),
            rotation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeCfg {
    /// circle, ellipse, limacon, segment, arc, star, polygon, csv
    pub name: String,
    pub center: [f64; 2],
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub rotation: f64,
    pub length: f64,
    pub sweep: f64,
    pub arms: usize,
    pub sides: usize,
    pub path: Option<String>,
}

impl Default for ShapeCfg {
    fn default() -> Self {
        Self {
            name: "circle".into(),
            center: [0.0, 0.0],
            r: 1.0,
            a: 2.0,
            b: 1.0,
            rotation: 0.0,
            length: 1.0,
            sweep: std::f64::consts::PI,
            arms: 3,
            sides: 4,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileCfg {
    pub eps: Vec<f64>,
    pub lambda: f64,
}

impl Default for ProfileCfg {
    fn default() -> Self {
        Self {
            eps: vec![1e-2, 1e-3, 1e-4],
            lambda: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexifyCfg {
    pub directions: usize,
    pub samples: usize,
    /// LP oracle evaluations, spread evenly over the samples (0 disables)
    pub lp_checks: usize,
    pub lp_directions: usize,
}

impl Default for ConvexifyCfg {
    fn default() -> Self {
        Self {
            directions: 16384,
            samples: 720,
            lp_checks: 24,
            lp_directions: 2048,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryCfg {
    pub eps: Vec<f64>,
    pub lambda: f64,
    pub n: usize,
    pub half_width: f64,
    pub subcells: usize,
    pub tolerance: f64,
}

impl Default for RecoveryCfg {
    fn default() -> Self {
        Self {
            eps: vec![0.02, 0.01, 0.005],
            lambda: 2.0,
            n: 1024,
            half_width: 2.0,
            subcells: 4,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointCfg {
    pub eps: Vec<f64>,
    /// fixed β; `sqrt(eps)` when absent
    pub beta: Option<f64>,
    pub lambda: f64,
    pub tolerance: f64,
}

impl Default for PointCfg {
    fn default() -> Self {
        Self {
            eps: vec![1e-2, 1e-3, 1e-4],
            beta: None,
            lambda: 2.0,
            tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsCfg {
    pub eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// amplitude of the crack-opening displacement
    pub amplitude: f64,
    pub length: f64,
    pub n: usize,
    pub half_width: f64,
    pub subcells: usize,
    pub tolerance: f64,
}

impl Default for MsCfg {
    fn default() -> Self {
        Self {
            eps: 5e-3,
            gamma: 0.1,
            lambda: 2.0,
            amplitude: 1.0,
            length: 1.0,
            n: 1024,
            half_width: 0.75,
            subcells: 1,
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarifoldCfg {
    pub spacing: f64,
    /// the monotonicity sweep uses `sweep × sweep` (x₀, r) pairs
    pub sweep: usize,
    pub gap_tolerance: f64,
    pub deficit_tolerance: f64,
}

impl Default for VarifoldCfg {
    fn default() -> Self {
        Self {
            spacing: 1e-3,
            sweep: 10,
            gap_tolerance: 1e-6,
            deficit_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeCfg {
    pub eps: f64,
    pub n: usize,
    pub half_width: f64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub perturbation: f64,
    pub lambda: f64,
    pub slack: f64,
}

impl Default for MinimizeCfg {
    fn default() -> Self {
        Self {
            eps: 0.1,
            n: 64,
            half_width: 2.0,
            dt: 1e-2,
            steps: 500,
            record_every: 10,
            perturbation: 0.0,
            lambda: 2.0,
            slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsMinimizeCfg {
    /// `step`, `disk` or `constant`
    pub image: String,
    pub eps: f64,
    pub gamma: f64,
    pub mu: f64,
    pub n: usize,
    pub half_width: f64,
    pub cycles: usize,
    pub vw_steps_per_u: usize,
    pub dt: f64,
    /// initial constant values of the edge and point fields
    pub v0: f64,
    pub w0: f64,
    pub perturbation: f64,
    pub slack: f64,
}

impl Default for MsMinimizeCfg {
    fn default() -> Self {
        Self {
            image: "step".into(),
            eps: 0.1,
            gamma: 0.01,
            mu: 50.0,
            n: 64,
            half_width: 0.5,
            cycles: 20,
            vw_steps_per_u: 10,
            dt: 0.02,
            v0: 0.0,
            w0: 1.0,
            perturbation: 0.0,
            slack: 1e-8,
        }
    }
}

/// Key/value overrides applied on top of the file, in order.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(String, toml::Value)>);

impl Overrides {
    pub fn push(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn push_opt<T: Into<toml::Value>>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.push(key, v);
        }
    }

    pub fn push_list(&mut self, key: &str, value: Option<Vec<f64>>) {
        if let Some(v) = value {
            self.push(key, toml::Value::Array(v.into_iter().map(toml::Value::Float).collect()));
        }
    }

    /// Parses `section.key=value`; the value is read as TOML, falling back to a bare string.
    pub fn push_assignment(&mut self, text: &str) -> Result<()> {
        let Some((key, raw)) = text.split_once('=') else {
            return fail(format!("--set expects section.key=value, got `{text}`"));
        };
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").unwrap_or_else(|| raw.into()),
            Err(_) => toml::Value::String(raw.trim().to_string()),
        };
        self.push(key.trim(), value);
        Ok(())
    }
}

fn insert(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let Some((section, field)) = key.split_once('.') else {
        return fail(format!("override key `{key}` must be section.key"));
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => fail(format!("`{section}` is not a table")),
    }
}

impl Config {
    /// Reads the optional file, applies overrides and checks the result.
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                // parse straight from text first so errors carry line and column
                toml::from_str::<Config>(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides.0 {
            insert(&mut table, &k, v)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("command-line override: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serialising config")
    }
}

pub fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return fail(format!("{name} must be positive and finite, got {x}"));
    }
    Ok(())
}

pub fn at_least(name: &str, x: usize, min: usize) -> Result<()> {
    if x < min {
        return fail(format!("{name} must be at least {min}, got {x}"));
    }
    Ok(())
}

pub fn nonempty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        bail!(ConfigError(format!("{name} must list at least one value")));
    }
    for x in xs {
        positive(name, *x)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back: Config = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back.to_toml().unwrap(), c.to_toml().unwrap());
    }

    #[test]
    fn unknown_field_names_the_key_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[profile]\nlambda = 2.0\nepsilon = 1e-3\n").unwrap();
        let err = Config::load(Some(&p), Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[profile]\nlambda = 3.0\n").unwrap();
        let mut o = Overrides::default();
        o.push_assignment("profile.lambda=2.5").unwrap();
        o.push_assignment("anisotropy.phi=four-fold:0.3").unwrap();
        let c = Config::load(Some(&p), o).unwrap();
        assert_eq!(c.profile.lambda, 2.5);
        assert_eq!(c.anisotropy.phi, "four-fold:0.3");
    }

    #[test]
    fn wrong_type_is_rejected() {
        let mut o = Overrides::default();
        o.push("recovery.n", "many");
        assert!(Config::load(None, o).is_err());
    }
}
