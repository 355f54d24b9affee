//! `phasefield`: batch runner for the phase-field experiments.
//!
//! Every run resolves its configuration (file, then flags), writes it to a run
//! directory named after the command and the configuration hash, executes the
//! pipeline and finishes with a `manifest.json`. Exit status: 0 pass, 1
//! configuration error, 2 numeric failure, 3 divergence.

mod catalog;
mod commands;
mod config;
mod run;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use config::{Config, ConfigError, Overrides};
use phasefield_core::Error as CoreError;
use run::{Run, OUT_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "phasefield", version, about = "Phase-field energies, recovery sequences and varifold checks")]
struct Cli {
    /// TOML configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output root (default: $PHASEFIELD_OUT, else ./runs)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// worker threads for sweeps and grid loops
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// seed for random perturbations
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// extra override, `section.key=value` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// circle, ellipse, limacon, segment, arc, star, polygon or csv
    #[arg(long)]
    shape: Option<String>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    sides: Option<i64>,
}

impl ShapeArgs {
    fn apply(self, o: &mut Overrides) {
        o.push_opt("shape.name", self.shape);
        o.push_opt("shape.r", self.r);
        o.push_opt("shape.a", self.a);
        o.push_opt("shape.b", self.b);
        o.push_opt("shape.sides", self.sides);
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Masses and residual of the truncated optimal profile
    ProfileCheck {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Convex envelope of an anisotropy, checked against a linear program
    Convexify {
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        directions: Option<i64>,
    },
    /// Set functional of the recovery field against the sharp energy
    RecoveryEnergy {
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<i64>,
        #[arg(long)]
        subcells: Option<i64>,
    },
    /// Radial point energy against 4π
    PointEnergy {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Mumford-Shah recovery triple for a crack along a segment
    MsRecovery {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        n: Option<i64>,
        #[arg(long)]
        phi: Option<String>,
    },
    /// Varifold diagnostics: total curvature, monotonicity, densities
    VarifoldCheck {
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Descent of the set functional from a recovery field
    Minimize {
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n: Option<i64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<i64>,
        #[arg(long)]
        perturbation: Option<f64>,
    },
    /// Alternating minimisation of the diffuse Mumford-Shah functional
    MsMinimize {
        #[arg(long)]
        image: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        n: Option<i64>,
        #[arg(long)]
        cycles: Option<i64>,
        #[arg(long)]
        dt: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ProfileCheck { .. } => "profile-check",
            Command::Convexify { .. } => "convexify",
            Command::RecoveryEnergy { .. } => "recovery-energy",
            Command::PointEnergy { .. } => "point-energy",
            Command::MsRecovery { .. } => "ms-recovery",
            Command::VarifoldCheck { .. } => "varifold-check",
            Command::Minimize { .. } => "minimize",
            Command::MsMinimize { .. } => "ms-minimize",
        }
    }

    fn overrides(self, o: &mut Overrides) {
        match self {
            Command::ProfileCheck { eps, lambda } => {
                o.push_list("profile.eps", eps);
                o.push_opt("profile.lambda", lambda);
            }
            Command::Convexify { phi, directions } => {
                o.push_opt("anisotropy.phi", phi);
                o.push_opt("convexify.directions", directions);
            }
            Command::RecoveryEnergy {
                shape,
                phi,
                eps,
                n,
                subcells,
            } => {
                shape.apply(o);
                o.push_opt("anisotropy.phi", phi);
                o.push_list("recovery.eps", eps);
                o.push_opt("recovery.n", n);
                o.push_opt("recovery.subcells", subcells);
            }
            Command::PointEnergy { eps, beta } => {
                o.push_list("point.eps", eps);
                o.push_opt("point.beta", beta);
            }
            Command::MsRecovery { eps, gamma, n, phi } => {
                o.push_opt("ms.eps", eps);
                o.push_opt("ms.gamma", gamma);
                o.push_opt("ms.n", n);
                o.push_opt("anisotropy.phi", phi);
            }
            Command::VarifoldCheck { shape, spacing } => {
                shape.apply(o);
                o.push_opt("varifold.spacing", spacing);
            }
            Command::Minimize {
                shape,
                phi,
                eps,
                n,
                dt,
                steps,
                perturbation,
            } => {
                shape.apply(o);
                o.push_opt("anisotropy.phi", phi);
                o.push_opt("minimize.eps", eps);
                o.push_opt("minimize.n", n);
                o.push_opt("minimize.dt", dt);
                o.push_opt("minimize.steps", steps);
                o.push_opt("minimize.perturbation", perturbation);
            }
            Command::MsMinimize {
                image,
                eps,
                gamma,
                mu,
                n,
                cycles,
                dt,
            } => {
                o.push_opt("ms_minimize.image", image);
                o.push_opt("ms_minimize.eps", eps);
                o.push_opt("ms_minimize.gamma", gamma);
                o.push_opt("ms_minimize.mu", mu);
                o.push_opt("ms_minimize.n", n);
                o.push_opt("ms_minimize.cycles", cycles);
                o.push_opt("ms_minimize.dt", dt);
            }
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let name = cli.command.name();
    let mut o = Overrides::default();
    if let Some(seed) = cli.seed {
        o.push("run.seed", seed as i64);
    }
    cli.command.overrides(&mut o);
    for s in &cli.set {
        o.push_assignment(s)?;
    }
    let cfg = Config::load(cli.config.as_deref(), o)?;
    if cli.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    let root = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let mut run = Run::create(&root, name, &cfg.to_toml()?, cli.jobs, cfg.run.seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    pool.install(|| match name {
        "profile-check" => commands::profile_check(&cfg, &mut run),
        "convexify" => commands::convexify(&cfg, &mut run),
        "recovery-energy" => commands::recovery_energy(&cfg, &mut run),
        "point-energy" => commands::point_energy(&cfg, &mut run),
        "ms-recovery" => commands::ms_recovery(&cfg, &mut run),
        "varifold-check" => commands::varifold_check(&cfg, &mut run),
        "minimize" => commands::minimize(&cfg, &mut run),
        _ => commands::ms_minimize(&cfg, &mut run),
    })?;
    for c in run.checks() {
        println!(
            "{:<40} {:>14.6e}  threshold {:>10.3e}  {}",
            c.name,
            c.value,
            c.threshold,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let summary = run.finish()?;
    println!("{}", summary.dir.display());
    Ok(summary.passed)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Divergence { .. }) => 3,
        Some(CoreError::Quadrature { .. } | CoreError::CgStalled { .. } | CoreError::Refused(_)) => 2,
        Some(_) => 1,
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let div = anyhow::Error::from(CoreError::Divergence {
            step: 3,
            failures: 5,
            increase: 1.0,
        });
        assert_eq!(exit_code(&div), 3);
        let cg = anyhow::Error::from(CoreError::CgStalled {
            iterations: 10,
            residual: 1.0,
        });
        assert_eq!(exit_code(&cg), 2);
        assert_eq!(exit_code(&anyhow::Error::from(ConfigError("x".into()))), 1);
        assert_eq!(exit_code(&anyhow::Error::from(CoreError::InvalidParameter("x".into()))), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
