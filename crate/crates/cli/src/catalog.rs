//! Named shapes and anisotropies.

use crate::config::{AnisotropyCfg, ConfigError, ShapeCfg};
use anyhow::Result;
use phasefield_core::anisotropy::Anisotropy;
use phasefield_core::sharp_geometry::CurveNetwork;
use std::f64::consts::PI;
use std::path::Path;

fn bad<T>(msg: String) -> Result<T> {
    Err(ConfigError(msg).into())
}

fn numbers(name: &str, args: &str, count: usize) -> Result<Vec<f64>> {
    let xs: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| ConfigError(format!("anisotropy.phi: `{name}` expects numbers, got `{args}`")))?;
    if xs.len() != count {
        return bad(format!("anisotropy.phi: `{name}` expects {count} value(s), got {}", xs.len()));
    }
    Ok(xs)
}

/// Builds the planar anisotropy named by `anisotropy.phi`.
pub fn anisotropy(cfg: &AnisotropyCfg) -> Result<Anisotropy> {
    let (name, args) = cfg.phi.split_once(':').unwrap_or((cfg.phi.as_str(), ""));
    let phi = match name.trim() {
        "iso" | "isotropic" => Anisotropy::isotropic(2)?,
        "four-fold" => Anisotropy::four_fold(2, numbers(name, args, 1)?[0])?,
        "smoothed-l1" => Anisotropy::smoothed_l1(2, numbers(name, args, 1)?[0])?,
        "ellipse" => {
            let a = numbers(name, args, 2)?;
            Anisotropy::ellipse(2, [a[0], a[1], 1.0])?
        }
        "table" => Anisotropy::from_table_file(Path::new(args.trim()))?,
        other => return bad(format!("anisotropy.phi: unknown anisotropy `{other}`")),
    };
    if cfg.rotation != 0.0 {
        Ok(phi.rotated(cfg.rotation)?)
    } else {
        Ok(phi)
    }
}

/// Builds the curve network named by `shape.name`.
pub fn shape(cfg: &ShapeCfg) -> Result<CurveNetwork> {
    let c = cfg.center;
    let net = match cfg.name.as_str() {
        "circle" => CurveNetwork::circle(c, cfg.r)?,
        "ellipse" => CurveNetwork::ellipse(c, cfg.a, cfg.b, cfg.rotation)?,
        "limacon" => CurveNetwork::limacon(c, cfg.a, cfg.b)?,
        "segment" => {
            let (s, t) = (0.5 * cfg.length * cfg.rotation.cos(), 0.5 * cfg.length * cfg.rotation.sin());
            CurveNetwork::segment([c[0] - s, c[1] - t], [c[0] + s, c[1] + t])?
        }
        "arc" => CurveNetwork::arc(c, cfg.r, cfg.rotation, cfg.sweep)?,
        "star" => {
            let angles: Vec<f64> = (0..cfg.arms)
                .map(|k| cfg.rotation + 2.0 * PI * k as f64 / cfg.arms as f64)
                .collect();
            CurveNetwork::star(c, cfg.length, &angles)?
        }
        "polygon" => {
            let verts: Vec<[f64; 2]> = (0..cfg.sides)
                .map(|k| {
                    let t = cfg.rotation + 2.0 * PI * k as f64 / cfg.sides as f64;
                    [c[0] + cfg.r * t.cos(), c[1] + cfg.r * t.sin()]
                })
                .collect();
            CurveNetwork::polygon(&verts)?
        }
        "csv" => match &cfg.path {
            Some(p) => CurveNetwork::from_csv(Path::new(p))?,
            None => return bad("shape.path is required for csv shapes".into()),
        },
        other => return bad(format!("shape.name: unknown shape `{other}`")),
    };
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_anisotropies() {
        let mut cfg = AnisotropyCfg::default();
        assert_eq!(anisotropy(&cfg).unwrap().eval_angle(0.3), 1.0);
        cfg.phi = "four-fold:0.3".into();
        assert!((anisotropy(&cfg).unwrap().eval_angle(0.0) - 1.3).abs() < 1e-12);
        cfg.phi = "four-fold".into();
        assert!(anisotropy(&cfg).is_err());
        cfg.phi = "hexagonal:1".into();
        assert!(anisotropy(&cfg).is_err());
    }

    #[test]
    fn builds_shapes() {
        let mut cfg = ShapeCfg::default();
        assert!((shape(&cfg).unwrap().length() - 2.0 * PI).abs() < 1e-9);
        cfg.name = "polygon".into();
        cfg.sides = 4;
        let sq = shape(&cfg).unwrap();
        assert!((sq.length() - 4.0 * 2f64.sqrt()).abs() < 1e-9);
        cfg.name = "segment".into();
        assert!((shape(&cfg).unwrap().length() - 1.0).abs() < 1e-12);
        cfg.name = "blob".into();
        assert!(shape(&cfg).is_err());
    }
}
