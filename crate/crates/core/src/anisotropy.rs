//! Surface tensions on the unit sphere, the regularised extension `phi_eps`
//! and numerical convexification.

use crate::error::{invalid, Error, Result};
use crate::lp;
use crate::spline::CubicSpline;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

/// Directions used to estimate extrema and check positivity.
const SAMPLE_DIRS: usize = 4096;

#[derive(Debug, Clone)]
enum Kind {
    Isotropic,
    SmoothedL1 { s: f64 },
    FourFold { beta: f64 },
    Ellipse { axes: [f64; 3] },
    Tabulated(Arc<CubicSpline>),
    Hull(Arc<Hull2>),
    Support3(Arc<Support3>),
    Rotated { inner: Box<Anisotropy>, angle: f64 },
}

/// Even, positive surface tension on the unit circle or sphere.
#[derive(Debug, Clone)]
pub struct Anisotropy {
    kind: Kind,
    dim: usize,
    min: f64,
    max: f64,
}

/// Fibonacci points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

fn unit_angles(n: usize) -> impl Iterator<Item = [f64; 3]> {
    (0..n).map(move |i| {
        let t = 2.0 * PI * i as f64 / n as f64;
        [t.cos(), t.sin(), 0.0]
    })
}

fn sample_dirs(dim: usize, n: usize) -> Vec<[f64; 3]> {
    if dim == 2 {
        unit_angles(n).collect()
    } else {
        fibonacci_sphere(n)
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Anisotropy {
    fn build(kind: Kind, dim: usize) -> Result<Self> {
        let mut a = Self {
            kind,
            dim,
            min: 1.0,
            max: 1.0,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for u in sample_dirs(dim, SAMPLE_DIRS) {
            let v = a.eval_unit(&u[..dim]);
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("anisotropy must be positive and finite, got {v} at {u:?}"));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        a.min = lo;
        a.max = hi;
        Ok(a)
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim == 2 || dim == 3 {
            Ok(())
        } else {
            invalid(format!("dimension must be 2 or 3, got {dim}"))
        }
    }

    /// `phi = 1`.
    pub fn isotropic(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        Self::build(Kind::Isotropic, dim)
    }

    /// `sum_i sqrt(nu_i^2 + s^2)`, a smoothed l1 norm (convex).
    pub fn smoothed_l1(dim: usize, s: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        if !(s > 0.0) {
            return invalid("smoothing parameter must be positive");
        }
        Self::build(Kind::SmoothedL1 { s }, dim)
    }

    /// `1 + beta (nu_1^2 - nu_2^2)^2`, i.e. `1 + beta cos^2(2 theta)` in the plane.
    pub fn four_fold(dim: usize, beta: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        if !(beta > -1.0) || !beta.is_finite() {
            return invalid("four-fold amplitude must exceed -1");
        }
        Self::build(Kind::FourFold { beta }, dim)
    }

    /// Support function of the ellipse/ellipsoid with the given semi-axes (convex).
    pub fn ellipse(dim: usize, axes: [f64; 3]) -> Result<Self> {
        Self::check_dim(dim)?;
        if axes[..dim].iter().any(|a| !(*a > 0.0)) {
            return invalid("ellipse axes must be positive");
        }
        Self::build(Kind::Ellipse { axes }, dim)
    }

    /// Planar anisotropy interpolated from `(angle, value)` samples.
    ///
    /// Angles are reduced modulo pi (the function is even); a periodic cubic spline
    /// of period pi interpolates the values.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = samples.iter().map(|&(t, v)| (t.rem_euclid(PI), v)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut x: Vec<f64> = Vec::with_capacity(pts.len());
        let mut y: Vec<f64> = Vec::with_capacity(pts.len());
        for (t, v) in pts {
            if let Some(&last) = x.last() {
                if (t - last).abs() < 1e-12 {
                    let prev = *y.last().unwrap();
                    if (prev - v).abs() > 1e-9 * prev.abs().max(1.0) {
                        return invalid(format!("table is not even: conflicting values at angle {t}"));
                    }
                    continue;
                }
            }
            x.push(t);
            y.push(v);
        }
        if x.len() >= 2 && (x[0] + PI - x[x.len() - 1]).abs() < 1e-12 {
            x.pop();
            y.pop();
        }
        if x.len() < 3 {
            return invalid("table needs at least three distinct directions modulo pi");
        }
        let s = CubicSpline::periodic(x, y, PI)?;
        Self::build(Kind::Tabulated(Arc::new(s)), 2)
    }

    /// Reads a two-column `angle value` text table; `#` starts a comment.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Format(format!("{}:{}: expected two columns", path.display(), ln + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), ln + 1)))
            };
            rows.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::tabulated(&rows)
    }

    /// The planar anisotropy `nu -> phi(R(-angle) nu)`, i.e. `phi` rotated by `angle`.
    pub fn rotated(&self, angle: f64) -> Result<Self> {
        if self.dim != 2 {
            return invalid("rotation is only defined for planar anisotropies");
        }
        Ok(Self {
            kind: Kind::Rotated {
                inner: Box::new(self.clone()),
                angle,
            },
            dim: 2,
            min: self.min,
            max: self.max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Minimum over the sample directions.
    pub fn min_value(&self) -> f64 {
        self.min
    }

    pub fn max_value(&self) -> f64 {
        self.max
    }

    /// Smallest `C >= 1` with `1/C <= phi <= C` on the sample directions.
    pub fn bound_c(&self) -> f64 {
        self.max.max(1.0 / self.min).max(1.0)
    }

    /// Evaluates at a unit vector (no normalisation).
    pub fn eval_unit(&self, nu: &[f64]) -> f64 {
        match &self.kind {
            Kind::Isotropic => 1.0,
            Kind::SmoothedL1 { s } => nu[..self.dim].iter().map(|x| (x * x + s * s).sqrt()).sum(),
            Kind::FourFold { beta } => {
                let c = nu[0] * nu[0] - nu[1] * nu[1];
                1.0 + beta * c * c
            }
            Kind::Ellipse { axes } => nu[..self.dim]
                .iter()
                .zip(axes)
                .map(|(x, a)| a * a * x * x)
                .sum::<f64>()
                .sqrt(),
            Kind::Tabulated(s) => s.eval(nu[1].atan2(nu[0]))[0],
            Kind::Hull(h) => h.gauge(nu[0], nu[1]),
            Kind::Support3(s) => s.support([nu[0], nu[1], nu[2]]),
            Kind::Rotated { inner, angle } => {
                let (sn, cs) = angle.sin_cos();
                inner.eval_unit(&[cs * nu[0] + sn * nu[1], -sn * nu[0] + cs * nu[1]])
            }
        }
    }

    /// Evaluates at `nu / |nu|`; `nu` must be nonzero.
    pub fn eval(&self, nu: &[f64]) -> f64 {
        let n = norm(&nu[..self.dim]);
        let mut u = [0.0; 3];
        for k in 0..self.dim {
            u[k] = nu[k] / n;
        }
        self.eval_unit(&u[..self.dim])
    }

    /// Planar evaluation at angle `theta`.
    pub fn eval_angle(&self, theta: f64) -> f64 {
        self.eval_unit(&[theta.cos(), theta.sin()])
    }

    /// Largest `|phi(nu) - phi(-nu)|` over the sample directions.
    pub fn evenness_defect(&self) -> f64 {
        sample_dirs(self.dim, SAMPLE_DIRS)
            .iter()
            .map(|u| {
                let m = [-u[0], -u[1], -u[2]];
                (self.eval_unit(&u[..self.dim]) - self.eval_unit(&m[..self.dim])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Whether this anisotropy is the output of [`convex_envelope`].
    pub fn is_envelope(&self) -> bool {
        matches!(self.kind, Kind::Hull(_) | Kind::Support3(_))
    }
}

/// The cut-off `xi` on the unit ball: 0 on `B_{1/4}`, 1 outside `B_{1/2}`, slope 4.
#[inline]
pub fn extension_cutoff(r: f64) -> f64 {
    (4.0 * r - 1.0).clamp(0.0, 1.0)
}

/// `phi_bar(y) = xi(|y|) phi(y/|y|) + (1 - xi(|y|)) min(phi)/4` on the closed unit ball.
pub fn phi_bar(y: &[f64], phi: &Anisotropy) -> f64 {
    let r = norm(&y[..phi.dim]);
    let xi = extension_cutoff(r);
    let floor = 0.25 * phi.min;
    if xi == 0.0 {
        return floor;
    }
    xi * phi.eval(y) + (1.0 - xi) * floor
}

/// Parameters of the regularised extension.
#[derive(Debug, Clone, Copy)]
pub struct ExtensionParams {
    pub r_eps: f64,
    pub lip_l: f64,
}

impl ExtensionParams {
    /// Uses the numerically estimated Lipschitz constant of `phi_bar`.
    pub fn new(r_eps: f64, phi: &Anisotropy) -> Result<Self> {
        if !(r_eps > 0.0) {
            return invalid("r_eps must be positive");
        }
        Ok(Self {
            r_eps,
            lip_l: lipschitz_estimate(phi),
        })
    }
}

/// Maximum difference quotient of `phi_bar` along the axes of a grid on the unit ball.
pub fn lipschitz_estimate(phi: &Anisotropy) -> f64 {
    let n: i64 = if phi.dim == 2 { 400 } else { 80 };
    let h = 2.0 / n as f64;
    let inside = |p: &[f64; 3]| p.iter().map(|x| x * x).sum::<f64>() <= 1.0;
    let mut best = 0.0f64;
    let kmax = if phi.dim == 2 { 0 } else { n };
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=kmax {
                let p = [
                    -1.0 + i as f64 * h,
                    -1.0 + j as f64 * h,
                    if phi.dim == 2 { 0.0 } else { -1.0 + k as f64 * h },
                ];
                if !inside(&p) {
                    continue;
                }
                let f0 = phi_bar(&p, phi);
                for axis in 0..phi.dim {
                    let mut q = p;
                    q[axis] += h;
                    if inside(&q) {
                        best = best.max((phi_bar(&q, phi) - f0).abs() / h);
                    }
                }
            }
        }
    }
    best
}

/// `phi_eps(z) = phi_bar(z / sqrt(r_eps^2 + |z|^2))`.
pub fn extend(z: &[f64], phi: &Anisotropy, p: &ExtensionParams) -> f64 {
    let d = phi.dim;
    let s = (p.r_eps * p.r_eps + z[..d].iter().map(|x| x * x).sum::<f64>()).sqrt();
    let mut y = [0.0; 3];
    for k in 0..d {
        y[k] = z[k] / s;
    }
    phi_bar(&y[..d], phi)
}

/// Convex polygon `conv{u_i / phi(u_i)}` whose gauge is the planar convex envelope.
#[derive(Debug)]
pub struct Hull2 {
    verts: Vec<[f64; 2]>,
    angles: Vec<f64>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Hull2 {
    fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let mut pts = points;
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        if pts.len() < 3 {
            return invalid("hull needs at least three points");
        }
        let mut lower: Vec<[f64; 2]> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<[f64; 2]> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        // rotate so that vertex angles are increasing from the smallest
        let angles: Vec<f64> = lower.iter().map(|v| v[1].atan2(v[0])).collect();
        let start = (0..angles.len())
            .min_by(|&a, &b| angles[a].total_cmp(&angles[b]))
            .unwrap();
        let verts: Vec<[f64; 2]> = (0..lower.len()).map(|k| lower[(start + k) % lower.len()]).collect();
        let angles = verts.iter().map(|v| v[1].atan2(v[0])).collect();
        Ok(Self { verts, angles })
    }

    /// Gauge (Minkowski functional) of the polygon at the unit vector `(x, y)`.
    fn gauge(&self, x: f64, y: f64) -> f64 {
        let n = self.verts.len();
        let t = y.atan2(x);
        let k = self.angles.partition_point(|&a| a <= t);
        let (a, b) = if k == 0 || k == n {
            (self.verts[n - 1], self.verts[0])
        } else {
            (self.verts[k - 1], self.verts[k])
        };
        // edge line n.p = c with outward normal
        let nx = b[1] - a[1];
        let ny = a[0] - b[0];
        let c = nx * a[0] + ny * a[1];
        (nx * x + ny * y) / c
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }
}

/// Support function of `{x : x.u_i <= phi_i}` evaluated by linear programming.
#[derive(Debug)]
pub struct Support3 {
    dirs: Vec<Vec<f64>>,
    vals: Vec<f64>,
}

impl Support3 {
    fn support(&self, nu: [f64; 3]) -> f64 {
        lp::minimise_equality(&self.vals, &self.dirs, &nu).unwrap_or(f64::NAN)
    }
}

/// Convex envelope `phi**` sampled on `n_dirs` directions.
///
/// In the plane this is the gauge of `conv{u_i / phi(u_i)}`; in space the support
/// function of `{x : x.u_i <= phi(u_i)}` from a small linear program per query.
pub fn convex_envelope(phi: &Anisotropy, n_dirs: usize) -> Result<Anisotropy> {
    if n_dirs < 16 {
        return invalid(format!("convex envelope needs at least 16 directions, got {n_dirs}"));
    }
    let dirs = sample_dirs(phi.dim, n_dirs);
    let vals: Vec<f64> = dirs.iter().map(|u| phi.eval_unit(&u[..phi.dim])).collect();
    if let Some(v) = vals.iter().find(|v| !(**v > 0.0)) {
        return invalid(format!("anisotropy must be strictly positive, found {v}"));
    }
    let kind = if phi.dim == 2 {
        let pts = dirs.iter().zip(&vals).map(|(u, v)| [u[0] / v, u[1] / v]).collect();
        Kind::Hull(Arc::new(Hull2::new(pts)?))
    } else {
        Kind::Support3(Arc::new(Support3 {
            dirs: dirs.iter().map(|u| u.to_vec()).collect(),
            vals,
        }))
    };
    Anisotropy::build(kind, phi.dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_at_origin_is_quarter_minimum() {
        let phi = Anisotropy::four_fold(2, 0.5).unwrap();
        let p = ExtensionParams::new(0.01, &phi).unwrap();
        assert!((extend(&[0.0, 0.0], &phi, &p) - 0.25 * phi.min_value()).abs() < 1e-15);
    }

    #[test]
    fn extension_bounds_isotropic() {
        let phi = Anisotropy::isotropic(2).unwrap();
        let p = ExtensionParams::new(0.1, &phi).unwrap();
        for k in 0..1000 {
            let r = 10f64.powf(-4.0 + 6.0 * k as f64 / 1000.0);
            let v = extend(&[r * 0.6, -r * 0.8], &phi, &p);
            assert!((0.25..=1.0).contains(&v));
        }
    }

    #[test]
    fn linear_cutoff_slope() {
        let mut worst = 0.0f64;
        for k in 0..10_000 {
            let r = k as f64 / 10_000.0;
            worst = worst.max((extension_cutoff(r + 1e-4) - extension_cutoff(r)).abs() / 1e-4);
        }
        assert!(worst <= 4.0 + 1e-9);
        assert_eq!(extension_cutoff(0.2), 0.0);
        assert_eq!(extension_cutoff(0.6), 1.0);
    }

    #[test]
    fn bound_constant() {
        let phi = Anisotropy::four_fold(2, 0.3).unwrap();
        assert!((phi.bound_c() - 1.3).abs() < 1e-12);
        assert!((phi.min_value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_matches_analytic() {
        let rows: Vec<(f64, f64)> = (0..720)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 720.0;
                (t, 1.0 + 0.3 * (2.0 * t).cos().powi(2))
            })
            .collect();
        let tab = Anisotropy::tabulated(&rows).unwrap();
        let exact = Anisotropy::four_fold(2, 0.3).unwrap();
        for k in 0..100 {
            let t = 0.0731 * k as f64;
            assert!((tab.eval_angle(t) - exact.eval_angle(t)).abs() < 1e-6);
        }
        assert!(tab.evenness_defect() < 1e-12);
    }

    #[test]
    fn tabulated_rejects_odd_data() {
        let rows = vec![(0.0, 1.0), (PI, 2.0), (1.0, 1.0), (2.0, 1.0)];
        assert!(Anisotropy::tabulated(&rows).is_err());
    }

    #[test]
    fn envelope_of_isotropic_is_identity() {
        let phi = Anisotropy::isotropic(2).unwrap();
        let env = convex_envelope(&phi, 4096).unwrap();
        for k in 0..4096 {
            let t = 2.0 * PI * k as f64 / 4096.0;
            assert!((env.eval_angle(t) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn envelope_three_dimensional_l1() {
        let phi = Anisotropy::smoothed_l1(3, 1e-3).unwrap();
        let env = convex_envelope(&phi, 400).unwrap();
        for u in fibonacci_sphere(400).into_iter().step_by(20) {
            let e = env.eval_unit(&u);
            assert!(e <= phi.eval_unit(&u) + 1e-9);
            assert!(e > 0.9 * phi.eval_unit(&u));
        }
    }

    #[test]
    fn envelope_rejects_few_directions() {
        let phi = Anisotropy::isotropic(2).unwrap();
        assert!(convex_envelope(&phi, 8).is_err());
    }
}
