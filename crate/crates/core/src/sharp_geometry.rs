//! Planar curve networks and the sharp-interface energies evaluated on them.

use crate::anisotropy::Anisotropy;
use crate::breakdown::EnergyBreakdown;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::field::{self, Grid, Polylines, ScalarField};
use crate::quad::{integrate_pieces, QuadOptions};
use crate::spatial::{PolylineIndex, SampleIndex};
use crate::spline::CubicSpline;
use std::cell::Cell;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

pub type P2 = [f64; 2];

/// Endpoints closer than this are the same point of the network.
pub const JUNCTION_TOL: f64 = 1e-9;

const VALIDATION_SAMPLES: usize = 256;

#[inline]
fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}
#[inline]
fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
#[inline]
fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}
#[inline]
fn dist(a: P2, b: P2) -> f64 {
    norm(sub(a, b))
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    }
}

/// One C² curve parametrised over `[0, 1]`.
#[derive(Debug, Clone)]
pub enum Curve {
    Segment {
        a: P2,
        b: P2,
    },
    /// `center + radius (cos θ, sin θ)` with `θ = start + sweep t`
    Arc {
        center: P2,
        radius: f64,
        start: f64,
        sweep: f64,
    },
    Circle {
        center: P2,
        radius: f64,
    },
    /// semi-axes `a`, `b` rotated by `rotation`
    Ellipse {
        center: P2,
        a: f64,
        b: f64,
        rotation: f64,
    },
    /// polar `r(θ) = b + a cos θ`
    Limacon {
        center: P2,
        a: f64,
        b: f64,
    },
    Spline {
        x: Arc<CubicSpline>,
        y: Arc<CubicSpline>,
        closed: bool,
    },
}

impl Curve {
    pub fn is_closed(&self) -> bool {
        match self {
            Curve::Segment { .. } | Curve::Arc { .. } => false,
            Curve::Spline { closed, .. } => *closed,
            _ => true,
        }
    }

    /// Position, first and second parameter derivatives.
    pub fn eval(&self, t: f64) -> [P2; 3] {
        match self {
            Curve::Segment { a, b } => {
                let d = sub(*b, *a);
                [[a[0] + t * d[0], a[1] + t * d[1]], d, [0.0, 0.0]]
            }
            Curve::Arc {
                center,
                radius,
                start,
                sweep,
            } => circle_jet(*center, *radius, *start + sweep * t, *sweep),
            Curve::Circle { center, radius } => circle_jet(*center, *radius, 2.0 * PI * t, 2.0 * PI),
            Curve::Ellipse { center, a, b, rotation } => {
                let w = 2.0 * PI;
                let (s, c) = (w * t).sin_cos();
                let (rs, rc) = rotation.sin_cos();
                let rot = |v: P2| [rc * v[0] - rs * v[1], rs * v[0] + rc * v[1]];
                let p = rot([a * c, b * s]);
                [
                    [center[0] + p[0], center[1] + p[1]],
                    rot([-a * w * s, b * w * c]),
                    rot([-a * w * w * c, -b * w * w * s]),
                ]
            }
            Curve::Limacon { center, a, b } => {
                let w = 2.0 * PI;
                let th = w * t;
                let (s, c) = th.sin_cos();
                let r = b + a * c;
                let r1 = -a * s;
                let r2 = -a * c;
                [
                    [center[0] + r * c, center[1] + r * s],
                    [w * (r1 * c - r * s), w * (r1 * s + r * c)],
                    [
                        w * w * (r2 * c - 2.0 * r1 * s - r * c),
                        w * w * (r2 * s + 2.0 * r1 * c - r * s),
                    ],
                ]
            }
            Curve::Spline { x, y, .. } => {
                let ex = x.eval(t);
                let ey = y.eval(t);
                [[ex[0], ey[0]], [ex[1], ey[1]], [ex[2], ey[2]]]
            }
        }
    }

    pub fn point(&self, t: f64) -> P2 {
        self.eval(t)[0]
    }

    pub fn unit_tangent(&self, t: f64) -> P2 {
        let d = self.eval(t)[1];
        let s = norm(d);
        [d[0] / s, d[1] / s]
    }

    /// Curvature vector `d/ds` of the unit tangent.
    pub fn curvature(&self, t: f64) -> P2 {
        let [_, d1, d2] = self.eval(t);
        curvature_from(d1, d2)
    }

    fn breaks(&self) -> Vec<f64> {
        match self {
            Curve::Spline { x, closed, .. } => {
                let mut b = x.knots().to_vec();
                if *closed {
                    b.push(1.0);
                }
                b
            }
            _ => vec![0.0, 1.0],
        }
    }

    /// Integrates `f(t, jet)` against arc length.
    pub fn integrate<F: Fn(f64, &[P2; 3]) -> f64>(&self, f: F) -> Result<f64> {
        integrate_pieces(
            |t| {
                let e = self.eval(t);
                f(t, &e) * norm(e[1])
            },
            &self.breaks(),
            quad_opts(),
        )
        .checked(0.0, 1.0)
    }

    pub fn length(&self) -> Result<f64> {
        match self {
            Curve::Segment { a, b } => Ok(dist(*a, *b)),
            Curve::Arc { radius, sweep, .. } => Ok(radius * sweep.abs()),
            Curve::Circle { radius, .. } => Ok(2.0 * PI * radius),
            _ => self.integrate(|_, _| 1.0),
        }
    }

    /// Closed-form nearest point for segments, arcs and circles: `(t, foot, endpoint)`.
    fn project_analytic(&self, x: P2) -> Option<(f64, P2, bool)> {
        match self {
            Curve::Segment { a, b } => {
                let d = sub(*b, *a);
                let s = dot(sub(x, *a), d) / dot(d, d);
                let t = s.clamp(0.0, 1.0);
                Some((t, [a[0] + t * d[0], a[1] + t * d[1]], s != t))
            }
            Curve::Circle { center, radius } => {
                let v = sub(x, *center);
                let r = norm(v);
                if r == 0.0 {
                    return Some((0.0, [center[0] + radius, center[1]], false));
                }
                let t = (v[1].atan2(v[0]) / (2.0 * PI)).rem_euclid(1.0);
                Some((t, [center[0] + radius * v[0] / r, center[1] + radius * v[1] / r], false))
            }
            Curve::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let v = sub(x, *center);
                let r = norm(v);
                let ang = v[1].atan2(v[0]);
                let off = if *sweep > 0.0 {
                    (ang - start).rem_euclid(2.0 * PI)
                } else {
                    (start - ang).rem_euclid(2.0 * PI)
                };
                if r > 0.0 && off <= sweep.abs() {
                    let t = off / sweep.abs();
                    return Some((t, [center[0] + radius * v[0] / r, center[1] + radius * v[1] / r], false));
                }
                let p0 = self.point(0.0);
                let p1 = self.point(1.0);
                if dist(x, p0) <= dist(x, p1) {
                    Some((0.0, p0, true))
                } else {
                    Some((1.0, p1, true))
                }
            }
            _ => None,
        }
    }
}

fn circle_jet(c: P2, r: f64, th: f64, w: f64) -> [P2; 3] {
    let (s, co) = th.sin_cos();
    [
        [c[0] + r * co, c[1] + r * s],
        [-r * w * s, r * w * co],
        [-r * w * w * co, -r * w * w * s],
    ]
}

fn curvature_from(d1: P2, d2: P2) -> P2 {
    let s2 = dot(d1, d1);
    let tang = dot(d1, d2) / s2;
    [(d2[0] - tang * d1[0]) / s2, (d2[1] - tang * d1[1]) / s2]
}

/// A curve attached to a network point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub curve: usize,
    /// `true` if the curve starts at the point, `false` if it ends there
    pub at_start: bool,
}

/// Endpoint or junction of a network with its incident curves.
#[derive(Debug, Clone)]
pub struct Junction {
    pub point: P2,
    pub arms: Vec<Arm>,
}

/// Sum of outgoing unit tangents at a network point.
#[derive(Debug, Clone, Copy)]
pub struct JunctionVector {
    pub vector: P2,
    pub norm: f64,
    /// `|v_p|` above tolerance
    pub nonzero: bool,
}

/// Finite union of C² curves meeting only at their endpoints.
#[derive(Debug, Clone)]
pub struct CurveNetwork {
    curves: Vec<Curve>,
    junctions: Vec<Junction>,
    lengths: Vec<f64>,
    max_speed: Vec<f64>,
    sup_curvature: f64,
    domain: Option<(P2, P2)>,
}

fn segments_touch(p1: P2, p2: P2, q1: P2, q2: P2) -> bool {
    let orient = |a: P2, b: P2, c: P2| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let on_seg = |a: P2, b: P2, c: P2| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_seg(q1, q2, p1))
        || (d2 == 0.0 && on_seg(q1, q2, p2))
        || (d3 == 0.0 && on_seg(p1, p2, q1))
        || (d4 == 0.0 && on_seg(p1, p2, q2))
}

impl CurveNetwork {
    /// Validates the curves and builds the endpoint incidence.
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Geometry("network has no curves".into()));
        }
        let mut max_speed = Vec::with_capacity(curves.len());
        let mut sup_curvature: f64 = 0.0;
        let mut polys = Vec::with_capacity(curves.len());
        for (ci, c) in curves.iter().enumerate() {
            let n = 4 * VALIDATION_SAMPLES;
            let mut vmax: f64 = 0.0;
            let mut vmin = f64::INFINITY;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                let [p, d1, d2] = c.eval(t);
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::Geometry(format!("curve {ci} is not finite at t={t}")));
                }
                let s = norm(d1);
                vmax = vmax.max(s);
                vmin = vmin.min(s);
                sup_curvature = sup_curvature.max(norm(curvature_from(d1, d2)));
            }
            if !(vmin > 1e-12 * vmax.max(1e-300)) || vmax == 0.0 {
                return Err(Error::Geometry(format!("curve {ci} has a vanishing tangent")));
            }
            max_speed.push(vmax);
            let m = VALIDATION_SAMPLES;
            let poly: Vec<P2> = if c.is_closed() {
                (0..m).map(|k| c.point(k as f64 / m as f64)).collect()
            } else {
                (0..=m).map(|k| c.point(k as f64 / m as f64)).collect()
            };
            polys.push(poly);
        }

        let mut junctions: Vec<Junction> = Vec::new();
        for (ci, c) in curves.iter().enumerate() {
            if c.is_closed() {
                continue;
            }
            for (at_start, t) in [(true, 0.0), (false, 1.0)] {
                let p = c.point(t);
                let arm = Arm { curve: ci, at_start };
                match junctions.iter_mut().find(|j| dist(j.point, p) <= JUNCTION_TOL) {
                    Some(j) => j.arms.push(arm),
                    None => junctions.push(Junction { point: p, arms: vec![arm] }),
                }
            }
        }

        // junction id touched by each end segment
        let junction_of = |ci: usize, at_start: bool| {
            junctions
                .iter()
                .position(|j| j.arms.contains(&Arm { curve: ci, at_start }))
        };
        let mut segs: Vec<(usize, usize, P2, P2, Option<usize>, Option<usize>)> = Vec::new();
        for (ci, poly) in polys.iter().enumerate() {
            let closed = curves[ci].is_closed();
            let ns = if closed { poly.len() } else { poly.len() - 1 };
            for k in 0..ns {
                let a = poly[k];
                let b = poly[(k + 1) % poly.len()];
                let ja = if !closed && k == 0 { junction_of(ci, true) } else { None };
                let jb = if !closed && k + 1 == ns { junction_of(ci, false) } else { None };
                segs.push((ci, k, a, b, ja, jb));
            }
        }
        for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                let (ci, ki, a1, b1, ja1, jb1) = segs[i];
                let (cj, kj, a2, b2, ja2, jb2) = segs[j];
                if ci == cj {
                    let ns = if curves[ci].is_closed() {
                        polys[ci].len()
                    } else {
                        polys[ci].len() - 1
                    };
                    let gap = kj.abs_diff(ki);
                    if gap <= 1 || (curves[ci].is_closed() && gap == ns - 1) {
                        continue;
                    }
                }
                let shared = [ja1, jb1]
                    .iter()
                    .flatten()
                    .any(|x| [ja2, jb2].iter().flatten().any(|y| x == y));
                if shared {
                    continue;
                }
                if a1[0].max(b1[0]) < a2[0].min(b2[0])
                    || a2[0].max(b2[0]) < a1[0].min(b1[0])
                    || a1[1].max(b1[1]) < a2[1].min(b2[1])
                    || a2[1].max(b2[1]) < a1[1].min(b1[1])
                {
                    continue;
                }
                if segments_touch(a1, b1, a2, b2) {
                    return Err(Error::Geometry(format!(
                        "curves {ci} and {cj} intersect away from their endpoints near ({:.6}, {:.6})",
                        a1[0], a1[1]
                    )));
                }
            }
        }
        let lengths = curves.iter().map(|c| c.length()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            curves,
            junctions,
            lengths,
            max_speed,
            sup_curvature,
            domain: None,
        })
    }

    /// Attaches a box domain; every curve must lie inside it.
    pub fn with_domain(mut self, lo: P2, hi: P2) -> Result<Self> {
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return invalid("domain box must have positive extent");
        }
        for (ci, c) in self.curves.iter().enumerate() {
            for k in 0..=VALIDATION_SAMPLES {
                let p = c.point(k as f64 / VALIDATION_SAMPLES as f64);
                if p[0] <= lo[0] || p[0] >= hi[0] || p[1] <= lo[1] || p[1] >= hi[1] {
                    return Err(Error::Geometry(format!("curve {ci} leaves the domain")));
                }
            }
        }
        self.domain = Some((lo, hi));
        Ok(self)
    }

    pub fn domain(&self) -> Option<(P2, P2)> {
        self.domain
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Largest curvature seen on the validation samples.
    pub fn sup_curvature(&self) -> f64 {
        self.sup_curvature
    }

    /// Closed curves only, no endpoints.
    pub fn is_closed_boundary(&self) -> bool {
        self.junctions.is_empty() && self.curves.iter().all(Curve::is_closed)
    }

    pub fn find_junction(&self, p: P2) -> Result<usize> {
        self.junctions
            .iter()
            .position(|j| dist(j.point, p) <= JUNCTION_TOL)
            .ok_or_else(|| Error::NotAnEndpoint(format!("({}, {})", p[0], p[1])))
    }

    /// Density `#(arms) / 2` at a network point.
    pub fn theta(&self, junction: usize) -> f64 {
        self.junctions[junction].arms.len() as f64 / 2.0
    }

    pub fn curvature(&self, curve: usize, t: f64) -> Result<P2> {
        if curve >= self.curves.len() {
            return invalid(format!("curve index {curve} out of range"));
        }
        if !(0.0..=1.0).contains(&t) {
            return invalid(format!("parameter {t} outside [0, 1]"));
        }
        Ok(self.curves[curve].curvature(t))
    }

    /// Outgoing unit tangent of an arm.
    pub fn arm_tangent(&self, arm: Arm) -> P2 {
        let c = &self.curves[arm.curve];
        if arm.at_start {
            c.unit_tangent(0.0)
        } else {
            let t = c.unit_tangent(1.0);
            [-t[0], -t[1]]
        }
    }

    pub fn junction_vector(&self, p: P2) -> Result<JunctionVector> {
        let j = self.find_junction(p)?;
        let mut v = [0.0, 0.0];
        for &arm in &self.junctions[j].arms {
            let t = self.arm_tangent(arm);
            v[0] += t[0];
            v[1] += t[1];
        }
        let n = norm(v);
        Ok(JunctionVector {
            vector: v,
            norm: n,
            nonzero: n > JUNCTION_TOL,
        })
    }

    /// Parameter-uniform polylines with vertex spacing at most `spacing`.
    pub fn polylines(&self, spacing: f64) -> Polylines {
        let mut out = Polylines::default();
        for (c, vmax) in self.curves.iter().zip(&self.max_speed) {
            let n = ((1.05 * vmax / spacing).ceil() as usize).max(8);
            let line: Vec<P2> = if c.is_closed() {
                (0..n).map(|k| c.point(k as f64 / n as f64)).collect()
            } else {
                (0..=n).map(|k| c.point(k as f64 / n as f64)).collect()
            };
            out.lines.push(line);
            out.closed.push(c.is_closed());
        }
        out
    }

    /// Distance field on a planar grid, signed (negative inside) for closed boundaries.
    pub fn signed_distance(&self, grid: &Grid) -> Result<ScalarField> {
        field::signed_distance(&self.polylines(0.25 * grid.h_min()), grid)
    }

    // ---- catalog ----

    pub fn circle(center: P2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return invalid("circle radius must be positive");
        }
        Self::new(vec![Curve::Circle { center, radius }])
    }

    pub fn ellipse(center: P2, a: f64, b: f64, rotation: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return invalid("ellipse semi-axes must be positive");
        }
        Self::new(vec![Curve::Ellipse { center, a, b, rotation }])
    }

    /// `r(θ) = b + a cos θ`; convex for `b ≥ 2a`, dimpled for `a < b < 2a`.
    pub fn limacon(center: P2, a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b > 0.0) {
            return invalid("limacon needs a >= 0 and b > 0");
        }
        Self::new(vec![Curve::Limacon { center, a, b }])
    }

    pub fn segment(a: P2, b: P2) -> Result<Self> {
        Self::new(vec![Curve::Segment { a, b }])
    }

    pub fn arc(center: P2, radius: f64, start: f64, sweep: f64) -> Result<Self> {
        if !(radius > 0.0) || sweep == 0.0 || sweep.abs() >= 2.0 * PI {
            return invalid("arc needs a positive radius and 0 < |sweep| < 2π");
        }
        Self::new(vec![Curve::Arc {
            center,
            radius,
            start,
            sweep,
        }])
    }

    /// Segments of length `len` leaving `center` at the given angles.
    pub fn star(center: P2, len: f64, angles: &[f64]) -> Result<Self> {
        if angles.is_empty() || !(len > 0.0) {
            return invalid("star needs at least one arm of positive length");
        }
        Self::new(
            angles
                .iter()
                .map(|a| Curve::Segment {
                    a: center,
                    b: [center[0] + len * a.cos(), center[1] + len * a.sin()],
                })
                .collect(),
        )
    }

    /// Closed polygon; every vertex becomes a two-arm junction.
    pub fn polygon(vertices: &[P2]) -> Result<Self> {
        if vertices.len() < 3 {
            return invalid("polygon needs at least three vertices");
        }
        let n = vertices.len();
        Self::new(
            (0..n)
                .map(|i| Curve::Segment {
                    a: vertices[i],
                    b: vertices[(i + 1) % n],
                })
                .collect(),
        )
    }

    /// Spline curves through `(curve_id, t, x, y)` rows; a curve whose first and last
    /// samples coincide is closed.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut groups: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Format(format!("row {}: expected curve_id,t,x,y", line + 2)));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad number {:?}", line + 2, &rec[k])))
            };
            let id = rec[0].trim().to_string();
            let row = (num(1)?, num(2)?, num(3)?);
            match groups.iter_mut().find(|g| g.0 == id) {
                Some(g) => g.1.push(row),
                None => groups.push((id, vec![row])),
            }
        }
        let mut curves = Vec::new();
        for (id, mut rows) in groups {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            if rows.len() < 4 {
                return Err(Error::Format(format!("curve {id} needs at least 4 samples")));
            }
            let t0 = rows[0].0;
            let t1 = rows[rows.len() - 1].0;
            if !(t1 > t0) {
                return Err(Error::Format(format!("curve {id} has a degenerate parameter range")));
            }
            let first = [rows[0].1, rows[0].2];
            let last = [rows[rows.len() - 1].1, rows[rows.len() - 1].2];
            let closed = dist(first, last) <= JUNCTION_TOL;
            if closed {
                rows.pop();
            }
            let t: Vec<f64> = rows.iter().map(|r| (r.0 - t0) / (t1 - t0)).collect();
            let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let (x, y) = if closed {
                (
                    CubicSpline::periodic(t.clone(), xs, 1.0)?,
                    CubicSpline::periodic(t, ys, 1.0)?,
                )
            } else {
                (CubicSpline::natural(t.clone(), xs)?, CubicSpline::natural(t, ys)?)
            };
            curves.push(Curve::Spline {
                x: Arc::new(x),
                y: Arc::new(y),
                closed,
            });
        }
        Self::new(curves)
    }
}

/// `∫ φ(ν) dH¹` and `∫ |H|² dH¹` over all curves of the network.
pub fn interface_energy(net: &CurveNetwork, phi: &Anisotropy) -> Result<EnergyBreakdown> {
    if phi.dim() != 2 {
        return invalid("planar networks need a planar anisotropy");
    }
    let mut mm = 0.0;
    let mut curv = 0.0;
    for c in net.curves() {
        mm += c.integrate(|_, e| {
            let s = norm(e[1]);
            phi.eval_unit(&[e[1][1] / s, -e[1][0] / s])
        })?;
        curv += c.integrate(|_, e| {
            let h = curvature_from(e[1], e[2]);
            dot(h, h)
        })?;
    }
    Ok(EnergyBreakdown::interface(mm, curv))
}

/// Sharp set energy `∫ φ(ν_E) + |H_E|²` of a closed boundary.
pub fn sharp_set_energy(boundary: &CurveNetwork, phi: &Anisotropy) -> Result<EnergyBreakdown> {
    if !boundary.is_closed_boundary() {
        return Err(Error::Geometry("set energy needs closed curves without endpoints".into()));
    }
    interface_energy(boundary, phi)
}

/// `∫ (1/β + β |H|²) dH¹`.
pub fn willmore_beta_energy(net: &CurveNetwork, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return invalid("beta must be positive");
    }
    let iso = Anisotropy::isotropic(2)?;
    let e = interface_energy(net, &iso)?;
    Ok(e.anisotropic_mm / beta + beta * e.curvature)
}

/// Heuristic radius `4γ / inf φ` around network points.
pub fn rho_bar(gamma: f64, phi: &Anisotropy) -> f64 {
    4.0 * gamma / phi.min_value()
}

/// Displacement with a jump across a curve network.
pub trait SharpDisplacement: Send + Sync + std::fmt::Debug {
    /// Value and gradient at a point off the jump set.
    fn jet(&self, x: P2) -> (f64, P2);

    /// Coordinates of lines `x = c` and `y = c` where the gradient may be discontinuous.
    fn kinks(&self) -> (Vec<f64>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }

    /// `∫ |∇u|²` over a box.
    fn bulk_energy(&self, lo: P2, hi: P2) -> Result<f64> {
        bulk_by_quadrature(self, lo, hi)
    }
}

fn pieces(lo: f64, hi: f64, cuts: &[f64]) -> Vec<f64> {
    let mut b = vec![lo];
    let mut inner: Vec<f64> = cuts.iter().copied().filter(|c| *c > lo && *c < hi).collect();
    inner.sort_by(f64::total_cmp);
    b.extend(inner);
    b.push(hi);
    b
}

/// Iterated adaptive quadrature of `|∇u|²` over a box.
pub fn bulk_by_quadrature<D: SharpDisplacement + ?Sized>(u: &D, lo: P2, hi: P2) -> Result<f64> {
    let (kx, ky) = u.kinks();
    let bx = pieces(lo[0], hi[0], &kx);
    let by = pieces(lo[1], hi[1], &ky);
    let failed = Cell::new(false);
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_intervals: 5000,
    };
    let outer = integrate_pieces(
        |x| {
            let r = integrate_pieces(
                |y| {
                    let g = u.jet([x, y]).1;
                    dot(g, g)
                },
                &by,
                opts,
            );
            if !r.converged {
                failed.set(true);
            }
            r.value
        },
        &bx,
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 5000,
        },
    );
    if failed.get() {
        return Err(Error::Quadrature {
            a: lo[1],
            b: hi[1],
            estimate: outer.value,
            error: f64::NAN,
        });
    }
    outer.checked(lo[0], hi[0])
}

/// `above` on the side `n·x > offset`, `below` on the other.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    pub normal: P2,
    pub offset: f64,
    pub below: f64,
    pub above: f64,
}

impl SharpDisplacement for PiecewiseConstant {
    fn jet(&self, x: P2) -> (f64, P2) {
        let v = if dot(self.normal, x) > self.offset { self.above } else { self.below };
        (v, [0.0, 0.0])
    }

    fn bulk_energy(&self, _: P2, _: P2) -> Result<f64> {
        Ok(0.0)
    }
}

/// Affine function plus a step of height `jump` across `n·x = offset`.
#[derive(Debug, Clone)]
pub struct AffineWithJump {
    pub slope: P2,
    pub intercept: f64,
    pub jump: f64,
    pub normal: P2,
    pub offset: f64,
}

impl SharpDisplacement for AffineWithJump {
    fn jet(&self, x: P2) -> (f64, P2) {
        let step = if dot(self.normal, x) > self.offset { self.jump } else { 0.0 };
        (dot(self.slope, x) + self.intercept + step, self.slope)
    }

    fn bulk_energy(&self, lo: P2, hi: P2) -> Result<f64> {
        Ok(dot(self.slope, self.slope) * (hi[0] - lo[0]) * (hi[1] - lo[1]))
    }
}

/// Crack along the segment `[a, b]`:
/// `u = sign(n) A cos²(π s / L) exp(-n²)` for `|s| < L/2`, zero beyond the tips,
/// with `s` measured along the segment from its midpoint and `n` across it.
#[derive(Debug, Clone)]
pub struct CrackOpening {
    pub a: P2,
    pub b: P2,
    pub amplitude: f64,
}

impl CrackOpening {
    fn frame(&self) -> (P2, P2, P2, f64) {
        let d = sub(self.b, self.a);
        let l = norm(d);
        let es = [d[0] / l, d[1] / l];
        let en = [-es[1], es[0]];
        let m = [0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1])];
        (m, es, en, l)
    }
}

impl SharpDisplacement for CrackOpening {
    fn jet(&self, x: P2) -> (f64, P2) {
        let (m, es, en, l) = self.frame();
        let r = sub(x, m);
        let s = dot(r, es);
        let n = dot(r, en);
        if s.abs() >= 0.5 * l {
            return (0.0, [0.0, 0.0]);
        }
        let c = (PI * s / l).cos();
        let g = (-n * n).exp();
        let sg = if n > 0.0 { 1.0 } else { -1.0 };
        let a = self.amplitude;
        let u = sg * a * c * c * g;
        let ds = -sg * a * (PI / l) * (2.0 * PI * s / l).sin() * g;
        let dn = -2.0 * n.abs() * a * c * c * g;
        (u, [ds * es[0] + dn * en[0], ds * es[1] + dn * en[1]])
    }

    fn kinks(&self) -> (Vec<f64>, Vec<f64>) {
        let mut kx = Vec::new();
        let mut ky = Vec::new();
        if self.a[1] == self.b[1] {
            kx.extend([self.a[0], self.b[0]]);
            ky.push(self.a[1]);
        }
        if self.a[0] == self.b[0] {
            ky.extend([self.a[1], self.b[1]]);
            kx.push(self.a[0]);
        }
        (kx, ky)
    }
}

/// Sharp Mumford-Shah configuration.
#[derive(Debug, Clone)]
pub struct SharpMsState {
    pub network: CurveNetwork,
    pub displacement: Arc<dyn SharpDisplacement>,
    pub gamma: f64,
    pub domain: (P2, P2),
}

/// Sharp Mumford-Shah energy with both point counts.
#[derive(Debug, Clone)]
pub struct SharpMsEnergy {
    /// every network point counted
    pub breakdown: EnergyBreakdown,
    /// points with vanishing junction vector left out
    pub breakdown_nonzero: EnergyBreakdown,
    pub points_all: usize,
    pub points_nonzero: usize,
    /// network points whose junction vector vanishes
    pub zero_points: Vec<P2>,
    pub rho_bar: f64,
}

pub fn sharp_ms_energy(state: &SharpMsState, phi: &Anisotropy) -> Result<SharpMsEnergy> {
    if !(state.gamma >= 0.0) {
        return invalid("gamma must be nonnegative");
    }
    let (lo, hi) = state.domain;
    let net = state.network.clone().with_domain(lo, hi)?;
    let bulk = state.displacement.bulk_energy(lo, hi)?;
    let iface = interface_energy(&net, phi)?;
    let mut zero_points = Vec::new();
    for j in net.junctions() {
        if !net.junction_vector(j.point)?.nonzero {
            zero_points.push(j.point);
        }
    }
    let all = net.junctions().len();
    let nonzero = all - zero_points.len();
    let mk = |count: usize| {
        EnergyBreakdown::new(
            bulk,
            iface.anisotropic_mm,
            iface.curvature,
            state.gamma * count as f64,
            0.0,
            0.0,
        )
    };
    Ok(SharpMsEnergy {
        breakdown: mk(all),
        breakdown_nonzero: mk(nonzero),
        points_all: all,
        points_nonzero: nonzero,
        zero_points,
        rho_bar: rho_bar(state.gamma, phi),
    })
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) < 0.0) == (fa < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Arc length of the network inside the open ball `B_ρ(x0)`.
pub fn length_in_ball(net: &CurveNetwork, x0: P2, rho: f64) -> Result<f64> {
    let mut total = 0.0;
    for c in net.curves() {
        let n = 4096;
        let f = |t: f64| dist(c.point(t), x0) - rho;
        let mut cuts = vec![0.0];
        let mut prev = f(0.0);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let v = f(t);
            if (v < 0.0) != (prev < 0.0) {
                cuts.push(bisect(f, (k - 1) as f64 / n as f64, t));
            }
            prev = v;
        }
        cuts.push(1.0);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if w[1] > w[0] && f(mid) < 0.0 {
                total += integrate_pieces(|t| norm(c.eval(t)[1]), w, quad_opts()).checked(w[0], w[1])?;
            }
        }
    }
    Ok(total)
}

/// Outcome of the Taylor length bound at a network point.
#[derive(Debug, Clone, Copy)]
pub struct TaylorCheck {
    pub length: f64,
    pub theta: f64,
    pub sup_curvature: f64,
    /// `2ρΘ + ρ²Θ sup|H|`
    pub bound: f64,
    pub holds: bool,
    pub rho0: f64,
}

/// Radius below which the ball around a network point meets no other point, no
/// other curve, and each incident arm exactly once.
pub fn rho0(net: &CurveNetwork, x0: P2) -> Result<f64> {
    let j = net.find_junction(x0)?;
    let x0 = net.junctions()[j].point;
    let mut r = f64::INFINITY;
    for (k, other) in net.junctions().iter().enumerate() {
        if k != j {
            r = r.min(dist(other.point, x0));
        }
    }
    let incident: Vec<usize> = net.junctions()[j].arms.iter().map(|a| a.curve).collect();
    let n = 2048;
    for (ci, c) in net.curves().iter().enumerate() {
        if !incident.contains(&ci) {
            for k in 0..=n {
                r = r.min(dist(c.point(k as f64 / n as f64), x0));
            }
        }
    }
    for arm in &net.junctions()[j].arms {
        let c = &net.curves()[arm.curve];
        let ts: Vec<f64> = (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                if arm.at_start {
                    s
                } else {
                    1.0 - s
                }
            })
            .collect();
        let d: Vec<f64> = ts.iter().map(|t| dist(c.point(*t), x0)).collect();
        match (1..d.len()).find(|&k| d[k] < d[k - 1]) {
            Some(k) => r = r.min(d[k..].iter().copied().fold(f64::INFINITY, f64::min)),
            None => r = r.min(d[n]),
        }
    }
    if net.sup_curvature() > 0.0 {
        r = r.min(1.0 / net.sup_curvature());
    }
    Ok(0.5 * r)
}

pub fn arc_in_ball(net: &CurveNetwork, x0: P2, rho: f64) -> Result<TaylorCheck> {
    let j = net.find_junction(x0)?;
    let r0 = rho0(net, x0)?;
    if !(rho > 0.0 && rho <= r0) {
        return invalid(format!("radius {rho} outside (0, rho0 = {r0}]"));
    }
    let x0 = net.junctions()[j].point;
    if let Some((lo, hi)) = net.domain() {
        if x0[0] - rho < lo[0] || x0[0] + rho > hi[0] || x0[1] - rho < lo[1] || x0[1] + rho > hi[1] {
            return Err(Error::Geometry("ball escapes the domain".into()));
        }
    }
    let length = length_in_ball(net, x0, rho)?;
    let theta = net.theta(j);
    let h = net.sup_curvature();
    let bound = 2.0 * rho * theta + rho * rho * theta * h;
    Ok(TaylorCheck {
        length,
        theta,
        sup_curvature: h,
        bound,
        holds: length <= bound * (1.0 + 1e-12),
        rho0: r0,
    })
}

/// Area of `{dist(·, Γ) < t}` by counting cells of side `t/8`.
pub fn tube_area(net: &CurveNetwork, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid("tube radius must be positive");
    }
    let h = t / 8.0;
    let block = 8.0 * h;
    let poly = net.polylines(0.5 * h);
    let mut blocks = BTreeSet::new();
    for line in &poly.lines {
        for p in line {
            let i0 = ((p[0] - t) / block).floor() as i64;
            let i1 = ((p[0] + t) / block).floor() as i64;
            let j0 = ((p[1] - t) / block).floor() as i64;
            let j1 = ((p[1] + t) / block).floor() as i64;
            for i in i0..=i1 {
                for j in j0..=j1 {
                    blocks.insert((i, j));
                }
            }
        }
    }
    let index = PolylineIndex::new(poly.lines, poly.closed);
    let blocks: Vec<(i64, i64)> = blocks.into_iter().collect();
    let counts = exec::map_range(blocks.len(), |b| {
        let (bi, bj) = blocks[b];
        let mut c = 0u64;
        for di in 0..8 {
            for dj in 0..8 {
                let x = ((bi * 8 + di) as f64 + 0.5) * h;
                let y = ((bj * 8 + dj) as f64 + 0.5) * h;
                if index.distance([x, y]) < t {
                    c += 1;
                }
            }
        }
        c
    });
    Ok(counts.iter().sum::<u64>() as f64 * h * h)
}

/// Nearest point of a network.
#[derive(Debug, Clone, Copy)]
pub struct Foot {
    pub curve: usize,
    pub t: f64,
    pub point: P2,
    pub dist: f64,
    /// the nearest point is a curve end reached from outside its normal fan
    pub endpoint: bool,
}

/// Value, gradient and Laplacian of a distance function.
#[derive(Debug, Clone, Copy)]
pub struct DistanceJet {
    pub value: f64,
    pub grad: P2,
    pub lap: f64,
}

/// Exact distance queries with curvature information.
///
/// Segments, arcs and circles are projected in closed form; other curves by a
/// safeguarded Newton iteration started from the nearest dense sample.
#[derive(Debug, Clone)]
pub struct NetworkDistance {
    net: CurveNetwork,
    samples: Option<(SampleIndex, Vec<(u32, f64)>, f64)>,
    orientation: Vec<f64>,
}

impl NetworkDistance {
    pub fn new(net: &CurveNetwork) -> Self {
        let analytic = net.curves().len() <= 32
            && net
                .curves()
                .iter()
                .all(|c| matches!(c, Curve::Segment { .. } | Curve::Arc { .. } | Curve::Circle { .. }));
        let samples = if analytic {
            None
        } else {
            let mut pts = Vec::new();
            let mut owner = Vec::new();
            let mut dt_max: f64 = 0.0;
            for (ci, c) in net.curves().iter().enumerate() {
                let len = net.lengths()[ci];
                let mut spacing = len / 512.0;
                if net.sup_curvature() > 0.0 {
                    spacing = spacing.min(0.05 / net.sup_curvature());
                }
                let n = ((1.05 * net.max_speed[ci] / spacing).ceil() as usize).clamp(64, 200_000);
                dt_max = dt_max.max(1.0 / n as f64);
                let m = if c.is_closed() { n } else { n + 1 };
                for k in 0..m {
                    let t = k as f64 / n as f64;
                    pts.push(c.point(t));
                    owner.push((ci as u32, t));
                }
            }
            Some((SampleIndex::new(pts), owner, dt_max))
        };
        let orientation = net
            .curves()
            .iter()
            .map(|c| {
                if !c.is_closed() {
                    return 1.0;
                }
                let n = 4096;
                let mut area = 0.0;
                for k in 0..n {
                    let p = c.point(k as f64 / n as f64);
                    let q = c.point((k + 1) as f64 / n as f64);
                    area += p[0] * q[1] - q[0] * p[1];
                }
                if area >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self {
            net: net.clone(),
            samples,
            orientation,
        }
    }

    pub fn network(&self) -> &CurveNetwork {
        &self.net
    }

    fn newton(&self, ci: usize, t0: f64, dt: f64, x: P2) -> (f64, P2, bool) {
        let c = &self.net.curves()[ci];
        let closed = c.is_closed();
        let fix = |t: f64| if closed { t.rem_euclid(1.0) } else { t.clamp(0.0, 1.0) };
        let d2 = |t: f64| {
            let p = c.point(t);
            dot(sub(p, x), sub(p, x))
        };
        let mut t = t0;
        let mut cur = d2(t);
        for _ in 0..50 {
            let [p, d1, dd] = c.eval(t);
            let r = sub(p, x);
            let g = dot(d1, r);
            let s2 = dot(d1, d1);
            let mut hess = dot(dd, r) + s2;
            if hess < 0.1 * s2 {
                hess = s2;
            }
            let mut step = (-g / hess).clamp(-2.0 * dt, 2.0 * dt);
            let mut accepted = false;
            for _ in 0..40 {
                let tn = fix(t + step);
                let v = d2(tn);
                if v <= cur {
                    let moved = (tn - t).abs();
                    t = tn;
                    cur = v;
                    accepted = moved > 0.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step.abs() < 1e-16 {
                break;
            }
        }
        let p = c.point(t);
        let endpoint = !closed && (t == 0.0 || t == 1.0) && {
            let d1 = c.eval(t)[1];
            let g = dot(d1, sub(p, x));
            if t == 0.0 {
                g > 0.0
            } else {
                g < 0.0
            }
        };
        (t, p, endpoint)
    }

    /// Nearest point of the network to `x`.
    pub fn foot(&self, x: P2) -> Foot {
        let mut best = Foot {
            curve: 0,
            t: 0.0,
            point: [f64::NAN; 2],
            dist: f64::INFINITY,
            endpoint: false,
        };
        match &self.samples {
            None => {
                for (ci, c) in self.net.curves().iter().enumerate() {
                    let (t, p, endpoint) = c.project_analytic(x).expect("analytic curve");
                    let d = dist(p, x);
                    if d < best.dist {
                        best = Foot {
                            curve: ci,
                            t,
                            point: p,
                            dist: d,
                            endpoint,
                        };
                    }
                }
            }
            Some((index, owner, dt)) => {
                let (k, _) = index.nearest(x);
                let (ci, t0) = owner[k];
                let (t, p, endpoint) = self.newton(ci as usize, t0, *dt, x);
                best = Foot {
                    curve: ci as usize,
                    t,
                    point: p,
                    dist: dist(p, x),
                    endpoint,
                };
            }
        }
        best
    }

    /// Unsigned distance with gradient and Laplacian (zero jet on the network itself).
    pub fn unsigned_jet(&self, x: P2) -> DistanceJet {
        let f = self.foot(x);
        self.jet_from_foot(x, &f, 1.0)
    }

    fn jet_from_foot(&self, x: P2, f: &Foot, sign: f64) -> DistanceJet {
        let d = f.dist;
        if d <= 0.0 {
            return DistanceJet {
                value: 0.0,
                grad: [0.0, 0.0],
                lap: 0.0,
            };
        }
        let n = [(x[0] - f.point[0]) / d, (x[1] - f.point[1]) / d];
        let lap = if f.endpoint {
            1.0 / d
        } else {
            let k = -dot(self.net.curves()[f.curve].curvature(f.t), n);
            k / (1.0 + k * d)
        };
        DistanceJet {
            value: sign * d,
            grad: [sign * n[0], sign * n[1]],
            lap: sign * lap,
        }
    }

    /// Signed distance, negative inside; only for closed boundaries.
    pub fn signed_jet(&self, x: P2) -> Result<DistanceJet> {
        if !self.net.is_closed_boundary() {
            return Err(Error::Geometry("signed distance needs a closed boundary".into()));
        }
        let f = self.foot(x);
        let c = &self.net.curves()[f.curve];
        let tng = c.unit_tangent(f.t);
        let outward = [self.orientation[f.curve] * tng[1], -self.orientation[f.curve] * tng[0]];
        let side = dot(sub(x, f.point), outward);
        Ok(self.jet_from_foot(x, &f, if side < 0.0 { -1.0 } else { 1.0 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iso() -> Anisotropy {
        Anisotropy::isotropic(2).unwrap()
    }

    #[test]
    fn junction_vectors() {
        let tri = CurveNetwork::star([0.0, 0.0], 1.0, &[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]).unwrap();
        let v = tri.junction_vector([0.0, 0.0]).unwrap();
        assert!(v.norm < 1e-12 && !v.nonzero);
        let seg = CurveNetwork::segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((seg.junction_vector([1.0, 0.0]).unwrap().norm - 1.0).abs() < 1e-14);
        let corner = CurveNetwork::star([0.0, 0.0], 1.0, &[0.0, PI / 2.0]).unwrap();
        assert!((corner.junction_vector([0.0, 0.0]).unwrap().norm - 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(seg.junction_vector([0.5, 0.0]), Err(Error::NotAnEndpoint(_))));
        let circle = CurveNetwork::circle([0.0, 0.0], 1.0).unwrap();
        assert!(circle.junctions().is_empty());
    }

    #[test]
    fn curvatures() {
        let c = CurveNetwork::circle([0.3, -0.1], 2.0).unwrap();
        for k in 0..50 {
            let h = c.curvature(0, k as f64 / 50.0).unwrap();
            assert!((norm(h) - 0.5).abs() < 1e-6 * 0.5);
        }
        let s = CurveNetwork::segment([0.0, 0.0], [1.0, 2.0]).unwrap();
        assert_eq!(s.curvature(0, 0.3).unwrap(), [0.0, 0.0]);
        let e = CurveNetwork::ellipse([0.0, 0.0], 2.0, 1.0, 0.0).unwrap();
        assert!((norm(e.curvature(0, 0.0).unwrap()) - 2.0).abs() < 1e-6);
        assert!((norm(e.curvature(0, 0.25).unwrap()) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn circle_energies() {
        let c = CurveNetwork::circle([0.0, 0.0], 1.0).unwrap();
        let e = sharp_set_energy(&c, &iso()).unwrap();
        assert!((e.total - 4.0 * PI).abs() < 1e-6);
        for r in [0.5, 2.0, 3.0] {
            let c = CurveNetwork::circle([1.0, 1.0], r).unwrap();
            let e = sharp_set_energy(&c, &iso()).unwrap();
            assert!((e.total - (2.0 * PI * r + 2.0 * PI / r)).abs() < 1e-8);
            assert!((willmore_beta_energy(&c, r).unwrap() - 4.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn radius_one_minimises_circle_energy() {
        let f = |r: f64| sharp_set_energy(&CurveNetwork::circle([0.0, 0.0], r).unwrap(), &iso()).unwrap().total;
        let h = 1e-3;
        assert!(((f(1.0 + h) - f(1.0 - h)) / (2.0 * h)).abs() < 1e-5);
        assert!(f(1.0) < f(1.0 + 0.05) && f(1.0) < f(1.0 - 0.05));
    }

    #[test]
    fn anisotropic_circle_energy() {
        let phi = Anisotropy::four_fold(2, 0.3).unwrap();
        let c = CurveNetwork::circle([0.0, 0.0], 1.5).unwrap();
        let e = sharp_set_energy(&c, &phi).unwrap();
        let oracle = crate::quad::integrate(|t| phi.eval_angle(t), 0.0, 2.0 * PI, QuadOptions::default()).value;
        assert!((e.anisotropic_mm - 1.5 * oracle).abs() < 1e-9);
    }

    #[test]
    fn rotation_invariance() {
        let phi = Anisotropy::four_fold(2, 0.7).unwrap();
        let base = CurveNetwork::ellipse([0.2, 0.1], 2.0, 1.0, 0.0).unwrap();
        let e0 = sharp_set_energy(&base, &phi).unwrap();
        for ang in [0.3f64, 1.1, 2.5] {
            let rot = CurveNetwork::ellipse([0.2 * ang.cos() - 0.1 * ang.sin(), 0.2 * ang.sin() + 0.1 * ang.cos()], 2.0, 1.0, ang).unwrap();
            let e1 = sharp_set_energy(&rot, &phi.rotated(ang).unwrap()).unwrap();
            assert!(((e1.total - e0.total) / e0.total).abs() < 1e-9);
            let moved = CurveNetwork::ellipse([3.0, -1.0], 2.0, 1.0, ang).unwrap();
            let a = sharp_set_energy(&base, &iso()).unwrap().total;
            let b = sharp_set_energy(&moved, &iso()).unwrap().total;
            assert!(((a - b) / a).abs() < 1e-9);
        }
    }

    #[test]
    fn gauss_bonnet_lower_bound_on_catalog() {
        let shapes = vec![
            CurveNetwork::circle([0.0, 0.0], 0.7).unwrap(),
            CurveNetwork::ellipse([0.0, 0.0], 2.0, 1.0, 0.4).unwrap(),
            CurveNetwork::limacon([0.0, 0.0], 0.7, 1.0).unwrap(),
        ];
        for phi in [iso(), Anisotropy::four_fold(2, 0.9).unwrap()] {
            for s in &shapes {
                let e = sharp_set_energy(s, &phi).unwrap();
                assert!(e.total >= 4.0 * PI / phi.bound_c());
            }
        }
    }

    #[test]
    fn set_energy_rejects_open_or_junctioned() {
        let sq = CurveNetwork::polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(sharp_set_energy(&sq, &iso()).is_err());
        let seg = CurveNetwork::segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!(sharp_set_energy(&seg, &iso()).is_err());
    }

    #[test]
    fn invalid_networks_rejected() {
        let cross = CurveNetwork::new(vec![
            Curve::Segment { a: [-1.0, 0.0], b: [1.0, 0.0] },
            Curve::Segment { a: [0.0, -1.0], b: [0.0, 1.0] },
        ]);
        assert!(matches!(cross, Err(Error::Geometry(_))));
        assert!(CurveNetwork::limacon([0.0, 0.0], 1.5, 1.0).is_err());
        let tee = CurveNetwork::new(vec![
            Curve::Segment { a: [-1.0, 0.0], b: [1.0, 0.0] },
            Curve::Segment { a: [0.0, 0.0], b: [0.0, 1.0] },
        ]);
        assert!(tee.is_err());
        assert!(CurveNetwork::segment([0.0, 0.0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn ms_energy_piecewise_constant() {
        let gamma = 0.1;
        let l = 0.8;
        let state = SharpMsState {
            network: CurveNetwork::segment([-0.4, 0.0], [0.4, 0.0]).unwrap(),
            displacement: Arc::new(PiecewiseConstant {
                normal: [0.0, 1.0],
                offset: 0.0,
                below: 0.0,
                above: 1.0,
            }),
            gamma,
            domain: ([-1.0, -1.0], [1.0, 1.0]),
        };
        let e = sharp_ms_energy(&state, &iso()).unwrap();
        assert!((e.breakdown.total - (l + 2.0 * gamma)).abs() < 1e-12);
        assert_eq!(e.points_all, 2);
        assert_eq!(e.points_nonzero, 2);
        assert!((e.rho_bar - 0.4).abs() < 1e-12);

        let r = 0.5;
        let state = SharpMsState {
            network: CurveNetwork::arc([0.0, 0.0], r, 0.0, PI).unwrap(),
            ..state
        };
        let e = sharp_ms_energy(&state, &iso()).unwrap();
        assert!((e.breakdown.total - (PI * r + PI / r + 2.0 * gamma)).abs() < 1e-9);
    }

    #[test]
    fn ms_energy_reports_both_counts() {
        let tri = CurveNetwork::star([0.0, 0.0], 0.5, &[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]).unwrap();
        let state = SharpMsState {
            network: tri,
            displacement: Arc::new(PiecewiseConstant {
                normal: [0.0, 1.0],
                offset: 0.0,
                below: 0.0,
                above: 0.0,
            }),
            gamma: 0.2,
            domain: ([-1.0, -1.0], [1.0, 1.0]),
        };
        let e = sharp_ms_energy(&state, &iso()).unwrap();
        assert_eq!((e.points_all, e.points_nonzero), (4, 3));
        assert_eq!(e.zero_points.len(), 1);
        assert!((e.breakdown.point - e.breakdown_nonzero.point - 0.2).abs() < 1e-15);
    }

    #[test]
    fn affine_bulk_matches_quadrature() {
        let u = AffineWithJump {
            slope: [0.3, -1.2],
            intercept: 0.5,
            jump: 2.0,
            normal: [0.0, 1.0],
            offset: 0.0,
        };
        let exact = u.bulk_energy([-1.0, -0.5], [1.0, 0.5]).unwrap();
        let quad = bulk_by_quadrature(&u, [-1.0, -0.5], [1.0, 0.5]).unwrap();
        assert!((exact - (0.09 + 1.44) * 2.0).abs() < 1e-12);
        assert!((quad - exact).abs() < 1e-6);
    }

    #[test]
    fn crack_opening_gradient_matches_differences() {
        let u = CrackOpening {
            a: [-0.5, 0.0],
            b: [0.5, 0.0],
            amplitude: 1.0,
        };
        let h = 1e-6;
        for p in [[0.1, 0.3], [-0.3, -0.7], [0.45, 0.05]] {
            let (_, g) = u.jet(p);
            let dx = (u.jet([p[0] + h, p[1]]).0 - u.jet([p[0] - h, p[1]]).0) / (2.0 * h);
            let dy = (u.jet([p[0], p[1] + h]).0 - u.jet([p[0], p[1] - h]).0) / (2.0 * h);
            assert!((g[0] - dx).abs() < 1e-7 && (g[1] - dy).abs() < 1e-7);
        }
        assert_eq!(u.jet([0.7, 0.2]).0, 0.0);
        // the jump across the crack is 2 A cos²
        assert!((u.jet([0.0, 1e-12]).0 - u.jet([0.0, -1e-12]).0 - 2.0).abs() < 1e-9);
        // sign(y) e^{-y²} contributes ∫ 4y² e^{-2y²} = sqrt(π/2) over the line, times ∫cos⁴ = 3/8
        let b = u.bulk_energy([-0.5, -8.0], [0.5, 8.0]).unwrap();
        let exact = (PI / 2.0).sqrt() * 3.0 / 8.0 + PI * PI * 0.5 * (PI / 2.0).sqrt();
        assert!((b - exact).abs() < 1e-8, "{b} vs {exact}");
    }

    #[test]
    fn taylor_bound_cases() {
        let seg = CurveNetwork::segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        for rho in [0.01, 0.1, 0.4] {
            let t = arc_in_ball(&seg, [0.0, 0.0], rho).unwrap();
            assert!((t.length - rho).abs() < 1e-12);
            assert_eq!(t.theta, 0.5);
            assert!(t.holds);
        }
        let r = 1.0;
        let arc = CurveNetwork::arc([0.0, 0.0], r, 0.0, PI / 2.0).unwrap();
        for k in 1..=10 {
            let rho = r * k as f64 / 100.0;
            let t = arc_in_ball(&arc, [1.0, 0.0], rho).unwrap();
            let exact = 2.0 * r * (rho / (2.0 * r)).asin();
            assert!((t.length - exact).abs() < 1e-10);
            assert!(t.length <= rho + rho * rho / r);
            assert!(t.holds);
        }
        let tri = CurveNetwork::star([0.0, 0.0], 1.0, &[0.1, 2.0, 4.0]).unwrap();
        let t = arc_in_ball(&tri, [0.0, 0.0], 0.3).unwrap();
        assert!((t.length - 0.9).abs() < 1e-12);
        assert_eq!(t.theta, 1.5);
        assert!(arc_in_ball(&seg, [0.5, 0.0], 0.1).is_err());
        assert!(arc_in_ball(&seg, [0.0, 0.0], 0.9).is_err());
        let boxed = seg.clone().with_domain([-0.05, -1.0], [2.0, 1.0]).unwrap();
        assert!(matches!(arc_in_ball(&boxed, [0.0, 0.0], 0.1), Err(Error::Geometry(_))));
    }

    #[test]
    fn tube_areas() {
        let l = 1.0;
        let seg = CurveNetwork::segment([0.0, 0.0], [l, 0.0]).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1e-1, 1e-2, 1e-3] {
            let a = tube_area(&seg, t * l).unwrap();
            let stadium = 2.0 * l * t + PI * t * t;
            assert!(((a - stadium) / stadium).abs() < 0.01);
            let ratio = a / (2.0 * t);
            assert!(ratio < prev);
            prev = ratio;
        }
        let t = l / 200.0;
        assert!((tube_area(&seg, t).unwrap() / (2.0 * t) - l).abs() / l < 0.03);
        let c = CurveNetwork::circle([0.1, 0.0], 1.0).unwrap();
        let t = 0.01;
        let a = tube_area(&c, t).unwrap();
        assert!(((a - 4.0 * PI * t) / (4.0 * PI * t)).abs() < 0.01);
    }

    #[test]
    fn analytic_distance_jets() {
        let c = CurveNetwork::circle([0.0, 0.0], 1.0).unwrap();
        let nd = NetworkDistance::new(&c);
        for p in [[0.3, 0.2], [1.5, -0.4], [-0.1, 0.9]] {
            let j = nd.signed_jet(p).unwrap();
            let r = norm(p);
            assert!((j.value - (r - 1.0)).abs() < 1e-14);
            assert!((j.lap - 1.0 / r).abs() < 1e-12);
            assert!((j.grad[0] - p[0] / r).abs() < 1e-14);
        }
        let seg = CurveNetwork::segment([-0.5, 0.0], [0.5, 0.0]).unwrap();
        let nd = NetworkDistance::new(&seg);
        let j = nd.unsigned_jet([0.8, 0.4]);
        assert!((j.value - 0.5).abs() < 1e-14 && (j.lap - 2.0).abs() < 1e-12);
        let j = nd.unsigned_jet([0.1, -0.3]);
        assert!((j.value - 0.3).abs() < 1e-14 && j.lap == 0.0 && (j.grad[1] + 1.0).abs() < 1e-14);
        assert!(nd.signed_jet([0.0, 1.0]).is_err());
    }

    #[test]
    fn generic_distance_jets_match_differences() {
        let e = CurveNetwork::ellipse([0.1, 0.0], 1.0, 0.6, 0.3).unwrap();
        let nd = NetworkDistance::new(&e);
        let dense = e.polylines(1e-4);
        let h = 1e-4;
        for p in [[0.3, 0.1], [1.3, 0.2], [-0.4, -0.7], [0.0, 0.75]] {
            let j = nd.signed_jet(p).unwrap();
            let brute = dense.lines[0].iter().map(|s| dist(*s, p)).fold(f64::INFINITY, f64::min);
            assert!((j.value.abs() - brute).abs() < 1e-4);
            let f = |q: P2| nd.signed_jet(q).unwrap().value;
            let lap = (f([p[0] + h, p[1]]) + f([p[0] - h, p[1]]) + f([p[0], p[1] + h]) + f([p[0], p[1] - h]) - 4.0 * f(p)) / (h * h);
            assert!((j.lap - lap).abs() < 1e-4 * (1.0 + lap.abs()), "{} vs {lap}", j.lap);
        }
    }

    #[test]
    fn csv_spline_network() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut s = String::from("curve_id,t,x,y\n");
        for k in 0..=400 {
            let t = k as f64 / 400.0;
            let th = 2.0 * PI * t;
            s.push_str(&format!("0,{t},{},{}\n", th.cos(), th.sin()));
        }
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            s.push_str(&format!("1,{t},{},{}\n", 2.0 + t, 0.0));
        }
        std::fs::write(&path, s).unwrap();
        let net = CurveNetwork::from_csv(&path).unwrap();
        assert_eq!(net.curves().len(), 2);
        assert!(net.curves()[0].is_closed());
        assert!((net.lengths()[0] - 2.0 * PI).abs() < 1e-6);
        assert!((net.lengths()[1] - 1.0).abs() < 1e-12);
        assert_eq!(net.junctions().len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn star_junction_vector_is_tangent_sum(angles in prop::collection::vec(0.0f64..(2.0 * PI), 1..5)) {
            let mut a = angles.clone();
            a.sort_by(f64::total_cmp);
            prop_assume!(a.windows(2).all(|w| w[1] - w[0] > 0.05) && (a[0] + 2.0 * PI - a[a.len() - 1]) > 0.05);
            let net = CurveNetwork::star([0.0, 0.0], 1.0, &a).unwrap();
            let v = net.junction_vector([0.0, 0.0]).unwrap();
            let ex: P2 = [a.iter().map(|t| t.cos()).sum(), a.iter().map(|t| t.sin()).sum()];
            prop_assert!(dist(v.vector, ex) < 1e-12);
            prop_assert!((net.theta(net.find_junction([0.0, 0.0]).unwrap()) - a.len() as f64 / 2.0).abs() < 1e-15);
        }
    }
}
