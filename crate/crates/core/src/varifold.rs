//! Discrete 1-varifolds sampled from curve networks.

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::sharp_geometry::{Curve, CurveNetwork, P2};
use std::f64::consts::PI;
use std::path::Path;

/// Weighted tangent sample with its curvature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarifoldSample {
    pub point: P2,
    pub tangent: P2,
    /// arc length represented by the sample
    pub weight: f64,
    pub multiplicity: u32,
    pub curvature: P2,
}

/// Singular part of the first variation at a network point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub point: P2,
    pub vector: P2,
}

#[derive(Debug, Clone, Default)]
pub struct DiscreteVarifold {
    pub samples: Vec<VarifoldSample>,
    pub atoms: Vec<Atom>,
}

/// Atoms shorter than this carry no first variation.
const ATOM_TOL: f64 = 1e-9;

fn small_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_intervals: 200,
    }
}

/// Arc-length table of a curve with inversion by Newton's method.
struct ArcLength<'a> {
    curve: &'a Curve,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> ArcLength<'a> {
    fn new(curve: &'a Curve) -> Self {
        let n = 1024;
        let nodes: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut cumulative = vec![0.0];
        for w in nodes.windows(2) {
            let piece = integrate(|t| speed(curve, t), w[0], w[1], small_opts()).value;
            cumulative.push(cumulative.last().unwrap() + piece);
        }
        Self {
            curve,
            nodes,
            cumulative,
        }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn s_of(&self, t: f64) -> f64 {
        let k = (self.nodes.partition_point(|&x| x <= t).max(1) - 1).min(self.nodes.len() - 2);
        self.cumulative[k] + integrate(|u| speed(self.curve, u), self.nodes[k], t, small_opts()).value
    }

    fn t_of(&self, s: f64) -> f64 {
        let k = (self.cumulative.partition_point(|&x| x <= s).max(1) - 1).min(self.nodes.len() - 2);
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let (sa, sb) = (self.cumulative[k], self.cumulative[k + 1]);
        let mut t = a + (b - a) * (s - sa) / (sb - sa);
        for _ in 0..20 {
            let f = self.s_of(t) - s;
            let step = f / speed(self.curve, t);
            t = (t - step).clamp(a, b);
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    }
}

fn speed(c: &Curve, t: f64) -> f64 {
    let d = c.eval(t)[1];
    d[0].hypot(d[1])
}

/// Samples every curve at arc-length midpoints of pieces no longer than `h`, and
/// attaches the junction vectors as atoms.
pub fn discretize(net: &CurveNetwork, h: f64) -> Result<DiscreteVarifold> {
    if !(h > 0.0) {
        return invalid("sample length must be positive");
    }
    if h * net.sup_curvature() > 0.1 {
        return invalid(format!(
            "sample length {h} exceeds a tenth of the smallest curvature radius {}",
            1.0 / net.sup_curvature()
        ));
    }
    let mut v = DiscreteVarifold::default();
    for c in net.curves() {
        let table = ArcLength::new(c);
        let len = table.total();
        let n = (len / h).ceil().max(1.0) as usize;
        let w = len / n as f64;
        for k in 0..n {
            let t = table.t_of((k as f64 + 0.5) * w);
            let [p, d1, _] = c.eval(t);
            let s = d1[0].hypot(d1[1]);
            v.samples.push(VarifoldSample {
                point: p,
                tangent: [d1[0] / s, d1[1] / s],
                weight: w,
                multiplicity: 1,
                curvature: c.curvature(t),
            });
        }
    }
    for j in net.junctions() {
        v.atoms.push(Atom {
            point: j.point,
            vector: net.junction_vector(j.point)?.vector,
        });
    }
    Ok(v)
}

/// Vector field with its Jacobian `J[i][k] = ∂ζ_i/∂x_k`.
pub trait TestField {
    fn eval(&self, x: P2) -> (P2, [[f64; 2]; 2]);
}

impl<F: Fn(P2) -> (P2, [[f64; 2]; 2]) + ?Sized> TestField for F {
    fn eval(&self, x: P2) -> (P2, [[f64; 2]; 2]) {
        self(x)
    }
}

impl DiscreteVarifold {
    pub fn mass(&self) -> f64 {
        self.samples.iter().map(|s| s.weight * s.multiplicity as f64).sum()
    }

    /// `∫ |H| dμ`.
    pub fn total_curvature(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.weight * s.multiplicity as f64 * s.curvature[0].hypot(s.curvature[1]))
            .sum()
    }

    /// Whether any atom carries a nonzero vector.
    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.vector[0].hypot(a.vector[1]) > ATOM_TOL)
    }

    /// Union of two varifolds; atoms at the same point are added.
    pub fn superpose(&self, other: &DiscreteVarifold) -> DiscreteVarifold {
        let mut out = self.clone();
        out.samples.extend_from_slice(&other.samples);
        for a in &other.atoms {
            match out
                .atoms
                .iter_mut()
                .find(|b| (b.point[0] - a.point[0]).hypot(b.point[1] - a.point[1]) <= 1e-9)
            {
                Some(b) => {
                    b.vector[0] += a.vector[0];
                    b.vector[1] += a.vector[1];
                }
                None => out.atoms.push(*a),
            }
        }
        out
    }

    /// Mass inside the open ball, each sample clipped as an arc of its osculating circle.
    pub fn mass_in_ball(&self, x0: P2, r: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| s.multiplicity as f64 * clipped_length(s, x0, r))
            .sum()
    }

    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "tx", "ty", "weight", "multiplicity", "Hx", "Hy"])?;
        for s in &self.samples {
            w.write_record(&[
                format!("{:.17e}", s.point[0]),
                format!("{:.17e}", s.point[1]),
                format!("{:.17e}", s.tangent[0]),
                format!("{:.17e}", s.tangent[1]),
                format!("{:.17e}", s.weight),
                s.multiplicity.to_string(),
                format!("{:.17e}", s.curvature[0]),
                format!("{:.17e}", s.curvature[1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_atoms_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "vx", "vy"])?;
        for a in &self.atoms {
            w.write_record(&[
                format!("{:.17e}", a.point[0]),
                format!("{:.17e}", a.point[1]),
                format!("{:.17e}", a.vector[0]),
                format!("{:.17e}", a.vector[1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn clipped_length(s: &VarifoldSample, x0: P2, r: f64) -> f64 {
    let k = s.curvature[0].hypot(s.curvature[1]);
    if k < 1e-6 {
        return clipped_straight(s, x0, r);
    }
    // piece of the osculating circle: c + ρ (e cos θ + T sin θ), |θ| ≤ w / (2ρ)
    let rho = 1.0 / k;
    let e = [-s.curvature[0] / k, -s.curvature[1] / k];
    let c = [s.point[0] - rho * e[0], s.point[1] - rho * e[1]];
    let q = [c[0] - x0[0], c[1] - x0[1]];
    let a = q[0] * e[0] + q[1] * e[1];
    let b = q[0] * s.tangent[0] + q[1] * s.tangent[1];
    // |x(θ) - x0|² = A + B cos(θ - ψ)
    let big_a = q[0] * q[0] + q[1] * q[1] + rho * rho;
    let big_b = 2.0 * rho * a.hypot(b);
    let half = 0.5 * s.weight / rho;
    if big_b == 0.0 {
        return if big_a < r * r { s.weight } else { 0.0 };
    }
    let kappa = (r * r - big_a) / big_b;
    if kappa >= 1.0 {
        return s.weight;
    }
    if kappa <= -1.0 {
        return 0.0;
    }
    let psi = b.atan2(a);
    let alpha = kappa.acos();
    let mut excluded = 0.0;
    for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
        let lo = (psi + shift - alpha).max(-half);
        let hi = (psi + shift + alpha).min(half);
        excluded += (hi - lo).max(0.0);
    }
    (s.weight - rho * excluded).max(0.0)
}

fn clipped_straight(s: &VarifoldSample, x0: P2, r: f64) -> f64 {
    // piece p + u T for u in [-w/2, w/2]; solve |p - x0 + u T|² = r²
    let d = [s.point[0] - x0[0], s.point[1] - x0[1]];
    let b = d[0] * s.tangent[0] + d[1] * s.tangent[1];
    let c = d[0] * d[0] + d[1] * d[1] - r * r;
    let disc = b * b - c;
    if disc <= 0.0 {
        return 0.0;
    }
    let root = disc.sqrt();
    let lo = (-b - root).max(-0.5 * s.weight);
    let hi = (-b + root).min(0.5 * s.weight);
    (hi - lo).max(0.0)
}

/// `δV(ζ) = ∫ Dζ : (T ⊗ T) dμ`.
pub fn first_variation<Z: TestField + ?Sized>(v: &DiscreteVarifold, zeta: &Z) -> f64 {
    v.samples
        .iter()
        .map(|s| {
            let (_, j) = zeta.eval(s.point);
            let t = s.tangent;
            let div = t[0] * (j[0][0] * t[0] + j[0][1] * t[1]) + t[1] * (j[1][0] * t[0] + j[1][1] * t[1]);
            s.weight * s.multiplicity as f64 * div
        })
        .sum()
}

/// `-∫ H·ζ dμ - Σ ζ(p)·v_p`, which equals [`first_variation`] for networks.
pub fn first_variation_from_curvature<Z: TestField + ?Sized>(v: &DiscreteVarifold, zeta: &Z) -> f64 {
    let smooth: f64 = v
        .samples
        .iter()
        .map(|s| {
            let (z, _) = zeta.eval(s.point);
            s.weight * s.multiplicity as f64 * (s.curvature[0] * z[0] + s.curvature[1] * z[1])
        })
        .sum();
    let atoms: f64 = v
        .atoms
        .iter()
        .map(|a| {
            let (z, _) = zeta.eval(a.point);
            z[0] * a.vector[0] + z[1] * a.vector[1]
        })
        .sum();
    -smooth - atoms
}

/// `∫ |H| dμ − μ(B_r(x0)) / r`.
pub fn monotonicity_gap(v: &DiscreteVarifold, x0: P2, r: f64) -> Result<f64> {
    if v.has_atoms() {
        return Err(Error::Refused("monotonicity check needs an atom-free varifold".into()));
    }
    if !(r > 0.0) {
        return invalid("radius must be positive");
    }
    Ok(v.total_curvature() - v.mass_in_ball(x0, r) / r)
}

/// `∫ |H| dμ − 2π` for closed atom-free curves.
pub fn gauss_bonnet_deficit(v: &DiscreteVarifold) -> Result<f64> {
    if v.has_atoms() {
        return Err(Error::Refused(
            "total-curvature bound does not extend to varifolds with atomic first variation".into(),
        ));
    }
    if !(v.mass() > 0.0) {
        return invalid("varifold has no mass");
    }
    Ok(v.total_curvature() - 2.0 * PI)
}

/// Tangent-measure type at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowUp {
    OffCurve,
    Interior,
    /// endpoint or junction with this many arms
    Junction(usize),
    Ambiguous,
}

#[derive(Debug, Clone)]
pub struct Density {
    /// extrapolated density
    pub theta: f64,
    /// raw quotients `μ(B_ρ)/(2ρ)` along the sequence
    pub quotients: Vec<f64>,
    pub class: BlowUp,
}

/// Density `lim μ(B_ρ)/(2ρ)` by linear Richardson extrapolation over the two
/// smallest radii, classified by the nearest multiple of 1/2.
pub fn density_and_blowup(v: &DiscreteVarifold, x0: P2, rhos: &[f64]) -> Result<Density> {
    if rhos.is_empty() || rhos.iter().any(|r| !(*r > 0.0)) {
        return invalid("radius sequence must be nonempty and positive");
    }
    if rhos.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("radius sequence must be decreasing");
    }
    let quotients: Vec<f64> = rhos.iter().map(|&r| v.mass_in_ball(x0, r) / (2.0 * r)).collect();
    let n = rhos.len();
    let theta = if n >= 2 {
        let (r1, r2) = (rhos[n - 2], rhos[n - 1]);
        let (q1, q2) = (quotients[n - 2], quotients[n - 1]);
        (r1 * q2 - r2 * q1) / (r1 - r2)
    } else {
        quotients[0]
    };
    let k = (2.0 * theta).round().max(0.0);
    let class = if (theta - k / 2.0).abs() > 0.15 {
        BlowUp::Ambiguous
    } else {
        let k = k as usize;
        let atom_here = v
            .atoms
            .iter()
            .any(|a| (a.point[0] - x0[0]).hypot(a.point[1] - x0[1]) <= 1e-9);
        match k {
            0 => BlowUp::OffCurve,
            2 if !atom_here => BlowUp::Interior,
            k => BlowUp::Junction(k),
        }
    };
    Ok(Density { theta, quotients, class })
}
