//! Explicit recovery fields built from sharp configurations.
//!
//! Every constructor has an analytic form, usable as a [`JetSource`] with sub-cell
//! quadrature, and a sampled form on a grid.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ScalarField};
use crate::phase_energy::{Jet, JetSource, MsParams};
use crate::profiles::{double_well, residual_integrand, truncated_profile_derivs, ProfileParams, C0};
use crate::quad::{integrate_pieces, QuadOptions};
use crate::sharp_geometry::{CurveNetwork, NetworkDistance, SharpDisplacement, SharpMsState, P2};

fn check_planar(grid: &Grid) -> Result<()> {
    if grid.dim != 2 {
        return invalid("recovery fields are planar");
    }
    Ok(())
}

/// `q_ε ∘ d` given the jet of `d`.
fn compose(p: &ProfileParams, value: f64, grad: P2, lap: f64) -> Jet {
    if value.abs() >= p.delta {
        return Jet::constant(value.signum());
    }
    let [q, q1, q2] = truncated_profile_derivs(value, p);
    let g2 = grad[0] * grad[0] + grad[1] * grad[1];
    Jet {
        value: q,
        grad: [q1 * grad[0], q1 * grad[1], 0.0],
        lap: q2 * g2 + q1 * lap,
    }
}

/// `v̄_ε = q_ε(sd)` for a closed boundary, negative inside.
#[derive(Debug, Clone)]
pub struct RecoveredSet {
    distance: NetworkDistance,
    profile: ProfileParams,
}

impl RecoveredSet {
    pub fn new(boundary: &CurveNetwork, profile: ProfileParams) -> Result<Self> {
        if !boundary.is_closed_boundary() {
            return Err(Error::Geometry("set recovery needs closed curves without endpoints".into()));
        }
        let k = boundary.sup_curvature();
        if profile.delta * k >= 1.0 {
            return Err(Error::Geometry(format!(
                "transition half-width {:.3e} exceeds the smallest curvature radius {:.3e}",
                profile.delta,
                1.0 / k
            )));
        }
        if boundary.curves().len() > 1 {
            let lines = boundary.polylines(profile.delta / 4.0);
            for ci in 0..lines.lines.len() {
                let others: Vec<_> = (0..lines.lines.len())
                    .filter(|j| *j != ci)
                    .map(|j| lines.lines[j].clone())
                    .collect();
                let closed = vec![true; others.len()];
                let other = crate::spatial::PolylineIndex::new(others, closed);
                if lines.lines[ci].iter().any(|p| other.distance(*p) <= 2.0 * profile.delta) {
                    return Err(Error::Geometry("transition tubes of distinct curves overlap".into()));
                }
            }
        }
        Ok(Self {
            distance: NetworkDistance::new(boundary),
            profile,
        })
    }

    pub fn profile(&self) -> &ProfileParams {
        &self.profile
    }

    pub fn signed_distance(&self, x: P2) -> f64 {
        self.distance.signed_jet(x).map(|j| j.value).unwrap_or(f64::NAN)
    }

    /// Samples at cell centres.
    pub fn field(&self, grid: &Grid) -> Result<ScalarField> {
        check_planar(grid)?;
        Ok(ScalarField::from_fn(grid, |x| self.jet(x).value))
    }

    /// `∫ |v̄_ε − χ|` with `χ = ±1` the sharp indicator, by the midpoint rule.
    pub fn l1_error(&self, grid: &Grid) -> Result<f64> {
        check_planar(grid)?;
        let f = ScalarField::from_fn(grid, |x| {
            let j = self.jet(x);
            let sd = self.signed_distance([x[0], x[1]]);
            (j.value - if sd < 0.0 { -1.0 } else { 1.0 }).abs()
        });
        Ok(f.integrate())
    }
}

impl JetSource for RecoveredSet {
    fn jet(&self, x: [f64; 3]) -> Jet {
        let d = self
            .distance
            .signed_jet([x[0], x[1]])
            .expect("closed boundary checked at construction");
        compose(&self.profile, d.value, d.grad, d.lap)
    }
}

/// Grid samples of the set recovery.
pub fn recover_set(boundary: &CurveNetwork, profile: ProfileParams, grid: &Grid) -> Result<ScalarField> {
    RecoveredSet::new(boundary, profile)?.field(grid)
}

/// Recovery triple for a sharp Mumford-Shah state.
///
/// With `d = dist(·, J_u)` and `δ` the transition half-width:
/// `ū = clamp((2d − δ)/δ, 0, 1) u`, `v̄ = q_ε(d − 2δ)`, `w̄ = min_i q_ε(|x − p_i| − β)`.
#[derive(Debug, Clone)]
pub struct MsRecovery {
    distance: NetworkDistance,
    displacement: Arc<dyn SharpDisplacement>,
    points: Vec<P2>,
    profile: ProfileParams,
    beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
    W,
}

/// One field of an [`MsRecovery`] as a jet source.
#[derive(Debug, Clone, Copy)]
pub struct ComponentSource<'a> {
    rec: &'a MsRecovery,
    which: Component,
}

impl JetSource for ComponentSource<'_> {
    fn jet(&self, x: [f64; 3]) -> Jet {
        let p = [x[0], x[1]];
        match self.which {
            Component::U => self.rec.u_jet(p),
            Component::V => self.rec.v_jet(p),
            Component::W => self.rec.w_jet(p),
        }
    }
}

impl MsRecovery {
    pub fn new(state: &SharpMsState, params: &MsParams) -> Result<Self> {
        params.validate()?;
        let profile = ProfileParams::new(params.eps, params.lambda)?;
        let delta = profile.delta;
        if delta >= params.beta {
            return invalid(format!("transition half-width {delta:.3e} must stay below beta {:.3e}", params.beta));
        }
        let r_plus = params.beta + delta;
        let (lo, hi) = state.domain;
        let points: Vec<P2> = state.network.junctions().iter().map(|j| j.point).collect();
        for (i, p) in points.iter().enumerate() {
            let margin = (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]);
            if margin <= r_plus {
                return Err(Error::Geometry(format!(
                    "ball of radius {r_plus:.3e} around ({}, {}) leaves the domain",
                    p[0], p[1]
                )));
            }
            for q in &points[..i] {
                if (p[0] - q[0]).hypot(p[1] - q[1]) <= 2.0 * r_plus {
                    return Err(Error::Geometry("balls around network points overlap".into()));
                }
            }
        }
        Ok(Self {
            distance: NetworkDistance::new(&state.network),
            displacement: state.displacement.clone(),
            points,
            profile,
            beta: params.beta,
        })
    }

    pub fn points(&self) -> &[P2] {
        &self.points
    }

    pub fn delta(&self) -> f64 {
        self.profile.delta
    }

    /// Radii `β ∓ δ` of the balls where `w̄` equals −1 and +1.
    pub fn radii(&self) -> (f64, f64) {
        (self.beta - self.profile.delta, self.beta + self.profile.delta)
    }

    pub fn source(&self, which: Component) -> ComponentSource<'_> {
        ComponentSource { rec: self, which }
    }

    /// Value and gradient of `ū`; the Laplacian slot is left at zero.
    pub fn u_jet(&self, x: P2) -> Jet {
        let delta = self.profile.delta;
        let d = self.distance.unsigned_jet(x);
        let fac = ((2.0 * d.value - delta) / delta).clamp(0.0, 1.0);
        if fac == 0.0 {
            return Jet::default();
        }
        let (u, g) = self.displacement.jet(x);
        let mut grad = [fac * g[0], fac * g[1], 0.0];
        if fac < 1.0 {
            grad[0] += u * 2.0 / delta * d.grad[0];
            grad[1] += u * 2.0 / delta * d.grad[1];
        }
        Jet {
            value: fac * u,
            grad,
            lap: 0.0,
        }
    }

    pub fn v_jet(&self, x: P2) -> Jet {
        let d = self.distance.unsigned_jet(x);
        compose(&self.profile, d.value - 2.0 * self.profile.delta, d.grad, d.lap)
    }

    pub fn w_jet(&self, x: P2) -> Jet {
        let mut best: Option<(f64, P2)> = None;
        for p in &self.points {
            let r = (x[0] - p[0]).hypot(x[1] - p[1]);
            if best.is_none_or(|(rb, _)| r < rb) {
                best = Some((r, *p));
            }
        }
        let Some((r, p)) = best else {
            return Jet::constant(1.0);
        };
        if r <= 0.0 {
            return Jet::constant(-1.0);
        }
        let n = [(x[0] - p[0]) / r, (x[1] - p[1]) / r];
        compose(&self.profile, r - self.beta, n, 1.0 / r)
    }

    /// Grid samples of `(ū, v̄, w̄)`; `v̄` gets one binomial smoothing pass near network points.
    pub fn fields(&self, grid: &Grid) -> Result<(ScalarField, ScalarField, ScalarField)> {
        check_planar(grid)?;
        let u = ScalarField::from_fn(grid, |x| self.u_jet([x[0], x[1]]).value);
        let v = ScalarField::from_fn(grid, |x| self.v_jet([x[0], x[1]]).value);
        let w = ScalarField::from_fn(grid, |x| self.w_jet([x[0], x[1]]).value);
        let v = smooth_near(&v, &self.points, 4.0 * grid.h_max());
        Ok((u, v, w))
    }
}

/// One pass of the normalized 3×3 binomial stencil at nodes within `radius` of `points`.
fn smooth_near(f: &ScalarField, points: &[P2], radius: f64) -> ScalarField {
    let g = &f.grid;
    let (n0, n1) = (g.n[0], g.n[1]);
    let periodic = g.boundary == crate::field::Boundary::Periodic;
    let wrap = |i: isize, n: usize| -> usize {
        if periodic {
            i.rem_euclid(n as isize) as usize
        } else {
            i.clamp(0, n as isize - 1) as usize
        }
    };
    let mut out = f.values.clone();
    for p in points {
        let ilo = ((p[0] - radius - g.origin[0]) / g.h[0]).floor().max(0.0) as usize;
        let ihi = (((p[0] + radius - g.origin[0]) / g.h[0]).ceil() as usize).min(n0);
        let jlo = ((p[1] - radius - g.origin[1]) / g.h[1]).floor().max(0.0) as usize;
        let jhi = (((p[1] + radius - g.origin[1]) / g.h[1]).ceil() as usize).min(n1);
        for i in ilo..ihi {
            for j in jlo..jhi {
                let x = g.point([i, j, 0]);
                if (x[0] - p[0]).hypot(x[1] - p[1]) > radius {
                    continue;
                }
                let mut acc = 0.0;
                for (di, wi) in [(-1isize, 1.0), (0, 2.0), (1, 1.0)] {
                    for (dj, wj) in [(-1isize, 1.0), (0, 2.0), (1, 1.0)] {
                        let ii = wrap(i as isize + di, n0);
                        let jj = wrap(j as isize + dj, n1);
                        acc += wi * wj * f.values[g.index(ii, jj, 0)];
                    }
                }
                out[g.index(i, j, 0)] = acc / 16.0;
            }
        }
    }
    ScalarField {
        grid: g.clone(),
        values: out,
    }
}

/// Grid samples of the Mumford-Shah recovery triple.
pub fn recover_ms(state: &SharpMsState, params: &MsParams, grid: &Grid) -> Result<(ScalarField, ScalarField, ScalarField)> {
    MsRecovery::new(state, params)?.fields(grid)
}

/// The two parts of `G_{ε,β}` for one radial point profile.
#[derive(Debug, Clone, Copy)]
pub struct PointEnergy {
    /// `(1/(c₀β)) ∫ (ε|w'|²/2 + W(w)/ε)`
    pub first: f64,
    /// `(β/(c₀ε)) ∫ (−εΔw + W'(w)/ε)²`
    pub second: f64,
    pub total: f64,
}

/// `G_{ε,β}` of `w = q_ε(|x| − β)` by quadrature in the radius.
pub fn radial_point_energy(eps: f64, beta: f64, lambda: f64) -> Result<PointEnergy> {
    let p = ProfileParams::new(eps, lambda)?;
    let delta = p.delta;
    if !(beta > delta) {
        return invalid(format!("beta {beta:.3e} must exceed the transition half-width {delta:.3e}"));
    }
    let breaks = [
        beta - delta,
        beta - 0.5 * delta,
        beta - 4.0 * eps,
        beta,
        beta + 4.0 * eps,
        beta + 0.5 * delta,
        beta + delta,
    ];
    let breaks: Vec<f64> = {
        let mut b = breaks.to_vec();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    };
    let opts = QuadOptions::relative(1e-12);
    let first = integrate_pieces(
        |r| {
            let [q, q1, _] = truncated_profile_derivs(r - beta, &p);
            (0.5 * eps * q1 * q1 + double_well(q) / eps) * 2.0 * PI * r
        },
        &breaks,
        opts,
    )
    .checked(breaks[0], breaks[breaks.len() - 1])?;
    let second = integrate_pieces(
        |r| {
            let t = r - beta;
            let q1 = truncated_profile_derivs(t, &p)[1];
            let f = residual_integrand(t, &p) - eps * q1 / r;
            f * f * 2.0 * PI * r
        },
        &breaks,
        opts,
    )
    .checked(breaks[0], breaks[breaks.len() - 1])?;
    let first = first / (C0 * beta);
    let second = beta * second / (C0 * eps);
    Ok(PointEnergy {
        first,
        second,
        total: first + second,
    })
}
