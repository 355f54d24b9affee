//! Double well, optimal profile and the truncated profile `q_eps`.

use crate::error::{invalid, Result};
use crate::quad::{integrate, integrate_pieces, QuadOptions};
use std::f64::consts::SQRT_2;

/// `W(z) = (1 - z^2)^2`.
#[inline]
pub fn double_well(z: f64) -> f64 {
    let a = 1.0 - z * z;
    a * a
}

/// `W'(z) = -4 z (1 - z^2)`.
#[inline]
pub fn double_well_prime(z: f64) -> f64 {
    -4.0 * z * (1.0 - z * z)
}

/// `W''(z) = 12 z^2 - 4`.
#[inline]
pub fn double_well_second(z: f64) -> f64 {
    12.0 * z * z - 4.0
}

/// Closed form `4 sqrt(2) / 3` of the profile cost.
pub const C0: f64 = 4.0 * SQRT_2 / 3.0;

/// `c0` by adaptive quadrature of `sqrt(2 W)` over `[-1, 1]`.
pub fn c0_constant() -> Result<f64> {
    integrate(|z| (2.0 * double_well(z)).sqrt(), -1.0, 1.0, QuadOptions::default()).checked(-1.0, 1.0)
}

/// `q(t) = tanh(sqrt(2) t)`.
#[inline]
pub fn optimal_profile(t: f64) -> f64 {
    (SQRT_2 * t).tanh()
}

/// `1 - q(t)` without cancellation for large positive `t`.
#[inline]
fn one_minus_q(t: f64) -> f64 {
    if t > 0.0 {
        2.0 / (1.0 + (2.0 * SQRT_2 * t).exp())
    } else {
        1.0 - optimal_profile(t)
    }
}

/// `(q, q', q'')` at `t`.
pub fn optimal_profile_derivs(t: f64) -> [f64; 3] {
    let q = optimal_profile(t);
    let s = 1.0 - q * q;
    [q, SQRT_2 * s, -4.0 * q * s]
}

/// Scaling parameters of the truncated profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    pub eps: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl ProfileParams {
    pub fn new(eps: f64, lambda: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return invalid(format!("eps must lie in (0,1), got {eps}"));
        }
        if !(lambda > 1.0) || !lambda.is_finite() {
            return invalid(format!("lambda must exceed 1, got {lambda}"));
        }
        Ok(Self {
            eps,
            lambda,
            delta: lambda * eps * eps.ln().abs(),
        })
    }
}

/// Quintic cut-off: 1 on `|s| <= 1`, 0 on `|s| >= 2`, C2 in between.
/// Returns `(zeta, zeta', zeta'')`.
pub fn cutoff(s: f64) -> [f64; 3] {
    let a = s.abs();
    if a <= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    if a >= 2.0 {
        return [0.0, 0.0, 0.0];
    }
    let x = a - 1.0;
    let x2 = x * x;
    let val = 1.0 - x2 * x * (10.0 - 15.0 * x + 6.0 * x2);
    let d1 = -30.0 * x2 * (1.0 - 2.0 * x + x2);
    let d2 = -60.0 * x * (1.0 - 3.0 * x + 2.0 * x2);
    [val, s.signum() * d1, d2]
}

/// `(q_eps, q_eps', q_eps'')` at `t >= 0` written through `m = 1 - q(t/eps)`.
fn truncated_pos(t: f64, p: &ProfileParams) -> [f64; 3] {
    let eps = p.eps;
    let [z, z1, z2] = cutoff(2.0 * t / p.delta);
    if z == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let dz = z1 * 2.0 / p.delta;
    let d2z = z2 * 4.0 / (p.delta * p.delta);
    let m = one_minus_q(t / eps);
    let m1 = -(SQRT_2 / eps) * m * (2.0 - m);
    let m2 = (4.0 / (eps * eps)) * (1.0 - m) * m * (2.0 - m);
    [
        1.0 - z * m,
        -(dz * m + z * m1),
        -(d2z * m + 2.0 * dz * m1 + z * m2),
    ]
}

/// `(q_eps, q_eps', q_eps'')` at `t`; odd in `t`.
pub fn truncated_profile_derivs(t: f64, p: &ProfileParams) -> [f64; 3] {
    if t >= 0.0 {
        truncated_pos(t, p)
    } else {
        let [v, d1, d2] = truncated_pos(-t, p);
        [-v, d1, -d2]
    }
}

/// `q_eps(t) = zeta(2t/delta) q(t/eps) + sign(t) (1 - zeta(2t/delta))`.
pub fn truncated_profile(t: f64, p: &ProfileParams) -> Result<f64> {
    if !t.is_finite() {
        return invalid(format!("non-finite profile argument {t}"));
    }
    Ok(truncated_profile_derivs(t, p)[0])
}

/// `-eps q_eps'' + W'(q_eps)/eps` in a cancellation-free form.
///
/// Vanishes identically for `|t| <= delta/2` and `|t| >= delta`.
pub fn residual_integrand(t: f64, p: &ProfileParams) -> f64 {
    let a = t.abs();
    let s = 2.0 * a / p.delta;
    if s <= 1.0 || s >= 2.0 {
        return 0.0;
    }
    let eps = p.eps;
    let [z, z1, z2] = cutoff(s);
    let m = one_minus_q(a / eps);
    let r = m
        * (4.0 * eps / (p.delta * p.delta) * z2 - 4.0 * SQRT_2 / p.delta * z1 * (2.0 - m)
            + 4.0 / eps * z * m * (1.0 - z) * (m * (1.0 + z) - 3.0));
    r * t.signum()
}

/// Integrals of the truncated profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileMass {
    /// `int_{-delta}^{delta} eps/2 |q_eps'|^2`
    pub kinetic: f64,
    /// `int_{-delta}^{delta} W(q_eps)/eps`
    pub potential: f64,
    /// both densities over `|t| >= delta/2`
    pub tail: f64,
    /// kinetic part over `[-delta/2, delta/2]`
    pub inner_kinetic: f64,
    /// potential part over `[-delta/2, delta/2]`
    pub inner_potential: f64,
    /// `kinetic - c0/2`, computed without subtracting nearly equal numbers
    pub kinetic_error: f64,
}

fn kinetic_density(t: f64, p: &ProfileParams) -> f64 {
    let d = truncated_profile_derivs(t, p)[1];
    0.5 * p.eps * d * d
}

fn potential_density(t: f64, p: &ProfileParams) -> f64 {
    // W(q_eps) = (1-q)^2 (1+q)^2 with 1-q_eps = zeta m for t > 0
    let a = t.abs();
    let [z, _, _] = cutoff(2.0 * a / p.delta);
    let m = z * one_minus_q(a / p.eps);
    let w = m * (2.0 - m);
    w * w / p.eps
}

fn mass_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_intervals: 50_000,
    }
}

/// Kinetic, potential and tail masses of `q_eps`.
pub fn profile_mass(p: &ProfileParams) -> Result<ProfileMass> {
    let d = p.delta;
    // the densities are even, integrate over [0, .] and double
    let half = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, brk: &[f64]| -> Result<f64> {
        let mut pts = vec![a];
        pts.extend(brk.iter().copied().filter(|&x| x > a && x < b));
        pts.push(b);
        Ok(2.0 * integrate_pieces(f, &pts, mass_opts()).checked(a, b)?)
    };
    let kin = |t: f64| kinetic_density(t, p);
    let pot = |t: f64| potential_density(t, p);
    let scale = [p.eps, 4.0 * p.eps, 16.0 * p.eps, 0.5 * d];
    let inner_kinetic = half(&kin, 0.0, 0.5 * d, &scale)?;
    let inner_potential = half(&pot, 0.0, 0.5 * d, &scale)?;
    let outer_kinetic = half(&kin, 0.5 * d, d, &[])?;
    let outer_potential = half(&pot, 0.5 * d, d, &[])?;
    // inner part equals c0/2 minus the untruncated tail int_L^inf q'^2 = sqrt2 m^2 (1 - m/3)
    let m = one_minus_q(0.5 * d / p.eps);
    let missing = SQRT_2 * m * m * (1.0 - m / 3.0);
    Ok(ProfileMass {
        kinetic_error: outer_kinetic - missing,
        kinetic: inner_kinetic + outer_kinetic,
        potential: inner_potential + outer_potential,
        tail: outer_kinetic + outer_potential,
        inner_kinetic,
        inner_potential,
    })
}

/// `int_{-delta}^{delta} |-eps q_eps'' + W'(q_eps)/eps|^2 dt`.
pub fn profile_residual(p: &ProfileParams) -> Result<f64> {
    let d = p.delta;
    let f = |t: f64| {
        let r = residual_integrand(t, p);
        r * r
    };
    let opts = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-10,
        max_intervals: 50_000,
    };
    Ok(2.0 * integrate_pieces(f, &[0.5 * d, 0.75 * d, d], opts).checked(0.5 * d, d)?)
}
