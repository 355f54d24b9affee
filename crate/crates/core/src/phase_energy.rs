//! Grid evaluation of the diffuse functionals and their diagnostic densities.
//!
//! Fields enter either as grid samples, differentiated by finite differences or
//! spectrally, or as analytic jets (value, gradient, Laplacian) that can be sampled
//! several times per cell.

use crate::anisotropy::{extend, Anisotropy, ExtensionParams};
use crate::breakdown::EnergyBreakdown;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::field::{self, Boundary, Grid, ScalarField, Spectral};
use crate::profiles::{double_well, double_well_prime, C0};
use std::sync::atomic::{AtomicBool, Ordering};

/// Value, gradient and Laplacian at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub lap: f64,
}

impl Jet {
    pub fn constant(c: f64) -> Self {
        Self {
            value: c,
            ..Self::default()
        }
    }

    #[inline]
    pub fn grad_sq(&self) -> f64 {
        self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1] + self.grad[2] * self.grad[2]
    }
}

/// A field known in closed form.
pub trait JetSource: Send + Sync {
    fn jet(&self, x: [f64; 3]) -> Jet;
}

impl<F: Fn([f64; 3]) -> Jet + Send + Sync> JetSource for F {
    fn jet(&self, x: [f64; 3]) -> Jet {
        self(x)
    }
}

#[derive(Clone, Copy)]
pub enum Input<'a> {
    Field(&'a ScalarField),
    Analytic(&'a dyn JetSource),
}

impl<'a> From<&'a ScalarField> for Input<'a> {
    fn from(f: &'a ScalarField) -> Self {
        Input::Field(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivatives {
    FiniteDifference,
    /// periodic grids only
    Spectral,
}

/// Quadrature settings: analytic inputs are sampled at `subcells^d` midpoints per cell.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub subcells: usize,
    pub derivatives: Derivatives,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            subcells: 1,
            derivatives: Derivatives::FiniteDifference,
        }
    }
}

impl Quadrature {
    pub fn subcells(subcells: usize) -> Self {
        Self {
            subcells,
            ..Self::default()
        }
    }
}

enum Prepared<'a> {
    Sampled {
        values: &'a [f64],
        grad: Vec<Vec<f64>>,
        lap: Vec<f64>,
    },
    Analytic(&'a dyn JetSource),
}

impl Prepared<'_> {
    #[inline]
    fn jet(&self, idx: usize, x: [f64; 3]) -> Jet {
        match self {
            Prepared::Sampled { values, grad, lap } => {
                let mut g = [0.0; 3];
                for (a, comp) in grad.iter().enumerate() {
                    g[a] = comp[idx];
                }
                Jet {
                    value: values[idx],
                    grad: g,
                    lap: lap[idx],
                }
            }
            Prepared::Analytic(s) => s.jet(x),
        }
    }
}

/// `ε|∇v|²/2 + W(v)/ε`.
#[inline]
pub fn mm_density(j: &Jet, eps: f64) -> f64 {
    0.5 * eps * j.grad_sq() + double_well(j.value) / eps
}

/// `-εΔv + W'(v)/ε`.
#[inline]
pub fn residual(j: &Jet, eps: f64) -> f64 {
    -eps * j.lap + double_well_prime(j.value) / eps
}

/// Parameters of the set functional.
#[derive(Debug, Clone, Copy)]
pub struct SetParams {
    pub eps: f64,
    pub extension: ExtensionParams,
}

impl SetParams {
    /// Mollification radius `r_ε = ε`.
    pub fn new(eps: f64, phi: &Anisotropy) -> Result<Self> {
        Self::with_r_eps(eps, eps, phi)
    }

    pub fn with_r_eps(eps: f64, r_eps: f64, phi: &Anisotropy) -> Result<Self> {
        if !(eps > 0.0) {
            return invalid("eps must be positive");
        }
        Ok(Self {
            eps,
            extension: ExtensionParams::new(r_eps, phi)?,
        })
    }
}

/// Parameters of the diffuse Mumford-Shah functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsParams {
    pub eps: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub r_eps: f64,
}

/// Ratios that must vanish along a scaling sequence.
#[derive(Debug, Clone, Copy)]
pub struct ScalingReport {
    pub eps_log_over_beta: f64,
    pub beta_over_eta: f64,
}

impl MsParams {
    /// `β = √ε`, `η = ε^{1/4}`, `r_ε = ε`, `λ = 2`.
    pub fn new(eps: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            eps,
            beta: eps.sqrt(),
            eta: eps.powf(0.25),
            gamma,
            lambda: 2.0,
            r_eps: eps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return invalid("eps must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.eta > 0.0 && self.r_eps > 0.0) {
            return invalid("beta, eta and r_eps must be positive");
        }
        if !(self.gamma >= 0.0) {
            return invalid("gamma must be nonnegative");
        }
        if !(self.lambda > 1.0) {
            return invalid("lambda must exceed 1");
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.lambda * self.eps * self.eps.ln().abs()
    }

    pub fn scaling(&self) -> ScalingReport {
        ScalingReport {
            eps_log_over_beta: self.eps * self.eps.ln().abs() / self.beta,
            beta_over_eta: self.beta / self.eta,
        }
    }
}

/// Integrates pointwise densities of one or more inputs over a grid.
#[derive(Debug)]
pub struct Evaluator {
    grid: Grid,
    quadrature: Quadrature,
    warned: AtomicBool,
}

const MAX_INPUTS: usize = 3;

impl Evaluator {
    pub fn new(grid: &Grid, quadrature: Quadrature) -> Result<Self> {
        if quadrature.subcells == 0 {
            return invalid("need at least one sample per cell");
        }
        if quadrature.derivatives == Derivatives::Spectral && grid.boundary != Boundary::Periodic {
            return invalid("spectral derivatives need a periodic grid");
        }
        Ok(Self {
            grid: grid.clone(),
            quadrature,
            warned: AtomicBool::new(false),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn prepare<'a>(&self, input: Input<'a>) -> Result<Prepared<'a>> {
        match input {
            Input::Analytic(s) => Ok(Prepared::Analytic(s)),
            Input::Field(f) => {
                if !f.grid.same_shape(&self.grid) {
                    return Err(Error::GridMismatch("field grid differs from evaluation grid".into()));
                }
                let (grad, lap) = match self.quadrature.derivatives {
                    Derivatives::FiniteDifference => (field::gradient(f).comps, field::laplacian(f).values),
                    Derivatives::Spectral => {
                        let s = Spectral::new(&f.grid)?;
                        (s.gradient(&f.values), s.laplacian(&f.values))
                    }
                };
                Ok(Prepared::Sampled {
                    values: &f.values,
                    grad,
                    lap,
                })
            }
        }
    }

    fn effective_subcells(&self, inputs: &[Prepared]) -> usize {
        if inputs.iter().any(|p| matches!(p, Prepared::Analytic(_))) {
            self.quadrature.subcells
        } else {
            1
        }
    }

    fn warn_resolution(&self, eps: f64, inputs: &[Prepared]) {
        let h = self.grid.h_max() / self.effective_subcells(inputs) as f64;
        // once per evaluator; descent loops evaluate thousands of times
        if h > 0.25 * eps && !self.warned.swap(true, Ordering::Relaxed) {
            log::warn!("sample spacing {h:.3e} exceeds eps/4 = {:.3e}; the interface is under-resolved", 0.25 * eps);
        }
    }

    fn offsets(&self, s: usize) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let o = |k: usize, a: usize| ((k as f64 + 0.5) / s as f64 - 0.5) * g.h[a];
        let mut out = Vec::new();
        let kz = if g.dim == 3 { s } else { 1 };
        for i in 0..s {
            for j in 0..s {
                for k in 0..kz {
                    out.push([o(i, 0), o(j, 1), if g.dim == 3 { o(k, 2) } else { 0.0 }]);
                }
            }
        }
        out
    }

    /// `[∫ f_0, ..., ∫ f_{N-1}]` for a vector density of the input jets.
    fn integrate<const N: usize, F>(&self, inputs: &[Prepared], density: F) -> [f64; N]
    where
        F: Fn([f64; 3], &[Jet]) -> [f64; N] + Sync,
    {
        assert!(inputs.len() <= MAX_INPUTS);
        let g = &self.grid;
        let s = self.effective_subcells(inputs);
        let offsets = self.offsets(s);
        let weight = g.cell_volume() / offsets.len() as f64;
        let rl = g.row_len();
        let sums = exec::sum_rows::<N, _>(g.n_rows(), |r| {
            let mut cells = vec![[0.0; N]; rl];
            let mut jets = [Jet::default(); MAX_INPUTS];
            for (k, cell) in cells.iter_mut().enumerate() {
                let idx = r * rl + k;
                let c = g.point_of(idx);
                for o in &offsets {
                    let x = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                    for (m, inp) in inputs.iter().enumerate() {
                        jets[m] = inp.jet(idx, x);
                    }
                    let d = density(x, &jets[..inputs.len()]);
                    for q in 0..N {
                        cell[q] += d[q];
                    }
                }
            }
            let mut out = [0.0; N];
            let mut col = vec![0.0; rl];
            for (q, o) in out.iter_mut().enumerate() {
                for (k, c) in cells.iter().enumerate() {
                    col[k] = c[q];
                }
                *o = exec::pairwise_sum(&col);
            }
            out
        });
        sums.map(|v| v * weight)
    }

    /// Cell averages of a scalar density.
    fn density_field<F>(&self, inputs: &[Prepared], density: F) -> ScalarField
    where
        F: Fn([f64; 3], &[Jet]) -> f64 + Sync,
    {
        let g = &self.grid;
        let s = self.effective_subcells(inputs);
        let offsets = self.offsets(s);
        let scale = 1.0 / offsets.len() as f64;
        let mut values = vec![0.0; g.len()];
        let rl = g.row_len();
        exec::for_each_chunk_mut(&mut values, rl, |r, row| {
            let mut jets = [Jet::default(); MAX_INPUTS];
            for (k, v) in row.iter_mut().enumerate() {
                let idx = r * rl + k;
                let c = g.point_of(idx);
                let mut acc = 0.0;
                for o in &offsets {
                    let x = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                    for (m, inp) in inputs.iter().enumerate() {
                        jets[m] = inp.jet(idx, x);
                    }
                    acc += density(x, &jets[..inputs.len()]);
                }
                *v = acc * scale;
            }
        });
        ScalarField {
            grid: g.clone(),
            values,
        }
    }

    /// Density of `μ_ε = (1/c₀)(ε|∇v|²/2 + W(v)/ε)` and its total mass.
    pub fn mm_measure(&self, v: Input, eps: f64) -> Result<(ScalarField, f64)> {
        let p = [self.prepare(v)?];
        self.warn_resolution(eps, &p);
        let f = self.density_field(&p, |_, j| mm_density(&j[0], eps) / C0);
        let [total] = self.integrate(&p, |_, j| [mm_density(&j[0], eps) / C0]);
        Ok((f, total))
    }

    /// Field `f = -εΔv + W'(v)/ε` and the mass of `α_ε = f²/(c₀ε)`.
    pub fn willmore_residual(&self, v: Input, eps: f64) -> Result<(ScalarField, f64)> {
        let p = [self.prepare(v)?];
        self.warn_resolution(eps, &p);
        let f = self.density_field(&p, |_, j| residual(&j[0], eps));
        let [total] = self.integrate(&p, |_, j| {
            let r = residual(&j[0], eps);
            [r * r / (C0 * eps)]
        });
        Ok((f, total))
    }

    /// `ξ_ε = ε|∇v|²/2 − W(v)/ε` and `∫|ξ_ε|`.
    pub fn discrepancy(&self, v: Input, eps: f64) -> Result<(ScalarField, f64)> {
        let p = [self.prepare(v)?];
        self.warn_resolution(eps, &p);
        let xi = |j: &Jet| 0.5 * eps * j.grad_sq() - double_well(j.value) / eps;
        let f = self.density_field(&p, |_, j| xi(&j[0]));
        let [total] = self.integrate(&p, |_, j| [xi(&j[0]).abs()]);
        Ok((f, total))
    }

    /// Anisotropic Modica-Mortola term and Willmore term of the set functional.
    pub fn f_eps(&self, v: Input, phi: &Anisotropy, params: &SetParams) -> Result<EnergyBreakdown> {
        if phi.dim() != self.grid.dim {
            return invalid("anisotropy dimension differs from grid dimension");
        }
        let p = [self.prepare(v)?];
        let eps = params.eps;
        self.warn_resolution(eps, &p);
        let ext = params.extension;
        let [mm, wil] = self.integrate(&p, |_, j| {
            let j = &j[0];
            let r = residual(j, eps);
            [extend(&j.grad, phi, &ext) * mm_density(j, eps), r * r / eps]
        });
        Ok(EnergyBreakdown::interface(mm / C0, wil / C0))
    }

    /// `G_{ε,β}(w, A)`; `mask` selects `A` (everything when absent).
    pub fn g_eps_beta(
        &self,
        w: Input,
        eps: f64,
        beta: f64,
        mask: Option<&(dyn Fn([f64; 3]) -> bool + Sync)>,
    ) -> Result<EnergyBreakdown> {
        if !(eps > 0.0 && beta > 0.0) {
            return invalid("eps and beta must be positive");
        }
        let p = [self.prepare(w)?];
        self.warn_resolution(eps, &p);
        let [a, b] = self.integrate(&p, |x, j| {
            if let Some(m) = mask {
                if !m(x) {
                    return [0.0, 0.0];
                }
            }
            let r = residual(&j[0], eps);
            [mm_density(&j[0], eps), r * r]
        });
        Ok(EnergyBreakdown::interface(a / (C0 * beta), beta * b / (C0 * eps)))
    }

    /// All six terms of the diffuse Mumford-Shah functional.
    pub fn ms_energy(
        &self,
        u: Input,
        v: Input,
        w: Input,
        phi: &Anisotropy,
        params: &MsParams,
        ext: &ExtensionParams,
    ) -> Result<EnergyBreakdown> {
        params.validate()?;
        if self.grid.dim != 2 || phi.dim() != 2 {
            return invalid("the Mumford-Shah functional is planar");
        }
        let p = [self.prepare(u)?, self.prepare(v)?, self.prepare(w)?];
        let eps = params.eps;
        let beta = params.beta;
        self.warn_resolution(eps, &p);
        let [bulk, mm, curv, g1, g2, pv, pw] = self.integrate(&p, |_, j| {
            let (ju, jv, jw) = (&j[0], &j[1], &j[2]);
            let gv = (1.0 + jv.value) * (1.0 + jv.value);
            let gw = (1.0 + jw.value) * (1.0 + jw.value);
            let rv = residual(jv, eps);
            let rw = residual(jw, eps);
            [
                gv * ju.grad_sq(),
                extend(&jv.grad, phi, ext) * mm_density(jv, eps),
                rv * rv * gw / eps,
                mm_density(jw, eps),
                rw * rw,
                (1.0 - jv.value) * (1.0 - jv.value),
                (1.0 - jw.value) * (1.0 - jw.value),
            ]
        });
        let g = g1 / (C0 * beta) + beta * g2 / (C0 * eps);
        Ok(EnergyBreakdown::new(
            0.25 * bulk,
            mm / (2.0 * C0),
            curv / (8.0 * C0),
            params.gamma / (4.0 * std::f64::consts::PI) * g,
            pv / params.eta,
            pw / params.eta,
        ))
    }
}

/// [`Evaluator::mm_measure`] with finite differences.
pub fn mm_measure(v: &ScalarField, eps: f64) -> Result<(ScalarField, f64)> {
    Evaluator::new(&v.grid, Quadrature::default())?.mm_measure(v.into(), eps)
}

/// [`Evaluator::willmore_residual`] with finite differences.
pub fn willmore_residual(v: &ScalarField, eps: f64) -> Result<(ScalarField, f64)> {
    Evaluator::new(&v.grid, Quadrature::default())?.willmore_residual(v.into(), eps)
}

/// Discrepancy field with finite differences.
pub fn discrepancy(v: &ScalarField, eps: f64) -> Result<ScalarField> {
    Ok(Evaluator::new(&v.grid, Quadrature::default())?.discrepancy(v.into(), eps)?.0)
}

/// The set functional with finite differences.
pub fn f_eps(v: &ScalarField, phi: &Anisotropy, params: &SetParams) -> Result<EnergyBreakdown> {
    Evaluator::new(&v.grid, Quadrature::default())?.f_eps(v.into(), phi, params)
}

/// `G_{ε,β}` with finite differences.
pub fn g_eps_beta(
    w: &ScalarField,
    eps: f64,
    beta: f64,
    mask: Option<&(dyn Fn([f64; 3]) -> bool + Sync)>,
) -> Result<EnergyBreakdown> {
    Evaluator::new(&w.grid, Quadrature::default())?.g_eps_beta(w.into(), eps, beta, mask)
}

/// The diffuse Mumford-Shah functional with finite differences.
pub fn ms_energy_eps(
    u: &ScalarField,
    v: &ScalarField,
    w: &ScalarField,
    phi: &Anisotropy,
    params: &MsParams,
) -> Result<EnergyBreakdown> {
    if !(u.grid.same_shape(&v.grid) && u.grid.same_shape(&w.grid)) {
        return Err(Error::GridMismatch("u, v and w must share a grid".into()));
    }
    let ext = ExtensionParams::new(params.r_eps, phi)?;
    Evaluator::new(&u.grid, Quadrature::default())?.ms_energy(u.into(), v.into(), w.into(), phi, params, &ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{optimal_profile, truncated_profile_derivs, ProfileParams};
    use proptest::prelude::*;

    fn iso() -> Anisotropy {
        Anisotropy::isotropic(2).unwrap()
    }

    #[test]
    fn well_bottom_is_free() {
        let g = Grid::square(0.0, 1.0, 16, Boundary::Periodic).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        let (mu, m) = mm_measure(&one, 0.1).unwrap();
        assert_eq!(m, 0.0);
        assert!(mu.max_abs() == 0.0);
        let (f, a) = willmore_residual(&one, 0.1).unwrap();
        assert!(f.max_abs() == 0.0 && a == 0.0);
        assert!(discrepancy(&one, 0.1).unwrap().max_abs() == 0.0);
        let params = SetParams::new(0.1, &iso()).unwrap();
        assert_eq!(f_eps(&one, &iso(), &params).unwrap().total, 0.0);
        assert_eq!(g_eps_beta(&one, 0.1, 0.3, None).unwrap().total, 0.0);
        let u = ScalarField::constant(&g, 0.7);
        let e = ms_energy_eps(&u, &one, &one, &iso(), &MsParams::new(0.1, 0.2).unwrap()).unwrap();
        assert_eq!(e.total, 0.0);
    }

    fn slab(eps: f64, n: usize) -> ScalarField {
        let g = Grid::rect([-0.5, 0.0], [0.5, 0.1], [n, 8], Boundary::Neumann).unwrap();
        let p = ProfileParams::new(eps, 2.0).unwrap();
        ScalarField::from_fn(&g, |x| truncated_profile_derivs(x[0], &p)[0])
    }

    #[test]
    fn slab_mass_is_interface_length() {
        let mut prev = f64::INFINITY;
        for eps in [0.04, 0.02, 0.01] {
            let v = slab(eps, (40.0 / eps) as usize);
            let (_, m) = mm_measure(&v, eps).unwrap();
            let err = (m - 0.1).abs();
            assert!(err < 2e-3, "eps {eps}: mass {m}");
            let (_, xi) = Evaluator::new(&v.grid, Quadrature::default())
                .unwrap()
                .discrepancy((&v).into(), eps)
                .unwrap();
            assert!(xi < prev, "discrepancy {xi} at eps {eps}");
            prev = xi;
        }
    }

    #[test]
    fn slab_set_energy_reduces_to_modica_mortola() {
        let mut errs = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let v = slab(eps, (40.0 / eps) as usize);
            let params = SetParams::new(eps, &iso()).unwrap();
            let e = f_eps(&v, &iso(), &params).unwrap();
            assert!(e.curvature < 1e-3);
            errs.push((e.anisotropic_mm - 0.1).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn anisotropic_term_bounded_by_mass() {
        let g = Grid::square(-1.0, 1.0, 256, Boundary::Neumann).unwrap();
        let eps = 0.05;
        let v = ScalarField::from_fn(&g, |x| optimal_profile((x[0].hypot(x[1]) - 0.5) / eps));
        let phi = Anisotropy::four_fold(2, 0.9).unwrap();
        let params = SetParams::new(eps, &phi).unwrap();
        let e = f_eps(&v, &phi, &params).unwrap();
        let (_, m) = mm_measure(&v, eps).unwrap();
        let c = phi.bound_c();
        assert!(e.anisotropic_mm >= m / (4.0 * c) && e.anisotropic_mm <= c * m);
    }

    #[test]
    fn gate_switches_off_curvature() {
        let g = Grid::square(-1.0, 1.0, 64, Boundary::Neumann).unwrap();
        let eps = 0.1;
        let u = ScalarField::from_fn(&g, |x| x[0]);
        let v = ScalarField::from_fn(&g, |x| optimal_profile((x[0].hypot(x[1]) - 0.5) / eps));
        let w = ScalarField::constant(&g, -1.0);
        let p = MsParams::new(eps, 0.1).unwrap();
        let e = ms_energy_eps(&u, &v, &w, &iso(), &p).unwrap();
        assert_eq!(e.curvature, 0.0);
        assert!((e.penalty_w - 4.0 * 4.0 / p.eta).abs() < 1e-9);
        assert!(e.is_nonnegative());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = Grid::square(0.0, 1.0, 16, Boundary::Neumann).unwrap();
        let b = Grid::square(0.0, 1.0, 32, Boundary::Neumann).unwrap();
        let u = ScalarField::constant(&a, 0.0);
        let v = ScalarField::constant(&b, 1.0);
        let r = ms_energy_eps(&u, &v, &v, &iso(), &MsParams::new(0.1, 0.1).unwrap());
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn analytic_jets_agree_with_fields() {
        let g = Grid::square(-1.0, 1.0, 512, Boundary::Neumann).unwrap();
        let eps = 0.1;
        let s = 0.3;
        let gauss = move |x: [f64; 3]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let e = (-r2 / (2.0 * s * s)).exp();
            Jet {
                value: 1.0 - e,
                grad: [x[0] / (s * s) * e, x[1] / (s * s) * e, 0.0],
                lap: (2.0 / (s * s) - r2 / s.powi(4)) * e,
            }
        };
        let v = ScalarField::from_fn(&g, |x| gauss(x).value);
        let params = SetParams::new(eps, &iso()).unwrap();
        let a = f_eps(&v, &iso(), &params).unwrap();
        for sub in [1, 3] {
            let ev = Evaluator::new(&g, Quadrature::subcells(sub)).unwrap();
            let b = ev.f_eps(Input::Analytic(&gauss), &iso(), &params).unwrap();
            assert!(((a.total - b.total) / b.total).abs() < 1e-4);
        }
    }

    #[test]
    fn spectral_and_fd_agree_on_smooth_periodic_field() {
        let g = Grid::square(0.0, 1.0, 128, Boundary::Periodic).unwrap();
        let v = ScalarField::from_fn(&g, |x| 0.9 * (2.0 * std::f64::consts::PI * x[0]).sin());
        let fd = Evaluator::new(&g, Quadrature::default()).unwrap();
        let sp = Evaluator::new(
            &g,
            Quadrature {
                subcells: 1,
                derivatives: Derivatives::Spectral,
            },
        )
        .unwrap();
        let a = fd.willmore_residual((&v).into(), 0.2).unwrap().1;
        let b = sp.willmore_residual((&v).into(), 0.2).unwrap().1;
        assert!(((a - b) / b).abs() < 1e-3);
        assert!(Evaluator::new(
            &Grid::square(0.0, 1.0, 16, Boundary::Neumann).unwrap(),
            Quadrature {
                subcells: 1,
                derivatives: Derivatives::Spectral
            }
        )
        .is_err());
    }

    #[test]
    fn quarter_turn_invariance() {
        let n = 64;
        let g = Grid::square(-1.0, 1.0, n, Boundary::Neumann).unwrap();
        let f = |x: [f64; 3]| (3.0 * x[0] + 0.5 * x[1] * x[1]).tanh();
        let v = ScalarField::from_fn(&g, f);
        // rotate the sample array by 90 degrees: (i, j) -> (n-1-j, i)
        let mut rv = v.values.clone();
        for i in 0..n {
            for j in 0..n {
                rv[g.index(n - 1 - j, i, 0)] = v.values[g.index(i, j, 0)];
            }
        }
        let vr = ScalarField::new(g.clone(), rv).unwrap();
        let phi = Anisotropy::ellipse(2, [1.0, 1.6, 0.0]).unwrap();
        let phr = phi.rotated(std::f64::consts::FRAC_PI_2).unwrap();
        let eps = 0.2;
        let a = f_eps(&v, &phi, &SetParams::new(eps, &phi).unwrap()).unwrap();
        let b = f_eps(&vr, &phr, &SetParams::new(eps, &phr).unwrap()).unwrap();
        assert!(((a.total - b.total) / a.total).abs() < 1e-9, "{} vs {}", a.total, b.total);
    }

    #[test]
    fn scaling_report() {
        let p = MsParams::new(1e-3, 0.1).unwrap();
        let s = p.scaling();
        assert!((s.eps_log_over_beta - 1e-3 * 1e-3f64.ln().abs() / 1e-3f64.sqrt()).abs() < 1e-15);
        assert!((s.beta_over_eta - 1e-3f64.powf(0.25)).abs() < 1e-12);
        assert!(MsParams::new(2.0, 0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn energies_are_nonnegative(vals in prop::collection::vec(-2.0f64..2.0, 3 * 256), eps in 0.05f64..0.5) {
            let g = Grid::square(0.0, 1.0, 16, Boundary::Periodic).unwrap();
            let u = ScalarField::new(g.clone(), vals[..256].to_vec()).unwrap();
            let v = ScalarField::new(g.clone(), vals[256..512].to_vec()).unwrap();
            let w = ScalarField::new(g.clone(), vals[512..].to_vec()).unwrap();
            let e = ms_energy_eps(&u, &v, &w, &iso(), &MsParams::new(eps, 0.3).unwrap()).unwrap();
            prop_assert!(e.is_nonnegative());
            let params = SetParams::new(eps, &iso()).unwrap();
            prop_assert!(f_eps(&v, &iso(), &params).unwrap().is_nonnegative());
            prop_assert!(g_eps_beta(&w, eps, 0.4, None).unwrap().is_nonnegative());
        }
    }
}
