//! Energy descent on periodic grids.
//!
//! Gradients are the exact gradients of the discrete energies evaluated with
//! spectral derivatives, so every accepted step is checked against the same
//! quantity that is being decreased. Steps are semi-implicit: the leading
//! constant-coefficient part is inverted in Fourier space, everything else is
//! explicit, and a step that raises the energy is retried with the increment
//! halved. A step that fails at every fraction leaves the state unchanged.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anisotropy::{extend, Anisotropy, ExtensionParams};
use crate::breakdown::EnergyBreakdown;
use crate::error::{invalid, Error, Result};
use crate::field::{Boundary, ScalarField, Spectral};
use crate::phase_energy::{Derivatives, Evaluator, MsParams, Quadrature, SetParams};
use crate::profiles::{double_well, double_well_prime, double_well_second, C0};

/// Step control shared by both solvers.
#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    /// time step of the semi-implicit solve; the increment is scaled back by halving on rejection
    pub dt: f64,
    pub n_steps: usize,
    pub record_every: usize,
    /// admissible energy increase per step
    pub tolerance: f64,
    /// consecutive rejected steps before giving up
    pub max_failures: usize,
    /// stop once the L² gradient norm falls below this value
    pub stop_gradient: Option<f64>,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_steps: 100,
            record_every: 1,
            tolerance: 1e-8,
            max_failures: 5,
            stop_gradient: None,
        }
    }
}

impl DescentOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid("dt must be positive");
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1");
        }
        if !(self.tolerance >= 0.0) || self.max_failures == 0 {
            return invalid("tolerance must be nonnegative and max_failures positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// `"flow"`, `"u"`, `"v"` or `"w"`
    pub stage: &'static str,
    pub dt: f64,
    pub breakdown: EnergyBreakdown,
    pub fidelity: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    fn push(&mut self, step: usize, stage: &'static str, dt: f64, breakdown: EnergyBreakdown, fidelity: f64) {
        self.rows.push(TraceRow {
            step,
            stage,
            dt,
            breakdown,
            fidelity,
            total: breakdown.total + fidelity,
        });
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    /// Largest increase between consecutive rows (0 for a monotone trace).
    pub fn max_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].total - w[0].total)
            .fold(0.0, f64::max)
    }

    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.max_increase() <= slack
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step", "stage", "dt"];
        header.extend(&EnergyBreakdown::NAMES[..6]);
        header.extend(["fidelity", "total"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), r.stage.to_string(), format!("{:e}", r.dt)];
            rec.extend(r.breakdown.terms().iter().map(|t| format!("{t:.17e}")));
            rec.push(format!("{:.17e}", r.fidelity));
            rec.push(format!("{:.17e}", r.total));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Adds seeded uniform noise in `[-amplitude, amplitude]`.
pub fn perturb(f: &ScalarField, amplitude: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = f
        .values
        .iter()
        .map(|v| v + amplitude * rng.random_range(-1.0..=1.0))
        .collect();
    ScalarField {
        grid: f.grid.clone(),
        values,
    }
}

/// Radius of the disc with the same area as `{v < 0}`, measured by `∫ (1 − v)/2`.
pub fn equivalent_radius(v: &ScalarField) -> f64 {
    let inside = v.map(|x| 0.5 * (1.0 - x.clamp(-1.0, 1.0))).integrate();
    (inside / std::f64::consts::PI).sqrt()
}

fn l2_norm(values: &[f64], cell: f64) -> f64 {
    (values.iter().map(|x| x * x).sum::<f64>() * cell).sqrt()
}

/// Implicit part `a|k|⁴ + s|k|² + p` of a semi-implicit step.
#[derive(Debug, Clone, Copy, Default)]
struct Stiffness {
    a: f64,
    s: f64,
    p: f64,
}

impl Stiffness {
    /// Bounds for `(t/ε) ∫ (−εΔv + W'(v)/ε)²`, never below their values at the wells.
    fn willmore(t: f64, v: &[f64], eps: f64) -> Self {
        let w2 = v.iter().map(|x| double_well_second(*x).abs()).fold(8.0, f64::max);
        let zero = v
            .iter()
            .map(|x| {
                let x = x.clamp(-1.5, 1.5);
                double_well_second(x).powi(2) + 24.0 * x * double_well_prime(x)
            })
            .fold(64.0, f64::max);
        Self {
            a: 2.0 * t * eps,
            s: 4.0 * t * w2 / eps,
            p: 2.0 * t * zero / (eps * eps * eps),
        }
    }

    /// Bounds for `m ∫ (ε|∇v|²/2 + W(v)/ε)`.
    fn modica_mortola(m: f64, v: &[f64], eps: f64) -> Self {
        let w2 = v.iter().map(|x| double_well_second(*x)).fold(8.0, f64::max);
        Self {
            a: 0.0,
            s: m * eps,
            p: m * w2 / eps,
        }
    }

    fn plus(self, o: Self) -> Self {
        Self {
            a: self.a + o.a,
            s: self.s + o.s,
            p: self.p + o.p,
        }
    }

    fn zeroth(self, p: f64) -> Self {
        Self { p: self.p + p, ..self }
    }
}

/// Spectral operators on a periodic grid.
struct Ops {
    s: Spectral,
}

impl Ops {
    fn new(f: &ScalarField) -> Result<Self> {
        if f.grid.boundary != Boundary::Periodic {
            return invalid("descent solvers need a periodic grid");
        }
        Ok(Self { s: Spectral::new(&f.grid)? })
    }

    fn grad(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.s.gradient(v)
    }

    fn div(&self, comps: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; comps[0].len()];
        for (a, c) in comps.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(self.s.derivative(c, a)) {
                *o += d;
            }
        }
        out
    }

    fn lap(&self, v: &[f64]) -> Vec<f64> {
        self.s.laplacian(v)
    }

    /// `(1/dt + a|k|⁴ + s|k|² + p)^{-1}` applied to `r`.
    fn solve(&self, r: &[f64], dt: f64, st: Stiffness) -> Vec<f64> {
        self.s.apply_symbol(r, |k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            1.0 / (1.0 / dt + st.a * k2 * k2 + st.s * k2 + st.p)
        })
    }
}

/// `∂_p [φ_ε(p) m]` and `φ_ε(p)` at every node, for `m = ε|p|²/2 + W(v)/ε`.
fn anisotropic_flux(
    grad: &[Vec<f64>],
    v: &[f64],
    eps: f64,
    phi: &Anisotropy,
    ext: &ExtensionParams,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = grad.len();
    let n = v.len();
    let mut flux = vec![vec![0.0; n]; dim];
    let mut phis = vec![0.0; n];
    for i in 0..n {
        let mut p = [0.0; 3];
        for a in 0..dim {
            p[a] = grad[a][i];
        }
        let p2: f64 = p.iter().map(|x| x * x).sum();
        let m = 0.5 * eps * p2 + double_well(v[i]) / eps;
        let ph = extend(&p, phi, ext);
        phis[i] = ph;
        let hstep = 1e-7 * (ext.r_eps + p2.sqrt());
        for a in 0..dim {
            let mut q = p;
            q[a] += hstep;
            let up = extend(&q, phi, ext);
            q[a] -= 2.0 * hstep;
            let dn = extend(&q, phi, ext);
            flux[a][i] = (up - dn) / (2.0 * hstep) * m + ph * eps * p[a];
        }
    }
    (flux, phis)
}

/// Smallest step fraction tried is `2^-(MAX_HALVINGS-1)`.
const MAX_HALVINGS: usize = 30;

enum LineSearch<T> {
    Accepted { cand: T, theta: f64 },
    Rejected { increase: f64 },
}

/// Tries `attempt(θ)` for `θ = 1, 1/2, 1/4, …` until the energy does not rise by
/// more than `tolerance`.
fn line_search<T, F>(e_old: f64, tolerance: f64, mut attempt: F) -> Result<LineSearch<T>>
where
    F: FnMut(f64) -> Result<(T, f64)>,
{
    let mut theta = 1.0;
    let mut increase = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        let (cand, e) = attempt(theta)?;
        if e <= e_old + tolerance {
            return Ok(LineSearch::Accepted { cand, theta });
        }
        increase = increase.min(e - e_old);
        theta *= 0.5;
    }
    Ok(LineSearch::Rejected { increase })
}

/// Counts consecutive rejected steps and aborts after `max_failures` of them.
fn count_failure(failures: &mut usize, increase: Option<f64>, opts: &DescentOptions, step: usize) -> Result<()> {
    match increase {
        None => *failures = 0,
        Some(increase) => {
            *failures += 1;
            if *failures >= opts.max_failures {
                return Err(Error::Divergence {
                    step,
                    failures: *failures,
                    increase,
                });
            }
        }
    }
    Ok(())
}

/// Final state of a flow run.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub field: ScalarField,
    pub trace: Trace,
    pub steps: usize,
    /// L² norm of the energy gradient at the returned field
    pub gradient_norm: f64,
}

struct SetFlow<'a> {
    ops: Ops,
    eval: Evaluator,
    phi: &'a Anisotropy,
    params: &'a SetParams,
}

impl SetFlow<'_> {
    fn energy(&self, v: &ScalarField) -> Result<EnergyBreakdown> {
        self.eval.f_eps(v.into(), self.phi, self.params)
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let eps = self.params.eps;
        let dv = self.ops.grad(v);
        let (flux, phis) = anisotropic_flux(&dv, v, eps, self.phi, &self.params.extension);
        let div = self.ops.div(&flux);
        let lap = self.ops.lap(v);
        let f: Vec<f64> = (0..v.len())
            .map(|i| -eps * lap[i] + double_well_prime(v[i]) / eps)
            .collect();
        let lf = self.ops.lap(&f);
        (0..v.len())
            .map(|i| {
                (-div[i] + phis[i] * double_well_prime(v[i]) / eps) / C0
                    + 2.0 / (C0 * eps) * (-eps * lf[i] + double_well_second(v[i]) * f[i] / eps)
            })
            .collect()
    }
}

/// Semi-implicit L² gradient flow of the set functional.
pub fn flow_f_eps(v0: &ScalarField, phi: &Anisotropy, params: &SetParams, opts: &DescentOptions) -> Result<FlowResult> {
    opts.validate()?;
    let flow = SetFlow {
        ops: Ops::new(v0)?,
        eval: Evaluator::new(
            &v0.grid,
            Quadrature {
                subcells: 1,
                derivatives: Derivatives::Spectral,
            },
        )?,
        phi,
        params,
    };
    let eps = params.eps;
    let cell = v0.grid.cell_volume();
    let mut v = v0.clone();
    let mut e = flow.energy(&v)?;
    let mut trace = Trace::default();
    trace.push(0, "flow", 0.0, e, 0.0);
    let mut g = flow.gradient(&v.values);
    let mut steps = 0;
    let mut failures = 0;
    for step in 1..=opts.n_steps {
        if let Some(tol) = opts.stop_gradient {
            if l2_norm(&g, cell) < tol {
                break;
            }
        }
        let st = Stiffness::willmore(1.0 / C0, &v.values, eps).plus(Stiffness::modica_mortola(
            phi.max_value() / C0,
            &v.values,
            eps,
        ));
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let dv = flow.ops.solve(&rhs, opts.dt, st);
        let outcome = line_search(e.total, opts.tolerance, |theta| {
            let cand = ScalarField {
                grid: v.grid.clone(),
                values: v.values.iter().zip(&dv).map(|(a, b)| a + theta * b).collect(),
            };
            let ec = flow.energy(&cand)?;
            let t = ec.total;
            Ok(((cand, ec), t))
        })?;
        let dt = match outcome {
            LineSearch::Accepted { cand, theta } => {
                count_failure(&mut failures, None, opts, step)?;
                (v, e) = cand;
                g = flow.gradient(&v.values);
                theta * opts.dt
            }
            LineSearch::Rejected { increase } => {
                count_failure(&mut failures, Some(increase), opts, step)?;
                0.0
            }
        };
        steps = step;
        if step % opts.record_every == 0 || step == opts.n_steps {
            trace.push(step, "flow", dt, e, 0.0);
        }
    }
    Ok(FlowResult {
        gradient_norm: l2_norm(&g, cell),
        field: v,
        trace,
        steps,
    })
}

/// Settings of the alternating Mumford-Shah descent.
#[derive(Debug, Clone, Copy)]
pub struct MsSchedule {
    pub cycles: usize,
    /// `(v, w)` steps per `u` solve
    pub vw_steps_per_u: usize,
    pub descent: DescentOptions,
    pub kappa_reg: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for MsSchedule {
    fn default() -> Self {
        Self {
            cycles: 10,
            vw_steps_per_u: 10,
            descent: DescentOptions::default(),
            kappa_reg: 1e-6,
            cg_tolerance: 1e-8,
            cg_max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MsResult {
    pub u: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
    pub trace: Trace,
    pub cg_iterations: Vec<usize>,
}

struct MsDescent<'a> {
    ops: Ops,
    eval: Evaluator,
    phi: &'a Anisotropy,
    params: &'a MsParams,
    ext: ExtensionParams,
    g: &'a ScalarField,
    mu_f: f64,
}

impl MsDescent<'_> {
    fn energy(&self, u: &ScalarField, v: &ScalarField, w: &ScalarField) -> Result<(EnergyBreakdown, f64)> {
        let e = self
            .eval
            .ms_energy(u.into(), v.into(), w.into(), self.phi, self.params, &self.ext)?;
        let fid = u
            .values
            .iter()
            .zip(&self.g.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * u.grid.cell_volume()
            * self.mu_f;
        Ok((e, fid))
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let eps = self.params.eps;
        let lap = self.ops.lap(x);
        (0..x.len())
            .map(|i| -eps * lap[i] + double_well_prime(x[i]) / eps)
            .collect()
    }

    fn grad_v(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let eps = self.params.eps;
        let eta = self.params.eta;
        let du = self.ops.grad(u);
        let dv = self.ops.grad(v);
        let (flux, phis) = anisotropic_flux(&dv, v, eps, self.phi, &self.ext);
        let div = self.ops.div(&flux);
        let f = self.residual(v);
        let bf: Vec<f64> = (0..v.len()).map(|i| (1.0 + w[i]).powi(2) * f[i]).collect();
        let lbf = self.ops.lap(&bf);
        (0..v.len())
            .map(|i| {
                let gu2: f64 = du.iter().map(|c| c[i] * c[i]).sum();
                0.5 * (1.0 + v[i]) * gu2
                    + (-div[i] + phis[i] * double_well_prime(v[i]) / eps) / (2.0 * C0)
                    + (-eps * lbf[i] + double_well_second(v[i]) * bf[i] / eps) / (4.0 * C0 * eps)
                    - 2.0 / eta * (1.0 - v[i])
            })
            .collect()
    }

    fn grad_w(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let p = self.params;
        let (eps, beta) = (p.eps, p.beta);
        let point = p.gamma / (4.0 * std::f64::consts::PI);
        let fv = self.residual(v);
        let fw = self.residual(w);
        let dw = self.ops.grad(w);
        let ddw = self.ops.div(&dw);
        let lfw = self.ops.lap(&fw);
        (0..w.len())
            .map(|i| {
                fv[i] * fv[i] * (1.0 + w[i]) / (4.0 * C0 * eps)
                    + point
                        * ((-eps * ddw[i] + double_well_prime(w[i]) / eps) / (C0 * beta)
                            + 2.0 * beta / (C0 * eps) * (-eps * lfw[i] + double_well_second(w[i]) * fw[i] / eps))
                    - 2.0 / p.eta * (1.0 - w[i])
            })
            .collect()
    }

    /// `−div((c/4 + κ)∇u) + μ u` with `c = (1 + v)²`.
    fn apply_u(&self, coef: &[f64], x: &[f64]) -> Vec<f64> {
        let mut d = self.ops.grad(x);
        for comp in d.iter_mut() {
            for (c, k) in comp.iter_mut().zip(coef) {
                *c *= k;
            }
        }
        let div = self.ops.div(&d);
        (0..x.len()).map(|i| -div[i] + self.mu_f * x[i]).collect()
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive definite operator.
fn cg<F: Fn(&[f64]) -> Vec<f64>>(apply: F, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let bnorm = dotv(b, b).sqrt();
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
    let mut p = r.clone();
    let mut rr = dotv(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * scale {
            return Ok((x, it));
        }
        let ap = apply(&p);
        let pap = dotv(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgStalled {
                iterations: it,
                residual: rr.sqrt() / scale,
            });
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dotv(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * scale {
        return Ok((x, max_iter));
    }
    Err(Error::CgStalled {
        iterations: max_iter,
        residual: rr.sqrt() / scale,
    })
}

/// Solves `−div(((1+v)²/4 + κ)∇u) + μ(u − g) = 0` on a periodic grid by conjugate gradients.
pub fn solve_u(
    v: &ScalarField,
    g: &ScalarField,
    mu_f: f64,
    kappa_reg: f64,
    tolerance: f64,
    max_iterations: usize,
    u0: Option<&ScalarField>,
) -> Result<(ScalarField, usize)> {
    if !(mu_f > 0.0) {
        return invalid("fidelity weight must be positive");
    }
    if !v.grid.same_shape(&g.grid) {
        return Err(Error::GridMismatch("v and g must share a grid".into()));
    }
    let ops = Ops::new(v)?;
    let coef: Vec<f64> = v.values.iter().map(|x| 0.25 * (1.0 + x) * (1.0 + x) + kappa_reg).collect();
    let apply = |x: &[f64]| {
        let mut d = ops.grad(x);
        for comp in d.iter_mut() {
            for (c, k) in comp.iter_mut().zip(&coef) {
                *c *= k;
            }
        }
        let div = ops.div(&d);
        (0..x.len()).map(|i| -div[i] + mu_f * x[i]).collect::<Vec<_>>()
    };
    let b: Vec<f64> = g.values.iter().map(|x| mu_f * x).collect();
    let start = u0.map(|u| u.values.clone()).unwrap_or_else(|| g.values.clone());
    let (x, it) = cg(apply, &b, &start, tolerance, max_iterations)?;
    Ok((
        ScalarField {
            grid: v.grid.clone(),
            values: x,
        },
        it,
    ))
}

/// Alternating descent on the diffuse Mumford-Shah functional plus `μ ∫ (u − g)²`.
#[allow(clippy::too_many_arguments)]
pub fn alternate_ms(
    u0: &ScalarField,
    v0: &ScalarField,
    w0: &ScalarField,
    g: &ScalarField,
    mu_f: f64,
    phi: &Anisotropy,
    params: &MsParams,
    schedule: &MsSchedule,
) -> Result<MsResult> {
    schedule.descent.validate()?;
    params.validate()?;
    if !(mu_f > 0.0) {
        return invalid("fidelity weight must be positive");
    }
    for f in [v0, w0, g] {
        if !u0.grid.same_shape(&f.grid) {
            return Err(Error::GridMismatch("u, v, w and g must share a grid".into()));
        }
    }
    let ms = MsDescent {
        ops: Ops::new(u0)?,
        eval: Evaluator::new(
            &u0.grid,
            Quadrature {
                subcells: 1,
                derivatives: Derivatives::Spectral,
            },
        )?,
        phi,
        params,
        ext: ExtensionParams::new(params.r_eps, phi)?,
        g,
        mu_f,
    };
    let opts = &schedule.descent;
    let eps = params.eps;
    let (mut u, mut v, mut w) = (u0.clone(), v0.clone(), w0.clone());
    let (mut e, mut fid) = ms.energy(&u, &v, &w)?;
    let mut trace = Trace::default();
    trace.push(0, "start", 0.0, e, fid);
    let mut cg_iterations = Vec::new();
    let (mut fails_v, mut fails_w) = (0, 0);
    let mut step = 0;
    let point = params.gamma / (4.0 * std::f64::consts::PI);
    for _cycle in 0..schedule.cycles {
        // u: linear solve, then exact line search on the unregularised energy
        let coef: Vec<f64> = v
            .values
            .iter()
            .map(|x| 0.25 * (1.0 + x) * (1.0 + x) + schedule.kappa_reg)
            .collect();
        let b: Vec<f64> = g.values.iter().map(|x| mu_f * x).collect();
        let (us, it) = cg(
            |x| ms.apply_u(&coef, x),
            &b,
            &u.values,
            schedule.cg_tolerance,
            schedule.cg_max_iterations,
        )?;
        cg_iterations.push(it);
        let at = |t: f64| ScalarField {
            grid: u.grid.clone(),
            values: u.values.iter().zip(&us).map(|(a, b)| a + t * (b - a)).collect(),
        };
        let total = |ef: (EnergyBreakdown, f64)| ef.0.total + ef.1;
        let e0 = e.total + fid;
        let e1 = total(ms.energy(&at(1.0), &v, &w)?);
        let eh = total(ms.energy(&at(0.5), &v, &w)?);
        let c2 = 2.0 * (e1 - 2.0 * eh + e0);
        let c1 = e1 - e0 - c2;
        let t = if c2 > 0.0 {
            (-c1 / (2.0 * c2)).clamp(0.0, 1.0)
        } else if e1 < e0 {
            1.0
        } else {
            0.0
        };
        let cand = at(t);
        let (ec, fc) = ms.energy(&cand, &v, &w)?;
        if ec.total + fc <= e0 {
            u = cand;
            e = ec;
            fid = fc;
        }
        step += 1;
        trace.push(step, "u", t, e, fid);

        for _ in 0..schedule.vw_steps_per_u {
            // v
            let gv = ms.grad_v(&u.values, &v.values, &w.values);
            let bmax = w.values.iter().map(|x| (1.0 + x) * (1.0 + x)).fold(0.0, f64::max);
            let du2 = ms
                .ops
                .grad(&u.values)
                .iter()
                .map(|c| c.iter().map(|x| x * x).collect::<Vec<_>>())
                .fold(vec![0.0; u.values.len()], |acc, c| acc.iter().zip(&c).map(|(a, b)| a + b).collect())
                .into_iter()
                .fold(0.0, f64::max);
            let st = Stiffness::willmore(bmax / (8.0 * C0), &v.values, eps)
                .plus(Stiffness::modica_mortola(phi.max_value() / (2.0 * C0), &v.values, eps))
                .zeroth(0.5 * du2 + 2.0 / params.eta);
            let rhs: Vec<f64> = gv.iter().map(|x| -x).collect();
            let dv = ms.ops.solve(&rhs, opts.dt, st);
            let outcome = line_search(e.total + fid, opts.tolerance, |theta| {
                let cand = ScalarField {
                    grid: v.grid.clone(),
                    values: v.values.iter().zip(&dv).map(|(a, b)| a + theta * b).collect(),
                };
                let (ec, fc) = ms.energy(&u, &cand, &w)?;
                Ok(((cand, ec, fc), ec.total + fc))
            })?;
            step += 1;
            let dt_v = match outcome {
                LineSearch::Accepted { cand, theta } => {
                    count_failure(&mut fails_v, None, opts, step)?;
                    (v, e, fid) = cand;
                    theta * opts.dt
                }
                LineSearch::Rejected { increase } => {
                    count_failure(&mut fails_v, Some(increase), opts, step)?;
                    0.0
                }
            };
            trace.push(step, "v", dt_v, e, fid);

            // w
            let gw = ms.grad_w(&v.values, &w.values);
            let fv2 = ms.residual(&v.values).iter().map(|x| x * x).fold(0.0, f64::max);
            let st = Stiffness::willmore(point * params.beta / C0, &w.values, eps)
                .plus(Stiffness::modica_mortola(point / (C0 * params.beta), &w.values, eps))
                .zeroth(fv2 / (4.0 * C0 * eps) + 2.0 / params.eta);
            let rhs: Vec<f64> = gw.iter().map(|x| -x).collect();
            let dw = ms.ops.solve(&rhs, opts.dt, st);
            let outcome = line_search(e.total + fid, opts.tolerance, |theta| {
                let cand = ScalarField {
                    grid: w.grid.clone(),
                    values: w.values.iter().zip(&dw).map(|(a, b)| a + theta * b).collect(),
                };
                let (ec, fc) = ms.energy(&u, &v, &cand)?;
                Ok(((cand, ec, fc), ec.total + fc))
            })?;
            step += 1;
            let dt_w = match outcome {
                LineSearch::Accepted { cand, theta } => {
                    count_failure(&mut fails_w, None, opts, step)?;
                    (w, e, fid) = cand;
                    theta * opts.dt
                }
                LineSearch::Rejected { increase } => {
                    count_failure(&mut fails_w, Some(increase), opts, step)?;
                    0.0
                }
            };
            trace.push(step, "w", dt_w, e, fid);
        }
    }
    Ok(MsResult {
        u,
        v,
        w,
        trace,
        cg_iterations,
    })
}
