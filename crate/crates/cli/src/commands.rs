//! Subcommand pipelines.

use crate::catalog;
use crate::config::{at_least, nonempty, positive, Config, ConfigError};
use crate::run::{write_table, Run};
use anyhow::Result;
use phasefield_core::anisotropy::{convex_envelope, Anisotropy, ExtensionParams};
use phasefield_core::field::{write_binary, Boundary, Grid, ScalarField};
use phasefield_core::lp::minimise_equality;
use phasefield_core::minimize::{alternate_ms, equivalent_radius, flow_f_eps, perturb, DescentOptions, MsSchedule};
use phasefield_core::phase_energy::{Evaluator, Input, MsParams, Quadrature, SetParams};
use phasefield_core::profiles::{profile_mass, profile_residual, ProfileParams, C0};
use phasefield_core::recovery::{radial_point_energy, Component, MsRecovery, RecoveredSet};
use phasefield_core::sharp_geometry::{rho_bar, sharp_ms_energy, sharp_set_energy, CrackOpening, CurveNetwork, SharpMsState};
use phasefield_core::varifold::{density_and_blowup, discretize, gauss_bonnet_deficit, monotonicity_gap, BlowUp};
use phasefield_core::Error;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Sweep values sorted from coarse to fine.
fn descending(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

/// True if `errs` strictly decreases.
fn strictly_decreasing(errs: &[f64]) -> bool {
    errs.windows(2).all(|w| w[1] < w[0])
}

fn write_summary(run: &mut Run, rows: &[(&str, f64)]) -> Result<()> {
    let path = run.output("summary.csv");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "value"])?;
    for (k, v) in rows {
        w.write_record([k.to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn profile_check(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.profile;
    nonempty("profile.eps", &c.eps)?;
    positive("profile.lambda", c.lambda)?;
    let eps = descending(&c.eps);
    let rows = run.timed("profiles", || {
        eps.par_iter()
            .map(|&e| -> Result<Vec<f64>> {
                let p = ProfileParams::new(e, c.lambda)?;
                let m = profile_mass(&p)?;
                let r = profile_residual(&p)?;
                Ok(vec![
                    e,
                    p.delta,
                    m.kinetic,
                    m.potential,
                    m.tail,
                    m.kinetic_error,
                    0.5 * C0,
                    r,
                    e * e,
                ])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_table(
        &run.output("profile.csv"),
        &[
            "eps",
            "delta",
            "kinetic",
            "potential",
            "tail",
            "kinetic_error",
            "kinetic_target",
            "residual",
            "eps_squared",
        ],
        &rows,
    )?;
    let errs: Vec<f64> = rows.iter().map(|r| r[5].abs()).collect();
    run.check("kinetic_error_decreasing", errs[errs.len() - 1], errs[0], strictly_decreasing(&errs));
    let last = &rows[rows.len() - 1];
    run.check_below("kinetic_error_finest", errs[errs.len() - 1], 1e-3);
    run.check_below("potential_error_finest", (last[3] - 0.5 * C0).abs(), 1e-3);
    for r in rows.iter().filter(|r| r[0] <= 1e-3) {
        run.check_below(&format!("residual_over_eps_squared@{:e}", r[0]), r[7] / r[8], 1.0);
    }
    for r in rows.iter().filter(|r| r[0] <= 1e-4) {
        run.check_below(&format!("tail@{:e}", r[0]), r[4], 1e-6);
    }
    Ok(())
}

/// `min Σ λ_i φ(u_i)` over `Σ λ_i u_i = ν`, `λ ≥ 0`.
fn lp_envelope(phi: &Anisotropy, dirs: &[[f64; 2]], nu: [f64; 2]) -> Result<f64> {
    let cost: Vec<f64> = dirs.iter().map(|u| phi.eval_unit(u)).collect();
    let cols: Vec<Vec<f64>> = dirs.iter().map(|u| u.to_vec()).collect();
    Ok(minimise_equality(&cost, &cols, &nu)?)
}

pub fn convexify(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.convexify;
    at_least("convexify.samples", c.samples, 4)?;
    let phi = catalog::anisotropy(&cfg.anisotropy)?;
    let env = run.timed("envelope", || Ok(convex_envelope(&phi, c.directions)?))?;
    let rows: Vec<Vec<f64>> = (0..c.samples)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / c.samples as f64;
            let (p, e) = (phi.eval_angle(t), env.eval_angle(t));
            vec![t, p, e, p - e]
        })
        .collect();
    write_table(&run.output("envelope.csv"), &["theta", "phi", "envelope", "gap"], &rows)?;
    // the hull of finitely many samples overshoots a convex φ by O(h²) between them
    let excess = rows.iter().map(|r| -r[3]).fold(0.0, f64::max);
    let gap = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    run.check_below("envelope_excess_over_phi", excess, 1e-6);
    let mut summary = vec![("max_gap", gap), ("directions", c.directions as f64)];
    if c.lp_checks > 0 {
        at_least("convexify.lp_directions", c.lp_directions, 8)?;
        let dirs: Vec<[f64; 2]> = (0..c.lp_directions)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / c.lp_directions as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let stride = (c.samples / c.lp_checks).max(1);
        let picks: Vec<usize> = (0..c.samples).step_by(stride).take(c.lp_checks).collect();
        let lp_rows = run.timed("lp_oracle", || {
            picks
                .par_iter()
                .map(|&k| -> Result<Vec<f64>> {
                    let t = rows[k][0];
                    let lp = lp_envelope(&phi, &dirs, [t.cos(), t.sin()])?;
                    Ok(vec![t, rows[k][2], lp, rows[k][2] - lp])
                })
                .collect::<Result<Vec<_>>>()
        })?;
        write_table(&run.output("lp_oracle.csv"), &["theta", "envelope", "lp", "difference"], &lp_rows)?;
        let worst = lp_rows.iter().map(|r| r[3].abs()).fold(0.0, f64::max);
        summary.push(("lp_max_difference", worst));
        run.check_below("envelope_matches_lp", worst, 1e-4);
    }
    write_summary(run, &summary)
}

fn closed_shape(cfg: &Config) -> Result<CurveNetwork> {
    let net = catalog::shape(&cfg.shape)?;
    if !net.is_closed_boundary() {
        return Err(ConfigError(format!("shape `{}` does not bound a set", cfg.shape.name)).into());
    }
    Ok(net)
}

pub fn recovery_energy(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.recovery;
    nonempty("recovery.eps", &c.eps)?;
    positive("recovery.half_width", c.half_width)?;
    at_least("recovery.n", c.n, 8)?;
    at_least("recovery.subcells", c.subcells, 1)?;
    let phi = catalog::anisotropy(&cfg.anisotropy)?;
    let net = closed_shape(cfg)?;
    let sharp = sharp_set_energy(&net, &phi)?;
    let grid = Grid::square(-c.half_width, c.half_width, c.n, Boundary::Neumann)?;
    let eps = descending(&c.eps);
    let rows = run.timed("recovery", || {
        eps.par_iter()
            .map(|&e| -> Result<Vec<f64>> {
                let rec = RecoveredSet::new(&net, ProfileParams::new(e, c.lambda)?)?;
                let ev = Evaluator::new(&grid, Quadrature::subcells(c.subcells))?;
                let b = ev.f_eps(Input::Analytic(&rec), &phi, &SetParams::new(e, &phi)?)?;
                let err = (b.total - sharp.total).abs() / sharp.total;
                Ok(vec![
                    e,
                    rec.profile().delta,
                    b.anisotropic_mm,
                    b.curvature,
                    b.total,
                    sharp.anisotropic_mm,
                    sharp.curvature,
                    sharp.total,
                    err,
                ])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_table(
        &run.output("convergence.csv"),
        &[
            "eps",
            "delta",
            "anisotropic_mm",
            "curvature",
            "total",
            "sharp_anisotropic_mm",
            "sharp_curvature",
            "sharp_total",
            "relative_error",
        ],
        &rows,
    )?;
    let errs: Vec<f64> = rows.iter().map(|r| r[8]).collect();
    if errs.len() > 1 {
        run.check("error_decreasing", errs[errs.len() - 1], errs[0], strictly_decreasing(&errs));
    }
    run.check_below("relative_error_finest", errs[errs.len() - 1], c.tolerance);
    Ok(())
}

pub fn point_energy(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.point;
    nonempty("point.eps", &c.eps)?;
    if let Some(b) = c.beta {
        positive("point.beta", b)?;
    }
    let eps = descending(&c.eps);
    let rows = run.timed("radial", || {
        eps.par_iter()
            .map(|&e| -> Result<Vec<f64>> {
                let beta = c.beta.unwrap_or(e.sqrt());
                let pe = radial_point_energy(e, beta, c.lambda)?;
                Ok(vec![e, beta, pe.first, pe.second, pe.total, 4.0 * PI, pe.total / (4.0 * PI) - 1.0])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_table(
        &run.output("point_energy.csv"),
        &["eps", "beta", "first", "second", "total", "target", "relative_error"],
        &rows,
    )?;
    let last = &rows[rows.len() - 1];
    run.check_below("first_half_finest", (last[2] / (2.0 * PI) - 1.0).abs(), c.tolerance);
    run.check_below("second_half_finest", (last[3] / (2.0 * PI) - 1.0).abs(), c.tolerance);
    run.check_below("total_finest", last[6].abs(), c.tolerance);
    Ok(())
}

pub fn ms_recovery(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.ms;
    positive("ms.eps", c.eps)?;
    positive("ms.length", c.length)?;
    positive("ms.half_width", c.half_width)?;
    at_least("ms.n", c.n, 8)?;
    at_least("ms.subcells", c.subcells, 1)?;
    let phi = catalog::anisotropy(&cfg.anisotropy)?;
    let (a, b) = ([-0.5 * c.length, 0.0], [0.5 * c.length, 0.0]);
    let state = SharpMsState {
        network: CurveNetwork::segment(a, b)?,
        displacement: Arc::new(CrackOpening {
            a,
            b,
            amplitude: c.amplitude,
        }),
        gamma: c.gamma,
        domain: ([-c.half_width, -c.half_width], [c.half_width, c.half_width]),
    };
    let mut params = MsParams::new(c.eps, c.gamma)?;
    params.lambda = c.lambda;
    params.validate()?;
    let sharp = run.timed("sharp", || Ok(sharp_ms_energy(&state, &phi)?))?;
    let rec = MsRecovery::new(&state, &params)?;
    let grid = Grid::square(-c.half_width, c.half_width, c.n, Boundary::Neumann)?;
    let ext = ExtensionParams::new(params.r_eps, &phi)?;
    let (e, w_sup) = run.timed("phase", || {
        let ev = Evaluator::new(&grid, Quadrature::subcells(c.subcells))?;
        let (u, v, w) = rec.fields(&grid)?;
        let w_sup = w.values.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        let e = if c.subcells == 1 {
            ev.ms_energy((&u).into(), (&v).into(), (&w).into(), &phi, &params, &ext)?
        } else {
            let (su, sv, sw) = (rec.source(Component::U), rec.source(Component::V), rec.source(Component::W));
            ev.ms_energy(Input::Analytic(&su), Input::Analytic(&sv), Input::Analytic(&sw), &phi, &params, &ext)?
        };
        Ok((e, w_sup))
    })?;
    let s = sharp.breakdown;
    let terms = [
        ("bulk", e.bulk, s.bulk),
        ("interface", e.anisotropic_mm + e.curvature, s.anisotropic_mm + s.curvature),
        ("point", e.point, s.point),
        ("penalty", e.penalty_v + e.penalty_w, 0.0),
        ("total", e.total, s.total),
    ];
    let path = run.output("terms.csv");
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["term", "phase_field", "sharp", "relative_error"])?;
    for (name, p, q) in terms {
        let rel = if q != 0.0 { (p - q).abs() / q.abs() } else { f64::NAN };
        wtr.write_record([name.to_string(), format!("{p:.17e}"), format!("{q:.17e}"), format!("{rel:.17e}")])?;
        if q != 0.0 {
            run.check_below(&format!("{name}_relative_error"), rel, c.tolerance);
        }
    }
    wtr.flush()?;
    let sc = params.scaling();
    let (rm, rp) = rec.radii();
    write_summary(
        run,
        &[
            ("eps", params.eps),
            ("beta", params.beta),
            ("eta", params.eta),
            ("delta", rec.delta()),
            ("inner_radius", rm),
            ("outer_radius", rp),
            ("eps_log_over_beta", sc.eps_log_over_beta),
            ("beta_over_eta", sc.beta_over_eta),
            ("rho_bar", rho_bar(c.gamma, &phi)),
            ("point_count_all", sharp.points_all as f64),
            ("point_count_nonzero", sharp.points_nonzero as f64),
            ("g_eps_beta_term", e.point),
            ("sup_abs_w_minus_one", w_sup),
        ],
    )
}

pub fn varifold_check(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.varifold;
    positive("varifold.spacing", c.spacing)?;
    at_least("varifold.sweep", c.sweep, 1)?;
    let net = catalog::shape(&cfg.shape)?;
    let v = run.timed("discretize", || Ok(discretize(&net, c.spacing)?))?;
    let mut summary = vec![
        ("mass", v.mass()),
        ("total_curvature", v.total_curvature()),
        ("atoms", if v.has_atoms() { 1.0 } else { 0.0 }),
    ];
    match gauss_bonnet_deficit(&v) {
        Ok(d) => {
            summary.push(("gauss_bonnet_deficit", d));
            if net.is_closed_boundary() {
                run.check_above("gauss_bonnet_deficit", d, -c.deficit_tolerance);
            }
        }
        Err(Error::Refused(msg)) => {
            log::info!("total-curvature bound refused: {msg}");
            summary.push(("gauss_bonnet_refused", 1.0));
        }
        Err(e) => return Err(e.into()),
    }
    // monotonicity sweep: centres on and around the curve, radii log-spaced up to the diameter
    if !v.has_atoms() {
        let pl = net.polylines(c.spacing);
        let pts: Vec<[f64; 2]> = pl.lines.iter().flatten().copied().collect();
        let (lo, hi) = pts.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        });
        let diam = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        let n = c.sweep;
        let centres: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                if k % 2 == 0 {
                    pts[(k * pts.len()) / n]
                } else {
                    let s = k as f64 / n as f64;
                    [lo[0] + s * (hi[0] - lo[0]), lo[1] + (1.0 - s) * (hi[1] - lo[1])]
                }
            })
            .collect();
        let radii: Vec<f64> = (0..n)
            .map(|k| 10.0 * c.spacing * (diam / (10.0 * c.spacing)).powf(k as f64 / (n.max(2) - 1) as f64))
            .collect();
        let rows = run.timed("monotonicity", || {
            centres
                .iter()
                .flat_map(|x0| radii.iter().map(move |&r| (*x0, r)))
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&(x0, r)| -> Result<Vec<f64>> { Ok(vec![x0[0], x0[1], r, monotonicity_gap(&v, x0, r)?]) })
                .collect::<Result<Vec<_>>>()
        })?;
        write_table(&run.output("monotonicity.csv"), &["x", "y", "r", "gap"], &rows)?;
        let min_gap = rows.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min);
        summary.push(("min_monotonicity_gap", min_gap));
        run.check_above("min_monotonicity_gap", min_gap, -c.gap_tolerance);
    }
    // densities at network points
    let rhos: Vec<f64> = (0..6).map(|k| 0.05 * 0.5f64.powi(k)).collect();
    let mut rows = Vec::new();
    for j in net.junctions() {
        let d = density_and_blowup(&v, j.point, &rhos)?;
        let k = j.arms.len() as f64;
        let class = match d.class {
            BlowUp::OffCurve => 0.0,
            BlowUp::Interior => 2.0,
            BlowUp::Junction(m) => m as f64,
            BlowUp::Ambiguous => f64::NAN,
        };
        rows.push(vec![j.point[0], j.point[1], k, d.theta, class]);
        run.check_below(&format!("density@({:.3},{:.3})", j.point[0], j.point[1]), (d.theta - 0.5 * k).abs(), 0.05);
    }
    write_table(&run.output("densities.csv"), &["x", "y", "arms", "theta", "blowup_arms"], &rows)?;
    write_summary(run, &summary)
}

fn descent(dt: f64, steps: usize, record_every: usize) -> DescentOptions {
    DescentOptions {
        dt,
        n_steps: steps,
        record_every,
        ..Default::default()
    }
}

pub fn minimize(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.minimize;
    positive("minimize.eps", c.eps)?;
    positive("minimize.half_width", c.half_width)?;
    at_least("minimize.n", c.n, 8)?;
    at_least("minimize.record_every", c.record_every, 1)?;
    let phi = catalog::anisotropy(&cfg.anisotropy)?;
    let net = closed_shape(cfg)?;
    let grid = Grid::square(-c.half_width, c.half_width, c.n, Boundary::Periodic)?;
    let rec = RecoveredSet::new(&net, ProfileParams::new(c.eps, c.lambda)?)?;
    let mut v0 = rec.field(&grid)?;
    if c.perturbation > 0.0 {
        v0 = perturb(&v0, c.perturbation, cfg.run.seed);
    }
    write_binary(&v0, &run.output("v0.bin"))?;
    let params = SetParams::new(c.eps, &phi)?;
    let res = run.timed("flow", || Ok(flow_f_eps(&v0, &phi, &params, &descent(c.dt, c.steps, c.record_every))?))?;
    res.trace.save_csv(&run.output("trace.csv"))?;
    write_binary(&res.field, &run.output("v.bin"))?;
    let inc = res.trace.max_increase();
    run.check_below("max_energy_increase", inc, c.slack);
    write_summary(
        run,
        &[
            ("steps", res.steps as f64),
            ("initial_energy", res.trace.rows[0].total),
            ("final_energy", res.trace.rows[res.trace.rows.len() - 1].total),
            ("gradient_norm", res.gradient_norm),
            ("initial_equivalent_radius", equivalent_radius(&v0)),
            ("final_equivalent_radius", equivalent_radius(&res.field)),
        ],
    )
}

fn image(name: &str, grid: &Grid, half_width: f64) -> Result<ScalarField> {
    let a = 0.5 * half_width;
    Ok(match name {
        "step" => ScalarField::from_fn(grid, |x| if x[1].abs() < a { 1.0 } else { 0.0 }),
        "disk" => ScalarField::from_fn(grid, |x| if x[0].hypot(x[1]) < a { 1.0 } else { 0.0 }),
        "constant" => ScalarField::constant(grid, 0.5),
        other => return Err(ConfigError(format!("ms_minimize.image: unknown image `{other}`")).into()),
    })
}

pub fn ms_minimize(cfg: &Config, run: &mut Run) -> Result<()> {
    let c = &cfg.ms_minimize;
    positive("ms_minimize.eps", c.eps)?;
    positive("ms_minimize.mu", c.mu)?;
    positive("ms_minimize.half_width", c.half_width)?;
    at_least("ms_minimize.n", c.n, 8)?;
    let phi = catalog::anisotropy(&cfg.anisotropy)?;
    let grid = Grid::square(-c.half_width, c.half_width, c.n, Boundary::Periodic)?;
    let g = image(&c.image, &grid, c.half_width)?;
    let mut v0 = ScalarField::constant(&grid, c.v0);
    let mut w0 = ScalarField::constant(&grid, c.w0);
    if c.perturbation > 0.0 {
        v0 = perturb(&v0, c.perturbation, cfg.run.seed);
        w0 = perturb(&w0, c.perturbation, cfg.run.seed.wrapping_add(1));
    }
    let params = MsParams::new(c.eps, c.gamma)?;
    let sched = MsSchedule {
        cycles: c.cycles,
        vw_steps_per_u: c.vw_steps_per_u,
        descent: descent(c.dt, 0, 1),
        ..Default::default()
    };
    let res = run.timed("alternate", || Ok(alternate_ms(&g, &v0, &w0, &g, c.mu, &phi, &params, &sched)?))?;
    res.trace.save_csv(&run.output("trace.csv"))?;
    write_binary(&g, &run.output("g.bin"))?;
    write_binary(&res.u, &run.output("u.bin"))?;
    write_binary(&res.v, &run.output("v.bin"))?;
    write_binary(&res.w, &run.output("w.bin"))?;
    let inc = res.trace.max_increase();
    run.check_below("max_energy_increase", inc, c.slack);
    let rows = &res.trace.rows;
    write_summary(
        run,
        &[
            ("initial_energy", rows[0].total),
            ("final_energy", rows[rows.len() - 1].total),
            ("cg_iterations_max", res.cg_iterations.iter().copied().max().unwrap_or(0) as f64),
            ("min_v", res.v.min()),
            ("min_w", res.w.min()),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_order() {
        assert_eq!(descending(&[1e-3, 1e-2, 1e-3]), vec![1e-2, 1e-3]);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
    }

    #[test]
    fn lp_matches_closed_form_for_isotropic() {
        let phi = Anisotropy::isotropic(2).unwrap();
        let dirs: Vec<[f64; 2]> = (0..256)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 256.0;
                [t.cos(), t.sin()]
            })
            .collect();
        // on a sampled direction the LP is exact; between samples it is the chord bound
        assert!((lp_envelope(&phi, &dirs, dirs[3]).unwrap() - 1.0).abs() < 1e-12);
        let mid = PI / 256.0;
        let v = lp_envelope(&phi, &dirs, [mid.cos(), mid.sin()]).unwrap();
        assert!((v - 1.0 / mid.cos()).abs() < 1e-12);
    }
}
