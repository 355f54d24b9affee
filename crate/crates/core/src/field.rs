//! Uniform cell-centred grids, scalar fields, differential operators and I/O.

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::spatial::PolylineIndex;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

/// Boundary treatment of the differential operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// zero normal derivative (mirror ghost cells)
    Neumann,
}

impl Boundary {
    pub fn tag(self) -> char {
        match self {
            Boundary::Periodic => 'P',
            Boundary::Neumann => 'N',
        }
    }
}

/// Box grid with `n[k]` cells per axis; values live at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub origin: [f64; 3],
    pub extent: [f64; 3],
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub boundary: Boundary,
}

impl Grid {
    pub fn new(origin: &[f64], extent: &[f64], n: &[usize], boundary: Boundary) -> Result<Self> {
        let dim = n.len();
        if !(dim == 2 || dim == 3) || origin.len() != dim || extent.len() != dim {
            return invalid("grid needs matching origin/extent/n of dimension 2 or 3");
        }
        let mut g = Grid {
            dim,
            origin: [0.0; 3],
            extent: [1.0; 3],
            n: [1; 3],
            h: [1.0; 3],
            boundary,
        };
        for k in 0..dim {
            if n[k] < 8 {
                return invalid(format!("need at least 8 cells per axis, got {}", n[k]));
            }
            if !(extent[k] > 0.0) || !origin[k].is_finite() {
                return invalid("grid extent must be positive and origin finite");
            }
            g.origin[k] = origin[k];
            g.extent[k] = extent[k];
            g.n[k] = n[k];
            g.h[k] = extent[k] / n[k] as f64;
        }
        Ok(g)
    }

    /// Square planar grid on `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64, n: usize, boundary: Boundary) -> Result<Self> {
        Self::new(&[lo, lo], &[hi - lo, hi - lo], &[n, n], boundary)
    }

    /// Planar grid on `[lo_x, hi_x] x [lo_y, hi_y]`.
    pub fn rect(lo: [f64; 2], hi: [f64; 2], n: [usize; 2], boundary: Boundary) -> Result<Self> {
        Self::new(&lo, &[hi[0] - lo[0], hi[1] - lo[1]], &n, boundary)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of a contiguous row (the last axis).
    pub fn row_len(&self) -> usize {
        self.n[self.dim - 1]
    }

    pub fn n_rows(&self) -> usize {
        self.len() / self.row_len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Smallest spacing.
    pub fn h_min(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(0.0, f64::max)
    }

    /// Row-major index; the last axis is contiguous.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let r = idx / self.n[2];
        [r / self.n[1], r % self.n[1], k]
    }

    /// Cell centre of the multi-index.
    #[inline]
    pub fn point(&self, ijk: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.origin[a] + (ijk[a] as f64 + 0.5) * self.h[a];
        }
        p
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> [f64; 3] {
        self.point(self.unravel(idx))
    }

    fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    /// Neighbour index along `axis` at offset `+1` or `-1` honouring the boundary mode.
    #[inline]
    fn neighbour(&self, idx: usize, ijk: [usize; 3], axis: usize, forward: bool) -> usize {
        let s = self.stride(axis);
        let n = self.n[axis];
        let i = ijk[axis];
        if forward {
            if i + 1 < n {
                idx + s
            } else {
                match self.boundary {
                    Boundary::Periodic => idx + s - n * s,
                    Boundary::Neumann => idx,
                }
            }
        } else if i > 0 {
            idx - s
        } else {
            match self.boundary {
                Boundary::Periodic => idx + (n - 1) * s,
                Boundary::Neumann => idx,
            }
        }
    }

    /// Equal layout; spacings and origins agree to the precision of the binary header.
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n && self.boundary == other.boundary && {
            (0..self.dim).all(|k| {
                (self.h[k] - other.h[k]).abs() <= 1e-8 * self.h[k]
                    && (self.origin[k] - other.origin[k]).abs() <= 1e-8 * (self.extent[k] + self.origin[k].abs())
            })
        }
    }
}

/// Scalar values at the cells of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// One component array per axis.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value at index {i}"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; grid.len()];
        let rl = grid.row_len();
        exec::for_each_chunk_mut(&mut values, rl, |r, row| {
            for (k, v) in row.iter_mut().enumerate() {
                *v = f(grid.point_of(r * rl + k));
            }
        });
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Self {
        let mut values = self.values.clone();
        exec::for_each_chunk_mut(&mut values, 4096, |_, c| c.iter_mut().for_each(|v| *v = f(*v)));
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("lincomb of fields on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Midpoint rule with a fixed pairwise summation order.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Midpoint rule `sum(values) * cell volume`.
pub fn integrate(f: &ScalarField) -> f64 {
    let rl = f.grid.row_len();
    let [s] = exec::sum_rows(f.grid.n_rows(), |r| [exec::pairwise_sum(&f.values[r * rl..(r + 1) * rl])]);
    s * f.grid.cell_volume()
}

/// Second-order central-difference gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = &f.grid;
    let comps = (0..g.dim)
        .map(|axis| {
            let mut out = vec![0.0; g.len()];
            let rl = g.row_len();
            let inv = 0.5 / g.h[axis];
            exec::for_each_chunk_mut(&mut out, rl, |r, row| {
                for (k, o) in row.iter_mut().enumerate() {
                    let idx = r * rl + k;
                    let ijk = g.unravel(idx);
                    let p = g.neighbour(idx, ijk, axis, true);
                    let m = g.neighbour(idx, ijk, axis, false);
                    *o = (f.values[p] - f.values[m]) * inv;
                }
            });
            out
        })
        .collect();
    VectorField {
        grid: g.clone(),
        comps,
    }
}

/// Second-order central-difference Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = &f.grid;
    let mut out = vec![0.0; g.len()];
    let rl = g.row_len();
    exec::for_each_chunk_mut(&mut out, rl, |r, row| {
        for (k, o) in row.iter_mut().enumerate() {
            let idx = r * rl + k;
            let ijk = g.unravel(idx);
            let c = f.values[idx];
            let mut s = 0.0;
            for axis in 0..g.dim {
                let p = g.neighbour(idx, ijk, axis, true);
                let m = g.neighbour(idx, ijk, axis, false);
                s += (f.values[p] - 2.0 * c + f.values[m]) / (g.h[axis] * g.h[axis]);
            }
            *o = s;
        }
    });
    ScalarField {
        grid: g.clone(),
        values: out,
    }
}

/// Fourier transforms on a periodic grid.
pub struct Spectral {
    grid: Grid,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    /// wavenumbers per axis
    pub k: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.grid.n).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.boundary != Boundary::Periodic {
            return invalid("spectral operators need a periodic grid");
        }
        let mut planner = FftPlanner::new();
        let mut fwd = Vec::new();
        let mut inv = Vec::new();
        let mut k = Vec::new();
        for a in 0..grid.dim {
            let n = grid.n[a];
            fwd.push(planner.plan_fft_forward(n));
            inv.push(planner.plan_fft_inverse(n));
            let base = 2.0 * std::f64::consts::PI / grid.extent[a];
            k.push(
                (0..n)
                    .map(|j| {
                        let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        base * m
                    })
                    .collect(),
            );
        }
        Ok(Self {
            grid: grid.clone(),
            fwd,
            inv,
            k,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let g = &self.grid;
        for axis in 0..g.dim {
            let plan = if forward { &self.fwd[axis] } else { &self.inv[axis] };
            let n = g.n[axis];
            let s = g.stride(axis);
            if s == 1 {
                exec::for_each_chunk_mut(data, n, |_, line| plan.process(line));
                continue;
            }
            let lines = g.len() / n;
            let out = exec::map_range(lines, |l| {
                let outer = l / s;
                let inner = l % s;
                let start = outer * n * s + inner;
                let mut buf: Vec<Complex64> = (0..n).map(|t| data[start + t * s]).collect();
                plan.process(&mut buf);
                buf
            });
            for (l, buf) in out.into_iter().enumerate() {
                let start = (l / s) * n * s + l % s;
                for (t, v) in buf.into_iter().enumerate() {
                    data[start + t * s] = v;
                }
            }
        }
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        data
    }

    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    fn wavevector(&self, idx: usize) -> [f64; 3] {
        let ijk = self.grid.unravel(idx);
        let mut kv = [0.0; 3];
        for a in 0..self.grid.dim {
            kv[a] = self.k[a][ijk[a]];
        }
        kv
    }

    /// Multiplies the transform by a real symbol of the wavevector.
    pub fn apply_symbol<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let mut hat = self.forward(values);
        for (idx, c) in hat.iter_mut().enumerate() {
            *c *= symbol(self.wavevector(idx));
        }
        self.inverse(hat)
    }

    /// Symbol `-|k|^2` (the Nyquist modes included).
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        self.apply_symbol(values, |k| -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]))
    }

    /// Symbol `i k_axis`; Nyquist modes are zeroed so the operator stays real and skew.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let mut hat = self.forward(values);
        let n = self.grid.n[axis];
        for (idx, c) in hat.iter_mut().enumerate() {
            let j = self.grid.unravel(idx)[axis];
            let kk = if n % 2 == 0 && j == n / 2 { 0.0 } else { self.k[axis][j] };
            *c *= Complex64::new(0.0, kk);
        }
        self.inverse(hat)
    }

    pub fn gradient(&self, values: &[f64]) -> Vec<Vec<f64>> {
        (0..self.grid.dim).map(|a| self.derivative(values, a)).collect()
    }
}

/// Spectral gradient of a periodic field.
pub fn spectral_gradient(f: &ScalarField) -> Result<VectorField> {
    let s = Spectral::new(&f.grid)?;
    Ok(VectorField {
        grid: f.grid.clone(),
        comps: s.gradient(&f.values),
    })
}

/// Spectral Laplacian of a periodic field.
pub fn spectral_laplacian(f: &ScalarField) -> Result<ScalarField> {
    let s = Spectral::new(&f.grid)?;
    Ok(ScalarField {
        grid: f.grid.clone(),
        values: s.laplacian(&f.values),
    })
}

/// Planar polylines sampling a shape.
#[derive(Debug, Clone, Default)]
pub struct Polylines {
    pub lines: Vec<Vec<[f64; 2]>>,
    pub closed: Vec<bool>,
}

impl Polylines {
    fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.lines.iter().zip(&self.closed).flat_map(|(l, &c)| {
            let n = l.len();
            let m = if c { n } else { n.saturating_sub(1) };
            (0..m).map(move |i| (l[i], l[(i + 1) % n]))
        })
    }

    pub fn max_spacing(&self) -> f64 {
        self.segments()
            .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .fold(0.0, f64::max)
    }

    pub fn all_closed(&self) -> bool {
        !self.closed.is_empty() && self.closed.iter().all(|&c| c)
    }
}

/// Distance to the sampled shape at each cell centre, negative inside closed shapes.
///
/// Distances come from a [`PolylineIndex`] over the samples. Inside/outside is decided by
/// crossing parity along each grid line. Networks with an open curve give the unsigned distance.
pub fn signed_distance(shape: &Polylines, grid: &Grid) -> Result<ScalarField> {
    if grid.dim != 2 {
        return invalid("signed distance is planar only");
    }
    if shape.lines.iter().all(|l| l.is_empty()) {
        return invalid("empty shape");
    }
    let spacing = shape.max_spacing();
    if spacing > 0.5 * grid.h_min() {
        return invalid(format!(
            "shape sampled at spacing {spacing:e}, coarser than half the grid spacing {:e}",
            0.5 * grid.h_min()
        ));
    }
    let index = PolylineIndex::new(shape.lines.clone(), shape.closed.clone());
    let signed = shape.all_closed();
    let segs: Vec<([f64; 2], [f64; 2])> = if signed { shape.segments().collect() } else { Vec::new() };
    let rl = grid.row_len();
    let mut values = vec![0.0; grid.len()];
    exec::for_each_chunk_mut(&mut values, rl, |r, row| {
        // crossings of the vertical line through this row's x with the closed polylines
        let x = grid.point_of(r * rl)[0];
        let mut ys: Vec<f64> = Vec::new();
        for &(a, b) in &segs {
            if (a[0] <= x) != (b[0] <= x) {
                let t = (x - a[0]) / (b[0] - a[0]);
                ys.push(a[1] + t * (b[1] - a[1]));
            }
        }
        ys.sort_by(f64::total_cmp);
        for (k, v) in row.iter_mut().enumerate() {
            let p = grid.point_of(r * rl + k);
            let q = [p[0], p[1]];
            let mut d = index.distance(q);
            if signed {
                let below = ys.partition_point(|&y| y < q[1]);
                if below % 2 == 1 {
                    d = -d;
                }
            }
            *v = d;
        }
    });
    ScalarField::new(grid.clone(), values)
}

/// Writes the field as a 64-byte ASCII header followed by little-endian `f64` values.
///
/// Header fields: `dim n_0 .. n_{d-1} h_0 .. h_{d-1} boundary`, space separated,
/// padded with spaces and terminated by a newline.
pub fn write_binary(f: &ScalarField, path: &Path) -> Result<()> {
    let g = &f.grid;
    let mut head = format!("{}", g.dim);
    for a in 0..g.dim {
        head.push_str(&format!(" {}", g.n[a]));
    }
    for a in 0..g.dim {
        head.push_str(&format!(" {:.8e}", g.h[a]));
    }
    head.push_str(&format!(" {}", g.boundary.tag()));
    if head.len() > 63 {
        return Err(Error::Format(format!("header too long: {head}")));
    }
    while head.len() < 63 {
        head.push(' ');
    }
    head.push('\n');
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(head.as_bytes())?;
    for v in &f.values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a field written by [`write_binary`]; the grid origin is supplied by the caller.
pub fn read_binary(path: &Path, origin: &[f64]) -> Result<ScalarField> {
    let mut file = std::fs::File::open(path)?;
    let mut head = [0u8; 64];
    file.read_exact(&mut head)?;
    let text = std::str::from_utf8(&head).map_err(|e| Error::Format(e.to_string()))?;
    let toks: Vec<&str> = text.split_whitespace().collect();
    let bad = |m: &str| Error::Format(format!("bad field header: {m}"));
    let dim: usize = toks.first().and_then(|t| t.parse().ok()).ok_or_else(|| bad("dim"))?;
    if !(dim == 2 || dim == 3) || toks.len() != 2 + 2 * dim {
        return Err(bad("token count"));
    }
    let n: Vec<usize> = toks[1..1 + dim]
        .iter()
        .map(|t| t.parse().map_err(|_| bad("n")))
        .collect::<Result<_>>()?;
    let h: Vec<f64> = toks[1 + dim..1 + 2 * dim]
        .iter()
        .map(|t| t.parse().map_err(|_| bad("h")))
        .collect::<Result<_>>()?;
    let boundary = match toks[1 + 2 * dim] {
        "P" => Boundary::Periodic,
        "N" => Boundary::Neumann,
        _ => return Err(bad("boundary")),
    };
    let extent: Vec<f64> = n.iter().zip(&h).map(|(n, h)| *n as f64 * h).collect();
    let grid = Grid::new(origin, &extent, &n, boundary)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::Format(format!("expected {} bytes of data, found {}", 8 * grid.len(), bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::new(grid, values)
}

/// Writes `x, y[, z], value` rows.
pub fn write_csv(f: &ScalarField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let axes = ["x", "y", "z"];
    let mut head: Vec<&str> = axes[..f.grid.dim].to_vec();
    head.push("value");
    w.write_record(&head)?;
    for (idx, v) in f.values.iter().enumerate() {
        let p = f.grid.point_of(idx);
        let mut rec: Vec<String> = p[..f.grid.dim].iter().map(|x| format!("{x:.17e}")).collect();
        rec.push(format!("{v:.17e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn linear_gradient_neumann() {
        let g = Grid::square(-1.0, 1.0, 32, Boundary::Neumann).unwrap();
        let f = ScalarField::from_fn(&g, |p| 2.0 * p[0] - 3.0 * p[1]);
        let gr = gradient(&f);
        for i in 1..31 {
            for j in 1..31 {
                let idx = g.index(i, j, 0);
                assert!((gr.comps[0][idx] - 2.0).abs() < 1e-12);
                assert!((gr.comps[1][idx] + 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        for bc in [Boundary::Periodic, Boundary::Neumann] {
            let g = Grid::square(0.0, 1.0, 16, bc).unwrap();
            let f = ScalarField::constant(&g, 3.5);
            assert!(laplacian(&f).max_abs() < 1e-12);
            assert!(gradient(&f).comps.iter().all(|c| c.iter().all(|v| v.abs() < 1e-12)));
        }
    }

    #[test]
    fn sine_laplacian() {
        let lx = 2.0;
        let g = Grid::rect([0.0, 0.0], [lx, 1.0], [256, 16], Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0] / lx).sin());
        let k2 = (2.0 * PI / lx).powi(2);
        for lap in [laplacian(&f), spectral_laplacian(&f).unwrap()] {
            let err = lap
                .values
                .iter()
                .zip(&f.values)
                .map(|(l, v)| (l + k2 * v).abs())
                .fold(0.0, f64::max);
            assert!(err / k2 < 1e-3);
        }
    }

    #[test]
    fn spectral_gradient_exact_for_trig() {
        let g = Grid::square(0.0, 1.0, 32, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).cos());
        let gr = spectral_gradient(&f).unwrap();
        for idx in 0..g.len() {
            let p = g.point_of(idx);
            let ex = 2.0 * PI * (2.0 * PI * p[0]).cos() * (4.0 * PI * p[1]).cos();
            assert!((gr.comps[0][idx] - ex).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_three_dimensional() {
        let g = Grid::new(&[0.0; 3], &[1.0; 3], &[8, 16, 8], Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[1]).cos() + (2.0 * PI * p[2]).sin());
        let l = spectral_laplacian(&f).unwrap();
        for (a, b) in l.values.iter().zip(&f.values) {
            assert!((a + 4.0 * PI * PI * b).abs() < 1e-9);
        }
    }

    #[test]
    fn integrate_constant_and_trig() {
        let g = Grid::rect([-1.0, 0.0], [2.0, 0.5], [40, 10], Boundary::Neumann).unwrap();
        assert!((ScalarField::constant(&g, 2.5).integrate() - 2.5 * 1.5).abs() < 1e-12);
        let g = Grid::square(0.0, 1.0, 64, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).sin().powi(2));
        assert!((f.integrate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn integrate_gaussian() {
        let g = Grid::square(-1.0, 1.0, 512, Boundary::Neumann).unwrap();
        let s = 0.1;
        let f = ScalarField::from_fn(&g, |p| (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * s * s)).exp());
        let exact = 2.0 * PI * s * s;
        assert!(((f.integrate() - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn fd_and_spectral_agree_to_second_order() {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = Grid::square(0.0, 1.0, n, Boundary::Periodic).unwrap();
            let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin().exp());
            let a = laplacian(&f);
            let b = spectral_laplacian(&f).unwrap();
            errs.push(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        assert!(errs[0] / errs[1] > 3.5);
    }

    fn circle_polyline(r: f64, n: usize) -> Polylines {
        let line = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        Polylines {
            lines: vec![line],
            closed: vec![true],
        }
    }

    #[test]
    fn circle_signed_distance() {
        let g = Grid::square(-2.0, 2.0, 64, Boundary::Neumann).unwrap();
        let sd = signed_distance(&circle_polyline(1.0, 2000), &g).unwrap();
        for idx in 0..g.len() {
            let p = g.point_of(idx);
            let exact = p[0].hypot(p[1]) - 1.0;
            assert!((sd.values[idx] - exact).abs() <= g.h[0]);
        }
    }

    #[test]
    fn segment_distance_unsigned() {
        let g = Grid::square(-1.0, 1.0, 20, Boundary::Neumann).unwrap();
        let line: Vec<[f64; 2]> = (0..=1000).map(|i| [-0.5 + i as f64 / 1000.0, 0.0]).collect();
        let shape = Polylines {
            lines: vec![line],
            closed: vec![false],
        };
        let sd = signed_distance(&shape, &g).unwrap();
        // cell (10, 13) has centre (0.05, 0.35)
        assert!((sd.values[g.index(10, 13, 0)] - 0.35).abs() < 1e-12);
        assert!(sd.min() >= 0.0);
    }

    #[test]
    fn coarse_shape_rejected() {
        let g = Grid::square(-2.0, 2.0, 64, Boundary::Neumann).unwrap();
        assert!(signed_distance(&circle_polyline(1.0, 50), &g).is_err());
    }

    #[test]
    fn eikonal_away_from_shape() {
        let g = Grid::square(-2.0, 2.0, 128, Boundary::Neumann).unwrap();
        let sd = signed_distance(&circle_polyline(1.0, 4000), &g).unwrap();
        let gr = gradient(&sd);
        for idx in 0..g.len() {
            let p = g.point_of(idx);
            let r = p[0].hypot(p[1]);
            let ijk = g.unravel(idx);
            let interior = ijk[0] > 0 && ijk[1] > 0 && ijk[0] < 127 && ijk[1] < 127;
            if interior && (r - 1.0).abs() > 5.0 * g.h[0] && r > 5.0 * g.h[0] {
                let n = gr.comps[0][idx].hypot(gr.comps[1][idx]);
                assert!((n - 1.0).abs() < 0.01, "|grad sd| = {n} at {p:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn distance_matches_brute_force(
            r in 0.3f64..0.9,
            a in 0.0f64..0.3,
            k in 2usize..5,
            cx in -0.2f64..0.2,
        ) {
            let n = 1500;
            let line: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    let rr = r * (1.0 + a * (k as f64 * t).cos());
                    [cx + rr * t.cos(), rr * t.sin()]
                })
                .collect();
            let spacing = Polylines { lines: vec![line.clone()], closed: vec![true] }.max_spacing();
            let g = Grid::square(-1.5, 1.5, 24, Boundary::Neumann).unwrap();
            let shape = Polylines { lines: vec![line.clone()], closed: vec![true] };
            let sd = signed_distance(&shape, &g).unwrap();
            for idx in 0..g.len() {
                let p = g.point_of(idx);
                let brute = line.iter().map(|s| (s[0] - p[0]).hypot(s[1] - p[1])).fold(f64::INFINITY, f64::min);
                prop_assert!((sd.values[idx].abs() - brute).abs() <= 0.5 * spacing + 1e-12);
            }
        }
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::rect([0.0, -1.0], [1.0, 1.0], [9, 12], Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&g, |p| p[0] * 3.0 - p[1]);
        let path = dir.path().join("f.bin");
        write_binary(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 64 + 8 * g.len());
        assert_eq!(bytes[63], b'\n');
        let back = read_binary(&path, &[0.0, -1.0]).unwrap();
        assert_eq!(back.values, f.values);
        assert!(back.grid.same_shape(&g));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn operators_are_linear(seed_a in prop::collection::vec(-1.0f64..1.0, 256), seed_b in prop::collection::vec(-1.0f64..1.0, 256), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            for bc in [Boundary::Periodic, Boundary::Neumann] {
                let g = Grid::square(0.0, 1.0, 16, bc).unwrap();
                let f = ScalarField::new(g.clone(), seed_a.clone()).unwrap();
                let h = ScalarField::new(g.clone(), seed_b.clone()).unwrap();
                let comb = f.lincomb(a, &h, b).unwrap();
                let lc = laplacian(&comb);
                let lf = laplacian(&f);
                let lh = laplacian(&h);
                for i in 0..g.len() {
                    prop_assert!((lc.values[i] - a * lf.values[i] - b * lh.values[i]).abs() < 1e-9);
                }
                let gc = gradient(&comb);
                let gf = gradient(&f);
                let gh = gradient(&h);
                for i in 0..g.len() {
                    prop_assert!((gc.comps[1][i] - a * gf.comps[1][i] - b * gh.comps[1][i]).abs() < 1e-10);
                }
                if bc == Boundary::Periodic {
                    let s = Spectral::new(&g).unwrap();
                    let x = s.laplacian(&comb.values);
                    let y = s.laplacian(&f.values);
                    let z = s.laplacian(&h.values);
                    for i in 0..g.len() {
                        prop_assert!((x[i] - a * y[i] - b * z[i]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
