//! Cubic splines (natural or periodic) used for tabulated anisotropies and sampled curves.

use crate::error::{invalid, Result};

/// Interpolating cubic spline through `(x_i, y_i)` with exact first and second derivatives.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    period: Option<f64>,
}

fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

impl CubicSpline {
    /// Natural spline (zero second derivative at both ends).
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_knots(&x, &y, 3)?;
        let n = x.len();
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        let m = solve_tridiagonal(&a, &b, &c, &d);
        Ok(Self { x, y, m, period: None })
    }

    /// Periodic spline; knots must lie in `[x_0, x_0 + period)`.
    pub fn periodic(x: Vec<f64>, y: Vec<f64>, period: f64) -> Result<Self> {
        check_knots(&x, &y, 3)?;
        let n = x.len();
        if !(x[n - 1] < x[0] + period) {
            return invalid("periodic spline knots must span less than one period");
        }
        let h = |i: usize| -> f64 {
            if i + 1 < n {
                x[i + 1] - x[i]
            } else {
                x[0] + period - x[n - 1]
            }
        };
        let yv = |i: usize| y[i % n];
        // cyclic tridiagonal system via Sherman-Morrison
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let hp = h((i + n - 1) % n);
            let hn = h(i);
            a[i] = hp / 6.0;
            b[i] = (hp + hn) / 3.0;
            c[i] = hn / 6.0;
            d[i] = (yv(i + 1) - y[i]) / hn - (y[i] - yv(i + n - 1)) / hp;
        }
        let alpha = c[n - 1];
        let beta = a[0];
        let gamma = -b[0];
        let mut bb = b.clone();
        bb[0] -= gamma;
        bb[n - 1] -= alpha * beta / gamma;
        let xs = solve_tridiagonal(&a, &bb, &c, &d);
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let z = solve_tridiagonal(&a, &bb, &c, &u);
        let fact = (xs[0] + beta * xs[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
        let m = xs.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect();
        Ok(Self {
            x,
            y,
            m,
            period: Some(period),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.period {
            Some(p) => (self.x[0], self.x[0] + p),
            None => (self.x[0], *self.x.last().unwrap()),
        }
    }

    /// `(s, s', s'')` at `t`. Natural splines extrapolate with the end cubic.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let n = self.x.len();
        let (t, i, x0, x1, y0, y1, m0, m1) = match self.period {
            Some(p) => {
                let t = self.x[0] + (t - self.x[0]).rem_euclid(p);
                let i = match self.x.partition_point(|&v| v <= t) {
                    0 => 0,
                    k => k - 1,
                };
                let (x1, y1, m1) = if i + 1 < n {
                    (self.x[i + 1], self.y[i + 1], self.m[i + 1])
                } else {
                    (self.x[0] + p, self.y[0], self.m[0])
                };
                (t, i, self.x[i], x1, self.y[i], y1, self.m[i], m1)
            }
            None => {
                let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
                (
                    t,
                    i,
                    self.x[i],
                    self.x[i + 1],
                    self.y[i],
                    self.y[i + 1],
                    self.m[i],
                    self.m[i + 1],
                )
            }
        };
        let _ = i;
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let val = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let d2 = a * m0 + b * m1;
        [val, d1, d2]
    }
}

fn check_knots(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return invalid("spline abscissae and values differ in length");
    }
    if x.len() < min {
        return invalid(format!("spline needs at least {min} knots"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("spline knots must be strictly increasing");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return invalid("spline data must be finite");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn periodic_reproduces_trig() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::periodic(x, y, 2.0 * PI).unwrap();
        for k in 0..200 {
            let t = -3.0 + 0.07 * k as f64;
            let [v, d1, d2] = s.eval(t);
            assert!((v - t.sin()).abs() < 1e-5);
            assert!((d1 - t.cos()).abs() < 1e-3);
            assert!((d2 + t.sin()).abs() < 2e-2);
        }
    }

    #[test]
    fn natural_interpolates_knots() {
        let x = vec![0.0, 0.5, 1.3, 2.0];
        let y = vec![1.0, -1.0, 2.0, 0.5];
        let s = CubicSpline::natural(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi)[0] - yi).abs() < 1e-12);
        }
        assert!(s.eval(0.0)[2].abs() < 1e-12);
        assert!(s.eval(2.0)[2].abs() < 1e-12);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(CubicSpline::natural(vec![0.0, 0.0, 1.0], vec![0.0; 3]).is_err());
    }
}
