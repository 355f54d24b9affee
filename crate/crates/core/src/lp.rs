//! Dense two-phase simplex for `min c.x  s.t.  A x = b, x >= 0` with few rows.

use crate::error::{Error, Result};

const TOL: f64 = 1e-11;

struct Tableau {
    m: usize,
    cols: usize,
    t: Vec<f64>, // m rows of (cols + 1), last entry is the rhs
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[r * w + j];
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost` over columns `< allowed`; returns the objective.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> Result<f64> {
        for _ in 0..50_000 {
            // reduced costs r_j = c_j - c_B B^-1 a_j; tableau already holds B^-1 A
            let mut enter = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..self.m {
                    r -= cost[self.basis[i]] * self.at(i, j);
                }
                if r < -TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else {
                return Ok((0..self.m).map(|i| cost[self.basis[i]] * self.rhs(i)).sum());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > TOL {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        Some((k, best))
                            if ratio > best + TOL
                                || (ratio > best - TOL && self.basis[i] > self.basis[k]) => {}
                        _ => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Refused("linear program is unbounded".into()));
            };
            self.pivot(r, c);
        }
        Err(Error::Refused("simplex iteration limit reached".into()))
    }
}

/// Solves `min c.x  s.t.  A x = b, x >= 0`, `a` given column-major as `cols` vectors of length `m`.
pub fn minimise_equality(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<f64> {
    let m = b.len();
    let n = a.len();
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, col) in a.iter().enumerate() {
            t[i * w + j] = s * col[i];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = s * b[i];
    }
    let mut tab = Tableau {
        m,
        cols,
        t,
        basis: (n..n + m).collect(),
    };
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    let infeas = tab.optimise(&phase1, cols)?;
    if infeas > 1e-9 {
        return Err(Error::Refused("linear program is infeasible".into()));
    }
    // drive remaining artificials out of the basis
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| !tab.basis.contains(&j) && tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, j);
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    tab.optimise(&cost, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dimensional_support_of_square() {
        // constraints x.u <= 1 for the four axis directions: support in direction nu is |nu1|+|nu2|
        let dirs = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let c = vec![1.0; 4];
        let v = minimise_equality(&c, &dirs, &[0.6, -0.8]).unwrap();
        assert!((v - 1.4).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let dirs = vec![vec![1.0, 0.0]];
        assert!(minimise_equality(&[1.0], &dirs, &[0.0, 1.0]).is_err());
    }
}
