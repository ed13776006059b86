//! Banded LU with partial pivoting and iterative refinement.
//!
//! The hitting-probability and expected-time systems of this crate are
//! `(2B+1)`-banded, so a dense solve is never needed. Storage follows the
//! LAPACK `gb` convention: a matrix with `kl` sub- and `ku` super-diagonals
//! is kept column-wise in `2*kl + ku + 1` band rows, the extra `kl` rows
//! absorbing pivoting fill.

use crate::{Error, Result};

#[derive(Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage, `lead = 2*kl + ku + 1` entries per column.
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let lead = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ab: vec![0.0; lead * n] }
    }

    #[inline]
    fn lead(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    /// Band-row index of entry `(i, j)`; valid when `j - ku - kl <= i <= j + kl`.
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && i <= j + self.kl);
        j * self.lead() + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku + self.kl >= j && i <= j + self.kl {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// `y = A x` using only the declared `kl`/`ku` band (the fill rows are
    /// ignored, so this is valid on the pristine matrix only).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let jlo = i.saturating_sub(self.kl);
            let jhi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in jlo..=jhi {
                acc += self.ab[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }
}

/// A factored banded system retaining the pristine matrix for residuals.
pub struct BandedSystem {
    orig: BandedMatrix,
    lu: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedSystem {
    /// Factor `a` in place (PA = LU with partial pivoting). Fails on an
    /// exactly singular pivot.
    pub fn factor(a: BandedMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.ku;
        let mut lu = a.clone();
        let mut pivots = vec![0usize; n];
        let kv = kl + ku; // widest super-diagonal after fill

        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in (k + 1)..=imax {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::KernelDefect(format!(
                    "singular banded system at column {k}"
                )));
            }
            pivots[k] = p;
            let jhi = (k + kv).min(n - 1);
            if p != k {
                for j in k..=jhi {
                    let s1 = lu.slot(k, j);
                    let s2 = lu.slot(p, j);
                    lu.ab.swap(s1, s2);
                }
            }
            let diag = lu.get(k, k);
            for i in (k + 1)..=imax {
                let m = lu.get(i, k) / diag;
                lu.set(i, k, m);
                if m != 0.0 {
                    for j in (k + 1)..=jhi {
                        let v = lu.get(i, j) - m * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        Ok(BandedSystem { orig: a, lu, pivots })
    }

    fn solve_factored(&self, b: &mut [f64]) {
        let n = self.orig.n;
        let kl = self.orig.kl;
        let kv = kl + self.orig.ku;
        // forward: apply P and L
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(p, k);
            }
            let imax = (k + kl).min(n - 1);
            for i in (k + 1)..=imax {
                b[i] -= self.lu.get(i, k) * b[k];
            }
        }
        // back-substitution with U
        for k in (0..n).rev() {
            let jhi = (k + kv).min(n - 1);
            let mut acc = b[k];
            for j in (k + 1)..=jhi {
                acc -= self.lu.get(k, j) * b[j];
            }
            b[k] = acc / self.lu.get(k, k);
        }
    }

    /// Solve `A x = b` with iterative refinement. Returns the solution and
    /// the final residual infinity norm relative to `max(1, |b|_inf)`.
    pub fn solve_refined(&self, b: &[f64], max_refine: usize) -> (Vec<f64>, f64) {
        let n = self.orig.n;
        let mut x = b.to_vec();
        self.solve_factored(&mut x);
        let bscale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut resid = vec![0.0; n];
        let mut best = f64::INFINITY;
        for _ in 0..=max_refine {
            self.orig.matvec(&x, &mut resid);
            let mut rnorm = 0.0f64;
            for i in 0..n {
                resid[i] = b[i] - resid[i];
                rnorm = rnorm.max(resid[i].abs());
            }
            let rel = rnorm / bscale;
            if rel >= best || rel <= 1e-15 {
                best = best.min(rel);
                break;
            }
            best = rel;
            let mut dx = resid.clone();
            self.solve_factored(&mut dx);
            for i in 0..n {
                x[i] += dx[i];
            }
        }
        (x, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting, as an oracle.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in (k + 1)..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for j in (k + 1)..n {
                x[k] -= m[k][j] * x[j];
            }
            x[k] /= m[k][k];
        }
        x
    }

    #[test]
    fn banded_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(12usize, 1usize, 1usize), (30, 2, 2), (25, 3, 1)] {
            let mut band = BandedMatrix::new(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if j + kl >= i && i + ku >= j {
                        let v: f64 = rng.random::<f64>() - 0.5;
                        let v = if i == j { v + 4.0 } else { v };
                        band.set(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let sys = BandedSystem::factor(band).unwrap();
            let (x, rel) = sys.solve_refined(&b, 2);
            let y = dense_solve(&dense, &b);
            for i in 0..n {
                assert!((x[i] - y[i]).abs() < 1e-10, "n={n} i={i}: {} vs {}", x[i], y[i]);
            }
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let mut band = BandedMatrix::new(3, 1, 1);
        band.set(0, 0, 1.0);
        band.set(1, 1, 0.0);
        band.set(2, 2, 1.0);
        assert!(BandedSystem::factor(band).is_err());
    }
}
