//! Banded LU factorization with partial pivoting.

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

/// `PA = LU` for a matrix with `kl` sub- and `ku` super-diagonals, stored by
/// rows; pivoting widens the upper band to `kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
    pivot_ratio: f64,
}

impl BandedLu {
    /// Factors `a`, reading it in the order given by `perm` (`perm[new] = old`).
    pub fn factor(a: &CsrMatrix<f64>, perm: &[usize]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::DimensionMismatch("banded factorization needs a square matrix and a full permutation".into()));
        }
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in a.triplet_iter() {
            let (r, c) = (inv[i], inv[j]);
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let ku2 = kl + ku;
        let width = kl + ku2 + 1;
        let mut lu = Self { n, kl, ku: ku2, width, data: vec![0.0; n * width], piv: vec![0; n], pivot_ratio: 1.0 };
        for (i, j, v) in a.triplet_iter() {
            *lu.at_mut(inv[i], inv[j]) += *v;
        }
        let scale = lu.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let (mut pmin, mut pmax) = (f64::INFINITY, 0.0_f64);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if lu.at(i, k).abs() > lu.at(p, k).abs() {
                    p = i;
                }
            }
            let pv = lu.at(p, k).abs();
            if !(pv > 1e-14 * scale) {
                return Err(Error::SingularSystem {
                    dt: f64::NAN,
                    detail: format!("pivot {pv:e} at row {k} (matrix scale {scale:e})"),
                });
            }
            pmin = pmin.min(pv);
            pmax = pmax.max(pv);
            lu.piv[k] = p;
            let jmax = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let t = lu.at(k, j);
                    *lu.at_mut(k, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = t;
                }
            }
            let d = lu.at(k, k);
            for i in k + 1..=last {
                let l = lu.at(i, k) / d;
                *lu.at_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let u = lu.at(k, j);
                        *lu.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        lu.pivot_ratio = if pmax > 0.0 { pmin / pmax } else { 0.0 };
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + (j + self.kl - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.width + (j + self.kl - i)]
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Ratio of the smallest to the largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// Solves in the permuted ordering, in place.
    pub fn solve_permuted(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.ku).min(n - 1) {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
    }

    /// Solves `Ax = b` in the original ordering.
    pub fn solve(&self, perm: &[usize], b: &DVector<f64>) -> DVector<f64> {
        let mut work: Vec<f64> = perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted(&mut work);
        let mut x = DVector::zeros(self.n);
        for (new, &old) in perm.iter().enumerate() {
            x[old] = work[new];
        }
        x
    }
}
