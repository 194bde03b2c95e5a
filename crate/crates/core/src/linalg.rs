//! Small dense symmetric linear algebra: Cholesky factorisation, solves and
//! inverses for information matrices.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    lower: Array2<F>,
}

impl<F: Scalar> Cholesky<F> {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(a: &Array2<F>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<F>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Some(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &Array1<F>) -> Array1<F> {
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    pub fn inverse(&self) -> Array2<F> {
        let n = self.dim();
        let mut inv = Array2::<F>::zeros((n, n));
        let mut e = Array1::<F>::zeros(n);
        for j in 0..n {
            e.fill(F::zero());
            e[j] = F::one();
            let col = self.solve(&e);
            inv.column_mut(j).assign(&col);
        }
        // exact symmetry
        for i in 0..n {
            for j in 0..i {
                let m = (inv[[i, j]] + inv[[j, i]]) * F::lit(0.5);
                inv[[i, j]] = m;
                inv[[j, i]] = m;
            }
        }
        inv
    }

    /// `log det A`.
    pub fn ln_det(&self) -> F {
        F::lit(2.0) * (0..self.dim()).map(|i| self.lower[[i, i]].ln()).sum::<F>()
    }
}

/// Symmetrises `a` in place by averaging with its transpose.
pub fn symmetrize<F: Scalar>(a: &mut Array2<F>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = (a[[i, j]] + a[[j, i]]) * F::lit(0.5);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}
