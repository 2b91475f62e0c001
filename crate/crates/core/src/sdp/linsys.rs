//! Factorization of `K = rho_x I + A^T diag(1/r) A`.
//!
//! When every cone row of `A` has a single nonzero, the cone part of `K` is
//! diagonal and `K` is inverted through the Woodbury identity with a dense
//! Cholesky factor of the (small) equality block. Otherwise `K` is formed
//! densely.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use super::sparse::Csr;
use crate::error::{Error, Result};

enum Factor {
    Dense(Llt<f64>),
    Woodbury { dinv: Vec<f64>, eq: Csr, eq_t: Csr, inner: Llt<f64> },
}

pub(crate) struct NormalSolver {
    n: usize,
    factor: Factor,
}

impl NormalSolver {
    /// `a` has its `n_eq` equality rows first.
    pub fn new(a: &Csr, n_eq: usize, r: &[f64], rho_x: f64) -> Result<Self> {
        let n = a.ncols;
        let cone_diag = (n_eq..a.nrows).all(|i| a.row_nnz(i) <= 1);
        let factor = if cone_diag && n_eq < n {
            let mut d = vec![rho_x; n];
            for i in n_eq..a.nrows {
                for (c, v) in a.row(i) {
                    d[c] += v * v / r[i];
                }
            }
            let dinv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
            let rows: Vec<Vec<(usize, f64)>> = (0..n_eq).map(|i| a.row(i).collect()).collect();
            let eq = Csr::from_rows(n, &rows);
            let eq_t = eq.transpose();
            let mut s = Mat::<f64>::zeros(n_eq, n_eq);
            for (i, &ri) in r.iter().enumerate().take(n_eq) {
                s[(i, i)] = ri;
            }
            for v in 0..n {
                let col: Vec<(usize, f64)> = eq_t.row(v).collect();
                for (ka, &(ia, va)) in col.iter().enumerate() {
                    for &(ib, vb) in &col[ka..] {
                        let x = va * vb * dinv[v];
                        s[(ia, ib)] += x;
                        if ia != ib {
                            s[(ib, ia)] += x;
                        }
                    }
                }
            }
            let inner = s.llt(Side::Lower).map_err(|e| Error::Numerical(format!("equality block factorization: {e:?}")))?;
            Factor::Woodbury { dinv, eq, eq_t, inner }
        } else {
            let mut k = Mat::<f64>::zeros(n, n);
            for c in 0..n {
                k[(c, c)] = rho_x;
            }
            for (i, &ri) in r.iter().enumerate().take(a.nrows) {
                let row: Vec<(usize, f64)> = a.row(i).collect();
                for &(ca, va) in &row {
                    for &(cb, vb) in &row {
                        k[(ca, cb)] += va * vb / ri;
                    }
                }
            }
            let llt = k.llt(Side::Lower).map_err(|e| Error::Numerical(format!("normal matrix factorization: {e:?}")))?;
            Factor::Dense(llt)
        };
        Ok(NormalSolver { n, factor })
    }

    /// Overwrites `x` with `K^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        match &self.factor {
            Factor::Dense(llt) => {
                let mut m = Mat::from_fn(self.n, 1, |i, _| x[i]);
                llt.solve_in_place(m.as_mut());
                for (i, v) in x.iter_mut().enumerate() {
                    *v = m[(i, 0)];
                }
            }
            Factor::Woodbury { dinv, eq, eq_t, inner } => {
                for (v, d) in x.iter_mut().zip(dinv) {
                    *v *= d;
                }
                let t = eq.mul(x);
                let mut m = Mat::from_fn(t.len(), 1, |i, _| t[i]);
                inner.solve_in_place(m.as_mut());
                let corr: Vec<f64> = (0..t.len()).map(|i| m[(i, 0)]).collect();
                let back = eq_t.mul(&corr);
                for ((v, b), d) in x.iter_mut().zip(back).zip(dinv) {
                    *v -= b * d;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &Csr, n_eq: usize, r: &[f64], rho: f64) {
        let solver = NormalSolver::new(a, n_eq, r, rho).unwrap();
        let n = a.ncols;
        let x0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        // K x0
        let ax = a.mul(&x0);
        let scaled: Vec<f64> = ax.iter().zip(r).map(|(v, ri)| v / ri).collect();
        let atx = a.transpose().mul(&scaled);
        let mut kx: Vec<f64> = x0.iter().zip(&atx).map(|(x, t)| rho * x + t).collect();
        solver.solve_in_place(&mut kx);
        for (a, b) in kx.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn woodbury_matches_direct() {
        let rows = vec![
            vec![(0, 1.0), (2, -1.0), (3, 2.0)],
            vec![(1, 1.0), (3, 1.0)],
            vec![(0, 1.0)],
            vec![(1, -1.4)],
            vec![(2, 1.0)],
            vec![(3, 0.5)],
            vec![(3, 2.0)],
        ];
        let a = Csr::from_rows(4, &rows);
        check(&a, 2, &[0.01, 0.02, 1.0, 1.0, 2.0, 1.0, 1.0], 1e-6);
    }

    #[test]
    fn dense_path_for_general_cone_rows() {
        let rows = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (2, 1.0)], vec![(1, 2.0), (2, -1.0)]];
        let a = Csr::from_rows(3, &rows);
        check(&a, 1, &[0.1, 1.0, 1.0], 1e-3);
    }
}
