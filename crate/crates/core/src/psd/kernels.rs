//! Linear-algebra kernels for uniqueness checks: Khatri-Rao products,
//! second compound matrices, Kruskal ranks and real coordinates of Hermitian
//! matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermitian::C64;

/// Largest family size accepted by [`kruskal_rank`].
pub const MAX_KRUSKAL_VECTORS: usize = 20;

/// Columnwise Kronecker product `U (.) V`: column `i` is `u_i (x) v_i`.
pub fn khatri_rao(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if u.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch(format!("{} and {} columns", u.ncols(), v.ncols())));
    }
    let (p, q) = (u.nrows(), v.nrows());
    Ok(DMatrix::from_fn(p * q, u.ncols(), |r, c| u[(r / q, c)] * v[(r % q, c)]))
}

/// Khatri-Rao product of several factors, first factor slowest.
pub fn khatri_rao_all(factors: &[DMatrix<C64>]) -> Result<DMatrix<C64>> {
    let (first, rest) = factors.split_first().ok_or_else(|| Error::Malformed("no factors".into()))?;
    rest.iter().try_fold(first.clone(), |acc, f| khatri_rao(&acc, f))
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Second compound matrix: entry `((i1, i2), (j1, j2))` is the minor on rows
/// `i1 < i2` and columns `j1 < j2`, pairs in lexicographic order.
pub fn compound_matrix(x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if x.nrows() < 2 || x.ncols() < 2 {
        return Err(Error::DimensionMismatch(format!("compound matrix of a {}x{} matrix", x.nrows(), x.ncols())));
    }
    let (rows, cols) = (pairs(x.nrows()), pairs(x.ncols()));
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let ((i1, i2), (j1, j2)) = (rows[r], cols[c]);
        x[(i1, j1)] * x[(i2, j2)] - x[(i1, j2)] * x[(i2, j1)]
    }))
}

/// Singular values of a complex matrix, descending.
pub(crate) fn singular_values(m: &DMatrix<C64>) -> DVector<f64> {
    let mut s = m.clone().svd(false, false).singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

/// Whether the columns are linearly independent: `sigma_min > tol * sigma_max`.
pub(crate) fn full_column_rank(m: &DMatrix<C64>, tol: f64) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    if m.ncols() > m.nrows() {
        return false;
    }
    let s = singular_values(m);
    s[s.len() - 1] > tol * s[0]
}

fn next_subset(sub: &mut [usize], n: usize) -> bool {
    let k = sub.len();
    for i in (0..k).rev() {
        if sub[i] < n - k + i {
            sub[i] += 1;
            for j in i + 1..k {
                sub[j] = sub[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Kruskal rank of the columns of `u`: the largest `k` such that every `k`
/// columns are linearly independent. Enumerates subsets from the largest
/// size down; at most [`MAX_KRUSKAL_VECTORS`] columns.
pub fn kruskal_rank(u: &DMatrix<C64>, tol: f64) -> Result<usize> {
    let s = u.ncols();
    if s > MAX_KRUSKAL_VECTORS {
        return Err(Error::Malformed(format!("kruskal rank of {s} vectors exceeds the limit {MAX_KRUSKAL_VECTORS}")));
    }
    for k in (1..=s.min(u.nrows())).rev() {
        let mut sub: Vec<usize> = (0..k).collect();
        let all = loop {
            if !full_column_rank(&u.select_columns(&sub), tol) {
                break false;
            }
            if !next_subset(&mut sub, s) {
                break true;
            }
        };
        if all {
            return Ok(k);
        }
    }
    Ok(0)
}

/// Real coordinates of a Hermitian matrix: the real upper triangle with the
/// diagonal, then the imaginary strict upper triangle, both row by row.
pub fn realify_hermitian(b: &DMatrix<C64>) -> Result<DVector<f64>> {
    let n = b.nrows();
    if !b.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, b.ncols())));
    }
    let dev = (b - b.adjoint()).norm();
    if dev > 1e-10 * b.norm().max(1.0) {
        return Err(Error::NotHermitian { deviation: dev, tolerance: 1e-10 });
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in i..n {
            out.push(b[(i, j)].re);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(b[(i, j)].im);
        }
    }
    Ok(DVector::from_vec(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{complex_gaussian, rng};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn gaussian(r: &mut impl rand::Rng, p: usize, q: usize) -> DMatrix<C64> {
        DMatrix::from_column_slice(p, q, complex_gaussian(r, p * q).as_slice())
    }

    #[test]
    fn khatri_rao_of_identities() {
        let id = DMatrix::<C64>::identity(2, 2);
        let k = khatri_rao(&id, &id).unwrap();
        assert_eq!(k.column(0).iter().map(|z| z.re).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(k.column(1).iter().map(|z| z.re).collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(khatri_rao(&id, &DMatrix::identity(2, 3)).is_err());
    }

    #[test]
    fn khatri_rao_single_column_is_kronecker() {
        let mut r = rng(1);
        let (u, v) = (gaussian(&mut r, 3, 1), gaussian(&mut r, 2, 1));
        assert_eq!(khatri_rao(&u, &v).unwrap(), u.kronecker(&v));
    }

    #[test]
    fn compound_of_small_matrices() {
        let id = DMatrix::<C64>::identity(3, 3);
        assert_eq!(compound_matrix(&id).unwrap(), id);
        let x = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(5.0)]);
        assert_eq!(compound_matrix(&x).unwrap()[(0, 0)], c(-1.0));
        assert!(compound_matrix(&DMatrix::identity(1, 3)).is_err());
    }

    #[test]
    fn kruskal_rank_examples() {
        let v = DVector::from_vec(vec![c(1.0), c(2.0), c(0.5)]);
        let same = DMatrix::from_columns(&[v.clone(), v.clone(), v]);
        assert_eq!(kruskal_rank(&same, 1e-10).unwrap(), 1);
        let e = DMatrix::from_row_slice(3, 3, &[c(1.0), c(0.0), c(1.0), c(0.0), c(1.0), c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert_eq!(kruskal_rank(&e, 1e-10).unwrap(), 2);
        assert_eq!(kruskal_rank(&DMatrix::zeros(2, 2), 1e-10).unwrap(), 0);
        assert!(kruskal_rank(&DMatrix::zeros(30, 21), 1e-10).is_err());
    }

    #[test]
    fn realify_identity() {
        let v = realify_hermitian(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 1.0, 0.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(0.0), c(1.0)]);
        assert!(realify_hermitian(&bad).is_err());
    }

    proptest! {
        #[test]
        fn khatri_rao_gram_identity(seed in any::<u64>(), p in 1usize..5, q in 1usize..5, s in 1usize..5) {
            let mut r = rng(seed);
            let (u, v) = (gaussian(&mut r, p, s), gaussian(&mut r, q, s));
            let k = khatri_rao(&u, &v).unwrap();
            let lhs = k.transpose() * &k;
            let rhs = (u.transpose() * &u).component_mul(&(v.transpose() * &v));
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
        }

        #[test]
        fn realify_round_trips(seed in any::<u64>(), n in 1usize..4) {
            let mut r = rng(seed);
            let g = gaussian(&mut r, n, n);
            let b = (&g + g.adjoint()) * c(0.5);
            let v = realify_hermitian(&b).unwrap();
            prop_assert_eq!(v.len(), n * n);
            let mut back = DMatrix::<C64>::zeros(n, n);
            let mut it = v.iter();
            for i in 0..n {
                for j in i..n {
                    back[(i, j)].re = *it.next().unwrap();
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    back[(i, j)].im = *it.next().unwrap();
                }
            }
            for i in 0..n {
                for j in 0..i {
                    back[(i, j)] = back[(j, i)].conj();
                }
            }
            prop_assert!((back - b).norm() < 1e-14);
        }
    }
}
