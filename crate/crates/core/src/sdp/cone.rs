use faer::{Mat, Side};
use nalgebra::DMatrix;

pub(crate) const SQRT2: f64 = std::f64::consts::SQRT_2;

pub(crate) fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Position of `(i, j)`, `i <= j`, in the row-major upper-triangle order.
pub(crate) fn tri_index(side: usize, i: usize, j: usize) -> usize {
    i * side - i * (i + 1) / 2 + j
}

/// Symmetric matrix of a scaled vectorization (off-diagonals times sqrt 2).
pub(crate) fn smat(v: &[f64], side: usize) -> Mat<f64> {
    let mut m = Mat::zeros(side, side);
    let mut k = 0;
    for i in 0..side {
        m[(i, i)] = v[k];
        k += 1;
        for j in i + 1..side {
            let x = v[k] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

pub(crate) fn svec_into(m: &Mat<f64>, out: &mut [f64]) {
    let side = m.nrows();
    let mut k = 0;
    for i in 0..side {
        out[k] = m[(i, i)];
        k += 1;
        for j in i + 1..side {
            out[k] = (m[(i, j)] + m[(j, i)]) / SQRT2;
            k += 1;
        }
    }
}

pub(crate) fn smat_nalgebra(v: &[f64], side: usize) -> DMatrix<f64> {
    let m = smat(v, side);
    DMatrix::from_fn(side, side, |i, j| m[(i, j)])
}

#[cfg(test)]
pub(crate) fn svec_nalgebra(m: &DMatrix<f64>) -> Vec<f64> {
    let f = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let mut out = vec![0.0; svec_len(m.nrows())];
    svec_into(&f, &mut out);
    out
}

/// Eigen-decomposition `(values ascending, vectors)` of a symmetric matrix.
pub(crate) fn sym_eig(m: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let side = m.nrows();
    match m.self_adjoint_eigen(Side::Lower) {
        Ok(e) => {
            let s = e.S().column_vector();
            ((0..side).map(|i| s[i]).collect(), e.U().to_owned())
        }
        Err(_) => {
            // fall back to nalgebra on the rare convergence failure
            let n = DMatrix::from_fn(side, side, |i, j| m[(i, j)]);
            let e = n.symmetric_eigen();
            let mut order: Vec<usize> = (0..side).collect();
            order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
            let vals = order.iter().map(|&k| e.eigenvalues[k]).collect();
            let vecs = Mat::from_fn(side, side, |i, j| e.eigenvectors[(i, order[j])]);
            (vals, vecs)
        }
    }
}

/// Projects a scaled vectorization onto the psd cone in place.
pub(crate) fn project_psd(v: &mut [f64], side: usize) {
    if side == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let m = smat(v, side);
    let (vals, vecs) = sym_eig(&m);
    let npos = vals.iter().filter(|&&x| x > 0.0).count();
    if npos == side {
        return;
    }
    if npos == 0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let out = if npos <= side / 2 {
        let w = Mat::from_fn(side, npos, |i, j| vecs[(i, side - npos + j)] * vals[side - npos + j].sqrt());
        &w * w.transpose()
    } else {
        let nneg = side - npos;
        let w = Mat::from_fn(side, nneg, |i, j| vecs[(i, j)] * (-vals[j]).sqrt());
        &m + &w * w.transpose()
    };
    svec_into(&out, v);
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let f = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    sym_eig(&f).0[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_and_inner_product() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = smat(&v, 3);
        let mut back = [0.0; 6];
        svec_into(&m, &mut back);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let fro: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m[(i, j)] * m[(i, j)]).sum();
        let dot: f64 = v.iter().map(|x| x * x).sum();
        assert!((fro - dot).abs() < 1e-12);
        assert_eq!(tri_index(3, 1, 2), 4);
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        // diag(2, -1) rotated
        let c = 0.6f64;
        let s = 0.8f64;
        let a = DMatrix::from_row_slice(2, 2, &[2.0 * c * c - s * s, (2.0 + 1.0) * c * s, (2.0 + 1.0) * c * s, 2.0 * s * s - c * c]);
        let mut v = svec_nalgebra(&a);
        project_psd(&mut v, 2);
        let p = smat_nalgebra(&v, 2);
        let want = DMatrix::from_row_slice(2, 2, &[2.0 * c * c, 2.0 * c * s, 2.0 * c * s, 2.0 * s * s]);
        assert!((p - want).norm() < 1e-12);
    }

    #[test]
    fn projection_keeps_psd_and_idempotent() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = &a + a.transpose();
        let mut v = svec_nalgebra(&a);
        project_psd(&mut v, 5);
        assert!(min_eig(&smat_nalgebra(&v, 5)) > -1e-12);
        let before = v.clone();
        project_psd(&mut v, 5);
        for (x, y) in v.iter().zip(&before) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
