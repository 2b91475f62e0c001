//! Reference tensors with known separability status, used by the tests and
//! the command-line fixtures.

use nalgebra::{DMatrix, DVector};

use crate::hermitian::{assemble_from_psd, unflatten_matrix, HermitianTensor, PsdDecomposition, Shape, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn shape(dims: &[usize]) -> Shape {
    Shape::new(dims.to_vec()).expect("valid shape")
}

/// Hankel tensor in `C^[2,2]` with `H = i1 + i2 + j1 + j2` (1-based); not
/// separable.
pub fn hankel() -> HermitianTensor {
    HermitianTensor::from_fn(shape(&[2, 2]), |i, j| c((i[0] + i[1] + j[0] + j[1] + 4) as f64, 0.0)).expect("Hermitian")
}

/// `H = i1 j1 + i2 j2` (1-based) in `C^[3,3]`; separable with two terms of
/// weight 42.
pub fn two_term() -> HermitianTensor {
    HermitianTensor::from_fn(shape(&[3, 3]), |i, j| c(((i[0] + 1) * (j[0] + 1) + (i[1] + 1) * (j[1] + 1)) as f64, 0.0))
        .expect("Hermitian")
}

/// Unit vectors of the two-term decomposition of [`two_term`].
pub fn two_term_vectors() -> (DVector<f64>, DVector<f64>) {
    let s14 = 14f64.sqrt();
    let s3 = 3f64.sqrt();
    (DVector::from_vec(vec![s14 / 14.0, s14 / 7.0, 3.0 / s14]), DVector::from_vec(vec![s3 / 3.0; 3]))
}

/// Mixture of two entangled pure states in `C^[2,2]`; not separable.
pub fn entangled_mixture() -> HermitianTensor {
    let s3 = 3f64.sqrt();
    let psi1 = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]) / c(s3, 0.0);
    let psi2 = DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 4.0), c(0.0, 0.0)]) / c(3.0 * 2f64.sqrt(), 0.0);
    let m = (&psi1 * psi1.adjoint() + &psi2 * psi2.adjoint()) * c(0.5, 0.0);
    unflatten_matrix(&m, shape(&[2, 2])).expect("Hermitian")
}

fn from_rows(n: usize, rows: &[&[(f64, f64)]]) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| c(rows[i][j].0, rows[i][j].1))
}

/// A separable tensor in `C^[2,2]` given by its flattening.
pub fn dense_2x2() -> HermitianTensor {
    let m = from_rows(
        4,
        &[
            &[(32.0, 0.0), (-8.0, 4.0), (5.0, 1.0), (-4.0, 0.0)],
            &[(-8.0, -4.0), (32.0, 0.0), (2.0, -8.0), (1.0, -3.0)],
            &[(5.0, -1.0), (2.0, 8.0), (28.0, 0.0), (-8.0, 5.0)],
            &[(-4.0, 0.0), (1.0, 3.0), (-8.0, -5.0), (27.0, 0.0)],
        ],
    );
    unflatten_matrix(&m, shape(&[2, 2])).expect("Hermitian")
}

/// A separable tensor in `C^[3,3]` given by its flattening.
pub fn dense_3x3() -> HermitianTensor {
    let m = from_rows(
        9,
        &[
            &[(10., 0.), (-2., -2.), (1., 1.), (7., -1.), (-2., -4.), (0., 2.), (-4., -6.), (0., 0.), (-2., 0.)],
            &[(-2., 2.), (10., 0.), (-6., 1.), (-2., 0.), (5., 3.), (-5., 1.), (-4., -4.), (-4., 2.), (3., 1.)],
            &[(1., -1.), (-6., -1.), (12., 0.), (2., 4.), (-5., -1.), (8., 1.), (4., 6.), (-3., -1.), (-4., -2.)],
            &[(7., 1.), (-2., 0.), (2., -4.), (9., 0.), (-1., -3.), (-1., -1.), (1., -7.), (-2., 0.), (-4., 2.)],
            &[(-2., 4.), (5., -3.), (-5., 1.), (-1., 3.), (8., 0.), (-5., -1.), (0., -2.), (4., 0.), (0., 2.)],
            &[(0., -2.), (-5., -1.), (8., -1.), (-1., 1.), (-5., 1.), (11., 0.), (2., 4.), (-2., 4.), (3., -5.)],
            &[(-4., 6.), (-4., 4.), (4., -6.), (1., 7.), (0., 2.), (2., -4.), (20., 0.), (-3., -1.), (2., 0.)],
            &[(0., 0.), (-4., -2.), (-3., 1.), (-2., 0.), (4., 0.), (-2., -4.), (-3., 1.), (17., 0.), (-9., 1.)],
            &[(-2., 0.), (3., -1.), (-4., 2.), (-4., -2.), (0., -2.), (3., 5.), (2., 0.), (-9., -1.), (22., 0.)],
        ],
    );
    unflatten_matrix(&m, shape(&[3, 3])).expect("Hermitian")
}

/// Factors `A`, `B` of the three-term psd decomposition in `C^[8,8,8]`.
pub fn psd_factors_8() -> (DMatrix<C64>, DMatrix<C64>) {
    let a = DMatrix::from_fn(8, 8, |i, j| {
        let (i1, j1) = (i as f64 + 1.0, j as f64 + 1.0);
        if i == j {
            c(7.0 + i1 * i1, 0.0)
        } else {
            c(6.0, j1 - i1)
        }
    });
    let b = DMatrix::from_fn(8, 8, |i, j| {
        let d = i as f64 - j as f64;
        (0..8).map(|k| C64::from_polar(1.0, k as f64 / 8.0 * d * std::f64::consts::PI)).sum()
    });
    (a, b)
}

/// `A (x) B (x) I + B (x) I (x) A + I (x) A (x) B` in `C^[8,8,8]`.
pub fn psd_decomposition_8() -> PsdDecomposition {
    let (a, b) = psd_factors_8();
    let id = DMatrix::<C64>::identity(8, 8);
    PsdDecomposition {
        terms: vec![vec![a.clone(), b.clone(), id.clone()], vec![b.clone(), id.clone(), a.clone()], vec![id, a, b]],
    }
}

pub fn psd_tensor_8() -> HermitianTensor {
    assemble_from_psd(&psd_decomposition_8(), &shape(&[8, 8, 8])).expect("consistent factors")
}

/// `(4 i1 j1 + i (j1 - i1) + 1) delta(i2, j2) + i i1 j1 (i2 - j2)` (1-based)
/// in `C^[4,3]`.
pub fn two_mode_4x3() -> HermitianTensor {
    HermitianTensor::from_fn(shape(&[4, 3]), |i, j| {
        let (i1, i2, j1, j2) = ((i[0] + 1) as f64, (i[1] + 1) as f64, (j[0] + 1) as f64, (j[1] + 1) as f64);
        let delta = if i[1] == j[1] { 1.0 } else { 0.0 };
        c(4.0 * i1 * j1 + 1.0, j1 - i1) * delta + c(0.0, i1 * j1 * (i2 - j2))
    })
    .expect("Hermitian")
}

/// The two `(a, B)` terms with `T1(H) = sum a (x) conj(a) (x) vec(B)` for
/// [`two_mode_4x3`].
pub fn two_mode_4x3_terms() -> Vec<(DVector<C64>, DMatrix<C64>)> {
    let a1 = DVector::from_fn(4, |i, _| c(i as f64 + 1.0, 0.0));
    let b1 = DMatrix::from_fn(3, 3, |i, j| if i == j { c(3.0, 0.0) } else { c(0.0, i as f64 - j as f64) });
    let a2 = DVector::from_fn(4, |i, _| c(i as f64 + 1.0, 1.0));
    vec![(a1, b1), (a2, DMatrix::identity(3, 3))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::{flatten_matrix, min_eigenvalue};

    #[test]
    fn instances_are_well_formed() {
        assert_eq!(hankel().get(&[1, 1], &[1, 1]), c(8.0, 0.0));
        assert_eq!(two_term().get(&[2, 0], &[1, 2]), c(9.0, 0.0));
        let rho = flatten_matrix(&entangled_mixture());
        let tr: C64 = (0..4).map(|i| rho[(i, i)]).sum();
        assert!((tr - c(1.0, 0.0)).norm() < 1e-14);
        assert!(min_eigenvalue(&flatten_matrix(&dense_2x2())) > 0.0);
        assert!(min_eigenvalue(&flatten_matrix(&dense_3x3())) > -1e-10);
        let (a, b) = psd_factors_8();
        assert!(min_eigenvalue(&a) > 0.0);
        assert!(min_eigenvalue(&b) > -1e-12);
    }

    #[test]
    fn two_mode_terms_reproduce_tensor() {
        let h = two_mode_4x3();
        let mut sum = DMatrix::<C64>::zeros(12, 12);
        for (a, b) in two_mode_4x3_terms() {
            sum += (&a * a.adjoint()).kronecker(&b);
        }
        assert!((sum - flatten_matrix(&h)).norm() < 1e-12);
    }
}
