//! Seeded random instances: separable tensors, psd-decomposable tensors and
//! unstructured Hermitian tensors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hermitian::{
    assemble_from_psd, from_decomposition, unflatten_matrix, HermitianDecomposition, HermitianTensor, HermitianTerm,
    PsdDecomposition, Shape, C64,
};
use crate::poly::gauge_fix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian(rng: &mut impl Rng, n: usize) -> DVector<C64> {
    DVector::from_fn(n, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

/// Uniform on the unit sphere of `C^n`, gauge-fixed.
pub fn unit_vector(rng: &mut impl Rng, n: usize) -> DVector<C64> {
    let v = complex_gaussian(rng, n);
    let norm = v.norm();
    gauge_fix(&(v / C64::new(norm, 0.0)))
}

/// `G G^*` with `G` complex Gaussian, scaled to unit Frobenius norm.
pub fn psd_matrix(rng: &mut impl Rng, n: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let b = &g * g.adjoint();
    let norm = b.norm();
    let b = b / C64::new(norm, 0.0);
    (&b + b.adjoint()) * C64::new(0.5, 0.0)
}

fn check_terms(terms: usize) -> Result<()> {
    if terms == 0 {
        return Err(Error::Malformed("at least one term is required".into()));
    }
    Ok(())
}

/// `r` gauge-fixed unit vectors per mode with weights uniform in `[0.5, 1.5]`.
pub fn random_separable(shape: &Shape, terms: usize, seed: u64) -> Result<(HermitianTensor, HermitianDecomposition)> {
    check_terms(terms)?;
    let mut rng = rng(seed);
    let d = HermitianDecomposition {
        terms: (0..terms)
            .map(|_| {
                let weight = rng.random_range(0.5..1.5);
                let vectors = shape.dims().iter().map(|&n| unit_vector(&mut rng, n)).collect();
                HermitianTerm { weight, vectors }
            })
            .collect(),
    };
    Ok((from_decomposition(&d, shape)?, d))
}

/// `s` terms of Kronecker products of random full-rank psd factors.
pub fn random_psd(shape: &Shape, terms: usize, seed: u64) -> Result<(HermitianTensor, PsdDecomposition)> {
    check_terms(terms)?;
    let mut rng = rng(seed);
    let d = PsdDecomposition {
        terms: (0..terms).map(|_| shape.dims().iter().map(|&n| psd_matrix(&mut rng, n)).collect()).collect(),
    };
    Ok((assemble_from_psd(&d, shape)?, d))
}

/// Hermitian flattening with Gaussian entries; typically not separable,
/// but nothing is guaranteed.
pub fn random_hermitian(shape: &Shape, seed: u64) -> Result<HermitianTensor> {
    let mut rng = rng(seed);
    let m = shape.flat_size();
    let g = DMatrix::from_fn(m, m, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    unflatten_matrix(&h, shape.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::{min_eigenvalue, residual};

    #[test]
    fn separable_instances_match_their_decomposition() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let (h, d) = random_separable(&shape, 3, 5).unwrap();
        assert!(residual(&h, &from_decomposition(&d, &shape).unwrap()).unwrap() < 1e-15);
        for t in &d.terms {
            assert!(t.weight >= 0.5 && t.weight < 1.5);
            for v in &t.vectors {
                assert!((v.norm() - 1.0).abs() < 1e-14);
                assert!(v[0].im == 0.0 && v[0].re >= 0.0);
            }
        }
        assert_eq!(random_separable(&shape, 3, 5).unwrap().0, h);
        assert_ne!(random_separable(&shape, 3, 6).unwrap().0, h);
    }

    #[test]
    fn psd_factors_are_psd() {
        let shape = Shape::new(vec![2, 2, 2]).unwrap();
        let (_, d) = random_psd(&shape, 2, 1).unwrap();
        for term in &d.terms {
            for b in term {
                assert!(min_eigenvalue(b) > 0.0);
                assert!((b.norm() - 1.0).abs() < 1e-12);
            }
        }
        assert!(random_separable(&shape, 0, 1).is_err());
    }

    #[test]
    fn hermitian_instances_are_hermitian() {
        let shape = Shape::new(vec![2, 2]).unwrap();
        let h = random_hermitian(&shape, 3).unwrap();
        let m = crate::hermitian::flatten_matrix(&h);
        assert!((&m - m.adjoint()).norm() < 1e-15);
    }
}
