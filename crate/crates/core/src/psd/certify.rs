//! From a CPD of a flattening back to psd factors, with uniqueness
//! certificates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PsdStage, Result};
use crate::hermitian::{abs_residual, assemble_from_psd, HermitianTensor, PsdDecomposition, C64};

use super::als::Cpd;
use super::kernels::{compound_matrix, khatri_rao, kruskal_rank, singular_values};

/// Relative tolerance for [`phase_fix_to_hermitian`].
pub const HERM_TOL: f64 = 1e-6;
/// Relative tolerance on the imaginary part of a term coefficient.
pub const GAMMA_TOL: f64 = 1e-8;
/// Negative eigenvalues down to `-PSD_TOL * ||B||` are clipped.
pub const PSD_TOL: f64 = 1e-8;
/// Independence threshold for the uniqueness checks.
pub const UNIQUENESS_TOL: f64 = 1e-6;

/// Sufficient condition under which a CPD is the unique rank decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum UniquenessCertificate {
    /// `sum_j k_j >= 2 s + m - 1`.
    Kruskal { kruskal_ranks: Vec<usize>, rank: usize },
    /// `rank(A) = s` and `C(B) (.) C(C)` has independent columns.
    CompoundMatrix { mode: usize, rank_a: usize, sigma_min: f64, sigma_max: f64 },
    None { kruskal_ranks: Vec<usize> },
}

impl UniquenessCertificate {
    pub fn is_certified(&self) -> bool {
        !matches!(self, UniquenessCertificate::None { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            UniquenessCertificate::Kruskal { .. } => "Kruskal",
            UniquenessCertificate::CompoundMatrix { .. } => "CompoundMatrix",
            UniquenessCertificate::None { .. } => "None",
        }
    }
}

fn fail<T>(stage: PsdStage, detail: String) -> Result<T> {
    Err(Error::PsdDecomposition { stage, detail })
}

/// Writes `v` (length `n^2`, row-major) as `alpha * B` with `B` Hermitian,
/// `|alpha| = 1` and `trace(B) >= 0`.
pub fn phase_fix_to_hermitian(v: &DVector<C64>, n: usize, herm_tol: f64) -> Result<(DMatrix<C64>, C64)> {
    if v.len() != n * n {
        return Err(Error::DimensionMismatch(format!("vector of length {} is not a {n}x{n} matrix", v.len())));
    }
    let m = DMatrix::from_row_slice(n, n, v.as_slice());
    let nsq = m.norm_squared();
    if nsq == 0.0 {
        return fail(PsdStage::Structure, "zero factor".into());
    }
    // tr(V^2) / ||V||^2 = alpha / conj(alpha) when V = alpha B
    let rho = (&m * &m).trace() / nsq;
    if (rho.norm() - 1.0).abs() > herm_tol {
        return fail(PsdStage::Structure, format!("|rho| = {:.3e} is not 1", rho.norm()));
    }
    let theta = -rho.arg() / 2.0;
    let b0 = &m * C64::from_polar(1.0, theta);
    let asym = (&b0 - b0.adjoint()).norm() / b0.norm();
    if asym > herm_tol {
        return fail(PsdStage::Structure, format!("Hermitian residual {asym:.3e}"));
    }
    let mut b = (&b0 + b0.adjoint()) * C64::new(0.5, 0.0);
    let mut alpha = C64::from_polar(1.0, -theta);
    if b.trace().re < 0.0 {
        b = -b;
        alpha = -alpha;
    }
    Ok((b, alpha))
}

/// Clips eigenvalues in `[-tol ||B||, 0)` to zero; more negative is an error.
pub(crate) fn project_psd(b: &DMatrix<C64>, tol: f64) -> std::result::Result<DMatrix<C64>, f64> {
    let eig = b.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -tol * b.norm() {
        return Err(min);
    }
    if min >= 0.0 {
        return Ok(b.clone());
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0)));
    let p = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
    Ok((&p + p.adjoint()) * C64::new(0.5, 0.0))
}

/// Kruskal's condition on the factor matrices.
pub fn kruskal_uniqueness_check(cpd: &Cpd, tol: f64) -> Result<UniquenessCertificate> {
    let ranks = cpd.factors.iter().map(|f| kruskal_rank(f, tol)).collect::<Result<Vec<_>>>()?;
    let s = cpd.rank();
    if s == 1 && ranks.iter().all(|&k| k == 1) || ranks.iter().sum::<usize>() >= 2 * s + cpd.order() - 1 {
        Ok(UniquenessCertificate::Kruskal { kruskal_ranks: ranks, rank: s })
    } else {
        Ok(UniquenessCertificate::None { kruskal_ranks: ranks })
    }
}

/// Compound-matrix condition for three-mode CPDs; `A` is the mode with the
/// most rows (first on ties).
pub fn compound_uniqueness_check(cpd: &Cpd, tol: f64) -> Result<UniquenessCertificate> {
    if cpd.order() != 3 {
        return Err(Error::Malformed(format!("compound check needs 3 modes, got {}", cpd.order())));
    }
    let s = cpd.rank();
    let none = || -> Result<UniquenessCertificate> {
        let ranks = cpd.factors.iter().map(|f| kruskal_rank(f, tol)).collect::<Result<Vec<_>>>()?;
        Ok(UniquenessCertificate::None { kruskal_ranks: ranks })
    };
    let mode = (0..3).fold(0, |best, k| if cpd.factors[k].nrows() > cpd.factors[best].nrows() { k } else { best });
    let a = &cpd.factors[mode];
    if a.nrows() < s {
        return none();
    }
    let sa = singular_values(a);
    if s > 0 && sa[s - 1] <= tol * sa[0] {
        return none();
    }
    if s == 1 {
        return Ok(UniquenessCertificate::CompoundMatrix { mode, rank_a: 1, sigma_min: 1.0, sigma_max: 1.0 });
    }
    let rest: Vec<&DMatrix<C64>> = (0..3).filter(|&k| k != mode).map(|k| &cpd.factors[k]).collect();
    if rest.iter().any(|f| f.nrows() < 2) {
        return none();
    }
    let kr = khatri_rao(&compound_matrix(rest[0])?, &compound_matrix(rest[1])?)?;
    if kr.ncols() > kr.nrows() {
        return none();
    }
    let sv = singular_values(&kr);
    let (smin, smax) = (sv[sv.len() - 1], sv[0]);
    if smin > tol * smax {
        Ok(UniquenessCertificate::CompoundMatrix { mode, rank_a: s, sigma_min: smin, sigma_max: smax })
    } else {
        none()
    }
}

/// Kruskal first, then the compound-matrix condition for three modes.
pub fn uniqueness_certificate(cpd: &Cpd, tol: f64) -> Result<UniquenessCertificate> {
    let k = kruskal_uniqueness_check(cpd, tol)?;
    if k.is_certified() || cpd.order() != 3 {
        return Ok(k);
    }
    let c = compound_uniqueness_check(cpd, tol)?;
    Ok(if c.is_certified() { c } else { k })
}

pub(crate) fn check_residual(h: &HermitianTensor, d: &PsdDecomposition) -> Result<f64> {
    let res = abs_residual(h, &assemble_from_psd(d, h.shape())?)?;
    let bound = 1e-6 * (1.0 + h.norm());
    if res > bound {
        return fail(PsdStage::Residual, format!("residual {res:.3e} exceeds {bound:.3e}"));
    }
    Ok(res)
}

/// Folds the unit phases into one real positive coefficient per term and
/// applies it to the first factor.
pub(crate) fn fold_coefficient(term: usize, gamma: C64, first: &mut DMatrix<C64>) -> Result<()> {
    if gamma.im.abs() > GAMMA_TOL * gamma.norm() {
        return fail(PsdStage::Positivity, format!("term {term}: coefficient {gamma} is not real"));
    }
    if gamma.re <= 0.0 {
        return fail(PsdStage::Positivity, format!("term {term}: coefficient {:.3e} is not positive", gamma.re));
    }
    *first *= C64::new(gamma.re, 0.0);
    Ok(())
}

pub(crate) fn to_psd(term: usize, mode: usize, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    project_psd(b, PSD_TOL).or_else(|min| {
        fail(PsdStage::Psd, format!("term {term}, mode {mode}: eigenvalue {min:.3e} below -{PSD_TOL:.0e} ||B||"))
    })
}

/// Turns a CPD of `T(H)` into psd factors and checks that they reproduce
/// `H`, then looks for a uniqueness certificate.
pub fn certify_psd_decomposition(h: &HermitianTensor, cpd: &Cpd) -> Result<(PsdDecomposition, UniquenessCertificate)> {
    let d = psd_factors(h, cpd)?;
    Ok((d, uniqueness_certificate(cpd, UNIQUENESS_TOL)?))
}

/// The psd factors of a CPD of `T(H)`, checked against `H`.
pub(crate) fn psd_factors(h: &HermitianTensor, cpd: &Cpd) -> Result<PsdDecomposition> {
    let dims = h.shape().dims();
    if cpd.order() != dims.len() || cpd.factors.iter().zip(dims).any(|(f, n)| f.nrows() != n * n) {
        return Err(Error::DimensionMismatch("CPD does not match T(H)".into()));
    }
    let mut terms = Vec::with_capacity(cpd.rank());
    for (i, cols) in (0..cpd.rank()).map(|i| (i, cpd.term(i))) {
        let mut gamma = C64::new(1.0, 0.0);
        let mut mats = Vec::with_capacity(dims.len());
        for (k, (v, &n)) in cols.iter().zip(dims).enumerate() {
            let (b, alpha) = phase_fix_to_hermitian(v, n, HERM_TOL).map_err(|e| match e {
                Error::PsdDecomposition { stage, detail } => {
                    Error::PsdDecomposition { stage, detail: format!("term {i}, mode {k}: {detail}") }
                }
                e => e,
            })?;
            gamma *= alpha;
            mats.push(b);
        }
        fold_coefficient(i, gamma, &mut mats[0])?;
        let mats = mats.iter().enumerate().map(|(k, b)| to_psd(i, k, b)).collect::<Result<Vec<_>>>()?;
        terms.push(mats);
    }
    let d = PsdDecomposition { terms };
    check_residual(h, &d)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::Shape;
    use crate::random::{complex_gaussian, psd_matrix, rng};

    fn vec_of(b: &DMatrix<C64>) -> DVector<C64> {
        DVector::from_row_slice(b.transpose().as_slice())
    }

    #[test]
    fn phase_fix_identity() {
        let (b, alpha) = phase_fix_to_hermitian(&vec_of(&DMatrix::identity(2, 2)), 2, HERM_TOL).unwrap();
        assert!((b - DMatrix::<C64>::identity(2, 2)).norm() < 1e-15);
        assert!((alpha - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_fix_recovers_rotated_hermitian() {
        let mut r = rng(8);
        let g = DMatrix::from_column_slice(3, 3, complex_gaussian(&mut r, 9).as_slice());
        let mut h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        if h.trace().re < 0.0 {
            h = -h;
        }
        let v = vec_of(&h) * C64::new(0.0, 1.0);
        let (b, alpha) = phase_fix_to_hermitian(&v, 3, HERM_TOL).unwrap();
        assert!((b - &h).norm() < 1e-12);
        assert!((alpha - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_fix_rejects_non_hermitian_multiples() {
        let mut r = rng(3);
        let g = DMatrix::from_column_slice(3, 3, complex_gaussian(&mut r, 9).as_slice());
        assert!(matches!(
            phase_fix_to_hermitian(&vec_of(&g), 3, HERM_TOL),
            Err(Error::PsdDecomposition { stage: PsdStage::Structure, .. })
        ));
    }

    #[test]
    fn psd_projection_clips_only_tiny_negatives() {
        let mut r = rng(1);
        let b = psd_matrix(&mut r, 3);
        let v = b.clone().symmetric_eigen().eigenvectors.column(0).into_owned();
        let tiny = &b - &v * v.adjoint() * C64::new(b.clone().symmetric_eigen().eigenvalues[0] + 1e-12, 0.0);
        let p = project_psd(&tiny, PSD_TOL).unwrap();
        assert!(p.clone().symmetric_eigen().eigenvalues.min() >= -1e-15);
        let neg = &b - DMatrix::identity(3, 3) * C64::new(1.0, 0.0);
        assert!(project_psd(&neg, PSD_TOL).is_err());
    }

    fn cpd_of(factors: Vec<DMatrix<C64>>) -> Cpd {
        Cpd { factors, fit: 0.0, sweeps: 0 }
    }

    fn generic(p: usize, s: usize, seed: u64) -> DMatrix<C64> {
        let mut r = rng(seed);
        DMatrix::from_column_slice(p, s, complex_gaussian(&mut r, p * s).as_slice())
    }

    #[test]
    fn kruskal_check_examples() {
        let c = cpd_of(vec![generic(4, 2, 1), generic(4, 2, 2), generic(4, 2, 3)]);
        assert!(matches!(kruskal_uniqueness_check(&c, 1e-8).unwrap(), UniquenessCertificate::Kruskal { .. }));
        let col = generic(4, 1, 5);
        let par = DMatrix::from_columns(&[col.column(0), col.column(0)]);
        let c = cpd_of(vec![generic(4, 2, 1), par, generic(4, 2, 3)]);
        assert!(!kruskal_uniqueness_check(&c, 1e-8).unwrap().is_certified());
        let c = cpd_of(vec![generic(1, 1, 1), generic(3, 1, 2), generic(2, 1, 3)]);
        assert!(kruskal_uniqueness_check(&c, 1e-8).unwrap().is_certified());
    }

    #[test]
    fn compound_check_examples() {
        // s = 6 with mode sizes (9, 4, 3): Kruskal gives 6 + 4 + 3 < 14
        let c = cpd_of(vec![generic(9, 6, 1), generic(4, 6, 2), generic(3, 6, 3)]);
        assert!(!kruskal_uniqueness_check(&c, 1e-8).unwrap().is_certified());
        let cert = compound_uniqueness_check(&c, 1e-8).unwrap();
        assert!(matches!(cert, UniquenessCertificate::CompoundMatrix { mode: 0, rank_a: 6, .. }), "{cert:?}");
        assert_eq!(uniqueness_certificate(&c, 1e-8).unwrap().kind(), "CompoundMatrix");
        let col = generic(4, 1, 5);
        let par = DMatrix::from_columns(&[col.column(0), col.column(0)]);
        let c = cpd_of(vec![generic(5, 2, 1), par, generic(4, 2, 3)]);
        assert!(!compound_uniqueness_check(&c, 1e-8).unwrap().is_certified());
        let c = cpd_of(vec![generic(2, 1, 1), generic(3, 1, 2), generic(2, 1, 3)]);
        assert!(compound_uniqueness_check(&c, 1e-8).unwrap().is_certified());
    }

    #[test]
    fn negative_coefficient_is_rejected() {
        let mut r = rng(4);
        let shape = Shape::new(vec![2, 2, 2]).unwrap();
        let terms: Vec<Vec<DMatrix<C64>>> = (0..2).map(|_| (0..3).map(|_| psd_matrix(&mut r, 2)).collect()).collect();
        let mut neg = terms.clone();
        neg[1][0] *= C64::new(-0.5, 0.0);
        let h = assemble_from_psd(&PsdDecomposition { terms: neg.clone() }, &shape).unwrap();
        let factors = (0..3)
            .map(|k| DMatrix::from_columns(&neg.iter().map(|t| vec_of(&t[k])).collect::<Vec<_>>()))
            .collect();
        let err = certify_psd_decomposition(&h, &cpd_of(factors)).unwrap_err();
        assert!(matches!(err, Error::PsdDecomposition { stage: PsdStage::Positivity, .. }), "{err}");
    }
}
