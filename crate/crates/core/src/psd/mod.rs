//! Psd decompositions through canonical polyadic decompositions of
//! flattenings.
//!
//! A psd decomposition `H = sum_i B_i^1 (x) ... (x) B_i^m` turns into the CPD
//! `T(H) = sum_i vec(B_i^1) (x) ... (x) vec(B_i^m)`. When that CPD is the unique
//! rank decomposition, `s` is the psd rank. For two modes the flattenings
//! `T1(H)` and `T2(H)` instead expose one factor as `a (x) conj(a)`, which
//! certifies separability directly.

mod als;
mod certify;
mod kernels;
mod tensor;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PsdStage, Result};
use crate::hermitian::{HermitianDecomposition, HermitianTensor, HermitianTerm, PsdDecomposition, C64};
use crate::poly::gauge_fix;

pub use als::{cpd_als, Cpd, CpdOptions};
pub use certify::{
    certify_psd_decomposition, compound_uniqueness_check, kruskal_uniqueness_check, phase_fix_to_hermitian,
    uniqueness_certificate, UniquenessCertificate, GAMMA_TOL, HERM_TOL, PSD_TOL, UNIQUENESS_TOL,
};
pub use kernels::{compound_matrix, khatri_rao, khatri_rao_all, kruskal_rank, realify_hermitian, MAX_KRUSKAL_VECTORS};
pub use tensor::{cubic_reshape, flatten_t, flatten_t1, flatten_t2, ComplexTensor};

/// Which flattening to decompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// `Cubic` for four or more modes, `T` for three, `T1` then `T2` for two.
    Auto,
    T,
    Cubic,
    T1,
    T2,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Auto => "auto",
            Route::T => "T",
            Route::Cubic => "cubic",
            Route::T1 => "T1",
            Route::T2 => "T2",
        })
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Route::Auto),
            "t" => Ok(Route::T),
            "cubic" => Ok(Route::Cubic),
            "t1" => Ok(Route::T1),
            "t2" => Ok(Route::T2),
            _ => Err(Error::Parse(format!("unknown route {s:?}; expected auto, T, cubic, T1 or T2"))),
        }
    }
}

/// Number of terms: fixed, or the smallest `s` up to a cap whose CPD fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSpec {
    Fixed(usize),
    Sweep(usize),
}

#[derive(Debug, Clone)]
pub struct PsdOptions {
    pub cpd: CpdOptions,
    /// Largest relative CPD fit accepted.
    pub fit_threshold: f64,
}

impl Default for PsdOptions {
    fn default() -> Self {
        PsdOptions { cpd: CpdOptions::default(), fit_threshold: 1e-8 }
    }
}

/// A verified psd decomposition.
#[derive(Debug, Clone)]
pub struct PsdResult {
    pub decomposition: PsdDecomposition,
    pub certificate: UniquenessCertificate,
    /// Route actually used.
    pub route: Route,
    /// Number of terms `s`.
    pub rank: usize,
    /// Relative fit of the CPD.
    pub fit: f64,
    /// `||H - sum_i B_i^1 (x) ... (x) B_i^m||_F`.
    pub residual: f64,
    /// The psd rank, when the CPD of `T(H)` (or its cubic reshaping) is
    /// certified unique. Otherwise `rank` is only an upper bound.
    pub psd_rank: Option<usize>,
}

fn fail<T>(stage: PsdStage, detail: String) -> Result<T> {
    Err(Error::PsdDecomposition { stage, detail })
}

fn fit_cpd(t: &ComplexTensor, s: usize, opts: &PsdOptions) -> Result<Cpd> {
    let cpd = cpd_als(t, s, &opts.cpd)?;
    if !(cpd.fit <= opts.fit_threshold) {
        return fail(PsdStage::Fit, format!("rank {s} CPD fit {:.3e} exceeds {:.1e}", cpd.fit, opts.fit_threshold));
    }
    Ok(cpd)
}

/// The smallest candidate rank whose CPD fits, and that CPD.
fn fit_rank(t: &ComplexTensor, rank: RankSpec, opts: &PsdOptions) -> Result<Cpd> {
    match rank {
        RankSpec::Fixed(s) => fit_cpd(t, s, opts),
        RankSpec::Sweep(max) => {
            let mut last = None;
            for s in 1..=max {
                match fit_cpd(t, s, opts) {
                    Ok(cpd) => return Ok(cpd),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap_or_else(|| Error::Malformed("rank sweep cap must be at least 1".into())))
        }
    }
}

fn route_t(h: &HermitianTensor, rank: RankSpec, opts: &PsdOptions) -> Result<PsdResult> {
    let cpd = fit_rank(&flatten_t(h), rank, opts)?;
    let (decomposition, certificate) = certify_psd_decomposition(h, &cpd)?;
    finish(h, decomposition, certificate, Route::T, &cpd, true)
}

fn route_cubic(h: &HermitianTensor, rank: RankSpec, opts: &PsdOptions) -> Result<PsdResult> {
    let t = flatten_t(h);
    let cpd3 = fit_rank(&cubic_reshape(&t)?, rank, opts)?;
    let tail: Vec<usize> = t.dims()[2..].to_vec();
    let split_opts = CpdOptions { restarts: 3, ..opts.cpd.clone() };
    let mut factors: Vec<DMatrix<C64>> = vec![cpd3.factors[0].clone(), cpd3.factors[1].clone()];
    factors.extend(tail.iter().map(|&n| DMatrix::zeros(n, cpd3.rank())));
    for r in 0..cpd3.rank() {
        let w = ComplexTensor::new(tail.clone(), cpd3.factors[2].column(r).iter().copied().collect())?;
        let one = cpd_als(&w, 1, &split_opts)?;
        if !(one.fit <= opts.fit_threshold) {
            return fail(PsdStage::Structure, format!("term {r}: merged factor is not a Kronecker product (fit {:.3e})", one.fit));
        }
        for (k, f) in one.factors.iter().enumerate() {
            factors[2 + k].set_column(r, &f.column(0));
        }
    }
    let full = Cpd { factors, fit: cpd3.fit, sweeps: cpd3.sweeps };
    let decomposition = certify::psd_factors(h, &full)?;
    let certificate = uniqueness_certificate(&cpd3, UNIQUENESS_TOL)?;
    finish(h, decomposition, certificate, Route::Cubic, &cpd3, true)
}

/// Layout of a two-mode flattening with one factor of the form `a (x) conj(a)`.
#[derive(Clone, Copy)]
struct Paired {
    pair: (usize, usize),
    matrix: usize,
    route: Route,
}

const T1_LAYOUT: Paired = Paired { pair: (0, 1), matrix: 2, route: Route::T1 };
const T2_LAYOUT: Paired = Paired { pair: (1, 2), matrix: 0, route: Route::T2 };

/// Replaces each pair `(a, b)` by `(a', conj(a'))` for the unit vector `a'`
/// averaging `a` and the phase-aligned `conj(b)`, then refits the matrix mode.
fn symmetrize(t: &ComplexTensor, cpd: &Cpd, layout: Paired) -> Result<Cpd> {
    let (p, q) = layout.pair;
    let mut factors = cpd.factors.clone();
    for r in 0..cpd.rank() {
        let a = cpd.factors[p].column(r).into_owned();
        let b = cpd.factors[q].column(r).conjugate();
        if a.norm() == 0.0 || b.norm() == 0.0 {
            return fail(PsdStage::Structure, format!("term {r}: zero vector factor"));
        }
        let (a, b) = (a.normalize(), b.normalize());
        let z = a.dotc(&b);
        let phase = if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) };
        let dev = (&b - &a * phase).norm();
        if dev > HERM_TOL {
            return fail(PsdStage::Structure, format!("term {r}: paired factors differ from conjugates by {dev:.3e}"));
        }
        let avg = (&a + &b * phase.conj()).normalize();
        factors[p].set_column(r, &avg);
        factors[q].set_column(r, &avg.conjugate());
    }
    Ok(als::refit_mode(t, factors, layout.matrix))
}

fn paired_factors(h: &HermitianTensor, cpd: &Cpd, layout: Paired) -> Result<PsdDecomposition> {
    let n_matrix = h.shape().dims()[if layout.matrix == 0 { 0 } else { 1 }];
    let mut terms = Vec::with_capacity(cpd.rank());
    for r in 0..cpd.rank() {
        let a = cpd.factors[layout.pair.0].column(r).into_owned();
        let (b, alpha) = phase_fix_to_hermitian(&cpd.factors[layout.matrix].column(r).into_owned(), n_matrix, HERM_TOL)
            .map_err(|e| match e {
                Error::PsdDecomposition { stage, detail } => {
                    Error::PsdDecomposition { stage, detail: format!("term {r}: {detail}") }
                }
                e => e,
            })?;
        let mut b = b;
        certify::fold_coefficient(r, alpha, &mut b)?;
        let b = certify::to_psd(r, layout.matrix, &b)?;
        let aa = &a * a.adjoint();
        terms.push(if layout.matrix == 0 { vec![b, aa] } else { vec![aa, b] });
    }
    let d = PsdDecomposition { terms };
    certify::check_residual(h, &d)?;
    Ok(d)
}

fn route_paired(h: &HermitianTensor, rank: RankSpec, opts: &PsdOptions, layout: Paired) -> Result<PsdResult> {
    let dims = h.shape().dims();
    if dims.len() != 2 {
        return Err(Error::InvalidShape(format!("{} needs two modes, got {:?}", layout.route, dims)));
    }
    // T1 is set up for n1 >= n2; otherwise work on the transposed tensor
    if layout.route == Route::T1 && dims[0] < dims[1] {
        let mut out = route_paired(&h.permute_modes(&[1, 0])?, rank, opts, layout)?;
        for term in &mut out.decomposition.terms {
            term.swap(0, 1);
        }
        return Ok(out);
    }
    let t = if layout.route == Route::T1 { flatten_t1(h)? } else { flatten_t2(h)? };
    let raw = fit_rank(&t, rank, opts)?;
    let cpd = symmetrize(&t, &raw, layout)?;
    if !(cpd.fit <= opts.fit_threshold) {
        return fail(PsdStage::Structure, format!("structured refit {:.3e} exceeds {:.1e}", cpd.fit, opts.fit_threshold));
    }
    let decomposition = paired_factors(h, &cpd, layout)?;
    let certificate = uniqueness_certificate(&cpd, UNIQUENESS_TOL)?;
    finish(h, decomposition, certificate, layout.route, &cpd, false)
}

fn finish(
    h: &HermitianTensor,
    decomposition: PsdDecomposition,
    certificate: UniquenessCertificate,
    route: Route,
    cpd: &Cpd,
    exact_rank: bool,
) -> Result<PsdResult> {
    let residual = crate::hermitian::abs_residual(h, &crate::hermitian::assemble_from_psd(&decomposition, h.shape())?)?;
    let rank = cpd.rank();
    let psd_rank = (exact_rank && certificate.is_certified()).then_some(rank);
    Ok(PsdResult { decomposition, certificate, route, rank, fit: cpd.fit, residual, psd_rank })
}

/// Flattens `h` along `route`, computes a CPD of the requested rank, turns it
/// into psd factors and checks them against `h`. An error means the attempt
/// was not certified; it never implies that `h` is not separable.
pub fn psd_decompose(h: &HermitianTensor, rank: RankSpec, route: Route, opts: &PsdOptions) -> Result<PsdResult> {
    if matches!(rank, RankSpec::Fixed(0) | RankSpec::Sweep(0)) {
        return Err(Error::Malformed("rank must be at least 1".into()));
    }
    let m = h.shape().order();
    if m < 2 {
        return Err(Error::InvalidShape("psd routes need at least two modes".into()));
    }
    match route {
        Route::T => route_t(h, rank, opts),
        Route::Cubic if m < 4 => Err(Error::InvalidShape(format!("cubic route needs at least 4 modes, got {m}"))),
        Route::Cubic => route_cubic(h, rank, opts),
        Route::T1 => route_paired(h, rank, opts, T1_LAYOUT),
        Route::T2 => route_paired(h, rank, opts, T2_LAYOUT),
        Route::Auto if m >= 4 => route_cubic(h, rank, opts),
        Route::Auto if m == 3 => route_t(h, rank, opts),
        Route::Auto => route_paired(h, rank, opts, T1_LAYOUT).or_else(|e1| {
            route_paired(h, rank, opts, T2_LAYOUT).map_err(|e2| match e2 {
                Error::PsdDecomposition { stage, detail } => {
                    Error::PsdDecomposition { stage, detail: format!("T1: {e1}; T2: {detail}") }
                }
                e => e,
            })
        }),
    }
}

/// Expands every psd factor into its eigenvectors, giving a separable
/// decomposition. Eigenvalues below `tol` times the largest are dropped.
pub fn psd_to_separable(d: &PsdDecomposition, tol: f64) -> HermitianDecomposition {
    let mut terms = Vec::new();
    for term in &d.terms {
        let spectra: Vec<Vec<(f64, DVector<C64>)>> = term
            .iter()
            .map(|b| {
                let eig = b.clone().symmetric_eigen();
                let top = eig.eigenvalues.max();
                (0..b.nrows())
                    .filter(|&i| eig.eigenvalues[i] > tol * top)
                    .map(|i| (eig.eigenvalues[i], gauge_fix(&eig.eigenvectors.column(i).into_owned())))
                    .collect()
            })
            .collect();
        let mut partial = vec![HermitianTerm { weight: 1.0, vectors: Vec::new() }];
        for spectrum in &spectra {
            partial = partial
                .iter()
                .flat_map(|t| {
                    spectrum.iter().map(move |(l, v)| {
                        let mut vectors = t.vectors.clone();
                        vectors.push(v.clone());
                        HermitianTerm { weight: t.weight * l, vectors }
                    })
                })
                .collect();
        }
        terms.extend(partial);
    }
    HermitianDecomposition { terms }
}
