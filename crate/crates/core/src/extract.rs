//! Flat truncation, atom extraction from flat moment sequences, and the
//! detection loop over relaxation orders.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{abs_residual, from_decomposition, HermitianDecomposition, HermitianTensor, HermitianTerm};
use crate::moment::{assemble_sdp, moment_matrix, Tms};
use crate::poly::{complex_lift, generic_objective, monomial_count, MonomialBasis, VariableLayout};
use crate::refine::refine;
use crate::sdp::{solve_monitored, verify_certificate, DualSolution, Residuals, SdpProblem, SolveOptions, SolveStatus};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
pub const DEFAULT_EXTRACT_TOL: f64 = 1e-6;
pub const SPHERE_TOL: f64 = 1e-4;
/// Looser rank tolerances tried, after the configured one, on moment vectors
/// that are not flat at it. Any decomposition found this way is still
/// accepted only through the reconstruction check.
pub const FALLBACK_RANK_TOLS: [f64; 3] = [1e-4, 1e-3, 1e-2];

/// Number of singular values above `tau * sigma_max`.
pub fn numeric_rank(m: &DMatrix<f64>, tau: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tau * max).count()
}

/// `rank M_{t-1}(w|_2t) == rank M_t(w|_2t)`, both ranks measured against the
/// largest singular value of `M_t`.
pub fn flat_truncation_check(w: &Tms, t: usize, tau: f64) -> Result<bool> {
    if t == 0 {
        return Err(Error::Malformed("flat truncation needs t >= 1".into()));
    }
    let mt = moment_matrix(&w.truncate(2 * t)?, t)?;
    let low = monomial_count(w.nvars(), t - 1);
    let sv = mt.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return Ok(true);
    }
    let cut = tau * max;
    let r_t = sv.iter().filter(|&&s| s > cut).count();
    let r_low = mt.view((0, 0), (low, low)).into_owned().singular_values().iter().filter(|&&s| s > cut).count();
    Ok(r_t == r_low)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub point: Vec<f64>,
}

/// `sum_i lambda_i delta_{v_i}`, representing a tms of degree `degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    pub degree: usize,
}

impl AtomicMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn tms(&self, nvars: usize) -> Result<Tms> {
        let atoms: Vec<(f64, Vec<f64>)> = self.atoms.iter().map(|a| (a.weight, a.point.clone())).collect();
        Tms::from_atoms(nvars, self.degree, &atoms)
    }
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub seed: u64,
    /// Relative residual bound: `||sum lambda_i [v_i] - w|| <= tol (1 + ||w||)`.
    pub extract_tol: f64,
    /// When set, atoms are projected onto the gauge-fixed multi-sphere.
    pub layout: Option<VariableLayout>,
    /// Largest violation of `||x_j||^2 = 1` or `(x_j)_1 >= 0` repaired by
    /// the projection.
    pub sphere_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { seed: 0, extract_tol: DEFAULT_EXTRACT_TOL, layout: None, sphere_tol: SPHERE_TOL }
    }
}

/// Rows of `f` chosen greedily by largest residual norm (pivoted
/// Gram-Schmidt on rows), restricted to the first `limit` rows.
fn pivot_rows(f: &DMatrix<f64>, limit: usize, r: usize) -> Result<Vec<usize>> {
    let mut rows: Vec<DVector<f64>> = (0..limit).map(|i| f.row(i).transpose()).collect();
    let scale = rows.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(r);
    for _ in 0..r {
        let (best, norm) = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, v)| (i, v.norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || norm <= 1e-9 * scale {
            return Err(Error::Extraction("moment matrix is not flat over the low-degree monomials".into()));
        }
        let q = &rows[best] / norm;
        chosen.push(best);
        for v in rows.iter_mut() {
            let c = v.dot(&q);
            *v -= &q * c;
        }
    }
    Ok(chosen)
}

fn fit_weights(points: &[Vec<f64>], w: &Tms) -> Result<(Vec<f64>, f64)> {
    let d = w.degree();
    let basis = MonomialBasis::new(w.nvars(), d);
    let len = w.values().len();
    let mut v = DMatrix::zeros(len, points.len());
    for (i, p) in points.iter().enumerate() {
        v.set_column(i, &basis.evaluate(p, d));
    }
    let rhs = DVector::from_column_slice(w.values());
    let lam = v.clone().svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Numerical(e.into()))?;
    let res = (&v * &lam - &rhs).norm();
    Ok((lam.iter().copied().collect(), res))
}

fn project_to_sphere(point: &mut [f64], layout: &VariableLayout, tol: f64) -> Result<()> {
    for j in 0..layout.order() {
        let block = layout.block(j);
        let norm = point[block.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm * norm - 1.0).abs() > tol {
            return Err(Error::Extraction(format!("atom block {j} has squared norm {:.3e}", norm * norm)));
        }
        let lead = layout.re_var(j, 0);
        if point[lead] < -tol {
            return Err(Error::Extraction(format!("atom block {j} has negative leading entry {:.3e}", point[lead])));
        }
        point[lead] = point[lead].max(0.0);
        let norm = point[block.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        point[block].iter_mut().for_each(|x| *x /= norm);
    }
    Ok(())
}

/// Recovers the atoms of a flat `w|_2t` from the Schur form of a random
/// combination of multiplication matrices.
pub fn extract_atoms(w: &Tms, t: usize, tau: f64, opts: &ExtractOptions) -> Result<AtomicMeasure> {
    if t == 0 {
        return Err(Error::Malformed("extraction needs t >= 1".into()));
    }
    let n = w.nvars();
    if let Some(layout) = &opts.layout {
        if layout.nvars() != n {
            return Err(Error::DimensionMismatch(format!("layout has {} variables, tms has {n}", layout.nvars())));
        }
    }
    let wt = w.truncate(2 * t)?;
    let m = moment_matrix(&wt, t)?;
    let r = numeric_rank(&m, tau);
    if r == 0 {
        return Ok(AtomicMeasure { atoms: vec![], degree: 2 * t });
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let side = m.nrows();
    let mut f = DMatrix::zeros(side, r);
    for (c, &k) in order.iter().take(r).enumerate() {
        let lam = eig.eigenvalues[k];
        if lam <= 0.0 {
            return Err(Error::Extraction("moment matrix is not positive semidefinite".into()));
        }
        f.set_column(c, &(eig.eigenvectors.column(k) * lam.sqrt()));
    }
    let low = monomial_count(n, t - 1);
    let beta = pivot_rows(&f, low, r)?;
    let fb = DMatrix::from_fn(r, r, |i, j| f[(beta[i], j)]);
    let fb_inv = fb.try_inverse().ok_or_else(|| Error::Extraction("singular basis block".into()))?;
    let u = &f * fb_inv;
    let basis = MonomialBasis::new(n, 2 * t);
    let mult: Vec<DMatrix<f64>> = (0..n)
        .map(|q| {
            DMatrix::from_fn(r, r, |i, j| {
                let mono = basis.monomial(beta[i]);
                let mut e = mono.0.clone();
                e[q] += 1;
                u[(basis.index(&e), j)]
            })
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut xi: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = xi.iter().sum();
    xi.iter_mut().for_each(|x| *x /= total);
    let mut combo = DMatrix::zeros(r, r);
    for (x, nq) in xi.iter().zip(&mult) {
        combo += nq * *x;
    }
    let scale = combo.norm().max(f64::MIN_POSITIVE);
    let (q, tri) = combo.schur().unpack();
    for i in 1..r {
        if tri[(i, i - 1)].abs() > 1e-8 * scale {
            return Err(Error::Extraction("combination has complex eigenvalues".into()));
        }
    }
    let mut points: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let qi = q.column(i);
            mult.iter().map(|nq| qi.dot(&(nq * qi))).collect()
        })
        .collect();

    let (lam, _) = fit_weights(&points, &wt)?;
    let lmax = lam.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return Err(Error::Extraction("no positive weight".into()));
    }
    let keep: Vec<usize> = (0..r).filter(|&i| lam[i] > tau * lmax).collect();
    points = keep.iter().map(|&i| points[i].clone()).collect();
    let (mut lam, res) = fit_weights(&points, &wt)?;
    let wnorm = DVector::from_column_slice(wt.values()).norm();
    if res > opts.extract_tol * (1.0 + wnorm) {
        return Err(Error::Extraction(format!("residual {res:.3e} exceeds tolerance")));
    }
    if let Some(layout) = &opts.layout {
        for p in points.iter_mut() {
            project_to_sphere(p, layout, opts.sphere_tol)?;
        }
        lam = fit_weights(&points, &wt)?.0;
    }
    if lam.iter().any(|&l| l <= 0.0) {
        return Err(Error::Extraction("nonpositive weight after projection".into()));
    }
    Ok(AtomicMeasure {
        atoms: lam.into_iter().zip(points).map(|(weight, point)| Atom { weight, point }).collect(),
        degree: 2 * t,
    })
}

/// Settings of the detection loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmOptions {
    /// Largest relaxation order tried; orders start at the tensor order.
    pub max_order: usize,
    pub seed: u64,
    pub rank_tol: f64,
    pub extract_tol: f64,
    /// Absolute Frobenius tolerance on the reconstruction; `None` means
    /// `1e-5 (1 + ||H||_F)`.
    pub accept_tol: Option<f64>,
    /// Fresh random combinations tried after a failed extraction.
    pub xi_retries: usize,
    /// Polish extracted decompositions against the tensor.
    pub refine: bool,
    pub solver: SolveOptions,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        AlgorithmOptions {
            max_order: 3,
            seed: 0,
            rank_tol: DEFAULT_RANK_TOL,
            extract_tol: DEFAULT_EXTRACT_TOL,
            accept_tol: None,
            xi_retries: 3,
            refine: true,
            solver: SolveOptions::default(),
        }
    }
}

impl AlgorithmOptions {
    pub fn accept_tol_for(&self, h: &HermitianTensor) -> f64 {
        self.accept_tol.unwrap_or(1e-5 * (1.0 + h.norm()))
    }
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Separable { decomposition: HermitianDecomposition, order: usize, atoms: usize, residual: f64 },
    NotSeparable { certificate: DualSolution, order: usize },
    Inconclusive { max_order: usize, last_residuals: Option<Residuals>, diagnostics: Vec<String> },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Separable { .. } => "SEPARABLE",
            Verdict::NotSeparable { .. } => "NOT_SEPARABLE",
            Verdict::Inconclusive { .. } => "INCONCLUSIVE",
        }
    }
}

/// Scale applied to `H` before assembly: `H / scale` has unit norm.
pub fn normalization(h: &HermitianTensor) -> f64 {
    let n = h.norm();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// The order-`k` relaxation solved by [`run_algorithm`] for `H`, built on
/// the normalized tensor with the seeded generic objective.
pub fn relaxation(h: &HermitianTensor, k: usize, seed: u64) -> Result<SdpProblem> {
    let layout = VariableLayout::new(h.shape());
    let f = generic_objective(seed, &layout);
    assemble_sdp(&h.scaled(1.0 / normalization(h)), k, &f)
}

fn lift(measure: &AtomicMeasure, layout: &VariableLayout, scale: f64) -> Result<HermitianDecomposition> {
    let terms = measure
        .atoms
        .iter()
        .map(|a| Ok(HermitianTerm { weight: a.weight * scale, vectors: complex_lift(&a.point, layout)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(HermitianDecomposition { terms })
}

struct Attempt<'a> {
    h: &'a HermitianTensor,
    layout: &'a VariableLayout,
    opts: &'a AlgorithmOptions,
    tol: f64,
}

impl Attempt<'_> {
    /// Flat truncation and extraction on `w` at each `t`, for each rank
    /// tolerance in `taus`; returns the first decomposition that passes the
    /// reconstruction check.
    fn run(&self, w: &[f64], k: usize, taus: &[f64], diagnostics: &mut Vec<String>) -> Result<Option<(HermitianDecomposition, f64)>> {
        let tms = Tms::new(self.layout.nvars(), 2 * k, w.to_vec())?;
        for &tau in taus {
            for t in 1..=k {
                if !flat_truncation_check(&tms, t, tau)? {
                    continue;
                }
                if let Some(found) = self.extract_at(&tms, k, t, tau, diagnostics)? {
                    return Ok(Some(found));
                }
            }
        }
        Ok(None)
    }

    fn extract_at(
        &self,
        tms: &Tms,
        k: usize,
        t: usize,
        tau: f64,
        diagnostics: &mut Vec<String>,
    ) -> Result<Option<(HermitianDecomposition, f64)>> {
        let (h, opts) = (self.h, self.opts);
        let loose = tau > opts.rank_tol;
        for attempt in 0..=opts.xi_retries {
            let eo = ExtractOptions {
                seed: opts.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(attempt as u64 + 1)),
                extract_tol: if loose { opts.extract_tol.max(10.0 * tau) } else { opts.extract_tol },
                layout: Some(self.layout.clone()),
                sphere_tol: if loose { SPHERE_TOL.max(10.0 * tau) } else { SPHERE_TOL },
            };
            let measure = match extract_atoms(tms, t, tau, &eo) {
                Ok(m) => m,
                Err(e) => {
                    diagnostics.push(format!("k={k} t={t} tau={tau:.0e} attempt {attempt}: {e}"));
                    continue;
                }
            };
            let mut d = lift(&measure, self.layout, normalization(h))?;
            let mut res = abs_residual(h, &from_decomposition(&d, h.shape())?)?;
            if opts.refine && res > 1e-12 * (1.0 + h.norm()) {
                let polished = refine(h, &d, 100)?;
                let pres = abs_residual(h, &from_decomposition(&polished, h.shape())?)?;
                if pres < res {
                    d = polished;
                    res = pres;
                }
            }
            if res <= self.tol && d.is_positive() {
                return Ok(Some((d, res)));
            }
            diagnostics.push(format!(
                "k={k} t={t} tau={tau:.0e}: {} atoms reconstruct with residual {res:.3e} > {:.3e}",
                d.terms.len(),
                self.tol
            ));
            return Ok(None);
        }
        Ok(None)
    }
}

/// Solves relaxations of increasing order until a verified certificate of
/// non-separability or a verified positive decomposition is found.
///
/// While a relaxation is being solved, extraction is attempted on the
/// current iterate every few hundred iterations, so that a decomposition
/// that already reconstructs `H` ends the solve early.
pub fn run_algorithm(h: &HermitianTensor, opts: &AlgorithmOptions) -> Result<Verdict> {
    let m = h.shape().order();
    let layout = VariableLayout::new(h.shape());
    let mut diagnostics = Vec::new();
    let mut last_residuals = None;
    if opts.max_order < m {
        diagnostics.push(format!("maximal order {} is below the tensor order {m}", opts.max_order));
    }
    let solver = SolveOptions { seed: opts.seed, ..opts.solver.clone() };
    let attempt = Attempt { h, layout: &layout, opts, tol: opts.accept_tol_for(h) };
    let mut taus = vec![opts.rank_tol];
    taus.extend(FALLBACK_RANK_TOLS.iter().copied().filter(|&t| t > opts.rank_tol));
    for k in m..=opts.max_order {
        let p = relaxation(h, k, opts.seed)?;
        let mut early: Option<(HermitianDecomposition, f64)> = None;
        let mut monitor = |w: &[f64], r: &Residuals| -> bool {
            if r.primal > MONITOR_START {
                return false;
            }
            let mut scratch = Vec::new();
            match attempt.run(w, k, &taus, &mut scratch) {
                Ok(Some(found)) => {
                    early = Some(found);
                    true
                }
                _ => false,
            }
        };
        let out = solve_monitored(&p, &solver, Some(&mut monitor))?;
        if let Some((decomposition, residual)) = early {
            let atoms = decomposition.terms.len();
            return Ok(Verdict::Separable { decomposition, order: k, atoms, residual });
        }
        last_residuals = Some(out.residuals);
        match out.status {
            SolveStatus::PrimalInfeasible => {
                let cert = out.certificate.expect("infeasible outcome carries a certificate");
                if verify_certificate(&p, &cert, solver.eps_inf)? {
                    return Ok(Verdict::NotSeparable { certificate: cert, order: k });
                }
                diagnostics.push(format!("k={k}: infeasibility certificate failed verification"));
            }
            SolveStatus::Unbounded => diagnostics.push(format!("k={k}: solver reported an unbounded objective")),
            SolveStatus::Optimal | SolveStatus::Inexact => {
                if out.status == SolveStatus::Inexact {
                    diagnostics.push(format!("k={k}: solver stopped at {} iterations without meeting tolerances", out.iterations));
                }
                let w = out.w.expect("optimal outcome carries a primal point");
                if let Some((decomposition, residual)) = attempt.run(&w, k, &taus, &mut diagnostics)? {
                    let atoms = decomposition.terms.len();
                    return Ok(Verdict::Separable { decomposition, order: k, atoms, residual });
                }
            }
        }
    }
    Ok(Verdict::Inconclusive { max_order: opts.max_order, last_residuals, diagnostics })
}

/// Flat truncation and extraction on a moment vector of the order-`k`
/// relaxation of `h` obtained elsewhere, such as from an external solver
/// run on the exported problem. `w` is in the normalized scale used by
/// [`relaxation`]. Returns the decomposition and its absolute residual, or
/// the reasons every attempt failed.
pub fn decompose_moments(
    h: &HermitianTensor,
    w: &[f64],
    k: usize,
    opts: &AlgorithmOptions,
) -> Result<std::result::Result<(HermitianDecomposition, f64), Vec<String>>> {
    let layout = VariableLayout::new(h.shape());
    let attempt = Attempt { h, layout: &layout, opts, tol: opts.accept_tol_for(h) };
    let mut taus = vec![opts.rank_tol];
    taus.extend(FALLBACK_RANK_TOLS.iter().copied().filter(|&t| t > opts.rank_tol));
    let mut diagnostics = Vec::new();
    Ok(attempt.run(w, k, &taus, &mut diagnostics)?.ok_or(diagnostics))
}

/// Relative primal residual below which iterates are handed to extraction.
const MONITOR_START: f64 = 1e-3;
