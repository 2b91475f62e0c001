//! Semidefinite programs in the form
//!
//! ```text
//! minimize  c^T w   subject to  A w = b,  S_l(w) >= 0 for every block l,
//! ```
//!
//! where each `S_l` is a linear map from `w` to symmetric matrices. The
//! solver runs operator splitting on the homogeneous self-dual embedding and
//! returns an optimizer, a Farkas certificate of infeasibility, or `Inexact`.

mod admm;
mod anderson;
mod certificate;
mod cone;
mod linsys;
mod presolve;
mod sdpa;
mod sparse;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use certificate::{certificate_margins, verify_certificate, CertificateMargins};
pub use sdpa::{export_sdpa, parse_sdpa, SdpaProblem};

/// A sparse linear form `sum coef * w[var]`, sorted by variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    /// Sorts by variable, merges duplicates and drops zeros.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (v, c) in entries {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        SparseRow { entries: out }
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(v, c)| c * w[v]).sum()
    }
}

/// One term of a block map: `S(w)[row, col] += coef * w[var]`, `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub var: usize,
    pub coef: f64,
}

/// A linear map from `w` to symmetric `side x side` matrices, given by its
/// upper-triangle terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub side: usize,
    pub entries: Vec<BlockEntry>,
}

impl PsdBlock {
    pub fn new(name: &str, side: usize, entries: Vec<BlockEntry>) -> Self {
        PsdBlock { name: name.to_string(), side, entries }
    }
}

/// Origin of an equality row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualityKind {
    /// `<R_IJ, w> = Re H_IJ` with flat indices `row <= col`.
    TensorRe { row: usize, col: usize },
    /// `<T_IJ, w> = Im H_IJ` with flat indices `row < col`.
    TensorIm { row: usize, col: usize },
    /// Upper-triangle cell of `L_{h_j}(w) = 0`.
    LocalizingH { mode: usize, cell: usize },
    Other,
}

/// A semidefinite program with sparse equalities and psd blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<SparseRow>,
    pub rhs: Vec<f64>,
    pub kinds: Vec<EqualityKind>,
    pub blocks: Vec<PsdBlock>,
}

impl SdpProblem {
    pub fn new(
        num_vars: usize,
        objective: Vec<f64>,
        rows: Vec<SparseRow>,
        rhs: Vec<f64>,
        kinds: Vec<EqualityKind>,
        blocks: Vec<PsdBlock>,
    ) -> Result<Self> {
        let p = SdpProblem { num_vars, objective, rows, rhs, kinds, blocks };
        p.validate()?;
        Ok(p)
    }

    /// Checks index ranges, lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::Malformed(s));
        if self.objective.len() != self.num_vars {
            return bad(format!("objective has {} entries for {} variables", self.objective.len(), self.num_vars));
        }
        if self.rows.len() != self.rhs.len() || self.rows.len() != self.kinds.len() {
            return bad("equality rows, right-hand sides and kinds differ in length".into());
        }
        let finite = self.objective.iter().chain(&self.rhs).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite);
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.entries.iter().any(|&(v, c)| v >= self.num_vars || !c.is_finite()) {
                return bad(format!("equality row {i} references an invalid variable"));
            }
        }
        for b in &self.blocks {
            for e in &b.entries {
                if e.row > e.col || e.col >= b.side || e.var >= self.num_vars || !e.coef.is_finite() {
                    return bad(format!("block {} has an invalid entry {e:?}", b.name));
                }
            }
        }
        Ok(())
    }

    /// `S_l(w)`.
    pub fn block_matrix(&self, l: usize, w: &[f64]) -> DMatrix<f64> {
        let b = &self.blocks[l];
        let mut m = DMatrix::zeros(b.side, b.side);
        for e in &b.entries {
            m[(e.row, e.col)] += e.coef * w[e.var];
        }
        for i in 0..b.side {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    }

    /// Adjoint `S_l^*(Z)` under the trace inner product.
    pub fn block_adjoint(&self, l: usize, z: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars];
        for e in &self.blocks[l].entries {
            let v = if e.row == e.col { z[(e.row, e.row)] } else { z[(e.row, e.col)] + z[(e.col, e.row)] };
            out[e.var] += e.coef * v;
        }
        out
    }

    /// `A w`.
    pub fn eq_apply(&self, w: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(w)).collect()
    }

    /// `A^T mu`.
    pub fn eq_adjoint(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars];
        for (r, &m) in self.rows.iter().zip(mu) {
            for &(v, c) in &r.entries {
                out[v] += c * m;
            }
        }
        out
    }

    /// `||A w - b||`.
    pub fn equality_residual(&self, w: &[f64]) -> f64 {
        self.rows.iter().zip(&self.rhs).map(|(r, b)| (r.dot(w) - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().zip(w).map(|(c, x)| c * x).sum()
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub eps_feas: f64,
    pub eps_gap: f64,
    pub eps_inf: f64,
    pub seed: u64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 50_000, eps_feas: 1e-8, eps_gap: 1e-8, eps_inf: 1e-9, seed: 0, verbose: false }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_feas", self.eps_feas), ("eps_gap", self.eps_gap), ("eps_inf", self.eps_inf)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Malformed(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    Unbounded,
    Inexact,
}

/// Dual multipliers: `mu` for every equality row and one matrix per block.
/// Dual feasibility reads `c + A^T mu - sum S_l^*(Z_l) = 0`, `Z_l >= 0`.
/// As an infeasibility certificate the same pair satisfies
/// `A^T mu - sum S_l^*(Z_l) = 0`, `Z_l >= 0` and `b^T mu < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub mu: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Primal point for `Optimal` and `Inexact`.
    pub w: Option<Vec<f64>>,
    /// Dual point for `Optimal` and `Inexact`.
    pub dual: Option<DualSolution>,
    /// Farkas certificate for `PrimalInfeasible`.
    pub certificate: Option<DualSolution>,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Observer called periodically with the current primal iterate `w` and
/// its residuals; returning `true` stops the solve with status `Inexact`.
pub type Monitor<'a> = &'a mut dyn FnMut(&[f64], &Residuals) -> bool;

/// Solves the program. Deterministic for fixed input.
pub fn solve(p: &SdpProblem, opts: &SolveOptions) -> Result<SolveOutcome> {
    solve_monitored(p, opts, None)
}

/// [`solve`] with an optional [`Monitor`], invoked every
/// [`MONITOR_EVERY`] iterations.
pub fn solve_monitored(p: &SdpProblem, opts: &SolveOptions, monitor: Option<Monitor<'_>>) -> Result<SolveOutcome> {
    p.validate()?;
    opts.validate()?;
    let pre = presolve::reduce_equalities(p)?;
    if let Some(mu) = pre.inconsistency {
        let cert = DualSolution { mu, z: p.blocks.iter().map(|b| DMatrix::zeros(b.side, b.side)).collect() };
        let cert = certificate::normalize(p, cert);
        return Ok(SolveOutcome {
            status: SolveStatus::PrimalInfeasible,
            w: None,
            dual: None,
            certificate: Some(cert),
            residuals: Residuals::default(),
            iterations: 0,
        });
    }
    admm::solve_reduced(p, &pre.kept, opts, monitor)
}

pub const MONITOR_EVERY: usize = 500;

/// Independent check of an optimal pair against the outcome tolerances.
pub fn check_optimality(p: &SdpProblem, w: &[f64], dual: &DualSolution, opts: &SolveOptions) -> Residuals {
    let bnorm = p.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let primal = p.equality_residual(w) / (1.0 + bnorm);
    let mut min_eig = f64::INFINITY;
    for l in 0..p.blocks.len() {
        let s = p.block_matrix(l, w);
        let e = s.clone().symmetric_eigenvalues().min();
        min_eig = min_eig.min(e / (1.0 + s.norm()));
    }
    let mut r = p.objective.clone();
    for (v, a) in r.iter_mut().zip(p.eq_adjoint(&dual.mu)) {
        *v += a;
    }
    for (l, z) in dual.z.iter().enumerate() {
        for (v, a) in r.iter_mut().zip(p.block_adjoint(l, z)) {
            *v -= a;
        }
    }
    let cnorm = p.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dual_res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + cnorm);
    let pobj = p.objective_value(w);
    let dobj = -p.rhs.iter().zip(&dual.mu).map(|(b, m)| b * m).sum::<f64>();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    let _ = opts;
    Residuals { primal, dual: dual_res, gap, min_eig }
}

impl Residuals {
    /// Whether these residuals meet the optimality tolerances.
    pub fn meets(&self, opts: &SolveOptions) -> bool {
        self.primal <= opts.eps_feas
            && self.dual <= opts.eps_feas
            && self.gap <= opts.eps_gap
            && self.min_eig >= -opts.eps_feas
    }
}
