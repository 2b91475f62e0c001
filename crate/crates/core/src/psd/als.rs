//! Canonical polyadic decomposition of complex tensors by alternating least
//! squares with restarts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermitian::C64;
use crate::random::{complex_gaussian, rng};

use super::kernels::khatri_rao_all;
use super::tensor::ComplexTensor;

/// Options for [`cpd_als`].
#[derive(Debug, Clone)]
pub struct CpdOptions {
    pub max_sweeps: usize,
    /// Relative fit at which a run stops.
    pub fit_tol: f64,
    /// Number of random starts.
    pub restarts: usize,
    pub seed: u64,
    /// Also start from the generalized eigenvalue solution when the tensor
    /// has three modes and two of them have at least `s` rows.
    pub algebraic_init: bool,
}

impl Default for CpdOptions {
    fn default() -> Self {
        CpdOptions { max_sweeps: 2000, fit_tol: 1e-10, restarts: 10, seed: 0, algebraic_init: true }
    }
}

/// `T ~ sum_r f_1^r (x) ... (x) f_m^r`. Columns of modes after the first
/// have unit norm; scales live in mode 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpd {
    pub factors: Vec<DMatrix<C64>>,
    /// `||T - T_hat|| / ||T||`.
    pub fit: f64,
    pub sweeps: usize,
}

impl Cpd {
    pub fn rank(&self) -> usize {
        self.factors.first().map_or(0, |f| f.ncols())
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn to_tensor(&self) -> Result<ComplexTensor> {
        ComplexTensor::from_factors(&self.factors)
    }

    /// Column `r` of every factor.
    pub fn term(&self, r: usize) -> Vec<DVector<C64>> {
        self.factors.iter().map(|f| f.column(r).into_owned()).collect()
    }
}

fn others(factors: &[DMatrix<C64>], k: usize) -> Vec<DMatrix<C64>> {
    factors.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, f)| f.clone()).collect()
}

/// Solves `X G = R` for Hermitian psd `G`.
fn solve_gram(r: &DMatrix<C64>, g: &DMatrix<C64>) -> DMatrix<C64> {
    let s = g.nrows();
    let scale = (0..s).map(|i| g[(i, i)].re).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut reg = g.clone();
    for i in 0..s {
        reg[(i, i)] += C64::new(1e-14 * scale, 0.0);
    }
    // X G = R  <=>  G^T X^T = R^T, and G^T = conj(G)
    match reg.conjugate().cholesky() {
        Some(ch) => ch.solve(&r.transpose()).transpose(),
        None => {
            let pinv = g.clone().pseudo_inverse(1e-14 * scale).unwrap_or_else(|_| DMatrix::zeros(s, s));
            r * pinv
        }
    }
}

fn normalize(factors: &mut [DMatrix<C64>]) {
    let s = factors[0].ncols();
    for r in 0..s {
        for k in 1..factors.len() {
            let n = factors[k].column(r).norm();
            if n > 0.0 {
                factors[k].column_mut(r).unscale_mut(n);
                factors[0].column_mut(r).scale_mut(n);
            }
        }
    }
}

struct Problem {
    unfoldings: Vec<DMatrix<C64>>,
    norm: f64,
}

impl Problem {
    fn new(t: &ComplexTensor) -> Self {
        Problem { unfoldings: (0..t.order()).map(|k| t.unfold(k)).collect(), norm: t.norm() }
    }

    fn fit(&self, factors: &[DMatrix<C64>]) -> f64 {
        let k = factors.len() - 1;
        let kr = khatri_rao_all(&others(factors, k)).expect("consistent factors");
        let diff = &self.unfoldings[k] - &factors[k] * kr.transpose();
        diff.norm() / self.norm.max(f64::MIN_POSITIVE)
    }

    fn update(&self, factors: &mut [DMatrix<C64>], k: usize) {
        let rest = others(factors, k);
        let kr = khatri_rao_all(&rest).expect("consistent factors");
        let s = factors[k].ncols();
        let mut g = DMatrix::from_element(s, s, C64::new(1.0, 0.0));
        for f in &rest {
            g.component_mul_assign(&(f.transpose() * f.conjugate()));
        }
        let rhs = &self.unfoldings[k] * kr.conjugate();
        factors[k] = solve_gram(&rhs, &g);
    }

    fn run(&self, mut factors: Vec<DMatrix<C64>>, opts: &CpdOptions) -> Cpd {
        normalize(&mut factors);
        let mut fit = self.fit(&factors);
        let mut sweeps = 0;
        let mut prev = f64::INFINITY;
        while sweeps < opts.max_sweeps && fit > opts.fit_tol {
            for k in 0..factors.len() {
                self.update(&mut factors, k);
            }
            normalize(&mut factors);
            sweeps += 1;
            fit = self.fit(&factors);
            if !fit.is_finite() || (prev.is_finite() && (prev - fit).abs() <= 1e-15 * prev) {
                break;
            }
            prev = fit;
        }
        Cpd { factors, fit, sweeps }
    }
}

/// Least-squares update of mode `k` alone, keeping the other factors.
pub(crate) fn refit_mode(t: &ComplexTensor, mut factors: Vec<DMatrix<C64>>, k: usize) -> Cpd {
    let p = Problem::new(t);
    p.update(&mut factors, k);
    let fit = p.fit(&factors);
    Cpd { factors, fit, sweeps: 1 }
}

fn random_factors(dims: &[usize], s: usize, seed: u64) -> Vec<DMatrix<C64>> {
    let mut r = rng(seed);
    dims.iter().map(|&n| DMatrix::from_column_slice(n, s, complex_gaussian(&mut r, n * s).as_slice())).collect()
}

/// Eigenvectors of a complex matrix with distinct eigenvalues, as columns.
fn eigenvectors(m: DMatrix<C64>) -> Option<DMatrix<C64>> {
    let n = m.nrows();
    let (q, t) = m.try_schur(1e-14, 10_000)?.unpack();
    let mut y = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let d = t[(i, i)] - lambda;
            if d.norm() < 1e-12 * t.norm() {
                return None;
            }
            y[(i, k)] = -acc / d;
        }
    }
    Some(q * y)
}

fn leading_left_vectors(m: &DMatrix<C64>, s: usize) -> Option<DMatrix<C64>> {
    let svd = m.clone().svd(true, false);
    let u = svd.u?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < s {
        return None;
    }
    Some(u.select_columns(&order[..s]))
}

/// Generalized eigenvalue start for a three-mode tensor whose two largest
/// modes have at least `s` rows.
fn algebraic_start(t: &ComplexTensor, p: &Problem, s: usize, seed: u64) -> Option<Vec<DMatrix<C64>>> {
    if t.order() != 3 {
        return None;
    }
    let dims = t.dims();
    let mut modes = [0, 1, 2];
    modes.sort_by(|&a, &b| dims[b].cmp(&dims[a]).then(a.cmp(&b)));
    let (mut a, mut b, c) = (modes[0], modes[1], modes[2]);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if dims[b] < s || dims[a] < s {
        return None;
    }
    let ua = leading_left_vectors(&p.unfoldings[a], s)?;
    let ub = leading_left_vectors(&p.unfoldings[b], s)?;
    let mut r = rng(seed);
    let slice = |x: &DVector<C64>| -> DMatrix<C64> {
        // sum_l x_l T[.., .., l] with rows in mode a and columns in mode b
        let row = x.transpose() * &p.unfoldings[c];
        let full = DMatrix::from_row_slice(dims[a], dims[b], row.as_slice());
        ua.adjoint() * full * ub.conjugate()
    };
    let (x, y) = (complex_gaussian(&mut r, dims[c]), complex_gaussian(&mut r, dims[c]));
    let (mx, my) = (slice(&x), slice(&y));
    let my_inv = my.try_inverse()?;
    let vecs = eigenvectors(mx * my_inv)?;
    let fa = &ua * vecs;
    if !fa.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return None;
    }
    // rows of pinv(A) T_(a) are f_o1 (x) f_o2 for the other two modes
    let (o1, o2) = if b < c { (b, c) } else { (c, b) };
    let pinv = fa.clone().pseudo_inverse(1e-12).ok()?;
    let rows = pinv * &p.unfoldings[a];
    let mut f1 = DMatrix::zeros(dims[o1], s);
    let mut f2 = DMatrix::zeros(dims[o2], s);
    for r in 0..s {
        // m = x y^T: x is its largest column, y = m^T conj(x) / ||x||^2
        let m = DMatrix::from_row_slice(dims[o1], dims[o2], rows.row(r).transpose().as_slice());
        let j = (0..m.ncols()).max_by(|&p, &q| m.column(p).norm().total_cmp(&m.column(q).norm()))?;
        let x = m.column(j).into_owned();
        let nx = x.norm_squared();
        if nx == 0.0 {
            return None;
        }
        f1.set_column(r, &x);
        f2.set_column(r, &(m.transpose() * x.conjugate() / C64::new(nx, 0.0)));
    }
    let mut factors = vec![DMatrix::zeros(0, 0); 3];
    factors[a] = fa;
    factors[o1] = f1;
    factors[o2] = f2;
    Some(factors)
}

/// Rank-`s` CPD of `t`: the best of the algebraic start (when applicable)
/// and `restarts` random Gaussian starts. Stops early once a run reaches
/// `fit_tol`.
pub fn cpd_als(t: &ComplexTensor, s: usize, opts: &CpdOptions) -> Result<Cpd> {
    if s == 0 {
        return Err(Error::Malformed("CPD rank must be at least 1".into()));
    }
    let p = Problem::new(t);
    let mut starts: Vec<Box<dyn Fn() -> Option<Vec<DMatrix<C64>>>>> = Vec::new();
    if opts.algebraic_init {
        starts.push(Box::new(|| algebraic_start(t, &p, s, opts.seed)));
    }
    for i in 0..opts.restarts.max(1) {
        let seed = opts.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
        starts.push(Box::new(move || Some(random_factors(t.dims(), s, seed))));
    }
    let mut best: Option<Cpd> = None;
    for start in &starts {
        let Some(init) = start() else { continue };
        let cpd = p.run(init, opts);
        if best.as_ref().is_none_or(|b| cpd.fit < b.fit || !b.fit.is_finite()) {
            best = Some(cpd);
        }
        if best.as_ref().is_some_and(|b| b.fit <= opts.fit_tol) {
            break;
        }
    }
    best.ok_or_else(|| Error::Numerical("no CPD start succeeded".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground_truth(dims: &[usize], s: usize, seed: u64) -> (ComplexTensor, Vec<DMatrix<C64>>) {
        let f = random_factors(dims, s, seed);
        (ComplexTensor::from_factors(&f).unwrap(), f)
    }

    /// Largest over columns of `truth` of the best normalized distance to a
    /// column of `found` up to a complex scalar.
    fn column_match(found: &DMatrix<C64>, truth: &DMatrix<C64>) -> f64 {
        let mut worst = 0.0_f64;
        for c in truth.column_iter() {
            let c = c.normalize();
            let best = found
                .column_iter()
                .map(|f| {
                    let f = f.normalize();
                    let z = f.dotc(&c);
                    (c.clone_owned() - f * z).norm()
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        worst
    }

    #[test]
    fn rank_one_fits_quickly() {
        let (t, _) = ground_truth(&[3, 4, 2], 1, 7);
        let opts = CpdOptions { algebraic_init: false, ..Default::default() };
        let cpd = cpd_als(&t, 1, &opts).unwrap();
        assert!(cpd.fit <= 1e-12, "{}", cpd.fit);
        assert!(cpd.sweeps <= 5, "{}", cpd.sweeps);
    }

    #[test]
    fn recovers_random_rank_three() {
        let (t, f) = ground_truth(&[9, 9, 9], 3, 11);
        for algebraic_init in [true, false] {
            let cpd = cpd_als(&t, 3, &CpdOptions { algebraic_init, ..Default::default() }).unwrap();
            assert!(cpd.fit <= 1e-10, "{}", cpd.fit);
            for k in 0..3 {
                assert!(column_match(&cpd.factors[k], &f[k]) < 1e-8);
            }
        }
    }

    #[test]
    fn algebraic_start_is_exact_on_generic_input() {
        let (t, _) = ground_truth(&[5, 4, 3], 4, 2);
        let p = Problem::new(&t);
        let init = algebraic_start(&t, &p, 4, 0).unwrap();
        assert!(p.fit(&init) < 1e-10);
    }

    #[test]
    fn merged_order_four_fits() {
        let (t, _) = ground_truth(&[2, 3, 2, 2], 2, 5);
        let c = super::super::tensor::cubic_reshape(&t).unwrap();
        let cpd = cpd_als(&c, 2, &CpdOptions::default()).unwrap();
        assert!(cpd.fit <= 1e-10);
    }

    #[test]
    fn too_small_rank_leaves_a_gap() {
        let (t, _) = ground_truth(&[4, 4, 4], 3, 3);
        let cpd = cpd_als(&t, 2, &CpdOptions { restarts: 3, max_sweeps: 200, ..Default::default() }).unwrap();
        assert!(cpd.fit > 1e-3);
        assert!(cpd_als(&t, 0, &CpdOptions::default()).is_err());
    }
}
