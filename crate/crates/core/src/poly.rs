//! Real polynomials over the variables of the set `K`.
//!
//! Mode `j` contributes the variables `x_j = (re_1..re_n, im_2..im_n)`, so
//! there are `2N - m` variables in total. Monomials use the graded
//! lexicographic order: `1, x_1, ..., x_n, x_1^2, x_1 x_2, ...`.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hermitian::{Shape, C64};

/// Coefficients below this magnitude are dropped after expansion.
pub const COEFF_CLEANUP: f64 = 1e-14;

/// Binomial coefficient `C(n, k)` (saturating on overflow).
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).unwrap_or(usize::MAX)
}

/// Number of monomials of degree at most `d` in `n` variables.
pub fn monomial_count(n: usize, d: usize) -> usize {
    binomial(n + d, d)
}

/// An exponent vector. Ordered by degree, then lexicographically decreasing,
/// which matches position in `[x]_d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u16>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The graded monomial basis `[x]_d` with combinatorial ranking.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    nvars: usize,
    max_degree: usize,
    exponents: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, max_degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(monomial_count(nvars, max_degree));
        let mut cur = vec![0u16; nvars];
        for d in 0..=max_degree {
            push_degree(&mut exponents, &mut cur, 0, d);
        }
        MonomialBasis { nvars, max_degree, exponents }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Number of basis elements of degree at most `d`.
    pub fn count_upto(&self, d: usize) -> usize {
        monomial_count(self.nvars, d)
    }

    pub fn monomial(&self, idx: usize) -> &Monomial {
        &self.exponents[idx]
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.exponents
    }

    /// Position of an exponent vector in `[x]_d`, for any degree.
    pub fn index(&self, exps: &[u16]) -> usize {
        rank_monomial(exps)
    }

    /// Index of the product of two basis monomials.
    pub fn index_of_product(&self, a: usize, b: usize) -> usize {
        let (ea, eb) = (&self.exponents[a].0, &self.exponents[b].0);
        let sum: Vec<u16> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
        rank_monomial(&sum)
    }

    /// The vector `[x]_d` evaluated at `x`.
    pub fn evaluate(&self, x: &[f64], d: usize) -> DVector<f64> {
        let n = self.count_upto(d);
        DVector::from_iterator(n, self.exponents[..n].iter().map(|m| m.eval(x)))
    }
}

fn push_degree(out: &mut Vec<Monomial>, cur: &mut Vec<u16>, pos: usize, rem: usize) {
    let n = cur.len();
    if n == 0 {
        if rem == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = rem as u16;
        out.push(Monomial(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for v in (0..=rem).rev() {
        cur[pos] = v as u16;
        push_degree(out, cur, pos + 1, rem - v);
    }
    cur[pos] = 0;
}

/// Graded lexicographic rank of an exponent vector.
pub fn rank_monomial(exps: &[u16]) -> usize {
    let n = exps.len();
    let d: usize = exps.iter().map(|&e| e as usize).sum();
    if n == 0 {
        return 0;
    }
    // monomials of smaller degree
    let mut rank = if d == 0 { 0 } else { binomial(n + d - 1, n) };
    let mut r = d;
    for (i, &a) in exps.iter().enumerate().take(n - 1) {
        let a = a as usize;
        if a < r {
            let rest = n - i - 1;
            rank += binomial(r - a - 1 + rest, rest);
        }
        r -= a;
    }
    rank
}

/// Sparse real polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPolynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl RealPolynomial {
    pub fn zero(nvars: usize) -> Self {
        RealPolynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::var(nvars, i), 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Adds `c * m`, removing the entry if it cancels to zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        assert_eq!(m.0.len(), self.nvars, "monomial arity");
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add(&self, other: &RealPolynomial) -> RealPolynomial {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> RealPolynomial {
        let mut out = Self::zero(self.nvars);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &RealPolynomial) -> RealPolynomial {
        let mut out = Self::zero(self.nvars);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Drops coefficients with magnitude at most `tol`.
    pub fn cleanup(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.abs() > tol);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Dense coefficient vector against the first `len` elements of `basis`.
    pub fn to_dense(&self, basis: &MonomialBasis, len: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; len];
        for (m, c) in self.terms() {
            let idx = basis.index(&m.0);
            if idx >= len {
                return Err(Error::DegreeTooHigh { requested: m.degree(), available: basis.max_degree() });
            }
            out[idx] = c;
        }
        Ok(out)
    }
}

/// Placement of the real variables of each mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    nvars: usize,
}

impl VariableLayout {
    pub fn new(shape: &Shape) -> Self {
        let dims = shape.dims().to_vec();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &n in &dims {
            offsets.push(acc);
            acc += 2 * n - 1;
        }
        VariableLayout { dims, offsets, nvars: acc }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Variables of mode `j`.
    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j] + 2 * self.dims[j] - 1
    }

    /// Variable holding the real part of entry `i` of mode `j`.
    pub fn re_var(&self, j: usize, i: usize) -> usize {
        self.offsets[j] + i
    }

    /// Variable holding the imaginary part of entry `i` of mode `j`; `None`
    /// for `i = 0`, which is gauge-fixed to be real.
    pub fn im_var(&self, j: usize, i: usize) -> Option<usize> {
        (i > 0).then(|| self.offsets[j] + self.dims[j] + i - 1)
    }
}

/// Complex polynomial as a pair of real polynomials.
#[derive(Debug, Clone)]
struct ComplexPoly {
    re: RealPolynomial,
    im: RealPolynomial,
}

impl ComplexPoly {
    fn mul(&self, o: &ComplexPoly) -> ComplexPoly {
        ComplexPoly {
            re: self.re.mul(&o.re).add(&self.im.mul(&o.im).scale(-1.0)),
            im: self.re.mul(&o.im).add(&self.im.mul(&o.re)),
        }
    }
}

/// `(R_IJ, T_IJ)` with `P_IJ = R_IJ + i T_IJ = prod_s z_{s,i_s} conj(z_{s,j_s})`.
pub fn build_pij(i: &[usize], j: &[usize], layout: &VariableLayout) -> Result<(RealPolynomial, RealPolynomial)> {
    let m = layout.order();
    if i.len() != m || j.len() != m {
        return Err(Error::DimensionMismatch(format!("multi-indices must have {m} entries")));
    }
    for s in 0..m {
        if i[s] >= layout.dims[s] || j[s] >= layout.dims[s] {
            return Err(Error::DimensionMismatch(format!("index out of range in mode {s}")));
        }
    }
    let n = layout.nvars;
    let factor = |s: usize, idx: usize, sign: f64| -> ComplexPoly {
        let re = RealPolynomial::var(n, layout.re_var(s, idx));
        let im = match layout.im_var(s, idx) {
            Some(v) => RealPolynomial::var(n, v).scale(sign),
            None => RealPolynomial::zero(n),
        };
        ComplexPoly { re, im }
    };
    let mut p = ComplexPoly { re: RealPolynomial::constant(n, 1.0), im: RealPolynomial::zero(n) };
    for s in 0..m {
        p = p.mul(&factor(s, i[s], 1.0)).mul(&factor(s, j[s], -1.0));
    }
    p.re.cleanup(COEFF_CLEANUP);
    p.im.cleanup(COEFF_CLEANUP);
    Ok((p.re, p.im))
}

/// `h_j = ||x_j||^2 - 1` and `g_j = (x_j)_1` for every mode.
pub fn constraints_k(layout: &VariableLayout) -> (Vec<RealPolynomial>, Vec<RealPolynomial>) {
    let n = layout.nvars;
    let mut h = Vec::with_capacity(layout.order());
    let mut g = Vec::with_capacity(layout.order());
    for j in 0..layout.order() {
        let mut p = RealPolynomial::constant(n, -1.0);
        for v in layout.block(j) {
            let mut e = vec![0; n];
            e[v] = 2;
            p.add_term(Monomial(e), 1.0);
        }
        h.push(p);
        g.push(RealPolynomial::var(n, layout.re_var(j, 0)));
    }
    (h, g)
}

/// The Gaussian matrix `G` behind [`generic_objective`].
pub fn objective_factor(seed: u64, layout: &VariableLayout) -> DMatrix<f64> {
    let side = monomial_count(layout.nvars, layout.order());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(side, side, |_, _| StandardNormal.sample(&mut rng))
}

/// `F = [x]_m^T (G^T G) [x]_m` for a seeded square Gaussian `G`.
pub fn generic_objective(seed: u64, layout: &VariableLayout) -> RealPolynomial {
    let g = objective_factor(seed, layout);
    let q = g.transpose() * &g;
    let basis = MonomialBasis::new(layout.nvars, layout.order());
    let side = q.nrows();
    let mut coeffs = vec![0.0; monomial_count(layout.nvars, 2 * layout.order())];
    for a in 0..side {
        for b in 0..side {
            coeffs[basis.index_of_product(a, b)] += q[(a, b)];
        }
    }
    let full = MonomialBasis::new(layout.nvars, 2 * layout.order());
    let mut f = RealPolynomial::zero(layout.nvars);
    for (idx, c) in coeffs.into_iter().enumerate() {
        f.add_term(full.monomial(idx).clone(), c);
    }
    f
}

/// Complex vectors `u^j = re block + i (0, im block)` from a real point.
pub fn complex_lift(v: &[f64], layout: &VariableLayout) -> Result<Vec<DVector<C64>>> {
    if v.len() != layout.nvars {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, layout needs {}",
            v.len(),
            layout.nvars
        )));
    }
    Ok((0..layout.order())
        .map(|j| {
            DVector::from_fn(layout.dims[j], |i, _| {
                let im = layout.im_var(j, i).map_or(0.0, |k| v[k]);
                C64::new(v[layout.re_var(j, i)], im)
            })
        })
        .collect())
}

/// Inverse of [`complex_lift`]; the leading entry of every vector must be
/// real (its imaginary part is ignored).
pub fn realify_point(us: &[DVector<C64>], layout: &VariableLayout) -> Result<Vec<f64>> {
    let lens: Vec<usize> = us.iter().map(|u| u.len()).collect();
    if lens != layout.dims {
        return Err(Error::DimensionMismatch(format!("vector lengths {lens:?} do not match layout")));
    }
    let mut x = vec![0.0; layout.nvars];
    for (j, u) in us.iter().enumerate() {
        for i in 0..u.len() {
            x[layout.re_var(j, i)] = u[i].re;
            if let Some(k) = layout.im_var(j, i) {
                x[k] = u[i].im;
            }
        }
    }
    Ok(x)
}

/// Multiplies `u` by a unit scalar so that its leading entry is real and
/// nonnegative.
pub fn gauge_fix(u: &DVector<C64>) -> DVector<C64> {
    let lead = u[0];
    if lead.norm() == 0.0 {
        return u.clone();
    }
    let phase = lead.conj() / lead.norm();
    let mut out = u * phase;
    out[0] = C64::new(lead.norm(), 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(dims: &[usize]) -> VariableLayout {
        VariableLayout::new(&Shape::new(dims.to_vec()).unwrap())
    }

    fn mono(e: &[u16]) -> Monomial {
        Monomial(e.to_vec())
    }

    #[test]
    fn graded_order_matches_display() {
        let b = MonomialBasis::new(2, 2);
        let got: Vec<Vec<u16>> = b.monomials().iter().map(|m| m.0.clone()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(b.len(), 6);
    }

    #[test]
    fn ranking_inverts_enumeration() {
        for (n, d) in [(1, 5), (3, 4), (6, 4), (9, 3)] {
            let b = MonomialBasis::new(n, d);
            assert_eq!(b.len(), monomial_count(n, d));
            for (k, m) in b.monomials().iter().enumerate() {
                assert_eq!(b.index(&m.0), k);
                if k > 0 {
                    assert!(b.monomial(k - 1) < m);
                }
            }
        }
    }

    #[test]
    fn pij_diagonal_single_mode() {
        let l = layout(&[2]);
        let (r, t) = build_pij(&[0], &[0], &l).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.coeff(&mono(&[2, 0, 0])), 1.0);
        assert!(t.is_zero());
    }

    #[test]
    fn pij_off_diagonal_hand_expansion() {
        // vars: re1, re2, im2
        let l = layout(&[2]);
        let (r, t) = build_pij(&[0], &[1], &l).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.coeff(&mono(&[1, 1, 0])), 1.0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.coeff(&mono(&[1, 0, 1])), -1.0);
        assert!(build_pij(&[2], &[0], &l).is_err());
    }

    #[test]
    fn pij_matches_complex_product_and_symmetries() {
        let l = layout(&[2, 3]);
        let shape = Shape::new(vec![2, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..l.nvars()).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        for a in 0..6 {
            for b in 0..6 {
                let (ia, ib) = (shape.multi_index(a), shape.multi_index(b));
                let (r, t) = build_pij(&ia, &ib, &l).unwrap();
                assert_eq!(r.degree(), 4);
                let (r2, t2) = build_pij(&ib, &ia, &l).unwrap();
                assert_eq!(r, r2);
                assert!(t.add(&t2).is_zero());
                if a == b {
                    assert!(t.is_zero());
                }
                for x in &pts {
                    let us = complex_lift(x, &l).unwrap();
                    let want = us[0][ia[0]] * us[0][ib[0]].conj() * us[1][ia[1]] * us[1][ib[1]].conj();
                    let got = C64::new(r.eval(x), t.eval(x));
                    assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-300) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn trace_identity() {
        let l = layout(&[2, 2]);
        let shape = Shape::new(vec![2, 2]).unwrap();
        let x: Vec<f64> = (0..l.nvars()).map(|i| 0.3 + 0.1 * i as f64).collect();
        let tr: f64 = (0..4)
            .map(|a| {
                let i = shape.multi_index(a);
                build_pij(&i, &i, &l).unwrap().0.eval(&x)
            })
            .sum();
        let prod: f64 = (0..2).map(|j| l.block(j).map(|v| x[v] * x[v]).sum::<f64>()).product();
        assert!((tr - prod).abs() <= 1e-12 * prod);
    }

    #[test]
    fn constraints_of_k() {
        let l = layout(&[2, 2]);
        let (h, g) = constraints_k(&l);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].len(), 4);
        assert_eq!(h[0].coeff(&mono(&[2, 0, 0, 0, 0, 0])), 1.0);
        assert_eq!(h[0].coeff(&mono(&[0, 0, 2, 0, 0, 0])), 1.0);
        assert_eq!(h[0].coeff(&Monomial::one(6)), -1.0);
        assert_eq!(g[1].coeff(&Monomial::var(6, 3)), 1.0);
        let mut x = vec![2.0, 0.0, 0.0, 0.6, 0.0, 0.8];
        assert!((h[0].eval(&x) - 3.0).abs() < 1e-15);
        x[0] = 1.0;
        assert!(h.iter().all(|p| p.eval(&x).abs() < 1e-14));
        assert!(g.iter().all(|p| p.eval(&x) >= 0.0));
    }

    #[test]
    fn objective_is_sos_and_deterministic() {
        let l = layout(&[2, 2]);
        let f = generic_objective(11, &l);
        assert_eq!(f, generic_objective(11, &l));
        assert_eq!(f.degree(), 4);
        let g = objective_factor(11, &l);
        let basis = MonomialBasis::new(l.nvars(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
            let gx = &g * basis.evaluate(&x, 2);
            let want = gx.norm_squared();
            assert!((f.eval(&x) - want).abs() <= 1e-10 * want);
        }
        // G^T G has full rank
        let q = g.transpose() * &g;
        assert!(q.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn lift_examples() {
        let l = layout(&[2]);
        let u = complex_lift(&[1.0, 0.0, 0.0], &l).unwrap();
        assert_eq!(u[0].as_slice(), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let u = complex_lift(&[0.1, 0.2, 0.3], &l).unwrap();
        assert_eq!(u[0].as_slice(), &[C64::new(0.1, 0.0), C64::new(0.2, 0.3)]);
        assert!(complex_lift(&[0.0; 2], &l).is_err());
    }

    proptest! {
        #[test]
        fn lift_realify_round_trip(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
            let l = layout(&[3]);
            let u = DVector::from_vec(vec![C64::new(a, b), C64::new(c, d), C64::new(d, a)]);
            prop_assume!(u.norm() > 1e-3);
            let u = gauge_fix(&(&u / C64::new(u.norm(), 0.0)));
            let x = realify_point(std::slice::from_ref(&u), &l).unwrap();
            let back = complex_lift(&x, &l).unwrap();
            prop_assert_eq!(&back[0], &u);
        }

        #[test]
        fn rank_matches_position(e in proptest::collection::vec(0u16..4, 5)) {
            let b = MonomialBasis::new(5, 15);
            let idx = b.index(&e);
            prop_assert_eq!(&b.monomial(idx).0, &e);
        }
    }
}
