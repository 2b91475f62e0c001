//! Truncated moment sequences, moment and localizing matrices, and assembly
//! of the order-`k` semidefinite relaxation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hermitian::HermitianTensor;
use crate::poly::{build_pij, constraints_k, monomial_count, MonomialBasis, RealPolynomial, VariableLayout};
use crate::sdp::{BlockEntry, EqualityKind, PsdBlock, SdpProblem, SparseRow};

/// A truncated moment sequence indexed by `[x]_{degree}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tms {
    nvars: usize,
    degree: usize,
    values: Vec<f64>,
}

impl Tms {
    pub fn new(nvars: usize, degree: usize, values: Vec<f64>) -> Result<Self> {
        let len = monomial_count(nvars, degree);
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "a degree-{degree} tms in {nvars} variables has {len} entries, got {}",
                values.len()
            )));
        }
        Ok(Tms { nvars, degree, values })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y|_d`, a prefix under the graded order.
    pub fn truncate(&self, d: usize) -> Result<Tms> {
        if d > self.degree {
            return Err(Error::DegreeTooHigh { requested: d, available: self.degree });
        }
        let len = monomial_count(self.nvars, d);
        Ok(Tms { nvars: self.nvars, degree: d, values: self.values[..len].to_vec() })
    }

    /// `<p, y>`.
    pub fn pair(&self, p: &RealPolynomial, basis: &MonomialBasis) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in p.terms() {
            if m.degree() > self.degree {
                return Err(Error::DegreeTooHigh { requested: m.degree(), available: self.degree });
            }
            acc += c * self.values[basis.index(&m.0)];
        }
        Ok(acc)
    }

    /// `sum_i lambda_i [x_i]_degree`.
    pub fn from_atoms(nvars: usize, degree: usize, atoms: &[(f64, Vec<f64>)]) -> Result<Tms> {
        let mut values = vec![0.0; monomial_count(nvars, degree)];
        for (w, x) in atoms {
            let t = tms_of_point(x, degree);
            for (v, t) in values.iter_mut().zip(&t.values) {
                *v += w * t;
            }
        }
        Tms::new(nvars, degree, values)
    }
}

/// `[x]_degree` at the point `x`.
pub fn tms_of_point(x: &[f64], degree: usize) -> Tms {
    let basis = MonomialBasis::new(x.len(), degree);
    let values = basis.evaluate(x, degree).as_slice().to_vec();
    Tms { nvars: x.len(), degree, values }
}

/// `M_d(y)`, indexed by monomials of degree at most `d`.
pub fn moment_matrix(y: &Tms, d: usize) -> Result<DMatrix<f64>> {
    localizing_matrix(&RealPolynomial::constant(y.nvars, 1.0), y, d)
}

/// `L_p^{(d)}(y)`, of side `C(n + d - ceil(deg p / 2), d - ceil(deg p / 2))`.
pub fn localizing_matrix(p: &RealPolynomial, y: &Tms, d: usize) -> Result<DMatrix<f64>> {
    if 2 * d > y.degree || p.degree() > 2 * d {
        return Err(Error::DegreeTooHigh { requested: 2 * d.max(p.degree().div_ceil(2)), available: y.degree });
    }
    let basis = MonomialBasis::new(y.nvars, 2 * d);
    let side = monomial_count(y.nvars, d - p.degree().div_ceil(2));
    let mut out = DMatrix::zeros(side, side);
    for a in 0..side {
        for b in a..side {
            let ab = basis.monomial(a).mul(basis.monomial(b));
            let v: f64 = p.terms().map(|(g, c)| c * y.values[basis.index(&g.mul(&ab).0)]).sum();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Block entries of `w -> L_p^{(k)}(w)` (upper triangle).
fn localizing_entries(p: &RealPolynomial, basis: &MonomialBasis, k: usize) -> (usize, Vec<BlockEntry>) {
    let side = monomial_count(basis.nvars(), k - p.degree().div_ceil(2));
    let terms: Vec<_> = p.terms().map(|(m, c)| (m.clone(), c)).collect();
    let mut entries = Vec::new();
    for a in 0..side {
        for b in a..side {
            let ab = basis.monomial(a).mul(basis.monomial(b));
            for (g, c) in &terms {
                entries.push(BlockEntry { row: a, col: b, var: basis.index(&g.mul(&ab).0), coef: *c });
            }
        }
    }
    (side, entries)
}

/// The order-`k` relaxation: minimize `<F, w>` over tms `w` of degree `2k`
/// matching `H`, with `L_h(w) = 0`, `M_k(w) >= 0` and `L_g(w) >= 0`.
pub fn assemble_sdp(h: &HermitianTensor, k: usize, f: &RealPolynomial) -> Result<SdpProblem> {
    let shape = h.shape();
    let m = shape.order();
    if k < m {
        return Err(Error::Malformed(format!("relaxation order {k} is below the tensor order {m}")));
    }
    let layout = VariableLayout::new(shape);
    let n = layout.nvars();
    if f.nvars() != n {
        return Err(Error::DimensionMismatch(format!("objective has {} variables, layout {n}", f.nvars())));
    }
    if f.degree() > 2 * k {
        return Err(Error::DegreeTooHigh { requested: f.degree(), available: 2 * k });
    }
    let basis = MonomialBasis::new(n, 2 * k);
    let num_vars = basis.len();
    let objective = f.to_dense(&basis, num_vars)?;

    let size = shape.flat_size();
    let labels: Vec<Vec<usize>> = (0..size).map(|a| shape.multi_index(a)).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut kinds = Vec::new();
    let sparse = |p: &RealPolynomial| SparseRow::new(p.terms().map(|(mo, c)| (basis.index(&mo.0), c)).collect());
    let mut imag = Vec::new();
    for a in 0..size {
        for b in a..size {
            let (r, t) = build_pij(&labels[a], &labels[b], &layout)?;
            rows.push(sparse(&r));
            rhs.push(h.flat(a, b).re);
            kinds.push(EqualityKind::TensorRe { row: a, col: b });
            if a < b {
                imag.push((sparse(&t), h.flat(a, b).im, EqualityKind::TensorIm { row: a, col: b }));
            }
        }
    }
    for (r, v, kind) in imag {
        rows.push(r);
        rhs.push(v);
        kinds.push(kind);
    }

    let (hs, gs) = constraints_k(&layout);
    for (j, hj) in hs.iter().enumerate() {
        let (side, entries) = localizing_entries(hj, &basis, k);
        let mut per_cell: Vec<Vec<(usize, f64)>> = vec![Vec::new(); side * (side + 1) / 2];
        let mut cell = 0;
        let mut last = None;
        for e in entries {
            if last != Some((e.row, e.col)) {
                if last.is_some() {
                    cell += 1;
                }
                last = Some((e.row, e.col));
            }
            per_cell[cell].push((e.var, e.coef));
        }
        for (c, row) in per_cell.into_iter().enumerate() {
            rows.push(SparseRow::new(row));
            rhs.push(0.0);
            kinds.push(EqualityKind::LocalizingH { mode: j, cell: c });
        }
    }

    let mut blocks = Vec::with_capacity(1 + m);
    let (side, entries) = localizing_entries(&RealPolynomial::constant(n, 1.0), &basis, k);
    blocks.push(PsdBlock::new("moment", side, entries));
    for (j, gj) in gs.iter().enumerate() {
        let (side, entries) = localizing_entries(gj, &basis, k);
        blocks.push(PsdBlock::new(&format!("localizing_g{}", j + 1), side, entries));
    }
    SdpProblem::new(num_vars, objective, rows, rhs, kinds, blocks)
}
