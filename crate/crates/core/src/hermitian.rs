//! Hermitian tensors, their flattening matrices and decomposition assembly.
//!
//! A tensor `H` in `C^{[n_1,...,n_m]}` is stored as its `M x M` flattening
//! matrix in row-major order, `M = n_1 * ... * n_m`. Multi-indices are ordered
//! lexicographically, which is the same order as row-major flat indices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default cap on `(n_1 * ... * n_m)^2`, the number of stored entries.
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 28;

/// Tolerance for the Hermitian-symmetry check on ingestion.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Mode dimensions `(n_1, ..., n_m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_limit(dims, DEFAULT_MAX_ENTRIES)
    }

    pub fn with_limit(dims: Vec<usize>, max_entries: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("order must be at least 1".into()));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidShape(format!("zero mode dimension in {dims:?}")));
        }
        let flat = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidShape(format!("dimension product overflows for {dims:?}")))?;
        let total = flat
            .checked_mul(flat)
            .ok_or_else(|| Error::InvalidShape(format!("entry count overflows for {dims:?}")))?;
        if total > max_entries {
            return Err(Error::InvalidShape(format!(
                "{total} entries exceed the limit of {max_entries}"
            )));
        }
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Order `m`.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// `M = n_1 * ... * n_m`.
    pub fn flat_size(&self) -> usize {
        self.dims.iter().product()
    }

    /// `N = n_1 + ... + n_m`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Multi-index of a flat (row-major) index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (slot, &n) in idx.iter_mut().zip(&self.dims).rev() {
            *slot = flat % n;
            flat /= n;
        }
        idx
    }

    /// Flat (row-major) index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }
}

/// A Hermitian tensor stored through its flattening matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianTensor {
    shape: Shape,
    /// Row-major `M x M` flattening.
    entries: Vec<C64>,
}

impl HermitianTensor {
    /// Builds a tensor from row-major flattening entries. The input must be
    /// Hermitian within [`HERMITIAN_TOL`] (relative to the largest entry) and
    /// is symmetrized afterwards.
    pub fn from_flat_entries(shape: Shape, mut entries: Vec<C64>) -> Result<Self> {
        let m = shape.flat_size();
        if entries.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for shape {:?}, got {}",
                m * m,
                shape.dims(),
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = entries.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let mut dev = 0.0_f64;
        for i in 0..m {
            for j in i..m {
                dev = dev.max((entries[i * m + j] - entries[j * m + i].conj()).norm());
            }
        }
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { deviation: dev, tolerance: HERMITIAN_TOL });
        }
        for i in 0..m {
            for j in i..m {
                let a = entries[i * m + j];
                let b = entries[j * m + i];
                let s = C64::new((a.re + b.re) / 2.0, (a.im - b.im) / 2.0);
                entries[i * m + j] = s;
                entries[j * m + i] = s.conj();
            }
        }
        Ok(HermitianTensor { shape, entries })
    }

    /// Zero tensor of the given shape.
    pub fn zeros(shape: Shape) -> Self {
        let m = shape.flat_size();
        HermitianTensor { shape, entries: vec![C64::new(0.0, 0.0); m * m] }
    }

    /// Builds a tensor entrywise from a function of the multi-index pair
    /// `(I, J)`. The function must be Hermitian.
    pub fn from_fn(shape: Shape, f: impl Fn(&[usize], &[usize]) -> C64) -> Result<Self> {
        let m = shape.flat_size();
        let labels: Vec<Vec<usize>> = (0..m).map(|a| shape.multi_index(a)).collect();
        let mut entries = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                entries.push(f(&labels[a], &labels[b]));
            }
        }
        Self::from_flat_entries(shape, entries)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Row-major flattening entries.
    pub fn flat_entries(&self) -> &[C64] {
        &self.entries
    }

    /// Flattening entry at flat indices `(a, b)`.
    pub fn flat(&self, a: usize, b: usize) -> C64 {
        self.entries[a * self.shape.flat_size() + b]
    }

    /// Tensor entry `H_{IJ}`.
    pub fn get(&self, i: &[usize], j: &[usize]) -> C64 {
        self.flat(self.shape.flat_index(i), self.shape.flat_index(j))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real inner product `<A, B> = sum A_IJ conj(B_IJ)`.
    pub fn inner(&self, other: &HermitianTensor) -> Result<f64> {
        same_shape(self, other)?;
        let z: C64 = self.entries.iter().zip(&other.entries).map(|(a, b)| a * b.conj()).sum();
        Ok(z.re)
    }

    /// Multiplies every entry by a real scalar.
    pub fn scaled(&self, s: f64) -> HermitianTensor {
        HermitianTensor {
            shape: self.shape.clone(),
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// Entrywise sum.
    pub fn add(&self, other: &HermitianTensor) -> Result<HermitianTensor> {
        same_shape(self, other)?;
        Ok(HermitianTensor {
            shape: self.shape.clone(),
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    /// Reorders the modes: mode `j` of the result is mode `perm[j]` of `self`.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<HermitianTensor> {
        let m = self.shape.order();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::DimensionMismatch(format!("{perm:?} is not a permutation of {m} modes")));
        }
        let dims: Vec<usize> = perm.iter().map(|&p| self.shape.dims[p]).collect();
        let shape = Shape::new(dims)?;
        let size = shape.flat_size();
        let mut entries = vec![C64::new(0.0, 0.0); size * size];
        let map: Vec<usize> = (0..size)
            .map(|a| {
                let idx = shape.multi_index(a);
                let mut orig = vec![0; m];
                for (j, &p) in perm.iter().enumerate() {
                    orig[p] = idx[j];
                }
                self.shape.flat_index(&orig)
            })
            .collect();
        for a in 0..size {
            for b in 0..size {
                entries[a * size + b] = self.flat(map[a], map[b]);
            }
        }
        Ok(HermitianTensor { shape, entries })
    }
}

fn same_shape(a: &HermitianTensor, b: &HermitianTensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::DimensionMismatch(format!(
            "shapes {:?} and {:?} differ",
            a.shape.dims(),
            b.shape.dims()
        )));
    }
    Ok(())
}

/// One term `lambda * [u^1, ..., u^m]_h` of a Hermitian decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianTerm {
    pub weight: f64,
    pub vectors: Vec<DVector<C64>>,
}

/// `H = sum_i lambda_i [u_i^1, ..., u_i^m]_h`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HermitianDecomposition {
    pub terms: Vec<HermitianTerm>,
}

impl HermitianDecomposition {
    pub fn is_positive(&self) -> bool {
        self.terms.iter().all(|t| t.weight > 0.0)
    }

    fn check(&self, shape: &Shape) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if !t.weight.is_finite() {
                return Err(Error::NonFinite);
            }
            let lens: Vec<usize> = t.vectors.iter().map(|v| v.len()).collect();
            if lens != shape.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "term {i} has vector lengths {lens:?}, shape is {:?}",
                    shape.dims()
                )));
            }
        }
        Ok(())
    }
}

/// `H = sum_i B_i^1 (x) ... (x) B_i^m` with Hermitian psd factors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsdDecomposition {
    pub terms: Vec<Vec<DMatrix<C64>>>,
}

impl PsdDecomposition {
    /// Checks Hermitian symmetry (1e-10) and positive semidefiniteness of
    /// every factor, allowing eigenvalues down to `-tol_psd * max(1, ||B||)`.
    pub fn validate(&self, shape: &Shape, tol_psd: f64) -> Result<()> {
        for (i, term) in self.terms.iter().enumerate() {
            let sides: Vec<usize> = term.iter().map(|b| b.nrows()).collect();
            if sides != shape.dims() || term.iter().any(|b| !b.is_square()) {
                return Err(Error::DimensionMismatch(format!("term {i} has factor sides {sides:?}")));
            }
            for (j, b) in term.iter().enumerate() {
                let asym = (b - b.adjoint()).norm();
                if asym > 1e-10 * b.norm().max(1.0) {
                    return Err(Error::NotHermitian { deviation: asym, tolerance: 1e-10 });
                }
                let min = min_eigenvalue(b);
                if min < -tol_psd * b.norm().max(1.0) {
                    return Err(Error::Numerical(format!(
                        "factor ({i}, {j}) has eigenvalue {min:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(b: &DMatrix<C64>) -> f64 {
    let h = (b + b.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Kronecker product of complex vectors, first factor slowest.
pub fn kron_vectors(vs: &[DVector<C64>]) -> DVector<C64> {
    let mut out = DVector::from_element(1, C64::new(1.0, 0.0));
    for v in vs {
        out = out.kronecker(v);
    }
    out
}

/// The flattening matrix `m(H)` (Hermitian, `M x M`).
pub fn flatten_matrix(h: &HermitianTensor) -> DMatrix<C64> {
    let m = h.shape.flat_size();
    DMatrix::from_row_slice(m, m, &h.entries)
}

/// Inverse of [`flatten_matrix`].
pub fn unflatten_matrix(mat: &DMatrix<C64>, shape: Shape) -> Result<HermitianTensor> {
    let m = shape.flat_size();
    if mat.nrows() != m || mat.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, shape {:?} needs {m}x{m}",
            mat.nrows(),
            mat.ncols(),
            shape.dims()
        )));
    }
    let mut entries = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            entries.push(mat[(a, b)]);
        }
    }
    HermitianTensor::from_flat_entries(shape, entries)
}

/// `<H, [z_1, ..., z_m]_h>`, which is real for Hermitian `H`.
pub fn eval_form(h: &HermitianTensor, z: &[DVector<C64>]) -> Result<f64> {
    let lens: Vec<usize> = z.iter().map(|v| v.len()).collect();
    if lens != h.shape.dims() {
        return Err(Error::DimensionMismatch(format!(
            "vector lengths {lens:?} do not match shape {:?}",
            h.shape.dims()
        )));
    }
    let zz = kron_vectors(z);
    let m = zz.len();
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..m {
        let mut row = C64::new(0.0, 0.0);
        for b in 0..m {
            row += h.entries[a * m + b] * zz[b];
        }
        acc += zz[a].conj() * row;
    }
    let bound = 1e-10 * (acc.re.abs() + h.norm() * zz.norm_squared());
    debug_assert!(acc.im.abs() <= bound.max(1e-300), "imaginary part {} too large", acc.im);
    Ok(acc.re)
}

/// `sum_i lambda_i [u_i^1, ..., u_i^m]_h`.
pub fn from_decomposition(d: &HermitianDecomposition, shape: &Shape) -> Result<HermitianTensor> {
    d.check(shape)?;
    let m = shape.flat_size();
    let mut entries = vec![C64::new(0.0, 0.0); m * m];
    for t in &d.terms {
        let u = kron_vectors(&t.vectors);
        for a in 0..m {
            let ua = u[a] * t.weight;
            for b in 0..m {
                entries[a * m + b] += ua * u[b].conj();
            }
        }
    }
    HermitianTensor::from_flat_entries(shape.clone(), entries)
}

/// `sum_i B_i^1 (x) ... (x) B_i^m`.
pub fn assemble_from_psd(p: &PsdDecomposition, shape: &Shape) -> Result<HermitianTensor> {
    let m = shape.flat_size();
    let mut acc = DMatrix::<C64>::zeros(m, m);
    for (i, term) in p.terms.iter().enumerate() {
        let sides: Vec<usize> = term.iter().map(|b| b.nrows()).collect();
        if sides != shape.dims() {
            return Err(Error::DimensionMismatch(format!("term {i} has factor sides {sides:?}")));
        }
        let mut k = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for b in term {
            k = k.kronecker(b);
        }
        acc += k;
    }
    unflatten_matrix(&acc, shape.clone())
}

/// `||H - candidate||_F / max(1, ||H||_F)`.
pub fn residual(h: &HermitianTensor, candidate: &HermitianTensor) -> Result<f64> {
    same_shape(h, candidate)?;
    let diff: f64 = h
        .entries
        .iter()
        .zip(&candidate.entries)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(diff / h.norm().max(1.0))
}

/// `||H - candidate||_F` without normalization.
pub fn abs_residual(h: &HermitianTensor, candidate: &HermitianTensor) -> Result<f64> {
    Ok(residual(h, candidate)? * h.norm().max(1.0))
}
