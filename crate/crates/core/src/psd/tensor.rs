//! Dense complex tensors and the flattenings of a Hermitian tensor into them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hermitian::{HermitianTensor, C64};

use super::kernels::khatri_rao_all;

/// Dense complex tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

impl ComplexTensor {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(format!("tensor dimensions {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!("{} entries for dimensions {dims:?}", data.len())));
        }
        Ok(ComplexTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![C64::new(0.0, 0.0); len])
    }

    /// `sum_r f_1^r (x) ... (x) f_m^r` for factor matrices with `s` columns.
    pub fn from_factors(factors: &[DMatrix<C64>]) -> Result<Self> {
        let kr = khatri_rao_all(factors)?;
        let dims = factors.iter().map(|f| f.nrows()).collect();
        let data = (0..kr.nrows()).map(|i| kr.row(i).iter().sum()).collect();
        Self::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        let off: usize = idx.iter().zip(strides(&self.dims)).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Same entries under new dimensions with the same product.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }

    /// Mode-`k` unfolding: `n_k` rows, columns ordered row-major over the
    /// remaining modes in their original order.
    pub fn unfold(&self, k: usize) -> DMatrix<C64> {
        let n = self.dims[k];
        let cols = self.data.len() / n;
        let st = strides(&self.dims);
        let mut out = DMatrix::zeros(n, cols);
        let inner = st[k];
        for (off, z) in self.data.iter().enumerate() {
            let row = (off / inner) % n;
            let col = (off / (inner * n)) * inner + off % inner;
            out[(row, col)] = *z;
        }
        out
    }
}

/// Index `i * n + j` of `(i, j)` in a row-major vectorized `n x n` matrix.
fn vec_index(i: usize, j: usize, n: usize) -> usize {
    i * n + j
}

/// `T(H)` with dimensions `(n_1^2, ..., n_m^2)`; the entry at
/// `(vec(i_1, j_1), ..., vec(i_m, j_m))` is `H_{i_1..i_m j_1..j_m}`.
pub fn flatten_t(h: &HermitianTensor) -> ComplexTensor {
    let shape = h.shape();
    let dims: Vec<usize> = shape.dims().iter().map(|n| n * n).collect();
    let st = strides(&dims);
    let size = shape.flat_size();
    let labels: Vec<Vec<usize>> = (0..size).map(|a| shape.multi_index(a)).collect();
    let mut data = vec![C64::new(0.0, 0.0); size * size];
    for (a, i) in labels.iter().enumerate() {
        for (b, j) in labels.iter().enumerate() {
            let off: usize = (0..i.len()).map(|k| vec_index(i[k], j[k], shape.dims()[k]) * st[k]).sum();
            data[off] = h.flat(a, b);
        }
    }
    ComplexTensor { dims, data }
}

fn require_two_modes(h: &HermitianTensor) -> Result<(usize, usize)> {
    match *h.shape().dims() {
        [n1, n2] => Ok((n1, n2)),
        _ => Err(Error::InvalidShape(format!("two modes required, got {:?}", h.shape().dims()))),
    }
}

/// `T1(H)` with dimensions `(n_1, n_1, n_2^2)`: `T1[a, b, vec(c, d)] = H_{(a,c),(b,d)}`.
pub fn flatten_t1(h: &HermitianTensor) -> Result<ComplexTensor> {
    let (n1, n2) = require_two_modes(h)?;
    let mut data = Vec::with_capacity(n1 * n1 * n2 * n2);
    for a in 0..n1 {
        for b in 0..n1 {
            for c in 0..n2 {
                for d in 0..n2 {
                    data.push(h.flat(a * n2 + c, b * n2 + d));
                }
            }
        }
    }
    ComplexTensor::new(vec![n1, n1, n2 * n2], data)
}

/// `T2(H)` with dimensions `(n_1^2, n_2, n_2)`: `T2[vec(a, b), c, d] = H_{(a,c),(b,d)}`.
pub fn flatten_t2(h: &HermitianTensor) -> Result<ComplexTensor> {
    let (n1, n2) = require_two_modes(h)?;
    let mut data = Vec::with_capacity(n1 * n1 * n2 * n2);
    for a in 0..n1 {
        for b in 0..n1 {
            for c in 0..n2 {
                for d in 0..n2 {
                    data.push(h.flat(a * n2 + c, b * n2 + d));
                }
            }
        }
    }
    ComplexTensor::new(vec![n1 * n1, n2, n2], data)
}

/// Merges modes `3..m` of an order-`m` tensor into one. Because storage is
/// row-major the entries are unchanged; a rank-one term with factors
/// `f_1, ..., f_m` becomes `f_1 (x) f_2 (x) (f_3 (x) ... (x) f_m)`.
pub fn cubic_reshape(t: &ComplexTensor) -> Result<ComplexTensor> {
    if t.order() <= 3 {
        return Err(Error::InvalidShape(format!("cubic reshape needs more than 3 modes, got {}", t.order())));
    }
    let rest = t.dims[2..].iter().product();
    t.reshape(vec![t.dims[0], t.dims[1], rest])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::{from_decomposition, kron_vectors, HermitianDecomposition, HermitianTerm, Shape};
    use crate::random::{complex_gaussian, rng, unit_vector};
    use nalgebra::DVector;

    fn outer_vec(u: &DVector<C64>) -> DVector<C64> {
        // u (x) conj(u)
        kron_vectors(&[u.clone(), u.conjugate()])
    }

    fn rank_one(vs: Vec<DVector<C64>>) -> HermitianTensor {
        let shape = Shape::new(vs.iter().map(|v| v.len()).collect()).unwrap();
        let d = HermitianDecomposition { terms: vec![HermitianTerm { weight: 1.0, vectors: vs }] };
        from_decomposition(&d, &shape).unwrap()
    }

    #[test]
    fn t_of_rank_one_is_kronecker_of_outer_vectors() {
        let mut r = rng(3);
        let (u, v) = (unit_vector(&mut r, 2), unit_vector(&mut r, 3));
        let t = flatten_t(&rank_one(vec![u.clone(), v.clone()]));
        assert_eq!(t.dims(), &[4, 9]);
        let expect = kron_vectors(&[outer_vec(&u), outer_vec(&v)]);
        for (a, b) in t.data().iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn t_of_identity_flattening_is_delta_pattern() {
        let shape = Shape::new(vec![2, 2]).unwrap();
        let h = HermitianTensor::from_fn(shape, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).unwrap();
        let t = flatten_t(&h);
        for p in 0..4 {
            for q in 0..4 {
                let want = if p % 3 == 0 && q % 3 == 0 { 1.0 } else { 0.0 };
                assert_eq!(t.get(&[p, q]), C64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn t1_and_t2_of_rank_one() {
        let mut r = rng(4);
        let (u, v) = (unit_vector(&mut r, 3), unit_vector(&mut r, 2));
        let h = rank_one(vec![u.clone(), v.clone()]);
        let t1 = flatten_t1(&h).unwrap();
        let want1 = kron_vectors(&[u.clone(), u.conjugate(), outer_vec(&v)]);
        assert!(t1.data().iter().zip(want1.iter()).all(|(a, b)| (a - b).norm() < 1e-15));
        let t2 = flatten_t2(&h).unwrap();
        let want2 = kron_vectors(&[outer_vec(&u), v.clone(), v.conjugate()]);
        assert!(t2.data().iter().zip(want2.iter()).all(|(a, b)| (a - b).norm() < 1e-15));
        let h3 = rank_one(vec![u.clone(), v.clone(), v]);
        assert!(flatten_t1(&h3).is_err());
    }

    #[test]
    fn t1_is_linear() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let a = crate::random::random_hermitian(&shape, 1).unwrap();
        let b = crate::random::random_hermitian(&shape, 2).unwrap();
        let lhs = flatten_t1(&a.add(&b).unwrap()).unwrap();
        let (ta, tb) = (flatten_t1(&a).unwrap(), flatten_t1(&b).unwrap());
        for i in 0..lhs.data().len() {
            assert!((lhs.data()[i] - ta.data()[i] - tb.data()[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn unfolding_matches_factor_product() {
        let mut r = rng(9);
        let f: Vec<DMatrix<C64>> = [3, 2, 4]
            .iter()
            .map(|&n| DMatrix::from_column_slice(n, 2, complex_gaussian(&mut r, 2 * n).as_slice()))
            .collect();
        let t = ComplexTensor::from_factors(&f).unwrap();
        for k in 0..3 {
            let others: Vec<DMatrix<C64>> = (0..3).filter(|&j| j != k).map(|j| f[j].clone()).collect();
            let kr = khatri_rao_all(&others).unwrap();
            assert!((t.unfold(k) - &f[k] * kr.transpose()).norm() < 1e-12);
        }
    }

    #[test]
    fn cubic_reshape_merges_trailing_factors() {
        let mut r = rng(2);
        let vs: Vec<DVector<C64>> = [2, 3, 2, 2].iter().map(|&n| complex_gaussian(&mut r, n)).collect();
        let f: Vec<DMatrix<C64>> = vs.iter().map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice())).collect();
        let t = ComplexTensor::from_factors(&f).unwrap();
        let c = cubic_reshape(&t).unwrap();
        assert_eq!(c.dims(), &[2, 3, 4]);
        assert_eq!(c.data().len(), t.data().len());
        let merged = kron_vectors(&vs[2..]);
        let expect = kron_vectors(&[vs[0].clone(), vs[1].clone(), merged]);
        assert!(c.data().iter().zip(expect.iter()).all(|(a, b)| (a - b).norm() < 1e-14));
        assert!(cubic_reshape(&c).is_err());
    }
}
