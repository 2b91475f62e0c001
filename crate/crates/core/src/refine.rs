//! Levenberg-Marquardt polishing of a positive decomposition against the
//! tensor it should reproduce. Each term is parametrized by unnormalized
//! vectors `a^j`, so `lambda = prod_j ||a^j||^2` stays nonnegative.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::hermitian::{flatten_matrix, HermitianDecomposition, HermitianTensor, HermitianTerm, C64};
use crate::poly::gauge_fix;

fn outer(a: &DVector<C64>) -> DMatrix<C64> {
    a * a.adjoint()
}

fn kron_all(ms: &[DMatrix<C64>]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for m in ms {
        out = out.kronecker(m);
    }
    out
}

struct Model {
    dims: Vec<usize>,
    terms: usize,
}

impl Model {
    fn nparams(&self) -> usize {
        self.terms * 2 * self.dims.iter().sum::<usize>()
    }

    fn unpack(&self, theta: &[f64]) -> Vec<Vec<DVector<C64>>> {
        let mut off = 0;
        (0..self.terms)
            .map(|_| {
                self.dims
                    .iter()
                    .map(|&n| {
                        let v = DVector::from_fn(n, |p, _| C64::new(theta[off + 2 * p], theta[off + 2 * p + 1]));
                        off += 2 * n;
                        v
                    })
                    .collect()
            })
            .collect()
    }

    fn pack(&self, vs: &[Vec<DVector<C64>>]) -> Vec<f64> {
        vs.iter().flatten().flat_map(|v| v.iter().flat_map(|z| [z.re, z.im])).collect()
    }

    fn residual(&self, theta: &[f64], target: &DMatrix<C64>) -> DVector<f64> {
        let mut f = -target.clone();
        for t in self.unpack(theta) {
            f += kron_all(&t.iter().map(outer).collect::<Vec<_>>());
        }
        DVector::from_iterator(2 * f.len(), f.iter().flat_map(|z| [z.re, z.im]))
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let msize = target_len(&self.dims);
        let mut jac = DMatrix::zeros(2 * msize, self.nparams());
        let mut col = 0;
        for t in self.unpack(theta) {
            let outers: Vec<DMatrix<C64>> = t.iter().map(outer).collect();
            for (j, a) in t.iter().enumerate() {
                let n = a.len();
                for p in 0..n {
                    for imag in [false, true] {
                        let unit = if imag { C64::new(0.0, 1.0) } else { C64::new(1.0, 0.0) };
                        // d(a a^*) for a -> a + eps * unit * e_p
                        let mut d = DMatrix::zeros(n, n);
                        for q in 0..n {
                            d[(p, q)] += unit * a[q].conj();
                            d[(q, p)] += a[q] * unit.conj();
                        }
                        let mut factors = outers.clone();
                        factors[j] = d;
                        let k = kron_all(&factors);
                        for (i, z) in k.iter().enumerate() {
                            jac[(2 * i, col)] = z.re;
                            jac[(2 * i + 1, col)] = z.im;
                        }
                        col += 1;
                    }
                }
            }
        }
        jac
    }
}

fn target_len(dims: &[usize]) -> usize {
    let m: usize = dims.iter().product();
    m * m
}

/// Runs damped Gauss-Newton from `d` and returns the improved decomposition,
/// or `d` itself when no step helps. Output vectors are unit-norm and
/// gauge-fixed; terms whose weight collapses to zero are dropped.
pub(crate) fn refine(h: &HermitianTensor, d: &HermitianDecomposition, max_iter: usize) -> Result<HermitianDecomposition> {
    if d.terms.is_empty() {
        return Ok(d.clone());
    }
    let model = Model { dims: h.shape().dims().to_vec(), terms: d.terms.len() };
    let target = flatten_matrix(h);
    let start: Vec<Vec<DVector<C64>>> = d
        .terms
        .iter()
        .map(|t| {
            let mut vs = t.vectors.clone();
            vs[0] *= C64::new(t.weight.max(0.0).sqrt(), 0.0);
            vs
        })
        .collect();
    let mut theta = model.pack(&start);
    let mut r = model.residual(&theta, &target);
    let mut cost = r.norm_squared();
    let floor = (1e-15 * target.norm()).powi(2);
    let mut mu = 0.0;
    let mut stalls = 0;
    for _ in 0..max_iter {
        if cost <= floor {
            break;
        }
        let jac = model.jacobian(&theta);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = jtj.diagonal().max();
        if mu == 0.0 {
            mu = 1e-6 * dmax.max(f64::MIN_POSITIVE);
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += mu * (1.0 + jtj[(i, i)] / dmax.max(f64::MIN_POSITIVE));
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rc = model.residual(&cand, &target);
            let cc = rc.norm_squared();
            if cc < cost {
                improved = cc < cost * (1.0 - 1e-6);
                theta = cand;
                r = rc;
                cost = cc;
                mu = (mu / 5.0).max(1e-18 * dmax);
                break;
            }
            mu *= 8.0;
        }
        if !improved {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    let terms = model
        .unpack(&theta)
        .into_iter()
        .filter_map(|vs| {
            let weight: f64 = vs.iter().map(|v| v.norm_squared()).product();
            if weight <= 0.0 || !weight.is_finite() {
                return None;
            }
            let vectors = vs.iter().map(|v| gauge_fix(&(v / C64::new(v.norm(), 0.0)))).collect();
            Some(HermitianTerm { weight, vectors })
        })
        .collect();
    Ok(HermitianDecomposition { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::{from_decomposition, residual, Shape};

    fn unit(v: &[(f64, f64)]) -> DVector<C64> {
        let v = DVector::from_iterator(v.len(), v.iter().map(|&(a, b)| C64::new(a, b)));
        let n = v.norm();
        gauge_fix(&(v / C64::new(n, 0.0)))
    }

    #[test]
    fn recovers_perturbed_decomposition() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let exact = HermitianDecomposition {
            terms: vec![
                HermitianTerm { weight: 2.0, vectors: vec![unit(&[(1.0, 0.0), (0.3, 0.4)]), unit(&[(0.5, 0.0), (1.0, -0.2), (0.1, 0.7)])] },
                HermitianTerm { weight: 0.7, vectors: vec![unit(&[(0.2, 0.0), (1.0, 0.1)]), unit(&[(1.0, 0.0), (-0.4, 0.3), (0.6, 0.0)])] },
            ],
        };
        let h = from_decomposition(&exact, &shape).unwrap();
        let mut noisy = exact.clone();
        noisy.terms[0].weight += 1e-3;
        noisy.terms[1].vectors[1][2] += C64::new(2e-3, -1e-3);
        let before = residual(&h, &from_decomposition(&noisy, &shape).unwrap()).unwrap();
        let fixed = refine(&h, &noisy, 50).unwrap();
        let after = residual(&h, &from_decomposition(&fixed, &shape).unwrap()).unwrap();
        assert!(before > 1e-4);
        assert!(after < 1e-12, "{after}");
        assert!(fixed.is_positive());
        for t in &fixed.terms {
            for v in &t.vectors {
                assert!((v.norm() - 1.0).abs() < 1e-12);
                assert!(v[0].im == 0.0 && v[0].re >= 0.0);
            }
        }
    }
}
