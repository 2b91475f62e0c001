//! Type-II Anderson acceleration of a fixed-point map `x -> g(x)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

pub(crate) struct Anderson {
    mem: usize,
    xs: VecDeque<Vec<f64>>,
    gs: VecDeque<Vec<f64>>,
}

impl Anderson {
    pub fn new(mem: usize) -> Self {
        Anderson { mem, xs: VecDeque::new(), gs: VecDeque::new() }
    }

    pub fn reset(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Records the pair `(x, g(x))` and returns the extrapolated point, if
    /// enough history is available and the least-squares system is sound.
    pub fn step(&mut self, x: &[f64], gx: &[f64]) -> Option<Vec<f64>> {
        self.xs.push_back(x.to_vec());
        self.gs.push_back(gx.to_vec());
        if self.xs.len() > self.mem + 1 {
            self.xs.pop_front();
            self.gs.pop_front();
        }
        let k = self.xs.len();
        if k < 2 {
            return None;
        }
        let len = x.len();
        let res = |i: usize| -> Vec<f64> { self.gs[i].iter().zip(&self.xs[i]).map(|(g, x)| g - x).collect() };
        let rs: Vec<Vec<f64>> = (0..k).map(res).collect();
        let cols = k - 1;
        let dr = DMatrix::from_fn(len, cols, |i, j| rs[j + 1][i] - rs[j][i]);
        let mut gram = dr.transpose() * &dr;
        let reg = 1e-10 * gram.norm().max(f64::MIN_POSITIVE);
        for i in 0..cols {
            gram[(i, i)] += reg;
        }
        let rhs = dr.transpose() * DVector::from_column_slice(&rs[k - 1]);
        let gamma = gram.cholesky()?.solve(&rhs);
        if !gamma.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut out = self.gs[k - 1].clone();
        for j in 0..cols {
            let gj = gamma[j];
            for ((o, a), b) in out.iter_mut().zip(&self.gs[j + 1]).zip(&self.gs[j]) {
                *o -= gj * (a - b);
            }
        }
        Some(out)
    }
}
