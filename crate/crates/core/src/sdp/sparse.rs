/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Builds from rows already sorted by column without duplicates.
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Csr {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for r in rows {
            for &(c, v) in r {
                idx.push(c);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        Csr { nrows: rows.len(), ncols, ptr, idx, val }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.ptr[i]..self.ptr[i + 1]).map(move |k| (self.idx[k], self.val[k]))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.ptr[i + 1] - self.ptr[i]
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let ptr = counts.clone();
        let mut next = counts;
        let mut idx = vec![0; self.idx.len()];
        let mut val = vec![0.0; self.val.len()];
        for r in 0..self.nrows {
            for k in self.ptr[r]..self.ptr[r + 1] {
                let c = self.idx[k];
                let pos = next[c];
                idx[pos] = r;
                val[pos] = self.val[k];
                next[c] += 1;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, ptr, idx, val }
    }

    /// `out = self * x`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.ptr[i]..self.ptr[i + 1] {
                acc += self.val[k] * x[self.idx[k]];
            }
            *o = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_into(x, &mut out);
        out
    }

    /// Scales rows by `d` and columns by `e`.
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for i in 0..self.nrows {
            for k in self.ptr[i]..self.ptr[i + 1] {
                self.val[k] *= d[i] * e[self.idx[k]];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_and_products() {
        let a = Csr::from_rows(3, &[vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]]);
        let t = a.transpose();
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), vec![7.0, -2.0]);
        assert_eq!(t.mul(&[1.0, 2.0]), vec![1.0, -2.0, 2.0]);
        assert_eq!(t.transpose(), a);
    }
}
