//! Removal of linearly dependent equality rows by sparse elimination.
//!
//! Rows are eliminated with the highest-index variable (the leading monomial
//! in graded order) as pivot. Localizing rows are processed first; their
//! leading terms are pure squares of distinct variables, which keeps
//! fill-in low. Kept rows are the original, unreduced rows.

use std::collections::{BinaryHeap, HashMap};

use super::{EqualityKind, SdpProblem};
use crate::error::Result;

pub(crate) struct Presolve {
    pub kept: Vec<usize>,
    /// Multipliers proving `A w = b` inconsistent, when it is.
    pub inconsistency: Option<Vec<f64>>,
}

struct Pivot {
    entries: Vec<(usize, f64)>,
    lead: f64,
    rhs: f64,
    combo: Vec<(usize, f64)>,
}

pub(crate) fn reduce_equalities(p: &SdpProblem) -> Result<Presolve> {
    let n = p.num_vars;
    let amax = p.rows.iter().flat_map(|r| r.entries.iter().map(|e| e.1.abs())).fold(0.0, f64::max);
    let bmax = p.rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-10 * amax.max(f64::MIN_POSITIVE);
    let btol = 1e-9 * (1.0 + bmax);

    let mut order: Vec<usize> = (0..p.rows.len()).filter(|&i| matches!(p.kinds[i], EqualityKind::LocalizingH { .. })).collect();
    order.extend((0..p.rows.len()).filter(|&i| !matches!(p.kinds[i], EqualityKind::LocalizingH { .. })));

    let mut pivots: HashMap<usize, Pivot> = HashMap::new();
    let mut kept = Vec::new();
    let mut acc = vec![0.0; n];
    let mut touched = vec![false; n];

    for &ri in &order {
        let mut heap = BinaryHeap::new();
        let mut touched_list = Vec::new();
        for &(v, c) in &p.rows[ri].entries {
            acc[v] = c;
            touched[v] = true;
            touched_list.push(v);
            heap.push(v);
        }
        let mut rhs = p.rhs[ri];
        let mut combo: HashMap<usize, f64> = HashMap::from([(ri, 1.0)]);
        let mut new_lead = None;
        while let Some(v) = heap.pop() {
            if heap.peek() == Some(&v) {
                continue;
            }
            if acc[v].abs() <= tol {
                acc[v] = 0.0;
                continue;
            }
            match pivots.get(&v) {
                None => {
                    new_lead = Some(v);
                    break;
                }
                Some(pv) => {
                    let f = acc[v] / pv.lead;
                    for &(c, x) in &pv.entries {
                        if !touched[c] {
                            touched[c] = true;
                            touched_list.push(c);
                        }
                        if acc[c] == 0.0 {
                            heap.push(c);
                        }
                        acc[c] -= f * x;
                    }
                    acc[v] = 0.0;
                    rhs -= f * pv.rhs;
                    for &(r, x) in &pv.combo {
                        *combo.entry(r).or_insert(0.0) -= f * x;
                    }
                }
            }
        }
        match new_lead {
            Some(lead) => {
                let mut entries: Vec<(usize, f64)> =
                    touched_list.iter().filter(|&&c| acc[c].abs() > tol).map(|&c| (c, acc[c])).collect();
                entries.sort_by_key(|e| e.0);
                entries.dedup_by_key(|e| e.0);
                let mut combo: Vec<(usize, f64)> = combo.into_iter().filter(|e| e.1 != 0.0).collect();
                combo.sort_by_key(|e| e.0);
                pivots.insert(lead, Pivot { entries, lead: acc[lead], rhs, combo });
                kept.push(ri);
            }
            None => {
                if rhs.abs() > btol {
                    let sign = if rhs > 0.0 { -1.0 } else { 1.0 };
                    let mut mu = vec![0.0; p.rows.len()];
                    for (r, x) in combo {
                        mu[r] = sign * x;
                    }
                    for &c in &touched_list {
                        acc[c] = 0.0;
                        touched[c] = false;
                    }
                    return Ok(Presolve { kept, inconsistency: Some(mu) });
                }
            }
        }
        for &c in &touched_list {
            acc[c] = 0.0;
            touched[c] = false;
        }
    }
    kept.sort_unstable();
    Ok(Presolve { kept, inconsistency: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::SparseRow;

    fn problem(rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64>, n: usize) -> SdpProblem {
        let k = rows.len();
        SdpProblem::new(n, vec![0.0; n], rows.into_iter().map(SparseRow::new).collect(), rhs, vec![EqualityKind::Other; k], vec![]).unwrap()
    }

    #[test]
    fn drops_dependent_rows() {
        let p = problem(
            vec![vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0), (2, 1.0)], vec![(0, 1.0), (2, -1.0)], vec![(2, 3.0)]],
            vec![1.0, 2.0, -1.0, 0.5],
            3,
        );
        let pre = reduce_equalities(&p).unwrap();
        assert!(pre.inconsistency.is_none());
        assert_eq!(pre.kept, vec![0, 1, 3]);
    }

    #[test]
    fn detects_inconsistency() {
        let p = problem(vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 2.0), (1, 2.0)]], vec![1.0, 3.0], 2);
        let mu = reduce_equalities(&p).unwrap().inconsistency.unwrap();
        let atmu = p.eq_adjoint(&mu);
        assert!(atmu.iter().all(|v| v.abs() < 1e-14));
        let bmu: f64 = mu.iter().zip(&p.rhs).map(|(a, b)| a * b).sum();
        assert!(bmu < 0.0);
    }
}
