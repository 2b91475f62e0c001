//! Farkas certificates of primal infeasibility.
//!
//! A pair `(mu, Z)` with `A^T mu - sum S_l^*(Z_l) = 0`, `Z_l >= 0` and
//! `b^T mu < 0` proves that no `w` satisfies `A w = b`, `S_l(w) >= 0`:
//! pairing with such a `w` would give `b^T mu = sum <S_l(w), Z_l> >= 0`.

use nalgebra::DMatrix;

use super::cone::{min_eig, project_psd, svec_len};
use super::linsys::NormalSolver;
use super::sparse::Csr;
use super::{DualSolution, SdpProblem};
use crate::error::{Error, Result};

/// Quantities entering the certificate test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateMargins {
    /// `||A^T mu - sum S_l^*(Z_l)||`.
    pub residual: f64,
    /// `||mu|| + sum ||Z_l||_F`.
    pub norm: f64,
    /// Smallest eigenvalue over all `Z_l`.
    pub min_eig: f64,
    /// `b^T mu`.
    pub b_dot_mu: f64,
}

pub fn certificate_margins(p: &SdpProblem, cert: &DualSolution) -> Result<CertificateMargins> {
    if cert.mu.len() != p.rows.len() {
        return Err(Error::Malformed(format!("certificate has {} multipliers for {} rows", cert.mu.len(), p.rows.len())));
    }
    if cert.z.len() != p.blocks.len() {
        return Err(Error::Malformed(format!("certificate has {} blocks, problem has {}", cert.z.len(), p.blocks.len())));
    }
    for (z, b) in cert.z.iter().zip(&p.blocks) {
        if z.nrows() != b.side || z.ncols() != b.side {
            return Err(Error::Malformed(format!("block {} must be {}x{}", b.name, b.side, b.side)));
        }
    }
    let finite = cert.mu.iter().all(|v| v.is_finite()) && cert.z.iter().all(|z| z.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite);
    }
    let mut r = p.eq_adjoint(&cert.mu);
    let mut min = f64::INFINITY;
    let mut norm = cert.mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (l, z) in cert.z.iter().enumerate() {
        let zs = (z + z.transpose()) * 0.5;
        for (v, a) in r.iter_mut().zip(p.block_adjoint(l, &zs)) {
            *v -= a;
        }
        min = min.min(min_eig(&zs));
        norm += zs.norm();
    }
    Ok(CertificateMargins {
        residual: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
        norm,
        min_eig: min,
        b_dot_mu: p.rhs.iter().zip(&cert.mu).map(|(b, m)| b * m).sum(),
    })
}

/// Farkas test: residual within `eps_inf (1 + ||mu|| + sum ||Z||)`, every
/// `Z_l >= -eps_inf`, and `b^T mu <= -eps_inf`.
pub fn verify_certificate(p: &SdpProblem, cert: &DualSolution, eps_inf: f64) -> Result<bool> {
    let m = certificate_margins(p, cert)?;
    Ok(m.residual <= eps_inf * (1.0 + m.norm) && m.min_eig >= -eps_inf && m.b_dot_mu <= -eps_inf)
}

/// Scales a certificate to `||mu|| + sum ||Z_l||_F = 1`.
pub(crate) fn normalize(p: &SdpProblem, mut cert: DualSolution) -> DualSolution {
    let _ = p;
    let norm = cert.mu.iter().map(|v| v * v).sum::<f64>().sqrt() + cert.z.iter().map(|z| z.norm()).sum::<f64>();
    if norm > 0.0 {
        cert.mu.iter_mut().for_each(|v| *v /= norm);
        cert.z.iter_mut().for_each(|z| *z /= norm);
    }
    cert
}

/// Data of the embedded problem `A_full y`-space used for polishing.
pub(crate) struct PolishData<'a> {
    pub a: &'a Csr,
    pub at: &'a Csr,
    pub n_eq: usize,
    pub sides: &'a [usize],
}

/// Pulls an approximate certificate `y = (mu, svec Z)` onto
/// `{A_full^T y = 0}` while keeping the cone part psd, by alternating
/// projections. Returns the polished vector.
pub(crate) fn polish(data: &PolishData<'_>, y: &[f64], rounds: usize) -> Result<Vec<f64>> {
    let a = data.a;
    let ones = vec![1.0; a.nrows];
    let diag_max = (0..a.ncols).map(|c| data.at.row(c).map(|(_, v)| v * v).sum::<f64>()).fold(0.0, f64::max);
    let solver = NormalSolver::new(a, data.n_eq, &ones, 1e-13 * diag_max.max(1.0))?;
    let affine = |y: &mut Vec<f64>| {
        // two steps of iterative refinement against the regularization
        for _ in 0..2 {
            let mut r = data.at.mul(y);
            solver.solve_in_place(&mut r);
            let corr = a.mul(&r);
            for (v, c) in y.iter_mut().zip(corr) {
                *v -= c;
            }
        }
    };
    let mut y = y.to_vec();
    affine(&mut y);
    for _ in 0..rounds {
        let mut off = data.n_eq;
        let mut clean = true;
        for &s in data.sides {
            let len = svec_len(s);
            let before = y[off..off + len].to_vec();
            project_psd(&mut y[off..off + len], s);
            if before.iter().zip(&y[off..off + len]).any(|(a, b)| a != b) {
                clean = false;
            }
            off += len;
        }
        if clean {
            break;
        }
        affine(&mut y);
    }
    Ok(y)
}

/// Builds a certificate on all rows from the embedded dual vector.
pub(crate) fn scatter(p: &SdpProblem, kept: &[usize], y: &[f64], sides: &[usize]) -> DualSolution {
    let mut mu = vec![0.0; p.rows.len()];
    for (k, &r) in kept.iter().enumerate() {
        mu[r] = y[k];
    }
    let mut off = kept.len();
    let z = sides
        .iter()
        .map(|&s| {
            let len = svec_len(s);
            let m = super::cone::smat_nalgebra(&y[off..off + len], s);
            off += len;
            m
        })
        .collect::<Vec<DMatrix<f64>>>();
    DualSolution { mu, z }
}
