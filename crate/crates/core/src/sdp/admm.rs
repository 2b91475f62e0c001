//! Douglas-Rachford splitting on the homogeneous self-dual embedding
//!
//! ```text
//! minimize c^T x  s.t.  A x + s = b,  s in {0}^p x PSD_1 x ... x PSD_L,
//! ```
//!
//! with the psd slacks in scaled vectorized form. The iterate `w` is mapped
//! to `u~ = (R + Q)^{-1} R w`, then `u = Pi_C(2 u~ - w)` and
//! `w += alpha (u - u~)`, where `Q` is the skew-symmetric embedding matrix.

use super::anderson::Anderson;
use super::certificate::{self, PolishData};
use super::cone::{project_psd, svec_len, tri_index, SQRT2};
use super::linsys::NormalSolver;
use super::sparse::Csr;
use super::{check_optimality, Monitor, MONITOR_EVERY, verify_certificate, Residuals, SdpProblem, SolveOptions, SolveOutcome, SolveStatus, SparseRow};
use crate::error::Result;

const RHO_X: f64 = 1e-6;
const ALPHA: f64 = 1.5;
const EQ_WEIGHT: f64 = 1e-3;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 100;
const RUIZ_PASSES: usize = 25;
const AA_MEMORY: usize = 10;
/// An accelerated step is kept only if the next fixed-point residual does
/// not exceed this multiple of the residual before it.
const AA_SAFEGUARD: f64 = 1.0;

struct Embedded {
    n: usize,
    n_eq: usize,
    sides: Vec<usize>,
    a: Csr,
    at: Csr,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Embedded {
    fn m(&self) -> usize {
        self.a.nrows
    }
}

fn embed(p: &SdpProblem, kept: &[usize]) -> Embedded {
    let mut rows: Vec<Vec<(usize, f64)>> = kept.iter().map(|&i| p.rows[i].entries.clone()).collect();
    let mut b: Vec<f64> = kept.iter().map(|&i| p.rhs[i]).collect();
    let mut sides = Vec::with_capacity(p.blocks.len());
    for blk in &p.blocks {
        let mut cells: Vec<Vec<(usize, f64)>> = vec![Vec::new(); svec_len(blk.side)];
        for e in &blk.entries {
            let scale = if e.row == e.col { 1.0 } else { SQRT2 };
            cells[tri_index(blk.side, e.row, e.col)].push((e.var, -e.coef * scale));
        }
        for cell in cells {
            rows.push(SparseRow::new(cell).entries);
            b.push(0.0);
        }
        sides.push(blk.side);
    }
    let a = Csr::from_rows(p.num_vars, &rows);
    let at = a.transpose();
    Embedded { n: p.num_vars, n_eq: kept.len(), sides, a, at, b, c: p.objective.clone() }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Ruiz equilibration with one shared factor per psd block.
fn equilibrate(e: &Embedded) -> (Vec<f64>, Vec<f64>) {
    let m = e.m();
    let mut d = vec![1.0; m];
    let mut col = vec![1.0; e.n];
    let mut a = e.a.clone();
    for _ in 0..RUIZ_PASSES {
        let mut rn: Vec<f64> = (0..m).map(|i| a.row(i).fold(0.0_f64, |acc, (_, v)| acc.max(v.abs()))).collect();
        let mut off = e.n_eq;
        for &s in &e.sides {
            let len = svec_len(s);
            let mx = rn[off..off + len].iter().cloned().fold(0.0, f64::max);
            rn[off..off + len].iter_mut().for_each(|x| *x = mx);
            off += len;
        }
        let mut cn = vec![0.0_f64; e.n];
        for i in 0..m {
            for (c, v) in a.row(i) {
                cn[c] = cn[c].max(v.abs());
            }
        }
        let dr: Vec<f64> = rn.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 }).collect();
        let dc: Vec<f64> = cn.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 }).collect();
        let mut changed = false;
        for (di, f) in d.iter_mut().zip(&dr) {
            let nd = (*di * f).clamp(1e-4, 1e4);
            changed |= (nd / *di - 1.0).abs() > 1e-3;
            *di = nd;
        }
        for (ci, f) in col.iter_mut().zip(&dc) {
            let nc = (*ci * f).clamp(1e-4, 1e4);
            changed |= (nc / *ci - 1.0).abs() > 1e-3;
            *ci = nc;
        }
        a = e.a.clone();
        a.scale(&d, &col);
        if !changed {
            break;
        }
    }
    (d, col)
}

struct Scaled {
    a: Csr,
    at: Csr,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    sigma_b: f64,
    sigma_c: f64,
}

fn scale_problem(emb: &Embedded) -> Scaled {
    let (d, e) = equilibrate(emb);
    let mut a = emb.a.clone();
    a.scale(&d, &e);
    let at = a.transpose();
    let mut b: Vec<f64> = emb.b.iter().zip(&d).map(|(x, s)| x * s).collect();
    let mut c: Vec<f64> = emb.c.iter().zip(&e).map(|(x, s)| x * s).collect();
    let nb = norm(&b);
    let nc = norm(&c);
    let sigma_b = if nb > 0.0 { 1.0 / nb } else { 1.0 };
    let sigma_c = if nc > 0.0 { 1.0 / nc } else { 1.0 };
    b.iter_mut().for_each(|x| *x *= sigma_b);
    c.iter_mut().for_each(|x| *x *= sigma_c);
    Scaled { a, at, b, c, d, e, sigma_b, sigma_c }
}

struct Kkt {
    solver: NormalSolver,
    r: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    hp: f64,
}

impl Kkt {
    fn new(sc: &Scaled, n_eq: usize, scale: f64) -> Result<Kkt> {
        let m = sc.a.nrows;
        let r: Vec<f64> = (0..m).map(|i| if i < n_eq { EQ_WEIGHT / scale } else { 1.0 / scale }).collect();
        let solver = NormalSolver::new(&sc.a, n_eq, &r, RHO_X)?;
        let mut k = Kkt { solver, r, px: Vec::new(), py: Vec::new(), hp: 0.0 };
        let (px, py) = k.msolve(sc, &sc.c, &sc.b);
        k.hp = dot(&sc.c, &px) + dot(&sc.b, &py);
        k.px = px;
        k.py = py;
        Ok(k)
    }

    /// Solves `[[rho I, A^T], [-A, R_y]] (x, y) = (ax, ay)`.
    fn msolve(&self, sc: &Scaled, ax: &[f64], ay: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ayr: Vec<f64> = ay.iter().zip(&self.r).map(|(v, r)| v / r).collect();
        let t = sc.at.mul(&ayr);
        let mut x: Vec<f64> = ax.iter().zip(&t).map(|(a, b)| a - b).collect();
        self.solver.solve_in_place(&mut x);
        let axv = sc.a.mul(&x);
        let y = ay.iter().zip(&axv).zip(&self.r).map(|((a, b), r)| (a + b) / r).collect();
        (x, y)
    }
}

/// Iterate blocks `(x, y, tau)` stored contiguously.
struct Split<'a> {
    x: &'a [f64],
    y: &'a [f64],
    tau: f64,
}

fn split(v: &[f64], n: usize) -> Split<'_> {
    let m = v.len() - n - 1;
    Split { x: &v[..n], y: &v[n..n + m], tau: v[n + m] }
}

pub(crate) fn solve_reduced(
    p: &SdpProblem,
    kept: &[usize],
    opts: &SolveOptions,
    mut monitor: Option<Monitor<'_>>,
) -> Result<SolveOutcome> {
    let emb = embed(p, kept);
    let sc = scale_problem(&emb);
    let (n, m) = (emb.n, emb.m());
    let mut scale = 0.1;
    let mut kkt = Kkt::new(&sc, emb.n_eq, scale)?;

    let len = n + m + 1;
    let mut w = vec![0.0; len];
    w[len - 1] = 1.0;
    let mut u = vec![0.0; len];
    let mut ut = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut z = vec![0.0; len];

    let bnorm = norm(&emb.b);
    let cnorm = norm(&emb.c);
    let mut last_polish: Option<usize> = None;
    let mut best_ratio = f64::INFINITY;
    let mut last_res = Residuals::default();
    let mut adapt_ratio_log = 0.0;
    let mut adapt_count = 0usize;
    let mut aa = Anderson::new(AA_MEMORY);
    let mut aa_check: Option<f64> = None;
    let mut aa_backup = vec![0.0; len];
    let mut w_prev = vec![0.0; len];
    let (mut aa_steps, mut aa_rejects) = (0usize, 0usize);

    for it in 1..=opts.max_iter {
        w_prev.copy_from_slice(&w);
        // u~ = (R + Q)^{-1} R w
        let rx: Vec<f64> = w[..n].iter().map(|x| RHO_X * x).collect();
        let ry: Vec<f64> = w[n..n + m].iter().zip(&kkt.r).map(|(x, r)| x * r).collect();
        let (qx, qy) = kkt.msolve(&sc, &rx, &ry);
        let tau_t = (w[len - 1] + dot(&sc.c, &qx) + dot(&sc.b, &qy)) / (1.0 + kkt.hp);
        for i in 0..n {
            ut[i] = qx[i] - tau_t * kkt.px[i];
        }
        for i in 0..m {
            ut[n + i] = qy[i] - tau_t * kkt.py[i];
        }
        ut[len - 1] = tau_t;

        // u = Pi_C(2 u~ - w)
        for i in 0..len {
            z[i] = 2.0 * ut[i] - w[i];
        }
        u.copy_from_slice(&z);
        let mut off = n + emb.n_eq;
        for &s in &emb.sides {
            let l = svec_len(s);
            project_psd(&mut u[off..off + l], s);
            off += l;
        }
        u[len - 1] = u[len - 1].max(0.0);

        // v = R (u - z), in the dual cone
        for i in 0..n {
            v[i] = RHO_X * (u[i] - z[i]);
        }
        for i in 0..m {
            v[n + i] = kkt.r[i] * (u[n + i] - z[n + i]);
        }
        v[len - 1] = u[len - 1] - z[len - 1];

        for i in 0..len {
            w[i] += ALPHA * (u[i] - ut[i]);
        }
        let fp_res = norm(&w.iter().zip(&w_prev).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rejected = matches!(aa_check.take(), Some(r0) if fp_res > AA_SAFEGUARD * r0);
        if rejected {
            aa_rejects += 1;
            w.copy_from_slice(&aa_backup);
        } else if let Some(xa) = aa.step(&w_prev, &w) {
            aa_backup.copy_from_slice(&w);
            aa_check = Some(fp_res);
            aa_steps += 1;
            w = xa;
        }

        if it % CHECK_EVERY != 0 && it != opts.max_iter {
            continue;
        }

        let su = split(&u, n);
        let sv = split(&v, n);

        // optimality
        if su.tau > 0.0 {
            let x: Vec<f64> = su.x.iter().zip(&sc.e).map(|(v, e)| v * e / (su.tau * sc.sigma_b)).collect();
            let y: Vec<f64> = su.y.iter().zip(&sc.d).map(|(v, d)| v * d / (su.tau * sc.sigma_c)).collect();
            let s: Vec<f64> = sv.y.iter().zip(&sc.d).map(|(v, d)| v / d / (su.tau * sc.sigma_b)).collect();
            let ax = emb.a.mul(&x);
            let pr: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - emb.b[i]).collect();
            let aty = emb.at.mul(&y);
            let dr: Vec<f64> = (0..n).map(|i| aty[i] + emb.c[i]).collect();
            let cx = dot(&emb.c, &x);
            let by = dot(&emb.b, &y);
            let res = Residuals {
                primal: norm(&pr) / (1.0 + bnorm),
                dual: norm(&dr) / (1.0 + cnorm),
                gap: (cx + by).abs() / (1.0 + cx.abs() + by.abs()),
                min_eig: 0.0,
            };
            last_res = res;
            if opts.verbose && it % 500 == 0 {
                eprintln!(
                    "iter {it:6}  pres {:.2e}  dres {:.2e}  gap {:.2e}  tau {:.2e}  scale {:.2e}  aa {aa_steps}/{aa_rejects}",
                    res.primal, res.dual, res.gap, su.tau, scale
                );
            }
            if res.primal <= opts.eps_feas && res.dual <= opts.eps_feas && res.gap <= opts.eps_gap {
                let dual = certificate::scatter(p, kept, &y, &emb.sides);
                let ext = check_optimality(p, &x, &dual, opts);
                if ext.meets(opts) {
                    return Ok(SolveOutcome {
                        status: SolveStatus::Optimal,
                        w: Some(x),
                        dual: Some(dual),
                        certificate: None,
                        residuals: ext,
                        iterations: it,
                    });
                }
            }
            let stop = it % MONITOR_EVERY == 0 && monitor.as_mut().is_some_and(|m| m(&x, &res));
            if stop || it == opts.max_iter {
                let dual = certificate::scatter(p, kept, &y, &emb.sides);
                let ext = check_optimality(p, &x, &dual, opts);
                return Ok(SolveOutcome {
                    status: SolveStatus::Inexact,
                    w: Some(x),
                    dual: Some(dual),
                    certificate: None,
                    residuals: ext,
                    iterations: it,
                });
            }
        }

        // infeasibility
        let yc: Vec<f64> = su.y.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
        let by = dot(&emb.b, &yc);
        if by < 0.0 {
            let ratio = norm(&emb.at.mul(&yc)) / -by;
            let due = last_polish.is_none_or(|l| it >= l + 200 || ratio < 0.1 * best_ratio);
            if ratio <= 1e-5 && due {
                last_polish = Some(it);
                best_ratio = best_ratio.min(ratio);
                let data = PolishData { a: &emb.a, at: &emb.at, n_eq: emb.n_eq, sides: &emb.sides };
                let polished = certificate::polish(&data, &yc, 30)?;
                let cert = certificate::normalize(p, certificate::scatter(p, kept, &polished, &emb.sides));
                if verify_certificate(p, &cert, opts.eps_inf)? {
                    return Ok(SolveOutcome {
                        status: SolveStatus::PrimalInfeasible,
                        w: None,
                        dual: None,
                        certificate: Some(cert),
                        residuals: last_res,
                        iterations: it,
                    });
                }
            }
        }

        // unboundedness
        let xc: Vec<f64> = su.x.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
        let cx = dot(&emb.c, &xc);
        if cx < 0.0 {
            let sc_: Vec<f64> = sv.y.iter().zip(&sc.d).map(|(v, d)| v / d).collect();
            let ax = emb.a.mul(&xc);
            let r: Vec<f64> = ax.iter().zip(&sc_).map(|(a, s)| a + s).collect();
            if norm(&r) <= opts.eps_inf * -cx && su.tau <= 1e-12 * sv.tau.max(1e-300) {
                return Ok(SolveOutcome {
                    status: SolveStatus::Unbounded,
                    w: None,
                    dual: None,
                    certificate: None,
                    residuals: last_res,
                    iterations: it,
                });
            }
        }

        if it == opts.max_iter {
            // tau vanished without a certificate
            return Ok(SolveOutcome {
                status: SolveStatus::Inexact,
                w: None,
                dual: None,
                certificate: None,
                residuals: last_res,
                iterations: it,
            });
        }

        // scale adaptation from residual balance in the scaled space
        if su.tau > 0.0 {
            let ax = sc.a.mul(su.x);
            let prs: Vec<f64> = (0..m).map(|i| ax[i] + sv.y[i] - sc.b[i] * su.tau).collect();
            let aty = sc.at.mul(su.y);
            let drs: Vec<f64> = (0..n).map(|i| aty[i] + sc.c[i] * su.tau).collect();
            let pden = inf_norm(&ax).max(inf_norm(sv.y)).max(su.tau * inf_norm(&sc.b)).max(1e-300);
            let dden = inf_norm(&aty).max(su.tau * inf_norm(&sc.c)).max(1e-300);
            let rp = inf_norm(&prs) / pden;
            let rd = inf_norm(&drs) / dden;
            if rp > 0.0 && rd > 0.0 {
                adapt_ratio_log += (rp / rd).ln();
                adapt_count += 1;
            }
        }
        if it % ADAPT_EVERY == 0 && adapt_count > 0 {
            let ratio = (adapt_ratio_log / adapt_count as f64).exp();
            adapt_ratio_log = 0.0;
            adapt_count = 0;
            if !(1.0 / 3.0..=3.0).contains(&ratio) {
                let new_scale = (scale * ratio.sqrt()).clamp(1e-6, 1e6);
                if new_scale != scale {
                    scale = new_scale;
                    kkt = Kkt::new(&sc, emb.n_eq, scale)?;
                    // keep (u, v) and re-derive w = u + R^{-1} v
                    for i in 0..n {
                        w[i] = u[i] + v[i] / RHO_X;
                    }
                    for i in 0..m {
                        w[n + i] = u[n + i] + v[n + i] / kkt.r[i];
                    }
                    w[len - 1] = u[len - 1] + v[len - 1];
                    aa.reset();
                    aa_check = None;
                }
            }
        }
    }
    unreachable!("the final iteration always returns")
}
