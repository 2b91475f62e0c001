//! SDPA sparse format (`.dat-s`) in the dual LMI convention
//! `minimize c^T x  s.t.  sum_i F_i x_i - F_0 >= 0`.
//!
//! Each psd block becomes an SDPA block. Equalities `a^T w = b` become pairs
//! of diagonal entries `a^T w - b >= 0` and `-a^T w + b >= 0` in one trailing
//! LP block.

use std::fmt::Write as _;

use super::SdpProblem;
use crate::error::{Error, Result};

/// Formats like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the problem in SDPA sparse format.
pub fn export_sdpa(p: &SdpProblem) -> String {
    let mut out = String::new();
    let has_lp = !p.rows.is_empty();
    let nblock = p.blocks.len() + usize::from(has_lp);
    let _ = writeln!(out, "{}", p.num_vars);
    let _ = writeln!(out, "{nblock}");
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.side.to_string()).collect();
    if has_lp {
        sizes.push(format!("-{}", 2 * p.rows.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = p.objective.iter().map(|&v| format_g17(v)).collect();
    let _ = writeln!(out, "{}", c.join(" "));

    // (matno, blkno, i, j, value); matno 0 is F_0
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (l, b) in p.blocks.iter().enumerate() {
        let mut cells: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
        for e in &b.entries {
            *cells.entry((e.var + 1, e.row + 1, e.col + 1)).or_insert(0.0) += e.coef;
        }
        for ((mat, i, j), v) in cells {
            if v != 0.0 {
                entries.push((mat, l + 1, i, j, v));
            }
        }
    }
    if has_lp {
        let blk = p.blocks.len() + 1;
        for (r, (row, &b)) in p.rows.iter().zip(&p.rhs).enumerate() {
            let (i1, i2) = (2 * r + 1, 2 * r + 2);
            if b != 0.0 {
                entries.push((0, blk, i1, i1, b));
                entries.push((0, blk, i2, i2, -b));
            }
            for &(v, c) in &row.entries {
                entries.push((v + 1, blk, i1, i1, c));
                entries.push((v + 1, blk, i2, i2, -c));
            }
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (mat, blk, i, j, v) in entries {
        let _ = writeln!(out, "{mat} {blk} {i} {j} {}", format_g17(v));
    }
    out
}

/// Parsed SDPA data.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub m_dim: usize,
    /// Block sizes; negative for diagonal (LP) blocks.
    pub block_struct: Vec<i64>,
    pub c: Vec<f64>,
    /// `(matno, blkno, i, j, value)`, 1-based as in the file.
    pub entries: Vec<(usize, usize, usize, usize, f64)>,
}

/// Reads SDPA sparse format. Comment lines start with `*` or `"`.
pub fn parse_sdpa(text: &str) -> Result<SdpaProblem> {
    let cleaned: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('*') && !l.trim_start().starts_with('"'))
        .map(|l| l.replace([',', '{', '}', '(', ')'], " "))
        .collect::<Vec<_>>()
        .join("\n");
    let mut tok = cleaned.split_whitespace();
    let mut next = |what: &str| tok.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    let int = |s: &str| s.parse::<i64>().map_err(|_| Error::Parse(format!("bad integer {s:?}")));
    let m_dim = int(next("mDIM")?)?;
    let nblock = int(next("nBLOCK")?)?;
    if m_dim < 0 || nblock < 0 {
        return Err(Error::Parse("negative dimension".into()));
    }
    let block_struct = (0..nblock).map(|_| int(next("block size")?)).collect::<Result<Vec<_>>>()?;
    let c = (0..m_dim).map(|_| num(next("objective")?)).collect::<Result<Vec<_>>>()?;
    let rest: Vec<&str> = tok.collect();
    if rest.len() % 5 != 0 {
        return Err(Error::Parse("entry list is not a multiple of five fields".into()));
    }
    let mut entries = Vec::with_capacity(rest.len() / 5);
    for ch in rest.chunks(5) {
        let idx = |s: &str| -> Result<usize> { usize::try_from(int(s)?).map_err(|_| Error::Parse(format!("bad index {s:?}"))) };
        let (mat, blk, i, j) = (idx(ch[0])?, idx(ch[1])?, idx(ch[2])?, idx(ch[3])?);
        if mat > m_dim as usize || blk == 0 || blk > nblock as usize || i == 0 || j == 0 {
            return Err(Error::Parse(format!("entry {ch:?} is out of range")));
        }
        let size = block_struct[blk - 1].unsigned_abs() as usize;
        if i > size || j > size {
            return Err(Error::Parse(format!("entry {ch:?} exceeds block size {size}")));
        }
        entries.push((mat, blk, i, j, num(ch[4])?));
    }
    Ok(SdpaProblem { m_dim: m_dim as usize, block_struct, c, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{BlockEntry, EqualityKind, PsdBlock, SparseRow};

    #[test]
    fn g17_matches_c_printf() {
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(0.0001), "0.0001");
        assert_eq!(format_g17(1.0 / 3.0), "0.33333333333333331");
    }

    #[test]
    fn toy_golden() {
        let p = SdpProblem::new(
            1,
            vec![1.0],
            vec![],
            vec![],
            vec![],
            vec![PsdBlock::new("b", 1, vec![BlockEntry { row: 0, col: 0, var: 0, coef: 1.0 }])],
        )
        .unwrap();
        assert_eq!(export_sdpa(&p), "1\n1\n1\n1\n1 1 1 1 1\n");
    }

    #[test]
    fn round_trip_block_dimensions() {
        let p = SdpProblem::new(
            2,
            vec![0.5, -1.0],
            vec![SparseRow::new(vec![(0, 1.0), (1, 2.0)])],
            vec![3.0],
            vec![EqualityKind::Other],
            vec![PsdBlock::new("b", 2, vec![BlockEntry { row: 0, col: 1, var: 1, coef: 1.0 }, BlockEntry { row: 0, col: 0, var: 0, coef: 1.0 }])],
        )
        .unwrap();
        let text = export_sdpa(&p);
        let q = parse_sdpa(&text).unwrap();
        assert_eq!(q.m_dim, 2);
        assert_eq!(q.block_struct, vec![2, -2]);
        assert_eq!(q.c, vec![0.5, -1.0]);
        assert!(q.entries.contains(&(0, 2, 1, 1, 3.0)));
        assert!(q.entries.contains(&(2, 2, 2, 2, -2.0)));
        assert!(parse_sdpa("1\n1\n1\n1\n1 1 2 2 1\n").is_err());
        assert!(parse_sdpa("* comment\n1\n{1}\n(1)\n1\n1, 1, 1, 1, 1\n").is_ok());
    }
}
