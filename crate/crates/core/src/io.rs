//! Text formats: tensor files and result reports.
//!
//! A tensor file is JSON holding the shape and the flattening matrix as rows
//! of `[re, im]` pairs. Numbers use the shortest representation that parses
//! back to the same double, so writing, reading and writing again gives the
//! same bytes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::relaxation;
use crate::hermitian::{
    abs_residual, assemble_from_psd, from_decomposition, HermitianDecomposition, HermitianTensor, HermitianTerm,
    PsdDecomposition, Shape, C64,
};
use crate::psd::UniquenessCertificate;
use crate::sdp::{verify_certificate, DualSolution};

pub const TENSOR_FORMAT: &str = "hermitsep-tensor";
pub const REPORT_FORMAT: &str = "hermitsep-report";
pub const FORMAT_VERSION: u32 = 1;

/// A tensor with optional metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: HermitianTensor,
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub provenance: Option<String>,
}

impl TensorFile {
    pub fn new(tensor: HermitianTensor) -> Self {
        TensorFile { tensor, name: None, seed: None, provenance: None }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTensor {
    format: String,
    version: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    provenance: Option<String>,
    shape: Vec<usize>,
    matrix: Vec<Vec<[f64; 2]>>,
}

fn number(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    // adding zero turns -0.0 into 0.0
    Ok(serde_json::to_string(&(x + 0.0))?)
}

fn pair(z: C64) -> Result<String> {
    Ok(format!("[{}, {}]", number(z.re)?, number(z.im)?))
}

/// Serializes a tensor file; one flattening row per line.
pub fn write_tensor(file: &TensorFile) -> Result<String> {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"format\": {},", serde_json::to_string(TENSOR_FORMAT)?);
    let _ = writeln!(out, "  \"version\": {FORMAT_VERSION},");
    if let Some(name) = &file.name {
        let _ = writeln!(out, "  \"name\": {},", serde_json::to_string(name)?);
    }
    if let Some(seed) = file.seed {
        let _ = writeln!(out, "  \"seed\": {seed},");
    }
    if let Some(p) = &file.provenance {
        let _ = writeln!(out, "  \"provenance\": {},", serde_json::to_string(p)?);
    }
    let dims: Vec<String> = file.tensor.shape().dims().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "  \"shape\": [{}],", dims.join(", "));
    out.push_str("  \"matrix\": [\n");
    let m = file.tensor.shape().flat_size();
    for a in 0..m {
        let row = (0..m).map(|b| pair(file.tensor.flat(a, b))).collect::<Result<Vec<_>>>()?;
        let _ = writeln!(out, "    [{}]{}", row.join(", "), if a + 1 < m { "," } else { "" });
    }
    out.push_str("  ]\n}\n");
    Ok(out)
}

/// Parses a tensor file and runs the usual ingestion checks.
pub fn read_tensor(text: &str) -> Result<TensorFile> {
    let raw: RawTensor = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if raw.format != TENSOR_FORMAT {
        return Err(Error::Parse(format!("format is {:?}, expected {TENSOR_FORMAT:?}", raw.format)));
    }
    if raw.version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported version {}", raw.version)));
    }
    let shape = Shape::new(raw.shape)?;
    let m = shape.flat_size();
    if raw.matrix.len() != m || raw.matrix.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!("matrix must be {m}x{m} for shape {:?}", shape.dims())));
    }
    let entries = raw.matrix.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
    Ok(TensorFile {
        tensor: HermitianTensor::from_flat_entries(shape, entries)?,
        name: raw.name,
        seed: raw.seed,
        provenance: raw.provenance,
    })
}

/// Complex vector as `[re, im]` pairs.
pub type ComplexList = Vec<[f64; 2]>;

fn to_list(v: &DVector<C64>) -> ComplexList {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn to_rows(m: &DMatrix<C64>) -> Vec<ComplexList> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn from_rows(rows: &[ComplexList]) -> Result<DMatrix<C64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("psd factor is not square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTerm {
    pub weight: f64,
    pub vectors: Vec<ComplexList>,
}

/// Farkas certificate of the relaxation at the reported order and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasReport {
    pub eps_inf: f64,
    pub mu: Vec<f64>,
    /// Dense symmetric blocks, row by row.
    pub z: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub route: String,
    /// Relative CPD fit; absent when no CPD was accepted.
    pub fit: Option<f64>,
    pub certificate: Option<UniquenessCertificate>,
    /// Present only when uniqueness is certified.
    pub psd_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute Frobenius bound on the reconstruction error.
    pub residual: f64,
    /// Relative bound on negative eigenvalues of psd factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: String,
    pub command: String,
    pub verdict: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<ReportTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_terms: Option<Vec<Vec<Vec<ComplexList>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<PsdReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub farkas: Option<FarkasReport>,
    /// Absolute Frobenius reconstruction error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub tolerances: Tolerances,
    pub seconds: f64,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl Report {
    pub fn new(command: &str, verdict: &str, seed: u64, residual_tol: f64) -> Self {
        Report {
            format: REPORT_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            verdict: verdict.into(),
            seed,
            order: None,
            rank: None,
            terms: None,
            psd_terms: None,
            psd: None,
            farkas: None,
            residual: None,
            tolerances: Tolerances { residual: residual_tol, psd: None },
            seconds: 0.0,
            diagnostics: Vec::new(),
        }
    }

    pub fn set_decomposition(&mut self, d: &HermitianDecomposition) {
        self.terms = Some(
            d.terms.iter().map(|t| ReportTerm { weight: t.weight, vectors: t.vectors.iter().map(to_list).collect() }).collect(),
        );
    }

    pub fn decomposition(&self) -> Option<HermitianDecomposition> {
        let terms = self.terms.as_ref()?;
        Some(HermitianDecomposition {
            terms: terms
                .iter()
                .map(|t| HermitianTerm {
                    weight: t.weight,
                    vectors: t
                        .vectors
                        .iter()
                        .map(|v| DVector::from_iterator(v.len(), v.iter().map(|&[re, im]| C64::new(re, im))))
                        .collect(),
                })
                .collect(),
        })
    }

    pub fn set_psd_terms(&mut self, d: &PsdDecomposition) {
        self.psd_terms = Some(d.terms.iter().map(|t| t.iter().map(to_rows).collect()).collect());
    }

    pub fn psd_decomposition(&self) -> Option<Result<PsdDecomposition>> {
        let terms = self.psd_terms.as_ref()?;
        Some(
            terms
                .iter()
                .map(|t| t.iter().map(|m| from_rows(m)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
                .map(|terms| PsdDecomposition { terms }),
        )
    }

    pub fn set_farkas(&mut self, cert: &DualSolution, eps_inf: f64) {
        self.farkas = Some(FarkasReport {
            eps_inf,
            mu: cert.mu.clone(),
            z: cert.z.iter().map(|z| (0..z.nrows()).map(|i| z.row(i).iter().copied().collect()).collect()).collect(),
        });
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if r.format != REPORT_FORMAT {
            return Err(Error::Parse(format!("format is {:?}, expected {REPORT_FORMAT:?}", r.format)));
        }
        Ok(r)
    }
}

/// Outcome of [`verify_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub ok: bool,
    pub detail: String,
}

fn verdict(ok: bool, detail: String) -> Result<Verification> {
    Ok(Verification { ok, detail })
}

/// Re-checks the claim of a report against the tensor: the reconstruction
/// error of a decomposition, positivity of its weights or factors, or the
/// Farkas certificate of a non-separability verdict.
pub fn verify_report(h: &HermitianTensor, r: &Report) -> Result<Verification> {
    let tol = r.tolerances.residual;
    match r.verdict.as_str() {
        "SEPARABLE" => {
            let Some(d) = r.decomposition() else { return verdict(false, "report has no terms".into()) };
            if let Some((i, t)) = d.terms.iter().enumerate().find(|(_, t)| !(t.weight > 0.0)) {
                return verdict(false, format!("term {i} has weight {}", t.weight));
            }
            let res = match from_decomposition(&d, h.shape()) {
                Ok(rec) => abs_residual(h, &rec)?,
                Err(e) => return verdict(false, e.to_string()),
            };
            verdict(res <= tol, format!("residual {res:.3e}, tolerance {tol:.3e}"))
        }
        "CERTIFIED_PSD" => {
            let d = match r.psd_decomposition() {
                Some(Ok(d)) => d,
                Some(Err(e)) => return verdict(false, e.to_string()),
                None => return verdict(false, "report has no psd terms".into()),
            };
            if let Err(e) = d.validate(h.shape(), r.tolerances.psd.unwrap_or(0.0)) {
                return verdict(false, e.to_string());
            }
            let res = match assemble_from_psd(&d, h.shape()) {
                Ok(rec) => abs_residual(h, &rec)?,
                Err(e) => return verdict(false, e.to_string()),
            };
            verdict(res <= tol, format!("residual {res:.3e}, tolerance {tol:.3e}"))
        }
        "NOT_SEPARABLE" => {
            let (Some(f), Some(k)) = (&r.farkas, r.order) else {
                return verdict(false, "report has no certificate".into());
            };
            let p = relaxation(h, k, r.seed)?;
            let z = f
                .z
                .iter()
                .map(|rows| {
                    let n = rows.len();
                    if rows.iter().any(|row| row.len() != n) {
                        return Err(Error::DimensionMismatch("certificate block is not square".into()));
                    }
                    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                })
                .collect::<Result<Vec<_>>>()?;
            let cert = DualSolution { mu: f.mu.clone(), z };
            match verify_certificate(&p, &cert, f.eps_inf) {
                Ok(ok) => verdict(ok, format!("Farkas certificate at order {k}")),
                Err(e) => verdict(false, e.to_string()),
            }
        }
        other => verdict(true, format!("{other}: no claim to verify")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{entangled_mixture, two_term};
    use crate::random::{random_hermitian, random_separable};

    #[test]
    fn tensor_round_trip_is_byte_identical() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let mut f = TensorFile::new(random_hermitian(&shape, 4).unwrap());
        f.name = Some("random \"gue\"".into());
        f.seed = Some(4);
        let a = write_tensor(&f).unwrap();
        let back = read_tensor(&a).unwrap();
        assert_eq!(back, f);
        assert_eq!(write_tensor(&back).unwrap(), a);
    }

    #[test]
    fn rejects_bad_files() {
        let good = write_tensor(&TensorFile::new(two_term())).unwrap();
        assert!(read_tensor(&good.replace("[3, 3]", "[3, 2]")).is_err());
        assert!(read_tensor(&good.replace(TENSOR_FORMAT, "other")).is_err());
        assert!(read_tensor("{").is_err());
        // entry (0, 1) only
        let bad = good.replacen("[3.0, 0.0]", "[3.5, 0.0]", 1);
        assert!(matches!(read_tensor(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn separable_report_verifies_and_detects_tampering() {
        let shape = Shape::new(vec![2, 2]).unwrap();
        let (h, d) = random_separable(&shape, 2, 1).unwrap();
        let mut r = Report::new("check", "SEPARABLE", 1, 1e-5 * (1.0 + h.norm()));
        r.set_decomposition(&d);
        let back = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(verify_report(&h, &back).unwrap().ok);
        let mut neg = r.clone();
        neg.terms.as_mut().unwrap()[0].weight *= -1.0;
        assert!(!verify_report(&h, &neg).unwrap().ok);
        let mut bumped = r.clone();
        bumped.terms.as_mut().unwrap()[1].vectors[0][1][0] += 1e-2;
        assert!(!verify_report(&h, &bumped).unwrap().ok);
    }

    #[test]
    fn farkas_report_verifies() {
        let h = entangled_mixture();
        let opts = crate::extract::AlgorithmOptions { max_order: 2, ..Default::default() };
        let crate::extract::Verdict::NotSeparable { certificate, order } = crate::extract::run_algorithm(&h, &opts).unwrap()
        else {
            panic!("expected a certificate");
        };
        let mut r = Report::new("check", "NOT_SEPARABLE", 0, 0.0);
        r.order = Some(order);
        r.set_farkas(&certificate, opts.solver.eps_inf);
        assert!(verify_report(&h, &Report::from_json(&r.to_json().unwrap()).unwrap()).unwrap().ok);
        r.farkas.as_mut().unwrap().mu.iter_mut().for_each(|v| *v = -*v);
        assert!(!verify_report(&h, &r).unwrap().ok);
    }
}
