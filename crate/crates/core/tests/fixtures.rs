use std::path::{Path, PathBuf};

use hermitsep::extract::{decompose_moments, relaxation, AlgorithmOptions};
use hermitsep::hermitian::{from_decomposition, residual, HermitianTensor};
use hermitsep::instances::{dense_2x2, dense_3x3, entangled_mixture, hankel, two_mode_4x3, two_term};
use hermitsep::io::{read_tensor, write_tensor};
use hermitsep::sdp::export_sdpa;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn tensor_files_match_the_built_in_instances() {
    let cases: [(&str, HermitianTensor); 6] = [
        ("hankel.json", hankel()),
        ("lambda42.json", two_term()),
        ("psi_mixture.json", entangled_mixture()),
        ("comparison_2x2.json", dense_2x2()),
        ("comparison_3x3.json", dense_3x3()),
        ("two_mode_4x3.json", two_mode_4x3()),
    ];
    for (name, h) in cases {
        let text = read(name);
        let f = read_tensor(&text).unwrap();
        assert_eq!(f.tensor, h, "{name}");
        assert_eq!(write_tensor(&f).unwrap(), text, "{name}");
    }
}

#[test]
fn exports_are_reproducible() {
    assert_eq!(export_sdpa(&relaxation(&hankel(), 2, 0).unwrap()), read("hankel_k2.dat-s"));
    assert_eq!(export_sdpa(&relaxation(&dense_3x3(), 2, 0).unwrap()), read("comparison_3x3_k2.dat-s"));
}

#[test]
fn external_moments_yield_a_decomposition() {
    let v: serde_json::Value = serde_json::from_str(&read("external/comparison_3x3_k2.json")).unwrap();
    assert_eq!(v["status"], "optimal");
    let w: Vec<f64> = v["x"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let h = dense_3x3();
    let (d, _) = decompose_moments(&h, &w, 2, &AlgorithmOptions::default()).unwrap().expect("flat and extractable");
    assert!(d.is_positive());
    assert!(residual(&h, &from_decomposition(&d, h.shape()).unwrap()).unwrap() <= 1e-6);

    let hankel_run: serde_json::Value = serde_json::from_str(&read("external/hankel_k2.json")).unwrap();
    assert_eq!(hankel_run["status"], "infeasible");
}

#[test]
fn truncated_moments_are_rejected() {
    let h = dense_3x3();
    assert!(decompose_moments(&h, &[1.0, 2.0], 2, &AlgorithmOptions::default()).is_err());
}
