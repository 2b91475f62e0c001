use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hermitsep::instances::psd_tensor_8;
use hermitsep::io::{read_tensor, write_tensor, Report, TensorFile};
use hermitsep::sdp::parse_sdpa;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hermitsep")).args(args).env_remove("HERMITSEP_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(p: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn hankel_is_not_separable_and_the_report_verifies() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let t = fixture("hankel.json");
    let out = run(&["check", path_str(&t), "--json", path_str(&json)]);
    assert_eq!(code(&out), 10, "{}", stdout(&out));
    assert!(stdout(&out).starts_with("NOT_SEPARABLE"));
    let r = report(&json);
    assert_eq!(r.verdict, "NOT_SEPARABLE");
    assert_eq!(r.order, Some(2));
    assert!(r.farkas.is_some());
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&json)])), 0);
    // the certificate belongs to this tensor
    assert_eq!(code(&run(&["verify", path_str(&fixture("comparison_2x2.json")), path_str(&json)])), 1);
}

#[test]
fn lambda_42_is_separable_with_two_terms() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let t = fixture("lambda42.json");
    let out = run(&["check", path_str(&t), "--json", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = report(&json);
    assert_eq!(r.verdict, "SEPARABLE");
    assert_eq!(r.terms.as_ref().unwrap().len(), 2);
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&json)])), 0);
}

#[test]
fn order_below_tensor_order_is_inconclusive() {
    let out = run(&["check", path_str(&fixture("hankel.json")), "--max-order", "1"]);
    assert_eq!(code(&out), 20);
    assert!(stdout(&out).starts_with("INCONCLUSIVE"));
}

#[test]
fn verify_rejects_tampered_separable_reports() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("t.json");
    let json = dir.path().join("r.json");
    assert_eq!(code(&run(&["random", "--shape", "2,2", "--terms", "1", "--seed", "5", "-o", path_str(&t)])), 0);
    let out = run(&["check", path_str(&t), "--json", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = report(&json);
    assert_eq!(r.terms.as_ref().unwrap().len(), 1);
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&json)])), 0);

    let tampered = dir.path().join("bad.json");
    let mut neg = r.clone();
    neg.terms.as_mut().unwrap()[0].weight *= -1.0;
    std::fs::write(&tampered, neg.to_json().unwrap()).unwrap();
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&tampered)])), 1);

    let mut bumped = r;
    bumped.terms.as_mut().unwrap()[0].vectors[1][0][0] += 1e-2;
    std::fs::write(&tampered, bumped.to_json().unwrap()).unwrap();
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&tampered)])), 1);
}

#[test]
fn psd_route_on_the_eight_dimensional_example() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("t.json");
    let json = dir.path().join("r.json");
    std::fs::write(&t, write_tensor(&TensorFile::new(psd_tensor_8())).unwrap()).unwrap();
    let out = run(&["psd-decompose", path_str(&t), "--rank", "3", "--route", "T", "--json", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = report(&json);
    assert_eq!(r.verdict, "CERTIFIED_PSD");
    assert_eq!(r.psd.as_ref().unwrap().psd_rank, Some(3));
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&json)])), 0);
}

#[test]
fn two_mode_route_certifies_separability() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let t = fixture("two_mode_4x3.json");
    let out = run(&["psd-decompose", path_str(&t), "--rank", "2", "--route", "T1", "--json", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = report(&json);
    assert_eq!(r.psd_terms.as_ref().unwrap().len(), 2);
    assert_eq!(r.psd.as_ref().unwrap().psd_rank, None);
    assert_eq!(code(&run(&["verify", path_str(&t), path_str(&json)])), 0);
}

#[test]
fn random_psd_tensor_is_certified_at_its_rank() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("t.json");
    let json = dir.path().join("r.json");
    assert_eq!(code(&run(&["random", "--shape", "2,2,2", "--terms", "3", "--kind", "psd", "--seed", "9", "-o", path_str(&t)])), 0);
    let out = run(&["psd-decompose", path_str(&t), "--rank", "3", "--json", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(report(&json).psd.unwrap().psd_rank, Some(3));
}

#[test]
fn dense_hermitian_tensor_gets_no_certificate() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("t.json");
    let json = dir.path().join("r.json");
    let args = ["random", "--shape", "2,2", "--kind", "entangled-candidate", "--seed", "3", "-o", path_str(&t)];
    assert_eq!(code(&run(&args)), 0);
    let out = run(&["psd-decompose", path_str(&t), "--rank-sweep", "4", "--json", path_str(&json)]);
    assert_eq!(code(&out), 20, "{}", stdout(&out));
    let r = report(&json);
    assert_eq!(r.verdict, "NOT_CERTIFIED");
    assert!(r.psd.unwrap().failed_stage.is_some());
    // cross-check with the moment hierarchy
    assert_eq!(code(&run(&["check", path_str(&t)])), 10);
}

#[test]
fn export_matches_the_golden_file() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("h.dat-s");
    let t = fixture("hankel.json");
    assert_eq!(code(&run(&["export-sdp", path_str(&t), "-k", "2", "-o", path_str(&out_path)])), 0);
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(written, std::fs::read_to_string(fixture("hankel_k2.dat-s")).unwrap());
    let p = parse_sdpa(&written).unwrap();
    assert_eq!(p.c.len(), p.m_dim);
    assert_eq!(p.block_struct.len(), 4);
    assert_eq!(code(&run(&["export-sdp", path_str(&t), "-k", "1", "-o", path_str(&out_path)])), 2);
}

#[test]
fn random_files_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&run(&["random", "--shape", "2,3", "--terms", "2", "--seed", "11", "-o", path_str(p)])), 0);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let f = read_tensor(&text).unwrap();
    assert_eq!(f.seed, Some(11));
    assert_eq!(write_tensor(&f).unwrap(), text);
}

#[test]
fn seed_defaults_to_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_hermitsep"))
        .args(["random", "--shape", "2,2"])
        .env("HERMITSEP_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(read_tensor(&stdout(&out)).unwrap().seed, Some(77));
}

#[test]
fn usage_and_parse_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"hermitsep-tensor\"").unwrap();
    assert_eq!(code(&run(&["check", path_str(&bad)])), 2);
    assert_eq!(code(&run(&["check", path_str(&dir.path().join("missing.json"))])), 2);
    assert_eq!(code(&run(&["psd-decompose", path_str(&fixture("hankel.json"))])), 2);
    assert_eq!(code(&run(&["random", "--shape", "2,0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}
