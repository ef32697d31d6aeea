//! End-to-end tests of the `cpdilate` binary: pipelines, exit codes,
//! certificate determinism, and tolerance resolution.

use cpdilate::algebra::CStarAlgebra;
use cpdilate::cpmatrix::{random_cp_pair, NPositiveMatrixMap};
use cpdilate::flag::FlagSpace;
use cpdilate::instance::{InstanceFile, MatrixData};
use cpdilate::ksgns::build_dilation;
use cpdilate::linalg::{CMatrix, Tolerances};
use cpdilate::module::{HilbertModule, ModuleKind};
use cpdilate::radon_nikodym::{deform, CommutantElement};
use num_complex::Complex;
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpdilate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json_of(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).expect("readable")).expect("valid json")
}

fn residual(cert: &Value, key: &str) -> f64 {
    cert["residuals"][key].as_f64().unwrap_or_else(|| panic!("residual {key} present"))
}

fn verdict<'a>(cert: &'a Value, key: &str) -> &'a str {
    cert["verdicts"][key].as_str().unwrap_or_else(|| panic!("verdict {key} present"))
}

#[test]
fn gen_dilate_verify_pipeline_succeeds_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");
    let cert2 = dir.path().join("cert2.json");

    let out = run(&[
        "gen", "--seed", "0", "--algebra", "M2", "--n", "2", "--mult", "2",
        "--out", inst.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "gen stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["dilate", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let c = json_of(&cert);
    assert_eq!(verdict(&c, "result"), "OK");
    assert_eq!(verdict(&c, "minimal"), "MINIMAL");
    assert!(residual(&c, "res1") <= 1e-8);
    assert!(residual(&c, "res2") <= 1e-8);

    // identical run gives byte-identical certificate
    let out = run(&["dilate", "--in", inst.to_str().unwrap(), "--out", cert2.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&cert).unwrap(), std::fs::read(&cert2).unwrap());

    // and the instance round-trips byte-identically through re-serialization
    let bytes = std::fs::read(&inst).unwrap();
    let parsed = cpdilate::instance::parse_instance(&bytes).unwrap();
    assert_eq!(parsed.to_canonical_bytes(), bytes);

    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "OK");
    assert!(report["max_deviation"].as_f64().unwrap() <= 1e-12);
}

fn transpose_instance() -> InstanceFile {
    let alg = CStarAlgebra::matrix(2);
    let phi = NPositiveMatrixMap::<f64>::from_images(
        1,
        Arc::clone(&alg),
        FlagSpace::trivial(2),
        |_, _, b| {
            let (_, r, s) = alg.basis_coords(b).unwrap();
            let mut m = CMatrix::zeros(2, 2);
            m.set(s, r, Complex::new(1.0, 0.0));
            m
        },
    )
    .unwrap();
    InstanceFile {
        block_dims: vec![2],
        chain: vec![vec![0]],
        module_kind: ModuleKind::SelfModule,
        flag_h: vec![2],
        flag_k: vec![2],
        n: 1,
        phi: Some(vec![MatrixData::from_cmatrix(phi.entry(0, 0).unwrap())]),
        big_phi: None,
        phi2: None,
        big_phi2: None,
        tolerances: None,
        seed: None,
    }
}

#[test]
fn check_cp_rejects_transpose_map_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");
    std::fs::write(&inst, transpose_instance().to_canonical_bytes()).unwrap();

    let out = run(&["check-cp", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let c = json_of(&cert);
    assert_eq!(verdict(&c, "cp"), "NOT_CP");
    assert!((residual(&c, "min_choi_eigenvalue") + 1.0).abs() <= 1e-10);

    // the failure certificate still verifies
    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

fn two_pair_instance(seed: u64, scale: f64) -> InstanceFile {
    let alg = CStarAlgebra::matrix(2);
    let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
    let pair = random_cp_pair::<f64>(
        &alg,
        &module,
        &FlagSpace::trivial(2),
        &FlagSpace::trivial(2),
        2,
        2,
        None,
        seed,
    )
    .unwrap();
    let tol = Tolerances::default();
    let dil = build_dilation(pair.big_phi.scalar_part(), &pair.big_phi, &tol).unwrap();
    let elem = CommutantElement {
        t_op: CMatrix::identity(dil.stine.dim_h).scale(Complex::new(scale, 0.0)),
        n_op: CMatrix::identity(dil.stine.dim_k).scale(Complex::new(scale, 0.0)),
    };
    let psi = deform(&dil.stine, &elem.psd_sqrt(&tol).unwrap(), &tol).unwrap();
    let mut inst = InstanceFile::from_pair(&pair.big_phi, Some(seed));
    inst.set_secondary_pair(&psi);
    inst
}

#[test]
fn rn_of_half_deformation_records_half_identity_derivative() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");
    std::fs::write(&inst, two_pair_instance(4, 0.5).to_canonical_bytes()).unwrap();

    let out = run(&["rn", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let c = json_of(&cert);
    assert_eq!(verdict(&c, "result"), "OK");
    let d1 = &c["operators"]["Delta1"];
    let rows = d1["rows"].as_u64().unwrap() as usize;
    for (idx, entry) in d1["data"].as_array().unwrap().iter().enumerate() {
        let re = entry[0].as_f64().unwrap();
        let im = entry[1].as_f64().unwrap();
        let expect = if idx / rows == idx % rows { 0.5 } else { 0.0 };
        assert!((re - expect).abs() <= 1e-8 && im.abs() <= 1e-8, "Delta1[{idx}]");
    }
    assert!(residual(&c, "roundtrip_residual") <= 1e-8);

    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn dominate_certifies_shrunk_pair_and_refutes_reversed_order() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");
    std::fs::write(&inst, two_pair_instance(5, 0.5).to_canonical_bytes()).unwrap();
    let out = run(&["dominate", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(verdict(&json_of(&cert), "domination"), "CERTIFIED");

    // swap the pairs: the larger map cannot be dominated by the smaller one
    let base = two_pair_instance(5, 0.5);
    let mut swapped = base.clone();
    swapped.phi = base.phi2.clone();
    swapped.big_phi = base.big_phi2.clone();
    swapped.phi2 = base.phi.clone();
    swapped.big_phi2 = base.big_phi.clone();
    std::fs::write(&inst, swapped.to_canonical_bytes()).unwrap();
    let out = run(&["dominate", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let c = json_of(&cert);
    assert_eq!(verdict(&c, "domination"), "REFUTED");
    assert!(residual(&c, "witness_min_eigenvalue") < 0.0);
    // refutation witness is embedded and re-checkable
    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn equiv_accepts_identical_pairs_and_rejects_scaled_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");

    let mut same = two_pair_instance(6, 0.5);
    same.phi2 = same.phi.clone();
    same.big_phi2 = same.big_phi.clone();
    std::fs::write(&inst, same.to_canonical_bytes()).unwrap();
    let out = run(&["equiv", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(verdict(&json_of(&cert), "equivalence"), "EQUIVALENT");

    std::fs::write(&inst, two_pair_instance(6, 0.5).to_canonical_bytes()).unwrap();
    let out = run(&["equiv", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(verdict(&json_of(&cert), "equivalence"), "NOT_EQUIVALENT");
}

#[test]
fn malformed_input_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("bad.json");
    std::fs::write(&inst, b"{\"version\":\"cpdilate/1\"").unwrap();
    let out = run(&["dilate", "--in", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    std::fs::write(&inst, b"{\"version\":\"cpdilate/9\"}").unwrap();
    let out = run(&["check-cp", "--in", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("VERSION_UNSUPPORTED"));

    // missing secondary pair is an input error for comparison commands
    let dirty = dir.path().join("primary_only.json");
    let base = two_pair_instance(7, 0.5);
    let mut primary_only = base.clone();
    primary_only.phi2 = None;
    primary_only.big_phi2 = None;
    std::fs::write(&dirty, primary_only.to_canonical_bytes()).unwrap();
    let out = run(&["rn", "--in", dirty.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn residual_tolerance_resolution_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    std::fs::write(&inst, transpose_instance().to_canonical_bytes()).unwrap();

    let out = bin()
        .args(["check-cp", "--in", inst.to_str().unwrap(), "--format", "text"])
        .env("CPDILATE_TOL_RES", "1e-3")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("residual_tol: 1.0000000000000000e-3"), "{text}");

    // a flag beats the environment variable
    let out = bin()
        .args([
            "check-cp", "--in", inst.to_str().unwrap(), "--format", "text",
            "--tol-res", "1e-5",
        ])
        .env("CPDILATE_TOL_RES", "1e-3")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("residual_tol: 1.0000000000000001e-5"), "{text}");

    let out = bin()
        .args(["check-cp", "--in", inst.to_str().unwrap()])
        .env("CPDILATE_TOL_RES", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 2);
}

#[test]
fn verify_flags_tampered_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert_path = dir.path().join("cert.json");
    let out = run(&["gen", "--seed", "11", "--out", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = run(&["dilate", "--in", inst.to_str().unwrap(), "--out", cert_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let mut cert = json_of(&cert_path);
    cert["residuals"]["res1"] = serde_json::json!(0.123);
    std::fs::write(&cert_path, serde_json::to_vec(&cert).unwrap()).unwrap();
    let out = run(&["verify", "--in", cert_path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "MISMATCH");
}

#[test]
fn commutant_and_iso_roundtrip_produce_verifiable_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let cert = dir.path().join("cert.json");
    let out = run(&["gen", "--seed", "3", "--n", "2", "--out", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let out = run(&["commutant", "--in", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let c = json_of(&cert);
    assert!(residual(&c, "closure") <= 1e-8);
    assert!(residual(&c, "t_determines_n") <= 1e-8);
    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let out = run(&[
        "iso-roundtrip", "--in", inst.to_str().unwrap(), "--samples", "3",
        "--out", cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let c = json_of(&cert);
    assert_eq!(verdict(&c, "roundtrip"), "OK");
    let out = run(&["verify", "--in", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}
