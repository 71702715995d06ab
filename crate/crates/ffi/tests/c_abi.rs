use std::ffi::{CStr, CString};
use std::ptr;

use conerank_ffi::*;

const LETOR: &str = "\
2 qid:1 1:1.0 2:0.1 3:0.0
1 qid:1 1:0.5 2:0.2 3:0.1
0 qid:1 1:0.0 2:0.1 3:0.3
1 qid:2 1:0.9 2:0.0 3:0.2
0 qid:2 1:0.1 2:0.3 3:0.1
2 qid:2 1:1.2 2:0.2 3:0.0
";

fn last_error() -> String {
    unsafe { CStr::from_ptr(conerank_last_error()) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> *mut CrDataset {
    let c = CString::new(text).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { conerank_dataset_parse(c.as_ptr(), &mut ds) }, CrStatus::Ok);
    assert!(!ds.is_null());
    ds
}

fn small_config(dim: usize) -> CrTrainConfig {
    let mut config = conerank_train_config_default(dim);
    config.k = 2;
    config.max_outer_epochs = 10;
    config
}

#[test]
fn parse_train_rank_round_trip() {
    let ds = parse(LETOR);
    let (mut dim, mut queries) = (0, 0);
    assert_eq!(unsafe { conerank_dataset_shape(ds, &mut dim, &mut queries) }, CrStatus::Ok);
    assert_eq!((dim, queries), (3, 2));

    let config = small_config(dim);
    let mut model = ptr::null_mut();
    let mut risk = f64::NAN;
    assert_eq!(unsafe { conerank_train(ds, &config, &mut model, &mut risk) }, CrStatus::Ok);
    assert!(risk.is_finite() && risk >= 0.0);

    let (mut n, mut k) = (0, 0);
    assert_eq!(unsafe { conerank_model_shape(model, &mut n, &mut k) }, CrStatus::Ok);
    assert_eq!((n, k), (3, 2));

    let docs = [1.0, 0.1, 0.0, 0.5, 0.2, 0.1, 0.0, 0.1, 0.3];
    let mut order = [usize::MAX; 3];
    let mut votes = [u32::MAX; 3];
    assert_eq!(
        unsafe { conerank_rank(model, docs.as_ptr(), 3, 3, order.as_mut_ptr(), votes.as_mut_ptr()) },
        CrStatus::Ok
    );
    let mut sorted = order;
    sorted.sort_unstable();
    assert_eq!(sorted, [0, 1, 2]);
    assert_eq!(votes.iter().sum::<u32>(), 3);

    // save/load keeps rankings identical
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.txt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { conerank_model_save(model, path.as_ptr()) }, CrStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { conerank_model_load(path.as_ptr(), &mut loaded) }, CrStatus::Ok);
    let mut order2 = [0usize; 3];
    assert_eq!(
        unsafe { conerank_rank(loaded, docs.as_ptr(), 3, 3, order2.as_mut_ptr(), ptr::null_mut()) },
        CrStatus::Ok
    );
    assert_eq!(order, order2);

    unsafe {
        conerank_model_free(model);
        conerank_model_free(loaded);
        conerank_dataset_free(ds);
    }
}

#[test]
fn training_matches_library() {
    let ds = parse(LETOR);
    let config = small_config(3);
    let mut model = ptr::null_mut();
    let mut risk = 0.0;
    assert_eq!(unsafe { conerank_train(ds, &config, &mut model, &mut risk) }, CrStatus::Ok);

    let data = conerank::data::parse_letor_str(LETOR).unwrap();
    let mut hyper = conerank::HyperParams::for_dim(3);
    hyper.k = 2;
    let mut lib = conerank::TrainConfig::new(hyper);
    lib.max_outer_epochs = 10;
    let (_, report) = conerank::train(&data, &lib).unwrap();
    assert_eq!(risk, report.final_risk());
    unsafe {
        conerank_model_free(model);
        conerank_dataset_free(ds);
    }
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("x qid:1 1:0\n").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { conerank_dataset_parse(bad.as_ptr(), &mut ds) }, CrStatus::Parse);
    assert!(ds.is_null());
    assert!(last_error().contains("line 1"), "{}", last_error());

    assert_eq!(unsafe { conerank_dataset_parse(ptr::null(), &mut ds) }, CrStatus::InvalidArgument);
    assert_eq!(unsafe { conerank_dataset_parse(bad.as_ptr(), ptr::null_mut()) }, CrStatus::InvalidArgument);

    let missing = CString::new("/nonexistent/conerank/model.txt").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { conerank_model_load(missing.as_ptr(), &mut model) }, CrStatus::Io);
    assert!(model.is_null());

    let ds = parse(LETOR);
    let mut config = small_config(3);
    config.k = 4;
    assert_eq!(unsafe { conerank_train(ds, &config, &mut model, ptr::null_mut()) }, CrStatus::InvalidConfig);
    assert!(model.is_null());
    config.k = 2;
    config.outer_tol = 0.0;
    assert_eq!(unsafe { conerank_train(ds, &config, &mut model, ptr::null_mut()) }, CrStatus::InvalidConfig);

    config.outer_tol = 1e-5;
    assert_eq!(unsafe { conerank_train(ds, &config, &mut model, ptr::null_mut()) }, CrStatus::Ok);
    let docs = [0.0; 4];
    let mut order = [0usize; 2];
    // wrong dimension
    assert_eq!(
        unsafe { conerank_rank(model, docs.as_ptr(), 2, 2, order.as_mut_ptr(), ptr::null_mut()) },
        CrStatus::InvalidArgument
    );
    assert!(last_error().contains("features"));
    unsafe {
        conerank_model_free(model);
        conerank_dataset_free(ds);
        // freeing null is a no-op
        conerank_model_free(ptr::null_mut());
        conerank_dataset_free(ptr::null_mut());
    }
}

#[test]
fn metrics_match_worked_examples() {
    let labels = [1u32, 0, 1, 0];
    let ap = unsafe { conerank_average_precision(labels.as_ptr(), labels.len()) };
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    let ranked = [0u32, 2];
    let nd = unsafe { conerank_ndcg_at_k(ranked.as_ptr(), 2, 2) };
    assert!((nd - 0.630_929_753_571_457_4).abs() < 1e-12);
    assert!(unsafe { conerank_average_precision(ptr::null(), 3) }.is_nan());
    assert_eq!(unsafe { conerank_average_precision(ptr::null(), 0) }, 0.0);
}

#[test]
fn defaults_and_version() {
    let c = conerank_train_config_default(46);
    assert_eq!(c.k, 10);
    assert_eq!(c.alpha, 1.0);
    assert!((c.rho - 46f64.sqrt()).abs() < 1e-15);
    assert!((c.cap - 2.0 * c.rho).abs() < 1e-15);
    assert_eq!(c.variant, CrVariant::Sg);
    assert_eq!(c.weighted, 1);
    let v = unsafe { CStr::from_ptr(conerank_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/conerank.h")).unwrap();
    for name in [
        "conerank_last_error",
        "conerank_version",
        "conerank_dataset_parse",
        "conerank_dataset_load",
        "conerank_dataset_free",
        "conerank_dataset_shape",
        "conerank_train_config_default",
        "conerank_train",
        "conerank_model_save",
        "conerank_model_load",
        "conerank_model_free",
        "conerank_model_shape",
        "conerank_rank",
        "conerank_average_precision",
        "conerank_ndcg_at_k",
        "CR_STATUS_OK",
        "typedef struct CrModel CrModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a small C program against the generated header and the shared
/// library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    use std::path::PathBuf;
    use std::process::Command;

    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("cc not found; skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/c_abi-<hash> -> target/<profile>
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    assert!(lib_dir.join("libconerank_ffi.so").exists(), "cdylib missing in {}", lib_dir.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-lconerank_ffi", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
