use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mldegree_ffi::*;

fn one_way(sizes: &[usize]) -> *mut MldModel {
    let mut m = ptr::null_mut();
    let st = unsafe { mld_model_new_one_way(sizes.as_ptr(), sizes.len(), ptr::null(), 0, &mut m) };
    assert_eq!(st, MldStatus::Ok);
    m
}

fn last_message() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        mld_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn balanced_ml_fit_through_handles() {
    let m = one_way(&[2, 2]);
    let y = [1.0, 2.0, 3.0, 5.0];
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(mld_fit(m, y.as_ptr(), 4, MldMode::Ml, &mut f), MldStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(mld_fit_s_hat(f, &mut a, &mut b), MldStatus::Ok);
        assert!((a - 0.9375).abs() < 1e-8 && (b - 1.25).abs() < 1e-8);
        assert_eq!(mld_fit_poly_degree(f), 2);
        assert_eq!(mld_fit_interior_count(f), 1);
        let mut ll = 0.0;
        assert_eq!(mld_fit_loglik(f, &mut ll), MldStatus::Ok);
        assert!(ll.is_finite());
        let json = mld_fit_to_json(f);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        mld_string_free(json);
        assert!(text.contains("\"mode\":\"ml\""));
        mld_fit_free(f);
        mld_model_free(m);
    }
}

#[test]
fn dense_constructor_validates() {
    let x = [1.0, 1.0, 1.0];
    let v = [1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut m = ptr::null_mut();
    let st = unsafe { mld_model_new_dense(3, 1, x.as_ptr(), v.as_ptr(), &mut m) };
    assert_eq!(st, MldStatus::NotSymmetric);
    assert!(m.is_null());
    assert_eq!(mld_last_error_code(), MldStatus::NotSymmetric);
    assert!(last_message().starts_with("error[E_ASYM]"));
}

#[test]
fn null_pointers_are_reported() {
    let mut f = ptr::null_mut();
    let st = unsafe { mld_fit(ptr::null(), ptr::null(), 0, MldMode::Ml, &mut f) };
    assert_eq!(st, MldStatus::Input);
    unsafe {
        assert_eq!(mld_fit_exists(ptr::null()), 0);
        assert!(mld_fit_to_json(ptr::null()).is_null());
        mld_model_free(ptr::null_mut());
        mld_fit_free(ptr::null_mut());
    }
}

#[test]
fn simulate_and_degree() {
    let m = one_way(&[1, 2, 3]);
    let mut y = [0.0; 6];
    let mut y2 = [0.0; 6];
    unsafe {
        assert_eq!(mld_simulate(m, ptr::null(), 0, 1.0, 1.0, 5, y.as_mut_ptr(), 6), MldStatus::Ok);
        assert_eq!(mld_simulate(m, ptr::null(), 0, 1.0, 1.0, 5, y2.as_mut_ptr(), 6), MldStatus::Ok);
        assert_eq!(y, y2);
        assert_eq!(
            mld_simulate(m, ptr::null(), 0, 1.0, 0.0, 5, y.as_mut_ptr(), 6),
            MldStatus::InvalidVariance
        );
        let mut s = MldDegreeSummary::default();
        assert_eq!(mld_degree_experiment(m, MldMode::Reml, 30, 1, &mut s), MldStatus::Ok);
        assert_eq!(s.bound, 3);
        assert_eq!(s.violations, 0);
        assert!(s.max_count <= 3);
        mld_model_free(m);
    }
}

#[test]
fn header_is_generated() {
    let h = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/mldegree.h");
    let text = std::fs::read_to_string(h).unwrap();
    for sym in ["mld_fit", "mld_model_new_dense", "MLD_STATUS_NONEXISTENT", "typedef struct MldModel MldModel"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
}

/// Compiles a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libmldegree_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let out = std::env::temp_dir().join(format!("mldegree_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(
        run.status.success(),
        "C smoke test failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
