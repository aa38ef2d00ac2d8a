use std::ffi::{CStr, CString};
use std::ptr;

use qsmooth_ffi::*;

fn last_error() -> String {
    let p = qs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(preset: &str) -> *mut QsConfig {
    let name = CString::new(preset).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { qs_config_new(name.as_ptr(), &mut cfg) }, QsStatus::QsOk);
    cfg
}

fn set(cfg: *mut QsConfig, k: &str, v: &str) -> QsStatus {
    let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
    unsafe { qs_config_set(cfg, k.as_ptr(), v.as_ptr()) }
}

#[test]
fn run_and_read_back_dataset() {
    let cfg = config("classical-purity");
    assert_eq!(set(cfg, "dt", "0.01"), QsStatus::QsOk);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { qs_run(cfg, &mut res) }, QsStatus::QsOk);
    unsafe {
        assert_eq!(qs_result_dataset_count(res), 1);
        let name = CStr::from_ptr(qs_result_dataset_name(res, 0));
        assert_eq!(name.to_str().unwrap(), "classical-purity");
        assert_eq!(
            CStr::from_ptr(qs_result_column_name(res, 0, 2)).to_str().unwrap(),
            "purity_S"
        );
        assert!(qs_result_column_name(res, 0, 3).is_null());
        assert!(qs_result_dataset_name(res, 1).is_null());
        let (mut rows, mut cols) = (0usize, 0usize);
        assert_eq!(qs_result_dataset_shape(res, 0, &mut rows, &mut cols), QsStatus::QsOk);
        assert_eq!((rows, cols), (953, 3));
        let mut buf = vec![0.0; rows * cols];
        assert_eq!(
            qs_result_copy_values(res, 0, buf.as_mut_ptr(), buf.len() - 1),
            QsStatus::QsErrOutOfRange
        );
        assert_eq!(qs_result_copy_values(res, 0, buf.as_mut_ptr(), buf.len()), QsStatus::QsOk);
        let min = buf.chunks(3).map(|r| r[2]).fold(f64::INFINITY, f64::min);
        assert!((min - 0.5).abs() < 0.02);

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(qs_result_write(res, d.as_ptr()), QsStatus::QsOk);
        assert!(dir.path().join("classical-purity.csv").exists());
        qs_result_free(res);
        qs_config_free(cfg);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let bad = CString::new("no-such-preset").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { qs_config_new(bad.as_ptr(), &mut cfg) }, QsStatus::QsErrConfig);
    assert!(cfg.is_null());
    assert!(last_error().contains("no-such-preset"));
    qs_clear_error();
    assert!(qs_last_error_message().is_null());

    assert_eq!(unsafe { qs_config_new(ptr::null(), &mut cfg) }, QsStatus::QsErrNullPointer);

    let cfg = config("classical-z");
    assert_eq!(set(cfg, "colour", "red"), QsStatus::QsErrConfig);
    assert!(last_error().contains("colour"));
    // Invalid rates are rejected when the run validates.
    assert_eq!(set(cfg, "epsilon", "-1"), QsStatus::QsOk);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { qs_run(cfg, &mut res) }, QsStatus::QsErrConfig);
    assert!(res.is_null());
    unsafe { qs_config_free(cfg) };

    let text = CString::new("preset = classical-z\ndt = x\n").unwrap();
    let mut parsed = ptr::null_mut();
    assert_eq!(unsafe { qs_config_parse(text.as_ptr(), &mut parsed) }, QsStatus::QsErrConfig);
    assert!(last_error().contains("line 2"));
}

#[test]
fn error_message_is_thread_local() {
    let bad = CString::new("nope").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe { qs_config_new(bad.as_ptr(), &mut cfg) };
    std::thread::spawn(|| assert!(qs_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!qs_last_error_message().is_null());
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        qs_config_free(ptr::null_mut());
        qs_result_free(ptr::null_mut());
        assert_eq!(qs_result_dataset_count(ptr::null()), 0);
    }
}

#[test]
fn swv_and_pre_solve() {
    let rho = [0.0, 0.0, 0.9];
    let eff = [0.9, 0.0, 0.0];
    let mut out = [0.0; 3];
    let mut min = 0.0;
    let s = unsafe { qs_swv_state(rho.as_ptr(), 2.0, eff.as_ptr(), out.as_mut_ptr(), &mut min) };
    assert_eq!(s, QsStatus::QsOk);
    assert!((min - 0.5 * (1.0 - 0.9 * 2f64.sqrt())).abs() < 1e-12);
    assert!((out[0] - 0.9).abs() < 1e-12 && (out[2] - 0.9).abs() < 1e-12);
    let bad = [0.0, 0.0, 2.0];
    let s = unsafe { qs_swv_state(bad.as_ptr(), 1.0, eff.as_ptr(), out.as_mut_ptr(), &mut min) };
    assert_eq!(s, QsStatus::QsErrNumerical);

    let (mut a, mut o, mut w) = ([0.0; 3], [0.0; 3], [0.0; 6]);
    let s = unsafe { qs_pre_solve(1.0, 0.05, a.as_mut_ptr(), o.as_mut_ptr(), w.as_mut_ptr()) };
    assert_eq!(s, QsStatus::QsOk);
    assert!((o.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((w[0] + 0.07812).abs() < 1e-3 && (w[5] - 0.6158).abs() < 1e-3);
    let v = unsafe { CStr::from_ptr(qs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
