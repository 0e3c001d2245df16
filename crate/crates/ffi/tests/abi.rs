use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use hardylab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe { hl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_entry_points() {
    let mut v = 0.0;
    assert_eq!(unsafe { hl_eval_L(1, 0.5, &mut v) }, HlStatus::Ok);
    assert!((v - 1.0 / (1.0 + 2f64.ln())).abs() < 1e-15);
    assert_eq!(unsafe { hl_eval_L(1, 2.0, &mut v) }, HlStatus::Domain);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { hl_eval_Y(1, -3, &mut v) }, HlStatus::Ok);
    assert!((v - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(unsafe { hl_bbm_constant(2, &mut v) }, HlStatus::Ok);
    assert!((v - 4.0).abs() < 1e-14);
    assert_eq!(unsafe { hl_theta_constant(1.0, &mut v) }, HlStatus::Ok);
    assert!((v - 4.0 / std::f64::consts::E).abs() < 1e-14);
    assert_eq!(unsafe { hl_rho_star(2, 2.0, 0.5, &mut v) }, HlStatus::Ok);
    assert!(v.is_finite());
    assert_eq!(unsafe { hl_eval_L(1, 0.5, ptr::null_mut()) }, HlStatus::NullPointer);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(hl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn error_buffer_truncates() {
    let mut v = 0.0;
    assert_ne!(unsafe { hl_eval_L(1, 2.0, &mut v) }, HlStatus::Ok);
    let full = unsafe { hl_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 8];
    let n = unsafe { hl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert!(full > 7);
    assert_eq!(buf[7], 0);
}

#[test]
fn handles_round_trip() {
    let mut chain = ptr::null_mut();
    assert_eq!(unsafe { hl_chain_new(2, std::f64::consts::E, HlTail::Square, 0.0, &mut chain) }, HlStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { hl_chain_eval(chain, std::f64::consts::E, &mut v) }, HlStatus::Ok);
    assert!((v - 1.0).abs() < 1e-15);

    let json = CString::new(r#"{"variant":"interval","half_length":1.0}"#).unwrap();
    let mut domain = ptr::null_mut();
    assert_eq!(unsafe { hl_domain_from_json(json.as_ptr(), &mut domain) }, HlStatus::Ok);
    let x = [0.25];
    assert_eq!(unsafe { hl_domain_distance(domain, x.as_ptr(), 1, &mut v) }, HlStatus::Ok);
    assert_eq!(v, 0.25);
    assert_eq!(unsafe { hl_domain_distance(domain, x.as_ptr(), 2, &mut v) }, HlStatus::InvalidArgument);

    let json = CString::new(r#"{"descriptor":{"kind":"linear","slope":1.0,"intercept":0.0}}"#).unwrap();
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { hl_function_from_json(json.as_ptr(), &mut u) }, HlStatus::Ok);
    assert_eq!(unsafe { hl_gagliardo_1d(u, 0.0, 1.0, 0.5, &mut v) }, HlStatus::Ok);
    assert!((v - 2.0 / (0.5 * 1.5)).abs() < 1e-4 * v);

    let mut lhs = 0.0;
    assert_eq!(unsafe { hl_weighted_lhs(u, domain, chain, 1.0, &mut lhs) }, HlStatus::Ok);
    let (mut c, mut pass) = (0.0, 0);
    assert_eq!(unsafe { hl_verify_main(u, domain, 2, std::f64::consts::E, &mut c, &mut pass) }, HlStatus::Ok);
    assert_eq!(pass, 1);
    assert!((c - lhs / (4.0 * 2.0)).abs() < 1e-12 * c);
    assert_eq!(unsafe { hl_weighted_lhs(u, ptr::null(), chain, 1.0, &mut lhs) }, HlStatus::NullPointer);

    unsafe {
        hl_function_free(u);
        hl_domain_free(domain);
        hl_chain_free(chain);
        hl_chain_free(ptr::null_mut());
    }
}

#[test]
fn bad_json_is_invalid_argument() {
    let json = CString::new("{\"variant\":\"torus\"}").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { hl_domain_from_json(json.as_ptr(), &mut d) }, HlStatus::InvalidArgument);
    assert!(last_error().contains("domain json"));
    assert!(d.is_null());
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hardylab.h");
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
