use std::ffi::{c_char, CStr};
use std::path::Path;
use std::process::Command;
use std::ptr;

use clusterforge_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { cf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn hard_sphere_constants() {
    let mut pot = ptr::null_mut();
    assert_eq!(unsafe { cf_potential_hard_sphere(1.0, &mut pot) }, CfStatus::Ok);
    let (mut c, mut b, mut zmax) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { cf_constants(pot, 1.0, &mut c, &mut b, &mut zmax) }, CfStatus::Ok);
    assert!((c - 4.188790205).abs() < 1e-9);
    assert_eq!(b, 0.0);
    let mut w = 0.0;
    assert_eq!(unsafe { cf_tree_weight(pot, 1.0, zmax, &mut w) }, CfStatus::Ok);
    assert!((w * c - 1.0).abs() < 1e-10);
    let mut u = 0.0;
    assert_eq!(unsafe { cf_potential_evaluate(pot, 0.5, &mut u) }, CfStatus::Ok);
    assert!(u.is_infinite());
    unsafe { cf_potential_free(pot) };
}

#[test]
fn errors_set_status_and_message() {
    let mut pot = ptr::null_mut();
    assert_eq!(unsafe { cf_potential_hard_sphere(-1.0, &mut pot) }, CfStatus::InvalidArgument);
    assert!(pot.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { cf_lambert_w0(0.5, ptr::null_mut()) }, CfStatus::NullPointer);
    let mut w = 0.0;
    assert_eq!(unsafe { cf_lambert_w0(0.5, &mut w) }, CfStatus::Domain);
    assert!(last_error().contains("lambert"));
    let mut n = 0;
    assert_eq!(unsafe { cf_graph_count(CfFamily::Tree, 1, 9, &mut n) }, CfStatus::SizeCap);
    unsafe { cf_potential_free(ptr::null_mut()) };
    unsafe { cf_oracle_free(ptr::null_mut()) };
}

#[test]
fn graph_counts_and_lambert() {
    let mut n = 0;
    assert_eq!(unsafe { cf_graph_count(CfFamily::Tree, 1, 4, &mut n) }, CfStatus::Ok);
    assert_eq!(n, 125);
    assert_eq!(unsafe { cf_graph_count(CfFamily::RootedZ, 2, 1, &mut n) }, CfStatus::Ok);
    assert_eq!(n, 6);
    let mut w = 0.0;
    assert_eq!(unsafe { cf_lambert_w0(-(-1.0f64).exp(), &mut w) }, CfStatus::Ok);
    assert!((w + 1.0).abs() < 1e-7);
}

#[test]
fn oracle_matches_low_activity_limits() {
    let mut pot = ptr::null_mut();
    assert_eq!(unsafe { cf_potential_hard_sphere(1.0, &mut pot) }, CfStatus::Ok);
    let z = 1e-4;
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { cf_oracle_new(pot, 1.0, z, 3.0, 3, 1, 3, &mut o) }, CfStatus::Ok);
    // The oracle keeps its own copy of the potential.
    unsafe { cf_potential_free(pot) };
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { cf_oracle_rho(o, [0.0; 3].as_ptr(), 1, &mut v, &mut e) }, CfStatus::Ok);
    assert!((v / z - 1.0).abs() < 1e-2, "{v}");
    let pair = [0.0, 0.0, 0.0, 0.5, 0.0, 0.0];
    assert_eq!(unsafe { cf_oracle_ursell(o, pair.as_ptr(), 2, &mut v, &mut e) }, CfStatus::Ok);
    assert!((v / (z * z) + 1.0).abs() < 1e-2, "{v}");
    assert_eq!(unsafe { cf_oracle_ursell(o, pair.as_ptr(), 1, &mut v, &mut e) }, CfStatus::InvalidArgument);
    unsafe { cf_oracle_free(o) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(cf_version()) }.to_str().unwrap();
    assert!(v.starts_with("clusterforge-"));
}

#[test]
fn header_declares_every_export_and_parses_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/clusterforge.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "cf_last_error_message",
        "cf_version",
        "cf_potential_hard_sphere",
        "cf_potential_square_well",
        "cf_potential_lennard_jones",
        "cf_potential_free",
        "cf_potential_evaluate",
        "cf_constants",
        "cf_tree_weight",
        "cf_lambert_w0",
        "cf_graph_count",
        "cf_oracle_new",
        "cf_oracle_free",
        "cf_oracle_rho",
        "cf_oracle_ursell",
        "cf_run_cli",
        "typedef struct CfPotential CfPotential",
        "CF_STATUS_ADMISSIBILITY = 4",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax check with whatever C compiler is on the path.
    let Ok(out) = Command::new("cc").args(["-std=c99", "-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
