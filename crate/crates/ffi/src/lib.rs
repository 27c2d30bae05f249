//! C ABI for clusterforge.
//!
//! Objects cross the boundary as opaque handles created by `*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a `CfStatus` and writes results through out-pointers; the text
//! of the last error on the calling thread is available from
//! `cf_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clusterforge::graphs::{count, FamilyKind};
use clusterforge::lambert::lambert_w0;
use clusterforge::majorant::tree_weight_w;
use clusterforge::oracle::{ursell_with, Oracle, OracleSettings};
use clusterforge::potential::{activity_bound, regularity_constant};
use clusterforge::quadrature::{GridSpec, QuadratureSpec};
use clusterforge::{EnsembleParams, Error, PairPotential, Vec3};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Admissibility = 4,
    Precondition = 5,
    SizeCap = 6,
    Parse = 7,
    CheckFailed = 8,
    Internal = 9,
    Panic = 10,
}

/// Graph family selector for `cf_graph_count`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfFamily {
    Connected = 0,
    Tree = 1,
    Forest = 2,
    RootedZ = 3,
    ZCross = 4,
}

impl From<CfFamily> for FamilyKind {
    fn from(f: CfFamily) -> Self {
        match f {
            CfFamily::Connected => FamilyKind::Connected,
            CfFamily::Tree => FamilyKind::Tree,
            CfFamily::Forest => FamilyKind::Forest,
            CfFamily::RootedZ => FamilyKind::RootedZ,
            CfFamily::ZCross => FamilyKind::ZCross,
        }
    }
}

/// Opaque pair potential.
pub struct CfPotential {
    inner: PairPotential,
}

/// Opaque grand-canonical oracle. Owns a copy of its potential.
pub struct CfOracle {
    // Declared first so it is dropped before the potential it borrows.
    oracle: Oracle<'static>,
    _pot: Box<PairPotential>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::Domain(_) | Error::Regularity(_) => CfStatus::Domain,
        Error::Configuration(_) => CfStatus::InvalidArgument,
        Error::Admissibility { .. } => CfStatus::Admissibility,
        Error::Precondition(_) | Error::Cutoff(_) => CfStatus::Precondition,
        Error::SizeCap { .. } => CfStatus::SizeCap,
        Error::Parse { .. } => CfStatus::Parse,
        Error::IdentityViolation { .. } | Error::BoundViolation(_) => CfStatus::CheckFailed,
        _ => CfStatus::Internal,
    }
}

/// Runs `f`, records its error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (CfStatus, String)>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside clusterforge".into());
            CfStatus::Panic
        }
    }
}

fn lift<T>(r: clusterforge::Result<T>) -> Result<T, (CfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CfStatus, String) {
    (CfStatus::NullPointer, format!("{what} is null"))
}

/// Length of the last error message on this thread, excluding the
/// terminator, or 0 if none. Copies at most `len - 1` bytes plus a NUL into
/// `buf` when `buf` is non-null.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library name and version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!("clusterforge-", env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn make_potential(out: *mut *mut CfPotential, build: impl FnOnce() -> clusterforge::Result<PairPotential>) -> CfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pot = lift(build())?;
        // SAFETY: checked non-null above; the caller provides a writable slot.
        unsafe { *out = Box::into_raw(Box::new(CfPotential { inner: pot })) };
        Ok(())
    })
}

/// # Safety
/// `out` must be null or point to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_hard_sphere(sigma: f64, out: *mut *mut CfPotential) -> CfStatus {
    make_potential(out, || PairPotential::hard_sphere(sigma))
}

/// # Safety
/// `out` must be null or point to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_square_well(
    sigma: f64,
    lambda: f64,
    epsilon: f64,
    out: *mut *mut CfPotential,
) -> CfStatus {
    make_potential(out, || PairPotential::square_well(sigma, lambda, epsilon))
}

/// Truncated Lennard-Jones with a hard core at `r_core` and cutoff `r_cut`.
///
/// # Safety
/// `out` must be null or point to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_lennard_jones(
    epsilon: f64,
    sigma: f64,
    r_core: f64,
    r_cut: f64,
    out: *mut *mut CfPotential,
) -> CfStatus {
    make_potential(out, || PairPotential::lennard_jones(epsilon, sigma, r_core, r_cut))
}

/// # Safety
/// `pot` must be null or a handle from a `cf_potential_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_free(pot: *mut CfPotential) {
    if !pot.is_null() {
        drop(Box::from_raw(pot));
    }
}

/// u(r); +infinity inside a hard core.
///
/// # Safety
/// `pot` must be a live potential handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_evaluate(pot: *const CfPotential, r: f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let pot = pot.as_ref().ok_or_else(|| null("pot"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = pot.inner.evaluate(r);
        Ok(())
    })
}

/// Regularity constant c_β, stability constant B and admissibility bound z_max.
///
/// # Safety
/// `pot` must be a live potential handle; each out-pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn cf_constants(
    pot: *const CfPotential,
    beta: f64,
    c_beta: *mut f64,
    b: *mut f64,
    z_max: *mut f64,
) -> CfStatus {
    guard(|| {
        let pot = &pot.as_ref().ok_or_else(|| null("pot"))?.inner;
        let c = lift(regularity_constant(pot, beta))?;
        let bb = lift(pot.b())?;
        if let Some(o) = c_beta.as_mut() {
            *o = c;
        }
        if let Some(o) = b.as_mut() {
            *o = bb;
        }
        if let Some(o) = z_max.as_mut() {
            *o = activity_bound(c, bb, beta);
        }
        Ok(())
    })
}

/// Tree weight w(z) for the potential at inverse temperature β.
///
/// # Safety
/// `pot` must be a live potential handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn cf_tree_weight(pot: *const CfPotential, beta: f64, z: f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let pot = &pot.as_ref().ok_or_else(|| null("pot"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = lift(regularity_constant(pot, beta))?;
        *out = lift(tree_weight_w(z, c, lift(pot.b())?, beta))?;
        Ok(())
    })
}

/// Principal branch W₀(x) for x in [−1/e, 0].
///
/// # Safety
/// `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn cf_lambert_w0(x: f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(lambert_w0(x))?;
        Ok(())
    })
}

/// Number of graphs of a family on `n_white` white and `n_black` black vertices.
///
/// # Safety
/// `out` must be a writable u64.
#[no_mangle]
pub unsafe extern "C" fn cf_graph_count(family: CfFamily, n_white: usize, n_black: usize, out: *mut u64) -> CfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(count(family.into(), n_white, n_black))?;
        Ok(())
    })
}

/// Capped grand-canonical oracle on a product Gauss-Legendre grid.
///
/// # Safety
/// `pot` must be a live potential handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cf_oracle_new(
    pot: *const CfPotential,
    beta: f64,
    z: f64,
    box_side: f64,
    n_cap: usize,
    grid_panels: usize,
    grid_order: usize,
    out: *mut *mut CfOracle,
) -> CfStatus {
    guard(|| {
        let pot = pot.as_ref().ok_or_else(|| null("pot"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let owned = Box::new(pot.inner);
        let params = lift(EnsembleParams::new(beta, z, box_side, 0.5))?;
        let settings = OracleSettings {
            n_cap,
            quadrature: QuadratureSpec::Grid(GridSpec {
                panels: grid_panels,
                order: grid_order,
            }),
        };
        // SAFETY: the box is never moved out of and outlives `oracle`,
        // which is dropped first (field order in CfOracle).
        let borrowed: &'static PairPotential = &*(owned.as_ref() as *const PairPotential);
        let oracle = lift(Oracle::new(borrowed, lift(owned.b())?, &params, settings))?;
        *out = Box::into_raw(Box::new(CfOracle { oracle, _pot: owned }));
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a live handle from `cf_oracle_new`.
#[no_mangle]
pub unsafe extern "C" fn cf_oracle_free(oracle: *mut CfOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

unsafe fn read_points(xyz: *const f64, m: usize) -> Result<Vec<Vec3>, (CfStatus, String)> {
    if m == 0 {
        return Err((CfStatus::InvalidArgument, "need at least one point".into()));
    }
    if xyz.is_null() {
        return Err(null("points"));
    }
    let flat = std::slice::from_raw_parts(xyz, 3 * m);
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// ρ^(m) at `m` points given as 3m packed coordinates.
///
/// # Safety
/// `oracle` must be live, `xyz` must hold 3·m doubles, outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn cf_oracle_rho(
    oracle: *const CfOracle,
    xyz: *const f64,
    m: usize,
    value: *mut f64,
    stderr: *mut f64,
) -> CfStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let pts = read_points(xyz, m)?;
        let ev = o.oracle.ev(&pts);
        if let Some(v) = value.as_mut() {
            *v = ev.v;
        }
        if let Some(e) = stderr.as_mut() {
            *e = ev.e;
        }
        Ok(())
    })
}

/// Ursell function ω^(m), m in 2..=4, from oracle densities.
///
/// # Safety
/// As for `cf_oracle_rho`.
#[no_mangle]
pub unsafe extern "C" fn cf_oracle_ursell(
    oracle: *const CfOracle,
    xyz: *const f64,
    m: usize,
    value: *mut f64,
    stderr: *mut f64,
) -> CfStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if !(2..=4).contains(&m) {
            return Err((CfStatus::InvalidArgument, format!("Ursell order {m} must be 2, 3 or 4")));
        }
        let pts = read_points(xyz, m)?;
        let ev = ursell_with(&o.oracle, &pts);
        if let Some(v) = value.as_mut() {
            *v = ev.v;
        }
        if let Some(e) = stderr.as_mut() {
            *e = ev.e;
        }
        Ok(())
    })
}

/// Runs the command-line interface with `argc` arguments (argv[0] included)
/// and returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cf_run_cli(argc: usize, argv: *const *const c_char) -> i32 {
    if argv.is_null() {
        set_error("argv is null".into());
        return clusterforge::cli::EXIT_ERROR;
    }
    let args: Vec<String> = std::slice::from_raw_parts(argv, argc)
        .iter()
        .map(|&p| {
            if p.is_null() {
                String::new()
            } else {
                CStr::from_ptr(p).to_string_lossy().into_owned()
            }
        })
        .collect();
    catch_unwind(|| clusterforge::cli::main_with_args(args)).unwrap_or(clusterforge::cli::EXIT_ERROR)
}
