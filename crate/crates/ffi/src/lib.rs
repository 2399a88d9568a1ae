//! C ABI for `conal-core`.
//!
//! Every fallible call returns a [`ConalStatus`] and writes results through
//! out-pointers. Objects are opaque handles released with the matching
//! `*_free` function. On failure a message is kept per thread and can be
//! read with [`conal_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conal::consensus::{phase_lock_detect, simulate, Coupling, OscillatorNetwork, Trajectory};
use conal::spd_geometry::ai_distance;
use conal::{order, ConalError, ConeSpec, SpdPoint, SymMatrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotSymmetric = 3,
    NotPositiveDefinite = 4,
    DimensionMismatch = 5,
    Singular = 6,
    Domain = 7,
    BarrierBreach = 8,
    Parse = 9,
    Panic = 10,
}

/// A symmetric positive definite matrix.
pub struct ConalSpd(SpdPoint);

/// A cone specification (Löwner or quadratic).
pub struct ConalCone(ConeSpec);

/// An oscillator network.
pub struct ConalNetwork(OscillatorNetwork);

/// A simulated trajectory.
pub struct ConalTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &ConalError) -> ConalStatus {
    match err {
        ConalError::NotSymmetric { .. } => ConalStatus::NotSymmetric,
        ConalError::NotSquare { .. } | ConalError::DimensionMismatch { .. } => {
            ConalStatus::DimensionMismatch
        }
        ConalError::NotPositiveDefinite { .. } => ConalStatus::NotPositiveDefinite,
        ConalError::Singular { .. } => ConalStatus::Singular,
        ConalError::InvalidParameter { .. } => ConalStatus::InvalidArgument,
        ConalError::Domain(_) => ConalStatus::Domain,
        ConalError::BarrierBreach { .. } => ConalStatus::BarrierBreach,
        ConalError::Parse(_) => ConalStatus::Parse,
    }
}

enum Failure {
    Status(ConalStatus, String),
    Core(ConalError),
}

impl From<ConalError> for Failure {
    fn from(e: ConalError) -> Self {
        Failure::Core(e)
    }
}

fn null_arg(name: &str) -> Failure {
    Failure::Status(ConalStatus::NullPointer, format!("`{name}` is null"))
}

fn bad_arg(msg: impl Into<String>) -> Failure {
    Failure::Status(ConalStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ConalStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ConalStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            ConalStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null_arg(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Err(bad_arg(format!("`{name}` is empty")));
    }
    if p.is_null() {
        return Err(null_arg(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null_arg(name));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn conal_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an SPD matrix from `n*n` row-major doubles.
///
/// # Safety
/// `data` must point to `n*n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conal_spd_new(
    data: *const f64,
    n: usize,
    out: *mut *mut ConalSpd,
) -> ConalStatus {
    guard(|| {
        let values = slice(
            data,
            n.checked_mul(n).ok_or_else(|| bad_arg("n overflows"))?,
            "data",
        )?;
        let p = SpdPoint::from_row_slice(n, values)?;
        write_out(out, boxed(ConalSpd(p)), "out")
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`conal_spd_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conal_spd_free(p: *mut ConalSpd) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn conal_spd_dim(p: *const ConalSpd) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

/// Affine-invariant distance between two SPD matrices.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_spd_distance(
    a: *const ConalSpd,
    b: *const ConalSpd,
    out: *mut f64,
) -> ConalStatus {
    guard(|| {
        let d = ai_distance(&handle(a, "a")?.0, &handle(b, "b")?.0)?;
        write_out(out, d, "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conal_cone_loewner(n: usize, out: *mut *mut ConalCone) -> ConalStatus {
    guard(|| {
        if n == 0 {
            return Err(bad_arg("n must be positive"));
        }
        write_out(out, boxed(ConalCone(ConeSpec::loewner(n))), "out")
    })
}

/// Quadratic cone with parameter `mu` in `(0, n)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conal_cone_quadratic(
    n: usize,
    mu: f64,
    out: *mut *mut ConalCone,
) -> ConalStatus {
    guard(|| {
        let spec = ConeSpec::quadratic(n, mu)?;
        write_out(out, boxed(ConalCone(spec)), "out")
    })
}

/// # Safety
/// `c` must be NULL or a live cone handle.
#[no_mangle]
pub unsafe extern "C" fn conal_cone_free(c: *mut ConalCone) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Membership of the symmetric `n*n` row-major matrix `x` in the cone at `sigma`.
/// `min_margin` may be NULL.
///
/// # Safety
/// Handles must be live, `x` must hold `n*n` doubles, `member` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conal_cone_check(
    cone: *const ConalCone,
    sigma: *const ConalSpd,
    x: *const f64,
    n: usize,
    member: *mut c_int,
    min_margin: *mut f64,
) -> ConalStatus {
    guard(|| {
        let values = slice(
            x,
            n.checked_mul(n).ok_or_else(|| bad_arg("n overflows"))?,
            "x",
        )?;
        let x = SymMatrix::from_row_slice(n, values)?;
        let m = handle(cone, "cone")?
            .0
            .margin_at(&handle(sigma, "sigma")?.0, &x)?;
        write_out(member, c_int::from(m.member), "member")?;
        if !min_margin.is_null() {
            min_margin.write(m.min_value());
        }
        Ok(())
    })
}

/// Decides `a ≤ b`. `min_margin` may be NULL.
///
/// # Safety
/// Handles must be live and `ordered` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_spd_order(
    cone: *const ConalCone,
    a: *const ConalSpd,
    b: *const ConalSpd,
    ordered: *mut c_int,
    min_margin: *mut f64,
) -> ConalStatus {
    guard(|| {
        let v = order::spd_order(
            &handle(cone, "cone")?.0,
            &handle(a, "a")?.0,
            &handle(b, "b")?.0,
        )?;
        write_out(ordered, c_int::from(v.ordered), "ordered")?;
        if !min_margin.is_null() {
            min_margin.write(v.margins.min_value());
        }
        Ok(())
    })
}

/// Ring network on `n` agents with frequencies `omega`, optional undirected
/// chords given as `n_chords` index pairs, and barrier-tan coupling `gain`.
///
/// # Safety
/// `omega` must hold `n` doubles, `chords` `2*n_chords` indices (or be NULL
/// when `n_chords` is 0), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_network_ring(
    omega: *const f64,
    n: usize,
    chords: *const usize,
    n_chords: usize,
    gain: f64,
    out: *mut *mut ConalNetwork,
) -> ConalStatus {
    guard(|| {
        let omega = slice(omega, n, "omega")?.to_vec();
        let pairs: Vec<(usize, usize)> = if n_chords == 0 {
            Vec::new()
        } else {
            if chords.is_null() {
                return Err(null_arg("chords"));
            }
            std::slice::from_raw_parts(chords, 2 * n_chords)
                .chunks_exact(2)
                .map(|c| (c[0], c[1]))
                .collect()
        };
        let net =
            OscillatorNetwork::ring_with_chords(omega, &pairs, Coupling::BarrierTan { gain })?;
        write_out(out, boxed(ConalNetwork(net)), "out")
    })
}

/// Network from a JSON document `{"omega": [...], "edges": [...], "sign": ...}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_network_from_json(
    json: *const c_char,
    out: *mut *mut ConalNetwork,
) -> ConalStatus {
    guard(|| {
        if json.is_null() {
            return Err(null_arg("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure::Status(ConalStatus::Parse, "json is not UTF-8".into()))?;
        let net: OscillatorNetwork = serde_json::from_str(text)
            .map_err(|e| Failure::Status(ConalStatus::Parse, e.to_string()))?;
        write_out(out, boxed(ConalNetwork(net)), "out")
    })
}

/// # Safety
/// `net` must be NULL or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn conal_network_free(net: *mut ConalNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn conal_network_agents(net: *const ConalNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.agents())
}

/// Fixed-step RK4 simulation from `theta0` over `[0, horizon]`.
///
/// # Safety
/// `net` must be live, `theta0` must hold `n` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_simulate(
    net: *const ConalNetwork,
    theta0: *const f64,
    n: usize,
    horizon: f64,
    dt: f64,
    out: *mut *mut ConalTrajectory,
) -> ConalStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let theta0 = slice(theta0, n, "theta0")?;
        let traj = simulate(&net.0, theta0, horizon, dt)?;
        write_out(out, boxed(ConalTrajectory(traj)), "out")
    })
}

/// # Safety
/// `t` must be NULL or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn conal_trajectory_free(t: *mut ConalTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of stored samples.
///
/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn conal_trajectory_len(t: *const ConalTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.states.len())
}

/// Copies sample `index` into `out` (length `n`) and its time into `time` (may be NULL).
///
/// # Safety
/// `t` must be live and `out` must hold `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn conal_trajectory_state(
    t: *const ConalTrajectory,
    index: usize,
    out: *mut f64,
    n: usize,
    time: *mut f64,
) -> ConalStatus {
    guard(|| {
        let traj = &handle(t, "trajectory")?.0;
        let state = traj
            .states
            .get(index)
            .ok_or_else(|| bad_arg(format!("index {index} out of range")))?;
        if n != state.len() {
            return Err(Failure::Core(ConalError::DimensionMismatch {
                expected: state.len(),
                found: n,
            }));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        ptr::copy_nonoverlapping(state.as_ptr(), out, n);
        if !time.is_null() {
            time.write(traj.times[index]);
        }
        Ok(())
    })
}

/// Phase-lock test over the trailing `window`. `sync_frequency` may be NULL.
///
/// # Safety
/// `t` must be live and `locked` writable.
#[no_mangle]
pub unsafe extern "C" fn conal_phase_lock(
    t: *const ConalTrajectory,
    window: f64,
    tol: f64,
    locked: *mut c_int,
    sync_frequency: *mut f64,
) -> ConalStatus {
    guard(|| {
        let lock = phase_lock_detect(&handle(t, "trajectory")?.0, window, tol);
        write_out(locked, c_int::from(lock.locked), "locked")?;
        if !sync_frequency.is_null() {
            sync_frequency.write(lock.sync_frequency);
        }
        Ok(())
    })
}
