//! C ABI over the dynbias encoders, dynamics metrics and PAC-Bayes helpers.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by `*_free`. Every fallible call returns a [`DbStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`db_last_error`].
//!
//! # Safety
//!
//! Handle arguments must be NULL or a live pointer returned by this library.
//! Array arguments must be NULL or point to at least the stated number of
//! values. Output pointers must be NULL or writable.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dynbias::dynmetrics::{ais, lyapunov_with_fallback, spectral_signature, DimsPolicy, LyapunovConfig};
use dynbias::dynsys::{encode_features, init_state, EncodingConfig, SystemSpec, Trajectory};
use dynbias::pacbayes::{kl_gaussian, pac_bound, prior_variance};
use dynbias::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Diverged = 3,
    BufferTooSmall = 4,
    Internal = 5,
}

/// Dynamical system plus time discretization.
pub struct DbEncoder {
    spec: SystemSpec,
    cfg: EncodingConfig,
}

/// Encoded trajectory of shape features × frames × 3.
pub struct DbTrajectory {
    inner: Trajectory,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DbSpectrum {
    pub centroid: f64,
    pub entropy: f64,
    pub dominant_freq: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DbLyapunov {
    /// Sorted descending.
    pub exponents: [f64; 3],
    pub sum: f64,
    pub converged: bool,
    /// True when the orbit from the mapped state diverged and the origin was used.
    pub used_origin: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DbStatus, msg: impl Into<String>) -> DbStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DbStatus {
    let status = match e {
        Error::Diverged { .. } => DbStatus::Diverged,
        Error::Invalid(_) => DbStatus::InvalidArgument,
        _ => DbStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DbStatus) -> DbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DbStatus::Internal, "panic inside dynbias"))
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Option<&'a [f64]> {
    if n == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, n))
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn db_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn db_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn new_encoder(spec: SystemSpec, t_total: f64, n_steps: usize, out: *mut *mut DbEncoder) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        if let Err(e) = spec.validate() {
            return from_error(e);
        }
        match EncodingConfig::with_default_substeps(t_total, n_steps) {
            Ok(cfg) => {
                unsafe { *out = Box::into_raw(Box::new(DbEncoder { spec, cfg })) };
                DbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Duffing encoder with damping `delta`, evolved for `t_total` over `n_steps` frames.
#[no_mangle]
pub extern "C" fn db_encoder_new_duffing(delta: f64, t_total: f64, n_steps: usize, out: *mut *mut DbEncoder) -> DbStatus {
    new_encoder(SystemSpec::duffing(delta), t_total, n_steps, out)
}

#[no_mangle]
pub extern "C" fn db_encoder_new_lorenz(rho: f64, t_total: f64, n_steps: usize, out: *mut *mut DbEncoder) -> DbStatus {
    new_encoder(SystemSpec::lorenz(rho), t_total, n_steps, out)
}

#[no_mangle]
pub extern "C" fn db_encoder_new_thomas(b: f64, t_total: f64, n_steps: usize, out: *mut *mut DbEncoder) -> DbStatus {
    new_encoder(SystemSpec::thomas(b), t_total, n_steps, out)
}

/// Releases an encoder. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn db_encoder_free(enc: *mut DbEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Frames per encoded feature.
#[no_mangle]
pub unsafe extern "C" fn db_encoder_frames(enc: *const DbEncoder) -> usize {
    enc.as_ref().map_or(0, |e| e.cfg.n_steps)
}

/// Encodes `d` features into a new trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn db_encode(enc: *const DbEncoder, x: *const f64, d: usize, out: *mut *mut DbTrajectory) -> DbStatus {
    guard(|| {
        let (Some(e), Some(x)) = (enc.as_ref(), slice(x, d)) else {
            return fail(DbStatus::NullPointer, "encoder or input is NULL");
        };
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        match encode_features(x, &e.spec, &e.cfg) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(DbTrajectory { inner: t }));
                DbStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}

/// Releases a trajectory. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn db_trajectory_free(traj: *mut DbTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Writes the feature and frame counts; the state dimension is always 3.
#[no_mangle]
pub unsafe extern "C" fn db_trajectory_shape(traj: *const DbTrajectory, features: *mut usize, frames: *mut usize) -> DbStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(DbStatus::NullPointer, "trajectory is NULL");
        };
        if features.is_null() || frames.is_null() {
            return fail(DbStatus::NullPointer, "output is NULL");
        }
        *features = t.inner.d;
        *frames = t.inner.n;
        DbStatus::Ok
    })
}

/// Copies the row-major (feature, frame, dim) data into `out`, which must
/// hold features × frames × 3 values.
#[no_mangle]
pub unsafe extern "C" fn db_trajectory_copy(traj: *const DbTrajectory, out: *mut f64, len: usize) -> DbStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(DbStatus::NullPointer, "trajectory is NULL");
        };
        let need = t.inner.data.len();
        if len < need {
            return fail(DbStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}"));
        }
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        ptr::copy_nonoverlapping(t.inner.data.as_ptr(), out, need);
        DbStatus::Ok
    })
}

/// Active information storage in bits with `bins` equal-width bins.
#[no_mangle]
pub unsafe extern "C" fn db_trajectory_ais(traj: *const DbTrajectory, bins: usize, out: *mut f64) -> DbStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(DbStatus::NullPointer, "trajectory is NULL");
        };
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        match ais(&t.inner, bins) {
            Ok(a) => {
                *out = a.value;
                DbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Welch spectral centroid, normalized entropy and dominant frequency,
/// averaged over features and the three dimensions.
#[no_mangle]
pub unsafe extern "C" fn db_trajectory_spectrum(traj: *const DbTrajectory, out: *mut DbSpectrum) -> DbStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(DbStatus::NullPointer, "trajectory is NULL");
        };
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        match spectral_signature(&t.inner, DimsPolicy::All) {
            Ok(s) => {
                *out = DbSpectrum { centroid: s.centroid, entropy: s.entropy, dominant_freq: s.dominant_freq };
                DbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Lyapunov spectrum of the Duffing system from the state mapped from `x`,
/// with the default integration settings.
#[no_mangle]
pub unsafe extern "C" fn db_lyapunov_duffing(delta: f64, x: f64, out: *mut DbLyapunov) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        let x0 = match init_state(x) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        match lyapunov_with_fallback(&SystemSpec::duffing(delta), &x0, &LyapunovConfig::default()) {
            Ok((r, used_origin)) => {
                *out = DbLyapunov { exponents: r.exponents, sum: r.sum, converged: r.converged, used_origin };
                DbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// KL(q ‖ p) in nats between a diagonal Gaussian q and the isotropic prior N(0, var_p).
#[no_mangle]
pub unsafe extern "C" fn db_kl_gaussian(mu: *const f64, var_q: *const f64, n: usize, var_p: f64, out: *mut f64) -> DbStatus {
    guard(|| {
        let (Some(mu), Some(vq)) = (slice(mu, n), slice(var_q, n)) else {
            return fail(DbStatus::NullPointer, "mu or var_q is NULL");
        };
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        if !(var_p > 0.0) || vq.iter().any(|v| !(*v > 0.0)) {
            return fail(DbStatus::InvalidArgument, "variances must be positive");
        }
        *out = kl_gaussian(mu, vq, var_p);
        DbStatus::Ok
    })
}

/// McAllester bound on the true error.
#[no_mangle]
pub unsafe extern "C" fn db_pac_bound(train_error: f64, kl: f64, m: usize, delta_conf: f64, out: *mut f64) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return fail(DbStatus::NullPointer, "out is NULL");
        }
        if m < 2 || !(0.0..=1.0).contains(&train_error) || !(kl >= 0.0) || !(delta_conf > 0.0 && delta_conf < 1.0) {
            return fail(DbStatus::InvalidArgument, "need m ≥ 2, train_error in [0, 1], kl ≥ 0, 0 < delta_conf < 1");
        }
        *out = pac_bound(train_error, kl, m, delta_conf);
        DbStatus::Ok
    })
}

/// Variance of the dynamics-induced prior for damping `delta`.
#[no_mangle]
pub extern "C" fn db_prior_variance(delta: f64) -> f64 {
    prior_variance(delta)
}
