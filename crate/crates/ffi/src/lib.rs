//! C ABI over `rdbalance`.
//!
//! Every entry point returns an [`RdbStatus`]. On failure the message is
//! kept per thread and can be read with [`rdb_last_error`]. Objects that
//! outlive a call are opaque handles created by `*_new` / `*_from_*`
//! functions and released by the matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rdbalance::balance::balanced_direction_with;
use rdbalance::cli::ExperimentConfig;
use rdbalance::metrics::{bd_rate, RDCurve, RDPoint};
use rdbalance::solution1::{logit_update, weights_of, TrajectoryState};
use rdbalance::solution2::{project_simplex_softmax, qp_weights, GramMatrix};
use rdbalance::trainer::{fine_tune, train, Checkpoint, TrainOutcome};
use rdbalance::{Error, GradPair, LossPair, SimplexWeights};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NonFinite = 3,
    NonPositiveLoss = 4,
    DimensionMismatch = 5,
    SingularGram = 6,
    Diverged = 7,
    FingerprintMismatch = 8,
    InvalidCurve = 9,
    Config = 10,
    Io = 11,
    Serialization = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl From<&Error> for RdbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => RdbStatus::InvalidInput,
            Error::NonFinite(_) => RdbStatus::NonFinite,
            Error::NonPositiveLoss { .. } => RdbStatus::NonPositiveLoss,
            Error::DimensionMismatch { .. } => RdbStatus::DimensionMismatch,
            Error::SingularGram { .. } => RdbStatus::SingularGram,
            Error::Diverged { .. } => RdbStatus::Diverged,
            Error::FingerprintMismatch { .. } => RdbStatus::FingerprintMismatch,
            Error::InvalidCurve(_) => RdbStatus::InvalidCurve,
            Error::Config(_) => RdbStatus::Config,
            Error::Io { .. } => RdbStatus::Io,
            Error::Serde(_) => RdbStatus::Serialization,
        }
    }
}

/// Opaque R-D curve.
pub struct RdbCurve(RDCurve);

/// Opaque logit state of the trajectory weighting scheme.
pub struct RdbTrajectory(TrajectoryState);

/// Opaque parsed and validated experiment configuration.
pub struct RdbExperiment(ExperimentConfig);

/// Opaque result of a training run.
pub struct RdbOutcome(TrainOutcome);

/// Work counters of a training run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RdbCounters {
    pub iterations: u64,
    pub loss_evals: u64,
    pub grad_evals: u64,
    pub gram_builds: u64,
    pub balanced_directions: u64,
    pub logit_updates: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Small { need: usize, have: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RdbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RdbStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RdbStatus::NullPointer
        }
        Ok(Err(Fail::Small { need, have })) => {
            set_error(format!("buffer holds {have} values, {need} needed"));
            RdbStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            RdbStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RdbStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(ptr: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Fail::Core(Error::InvalidInput(format!("{what} is not UTF-8: {e}"))))
}

fn boxed<T>(value: T, slot: &mut *mut T) {
    *slot = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rdb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rdb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Balanced direction `c (w_R ∇L_R / L_R + w_D ∇L_D / L_D)` with
/// `w = (w_rate, 1 - w_rate)`. With `renormalize` false, `c = 1`.
/// `out_direction` holds `dim` values; `out_c` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rdb_balanced_direction(
    w_rate: f64,
    loss_rate: f64,
    loss_distortion: f64,
    grad_rate: *const f64,
    grad_distortion: *const f64,
    dim: usize,
    renormalize: bool,
    out_direction: *mut f64,
    out_c: *mut f64,
) -> RdbStatus {
    guard(|| {
        let weights = SimplexWeights::new(w_rate, 1.0 - w_rate)?;
        let losses = LossPair::new(loss_rate, loss_distortion)?;
        let grads = GradPair::new(
            slice(grad_rate, dim, "grad_rate")?.to_vec(),
            slice(grad_distortion, dim, "grad_distortion")?.to_vec(),
        )?;
        if out_direction.is_null() && dim > 0 {
            return Err(Fail::Null("out_direction"));
        }
        let (d, c) = balanced_direction_with(&weights, &losses, &grads, renormalize)?;
        if dim > 0 {
            std::slice::from_raw_parts_mut(out_direction, dim).copy_from_slice(&d);
        }
        if let Some(slot) = out_c.as_mut() {
            *slot = c;
        }
        Ok(())
    })
}

/// Closed-form QP weights for the Gram matrix `[[q11, q12], [q12, q22]]`.
/// `out_raw` receives the pre-projection weights (which may be negative),
/// `out_weights` their softmax projection onto the simplex; each holds two
/// values. `out_raw` and `out_kkt_lambda` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rdb_qp_weights(
    q11: f64,
    q22: f64,
    q12: f64,
    out_raw: *mut f64,
    out_kkt_lambda: *mut f64,
    out_weights: *mut f64,
) -> RdbStatus {
    guard(|| {
        if out_weights.is_null() {
            return Err(Fail::Null("out_weights"));
        }
        let sol = qp_weights(&GramMatrix { q11, q22, q12 })?;
        let w = project_simplex_softmax(sol.weights)?;
        std::slice::from_raw_parts_mut(out_weights, 2).copy_from_slice(&[w.rate(), w.distortion()]);
        if !out_raw.is_null() {
            std::slice::from_raw_parts_mut(out_raw, 2).copy_from_slice(&sol.weights);
        }
        if let Some(slot) = out_kkt_lambda.as_mut() {
            *slot = sol.kkt_lambda;
        }
        Ok(())
    })
}

/// New trajectory state with logits `(xi_rate, xi_distortion)`.
#[no_mangle]
pub unsafe extern "C" fn rdb_trajectory_new(
    xi_rate: f64,
    xi_distortion: f64,
    beta: f64,
    gamma: f64,
    out: *mut *mut RdbTrajectory,
) -> RdbStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        boxed(
            RdbTrajectory(TrajectoryState::new([xi_rate, xi_distortion], beta, gamma)?),
            slot,
        );
        Ok(())
    })
}

/// Current simplex weights, two values.
#[no_mangle]
pub unsafe extern "C" fn rdb_trajectory_weights(
    state: *const RdbTrajectory,
    out_weights: *mut f64,
) -> RdbStatus {
    guard(|| {
        let s = handle(state, "state")?;
        if out_weights.is_null() {
            return Err(Fail::Null("out_weights"));
        }
        let w = weights_of(&s.0);
        std::slice::from_raw_parts_mut(out_weights, 2).copy_from_slice(&[w.rate(), w.distortion()]);
        Ok(())
    })
}

/// Advance the logits from the losses before and after a step, both
/// measured on the same batch.
#[no_mangle]
pub unsafe extern "C" fn rdb_trajectory_update(
    state: *mut RdbTrajectory,
    prev_rate: f64,
    prev_distortion: f64,
    next_rate: f64,
    next_distortion: f64,
) -> RdbStatus {
    guard(|| {
        let s = out(state, "state")?;
        let prev = LossPair::new(prev_rate, prev_distortion)?;
        let next = LossPair::new(next_rate, next_distortion)?;
        s.0 = logit_update(&s.0, &prev, &next)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rdb_trajectory_free(state: *mut RdbTrajectory) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Curve from `n` (rate, quality) pairs in any order.
#[no_mangle]
pub unsafe extern "C" fn rdb_curve_new(
    rates: *const f64,
    qualities: *const f64,
    n: usize,
    out: *mut *mut RdbCurve,
) -> RdbStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let rates = slice(rates, n, "rates")?;
        let qualities = slice(qualities, n, "qualities")?;
        let points = rates
            .iter()
            .zip(qualities)
            .map(|(&rate, &quality)| RDPoint { rate, quality })
            .collect();
        boxed(RdbCurve(RDCurve::new("curve", points)?), slot);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rdb_curve_free(curve: *mut RdbCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// BD-Rate of `test` against `anchor`, in percent (negative is better).
#[no_mangle]
pub unsafe extern "C" fn rdb_bd_rate(
    anchor: *const RdbCurve,
    test: *const RdbCurve,
    out_percent: *mut f64,
) -> RdbStatus {
    guard(|| {
        let v = bd_rate(&handle(anchor, "anchor")?.0, &handle(test, "test")?.0)?;
        *out(out_percent, "out_percent")? = v;
        Ok(())
    })
}

/// Parse and validate an experiment from TOML text.
#[no_mangle]
pub unsafe extern "C" fn rdb_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut RdbExperiment,
) -> RdbStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let config = ExperimentConfig::from_toml_str(text(toml, "toml")?, &[])?;
        boxed(RdbExperiment(config), slot);
        Ok(())
    })
}

/// Write the config fingerprint (64 hex digits and a NUL) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn rdb_experiment_fingerprint(
    experiment: *const RdbExperiment,
    buf: *mut c_char,
    len: usize,
) -> RdbStatus {
    guard(|| {
        let fp = handle(experiment, "experiment")?.0.fingerprint();
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len < fp.len() + 1 {
            return Err(Fail::Small {
                need: fp.len() + 1,
                have: len,
            });
        }
        let dst = std::slice::from_raw_parts_mut(buf.cast::<u8>(), fp.len() + 1);
        dst[..fp.len()].copy_from_slice(fp.as_bytes());
        dst[fp.len()] = 0;
        Ok(())
    })
}

/// Train the experiment in memory. Honors `train.fine_tune_from`; writes no
/// files.
#[no_mangle]
pub unsafe extern "C" fn rdb_experiment_train(
    experiment: *const RdbExperiment,
    out: *mut *mut RdbOutcome,
) -> RdbStatus {
    guard(|| {
        let config = &handle(experiment, "experiment")?.0;
        let slot = self::out(out, "out")?;
        let problem = config.problem.build()?;
        let outcome = match &config.train.fine_tune_from {
            Some(path) => fine_tune(
                &Checkpoint::load(Path::new(path))?,
                problem.as_ref(),
                &config.train,
            )?,
            None => train(problem.as_ref(), &config.train)?,
        };
        boxed(RdbOutcome(outcome), slot);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rdb_experiment_free(experiment: *mut RdbExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

/// Number of trace records (iterations).
#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_iterations(
    outcome: *const RdbOutcome,
    out_n: *mut u64,
) -> RdbStatus {
    guard(|| {
        *out(out_n, "out_n")? = handle(outcome, "outcome")?.0.trace.len() as u64;
        Ok(())
    })
}

/// Losses and weights of trace record `index`. Any output may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_record(
    outcome: *const RdbOutcome,
    index: u64,
    out_losses: *mut f64,
    out_weights: *mut f64,
) -> RdbStatus {
    guard(|| {
        let trace = &handle(outcome, "outcome")?.0.trace;
        let r = trace.get(index as usize).ok_or_else(|| {
            Fail::Core(Error::InvalidInput(format!(
                "record {index} of {}",
                trace.len()
            )))
        })?;
        if !out_losses.is_null() {
            std::slice::from_raw_parts_mut(out_losses, 2)
                .copy_from_slice(&[r.losses.rate, r.losses.distortion]);
        }
        if !out_weights.is_null() {
            std::slice::from_raw_parts_mut(out_weights, 2)
                .copy_from_slice(&[r.weights.rate(), r.weights.distortion()]);
        }
        Ok(())
    })
}

/// Final parameters. Call with `buf = NULL` to query the length in
/// `out_len`.
#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_theta(
    outcome: *const RdbOutcome,
    buf: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> RdbStatus {
    guard(|| {
        let theta = &handle(outcome, "outcome")?.0.checkpoint.theta;
        if let Some(n) = out_len.as_mut() {
            *n = theta.len();
        }
        if buf.is_null() {
            return Ok(());
        }
        if len < theta.len() {
            return Err(Fail::Small {
                need: theta.len(),
                have: len,
            });
        }
        std::slice::from_raw_parts_mut(buf, theta.len()).copy_from_slice(theta);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_counters(
    outcome: *const RdbOutcome,
    out_counters: *mut RdbCounters,
) -> RdbStatus {
    guard(|| {
        let c = handle(outcome, "outcome")?.0.counters;
        *out(out_counters, "out_counters")? = RdbCounters {
            iterations: c.iterations,
            loss_evals: c.loss_evals,
            grad_evals: c.grad_evals,
            gram_builds: c.gram_builds,
            balanced_directions: c.balanced_directions,
            logit_updates: c.logit_updates,
        };
        Ok(())
    })
}

/// Save the final checkpoint as JSON.
#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_save_checkpoint(
    outcome: *const RdbOutcome,
    path: *const c_char,
) -> RdbStatus {
    guard(|| {
        let o = handle(outcome, "outcome")?;
        o.0.checkpoint.save(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rdb_outcome_free(outcome: *mut RdbOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}
