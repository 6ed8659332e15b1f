//! C ABI for the syncrate core library.
//!
//! Every fallible function returns an [`SrStatus`]. On failure a message is
//! kept per thread and can be copied out with [`sr_last_error_message`].
//! Policies cross the boundary as `uint32_t` arrays of length `C(C−1)` in
//! row-major ordered-pair order (`(0,1), (0,2), …, (1,0), (1,2), …`).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void};
use std::panic::{catch_unwind, AssertUnwindSafe};

use syncrate::learn::{self, LearnerConfig, Oracle, ProbabilityForm};
use syncrate::mck::{build_mck_instance, decode_policy, solve_exact_dp, solve_fptas};
use syncrate::syncmodel::{consistency_level, pair_count, policy_cost};
use syncrate::{Error, SyncPolicy, SystemModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    InvalidArgument = 1,
    InstanceTooLarge = 2,
    NotEncodable = 3,
    BudgetExhaustsRates = 4,
    NullPointer = 5,
    OracleFailed = 6,
    Internal = 7,
}

/// Opaque system model.
pub struct SrModel {
    inner: SystemModel,
}

/// Performance oracle supplied by the caller. Writes the observed value for
/// `rates` in `slot` to `psi_out` and returns 0, or returns nonzero to abort.
pub type SrOracleFn =
    Option<unsafe extern "C" fn(ctx: *mut c_void, rates: *const u32, len: usize, slot: u64, psi_out: *mut f64) -> i32>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> SrStatus {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) => SrStatus::InvalidArgument,
        Error::InstanceTooLarge { .. } => SrStatus::InstanceTooLarge,
        Error::NotEncodable(_) => SrStatus::NotEncodable,
        Error::BudgetExhaustsRates { .. } => SrStatus::BudgetExhaustsRates,
        Error::Oracle(_) => SrStatus::OracleFailed,
        _ => SrStatus::Internal,
    }
}

struct Fail(SrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SrStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model<'a>(ptr: *const SrModel) -> Result<&'a SystemModel, Fail> {
    ptr.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn policy(model: &SystemModel, rates: *const u32, len: usize) -> Result<SyncPolicy, Fail> {
    let rates = slice(rates, len, "rates")?;
    Ok(SyncPolicy::from_rates(model.controllers(), rates.to_vec())?)
}

fn write_policy(p: &SyncPolicy, out: &mut [u32]) -> Result<(), Fail> {
    if out.len() != p.rates().len() {
        return Err(Fail(
            SrStatus::InvalidArgument,
            format!("output buffer holds {} rates, need {}", out.len(), p.rates().len()),
        ));
    }
    out.copy_from_slice(p.rates());
    Ok(())
}

/// Create a model. `pair_costs` may be null for unit costs; otherwise it
/// holds `C(C−1)` entries.
#[no_mangle]
pub unsafe extern "C" fn sr_model_new(
    change_rates: *const f64,
    controllers: usize,
    slot_seconds: f64,
    pair_costs: *const u64,
    budget: u64,
    max_rate: u32,
    out: *mut *mut SrModel,
) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rates = slice(change_rates, controllers, "change_rates")?.to_vec();
        let n = pair_count(controllers);
        let costs = if pair_costs.is_null() {
            vec![1; n]
        } else {
            slice(pair_costs, n, "pair_costs")?.to_vec()
        };
        let inner = SystemModel::new(rates, slot_seconds, costs, budget, max_rate)?;
        *out = Box::into_raw(Box::new(SrModel { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sr_model_free(model: *mut SrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of ordered pairs, `C(C−1)`; 0 for a null model.
#[no_mangle]
pub unsafe extern "C" fn sr_model_pair_count(model: *const SrModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.pair_count())
}

#[no_mangle]
pub unsafe extern "C" fn sr_consistency_level(
    model: *const SrModel,
    rates: *const u32,
    len: usize,
    out: *mut f64,
) -> SrStatus {
    guard(|| {
        let m = self::model(model)?;
        let p = policy(m, rates, len)?;
        let v = consistency_level(m, &p)?.omega;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sr_policy_cost(
    model: *const SrModel,
    rates: *const u32,
    len: usize,
    out: *mut u64,
) -> SrStatus {
    guard(|| {
        let m = self::model(model)?;
        let p = policy(m, rates, len)?;
        let v = policy_cost(m, &p)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Rates maximizing consistency within the model's budget. `eps <= 0`
/// solves exactly; otherwise the approximation scheme with that `ε` is used.
#[no_mangle]
pub unsafe extern "C" fn sr_solve_obj1(model: *const SrModel, eps: f64, rates_out: *mut u32, len: usize) -> SrStatus {
    guard(|| {
        let m = self::model(model)?;
        let inst = build_mck_instance(m);
        let sol = if eps > 0.0 {
            solve_fptas(&inst, eps)?
        } else {
            solve_exact_dp(&inst)
        };
        let p = decode_policy(&inst, &sol)?;
        write_policy(&p, slice_mut(rates_out, len, "rates_out")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn sr_homogeneous_policy(model: *const SrModel, rates_out: *mut u32, len: usize) -> SrStatus {
    guard(|| {
        let m = self::model(model)?;
        write_policy(&learn::homogeneous_policy(m), slice_mut(rates_out, len, "rates_out")?)
    })
}

/// Expected approximation factor of the learner.
#[no_mangle]
pub extern "C" fn sr_expected_bound(controllers: usize, budget: u64, max_rate: u32, sigma: usize, mu: f64) -> f64 {
    learn::expected_bound(controllers, budget, max_rate, sigma, mu)
}

/// High-probability factor and its probability. `with_mu != 0` selects the
/// probability form that includes `μ`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sr_high_prob_bound(
    controllers: usize,
    budget: u64,
    max_rate: u32,
    sigma: usize,
    tau: u64,
    mu: f64,
    gamma: f64,
    with_mu: i32,
    factor_out: *mut f64,
    probability_out: *mut f64,
) -> SrStatus {
    guard(|| {
        learn::BoundParams::new(controllers, budget, max_rate, sigma, mu, gamma)?;
        let form = if with_mu != 0 {
            ProbabilityForm::WithMu
        } else {
            ProbabilityForm::Statement
        };
        let (f, p) = learn::high_prob_bound(controllers, budget, max_rate, sigma, tau, mu, gamma, form);
        *factor_out.as_mut().ok_or_else(|| null("factor_out"))? = f;
        *probability_out.as_mut().ok_or_else(|| null("probability_out"))? = p;
        Ok(())
    })
}

/// Training slots used by the learner, `τ + σ·τ·B`.
#[no_mangle]
pub extern "C" fn sr_training_time(sigma: u64, tau: u64, budget: u64) -> u64 {
    learn::training_time(sigma, tau, budget)
}

struct CallbackOracle {
    f: unsafe extern "C" fn(*mut c_void, *const u32, usize, u64, *mut f64) -> i32,
    ctx: *mut c_void,
}

impl Oracle for CallbackOracle {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> syncrate::Result<f64> {
        let rates = policy.rates();
        let mut psi = f64::NAN;
        let rc = unsafe { (self.f)(self.ctx, rates.as_ptr(), rates.len(), slot, &mut psi) };
        if rc != 0 {
            return Err(Error::Oracle(format!("callback returned {rc} in slot {slot}")));
        }
        if !psi.is_finite() {
            return Err(Error::Oracle(format!(
                "callback reported non-finite value in slot {slot}"
            )));
        }
        Ok(psi)
    }
}

/// Run the stochastic greedy learner against a caller-supplied oracle. The
/// callback is invoked once per slot, slots `1, 2, …` in order.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sr_stochastic_greedy(
    controllers: usize,
    sigma: usize,
    tau: u64,
    budget: u64,
    max_rate: u32,
    seed: u64,
    oracle: SrOracleFn,
    ctx: *mut c_void,
    rates_out: *mut u32,
    len: usize,
    slots_used_out: *mut u64,
) -> SrStatus {
    guard(|| {
        let f = oracle.ok_or_else(|| null("oracle"))?;
        let config = LearnerConfig {
            controllers,
            sigma,
            tau,
            budget,
            max_rate,
            seed,
        };
        let mut o = CallbackOracle { f, ctx };
        let run = learn::stochastic_greedy(&config, &mut o)?;
        write_policy(&run.final_policy, slice_mut(rates_out, len, "rates_out")?)?;
        if let Some(s) = slots_used_out.as_mut() {
            *s = run.slots_used;
        }
        Ok(())
    })
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit). Returns the full message length excluding the NUL.
#[no_mangle]
pub unsafe extern "C" fn sr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
