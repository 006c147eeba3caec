//! C ABI over the environments and trained policies.
//!
//! All functions are panic-safe: failures set a thread-local error message
//! (readable via `alfd_last_error`) and report a status code. Handles are
//! opaque; free them with the matching `_free` function exactly once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use active_lfd::env::{self, Env, ScenarioSpec, ACT_DIM, OBS_DIM};
use active_lfd::nn::{load_checkpoint, GaussianPolicyHead, Mlp};
use ndarray::Array1;

/// Status code returned by every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlfdStatus {
    AlfdOk = 0,
    AlfdNullPointer = 1,
    AlfdInvalidArgument = 2,
    AlfdIoError = 3,
    AlfdInternalError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(status: AlfdStatus, msg: &str) -> AlfdStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> AlfdStatus>(f: F) -> AlfdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AlfdStatus::AlfdInternalError, "internal panic"),
    }
}

/// Opaque environment handle.
pub struct AlfdEnv {
    env: Env,
}

/// Opaque policy handle (greedy mean-action evaluation).
pub struct AlfdPolicy {
    actor: Mlp,
    head: GaussianPolicyHead,
}

/// Observation dimensionality (length of every `obs` buffer).
#[no_mangle]
pub extern "C" fn alfd_obs_dim() -> usize {
    OBS_DIM
}

/// Action dimensionality (length of every `action` buffer).
#[no_mangle]
pub extern "C" fn alfd_act_dim() -> usize {
    ACT_DIM
}

/// Message describing the most recent error on this thread; valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn alfd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an environment for a canonical scenario name (see the
/// `active-lfd scenarios` CLI command; `push_source` / `carry_source` are also
/// accepted). Returns null on error.
#[no_mangle]
pub unsafe extern "C" fn alfd_env_new(scenario_name: *const c_char) -> *mut AlfdEnv {
    if scenario_name.is_null() {
        set_error("scenario_name is null");
        return std::ptr::null_mut();
    }
    let name = match CStr::from_ptr(scenario_name).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("scenario_name is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match ScenarioSpec::by_name(name) {
        Ok(spec) => Box::into_raw(Box::new(AlfdEnv {
            env: Env::new(spec),
        })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn alfd_env_free(env: *mut AlfdEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

fn write_obs(env: &Env, obs_out: *mut f64) {
    let obs = env.state.observation();
    unsafe {
        std::ptr::copy_nonoverlapping(obs.as_ptr(), obs_out, OBS_DIM);
    }
}

/// Resets the environment with the given seed and writes the initial
/// observation into `obs_out` (length `alfd_obs_dim()`).
#[no_mangle]
pub unsafe extern "C" fn alfd_env_reset(
    env: *mut AlfdEnv,
    seed: u64,
    obs_out: *mut f64,
) -> AlfdStatus {
    guard(|| {
        let Some(handle) = env.as_mut() else {
            return fail(AlfdStatus::AlfdNullPointer, "env is null");
        };
        if obs_out.is_null() {
            return fail(AlfdStatus::AlfdNullPointer, "obs_out is null");
        }
        handle.env.state = env::reset(&handle.env.spec, seed);
        write_obs(&handle.env, obs_out);
        AlfdStatus::AlfdOk
    })
}

/// Advances the environment by one step. `action` has length
/// `alfd_act_dim()`; `obs_out` receives the next observation; `terminal` and
/// `success` are written as 0/1.
#[no_mangle]
pub unsafe extern "C" fn alfd_env_step(
    env: *mut AlfdEnv,
    action: *const f64,
    obs_out: *mut f64,
    reward_out: *mut f64,
    terminal_out: *mut u8,
    success_out: *mut u8,
) -> AlfdStatus {
    guard(|| {
        let Some(handle) = env.as_mut() else {
            return fail(AlfdStatus::AlfdNullPointer, "env is null");
        };
        if action.is_null()
            || obs_out.is_null()
            || reward_out.is_null()
            || terminal_out.is_null()
            || success_out.is_null()
        {
            return fail(AlfdStatus::AlfdNullPointer, "output pointer is null");
        }
        let a = std::slice::from_raw_parts(action, ACT_DIM);
        if a.iter().any(|v| !v.is_finite()) {
            return fail(AlfdStatus::AlfdInvalidArgument, "non-finite action");
        }
        let r = handle.env.step([a[0], a[1]]);
        write_obs(&handle.env, obs_out);
        *reward_out = r.reward;
        *terminal_out = u8::from(r.terminal);
        *success_out = u8::from(r.success);
        AlfdStatus::AlfdOk
    })
}

/// Loads the actor network from a checkpoint file. Returns null on error.
#[no_mangle]
pub unsafe extern "C" fn alfd_policy_load(path: *const c_char) -> *mut AlfdPolicy {
    if path.is_null() {
        set_error("path is null");
        return std::ptr::null_mut();
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    let load = || -> active_lfd::Result<AlfdPolicy> {
        let ckpt = load_checkpoint(Path::new(path))?;
        Ok(AlfdPolicy {
            actor: ckpt.net("actor")?.clone(),
            head: GaussianPolicyHead::unit(ACT_DIM),
        })
    };
    match load() {
        Ok(p) => Box::into_raw(Box::new(p)),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn alfd_policy_free(policy: *mut AlfdPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Writes the policy's greedy (mean) action for `obs` into `action_out`.
#[no_mangle]
pub unsafe extern "C" fn alfd_policy_mean_action(
    policy: *const AlfdPolicy,
    obs: *const f64,
    action_out: *mut f64,
) -> AlfdStatus {
    guard(|| {
        let Some(p) = policy.as_ref() else {
            return fail(AlfdStatus::AlfdNullPointer, "policy is null");
        };
        if obs.is_null() || action_out.is_null() {
            return fail(AlfdStatus::AlfdNullPointer, "buffer pointer is null");
        }
        let obs = std::slice::from_raw_parts(obs, OBS_DIM);
        let o = Array1::from_vec(obs.to_vec());
        let out = match p.actor.forward(o.view()).and_then(|h| p.head.mean_action(h.view())) {
            Ok(a) => a,
            Err(e) => return fail(AlfdStatus::AlfdInvalidArgument, &e.to_string()),
        };
        std::ptr::copy_nonoverlapping(out.as_ptr(), action_out, ACT_DIM);
        AlfdStatus::AlfdOk
    })
}
