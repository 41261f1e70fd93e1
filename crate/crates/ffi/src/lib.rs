//! C ABI for the selfcorr engine.
//!
//! Every function returns an [`ScStatus`]. On failure the message is kept
//! per thread and read with [`sc_last_error_message`]. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`sc_string_free`]. Handles are opaque and released with their `_free`
//! function; passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use selfcorr::backends::{GenerationRequest, Generator, ToyBackend};
use selfcorr::config::RunConfig;
use selfcorr::engine::Datapool;
use selfcorr::model::{DecodeMode, ToyModel};
use selfcorr::pairing::{pair_weight, similarity, PairIndex, PairRule, ValueImprovingPair};
use selfcorr::run::{self, EvalOptions};
use selfcorr::valuefn::{coverage_value, ExecutionValue};
use selfcorr::{format_corrector_input, tokenize, Candidate, Error, Origin};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad arguments, config or files.
    Config = 3,
    /// A remote backend or scorer failed.
    Backend = 4,
    /// An invariant broke or a panic was caught.
    Internal = 5,
}

/// A trained corrector loaded from a run directory.
pub struct ScCorrector {
    run_dir: PathBuf,
    config: RunConfig,
    model: ToyModel,
}

/// A datapool loaded from `datapool.jsonl`.
pub struct ScDatapool {
    pool: Datapool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(ScStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => ScStatus::Config,
            3 => ScStatus::Backend,
            _ => ScStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> ScStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside selfcorr");
            ScStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ScStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ScStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(ScStatus::NullPointer, format!("{what} is NULL")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs removed").into_raw()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tokens of `input`, separated by single spaces.
///
/// # Safety
/// `input` must be a NUL-terminated string; `out_tokens` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_tokenize(input: *const c_char, out_tokens: *mut *mut c_char) -> ScStatus {
    guard(|| {
        let s = text(input, "input")?;
        *out(out_tokens, "out_tokens")? = c_string(tokenize(s).tokens().join(" "));
        Ok(())
    })
}

/// 1 when `program` runs and prints `gold` first, else 0.
///
/// # Safety
/// `program` must be a NUL-terminated string; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_program_value(program: *const c_char, gold: f64, out_value: *mut f64) -> ScStatus {
    guard(|| {
        let p = text(program, "program")?;
        let v = ExecutionValue::default().score_program(&selfcorr::interp::program_tokens(p), gold);
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Fraction of the `n_constraints` constraints found in `output`.
///
/// # Safety
/// `constraints` must point to `n_constraints` NUL-terminated strings
/// (it may be NULL when `n_constraints` is 0); `output` must be a
/// NUL-terminated string; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_coverage_value(
    constraints: *const *const c_char,
    n_constraints: usize,
    output: *const c_char,
    out_value: *mut f64,
) -> ScStatus {
    guard(|| {
        let mut cs = Vec::with_capacity(n_constraints);
        if n_constraints > 0 {
            if constraints.is_null() {
                return Err(Failure(ScStatus::NullPointer, "constraints is NULL".into()));
            }
            for i in 0..n_constraints {
                cs.push(text(*constraints.add(i), "constraint")?.to_owned());
            }
        }
        let v = coverage_value(&cs, &tokenize(text(output, "output")?));
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Token-level similarity in [0, 1].
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_similarity(a: *const c_char, b: *const c_char, out_value: *mut f64) -> ScStatus {
    guard(|| {
        let s = similarity(&tokenize(text(a, "a")?), &tokenize(text(b, "b")?));
        *out(out_value, "out_value")? = s;
        Ok(())
    })
}

/// Unnormalized sampling weight of correcting `hypothesis` into
/// `correction`. The correction must score strictly higher.
///
/// # Safety
/// `hypothesis` and `correction` must be NUL-terminated strings;
/// `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_pair_weight(
    hypothesis: *const c_char,
    hypothesis_value: f64,
    correction: *const c_char,
    correction_value: f64,
    alpha: f64,
    beta: f64,
    out_weight: *mut f64,
) -> ScStatus {
    guard(|| {
        // Also rejects NaN values.
        if correction_value.partial_cmp(&hypothesis_value) != Some(std::cmp::Ordering::Greater) {
            return Err(Failure(ScStatus::Config, "correction must score higher than the hypothesis".into()));
        }
        let cand = |t: &str, value| Candidate {
            input_id: String::new(),
            output: tokenize(t),
            value,
            feedback: None,
            origin: Origin::External,
            iteration: 0,
        };
        let pair = ValueImprovingPair {
            input_id: String::new(),
            hypothesis: cand(text(hypothesis, "hypothesis")?, hypothesis_value),
            correction: cand(text(correction, "correction")?, correction_value),
        };
        *out(out_weight, "out_weight")? = pair_weight(&pair, alpha, beta);
        Ok(())
    })
}

/// Loads the corrector trained in `run_dir`.
///
/// # Safety
/// `run_dir` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_corrector_open(run_dir: *const c_char, out_handle: *mut *mut ScCorrector) -> ScStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let dir = Path::new(text(run_dir, "run_dir")?);
        let (config, model) = run::load_model(dir)?;
        *slot = Box::into_raw(Box::new(ScCorrector {
            run_dir: dir.to_owned(),
            config,
            model,
        }));
        Ok(())
    })
}

/// One greedy correction of `hypothesis` for `prompt`, with optional
/// `feedback` (NULL for none).
///
/// # Safety
/// `handle` must come from [`sc_corrector_open`]; string arguments must be
/// NUL-terminated; `out_correction` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_corrector_correct(
    handle: *const ScCorrector,
    prompt: *const c_char,
    hypothesis: *const c_char,
    feedback: *const c_char,
    out_correction: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure(ScStatus::NullPointer, "handle is NULL".into()))?;
        let ctx = format_corrector_input(
            &tokenize(text(prompt, "prompt")?),
            &tokenize(text(hypothesis, "hypothesis")?),
            opt_text(feedback, "feedback")?,
        );
        let req = GenerationRequest::new(ctx, 1, DecodeMode::Greedy, h.config.model.max_len, h.config.hyper.seed);
        let res = ToyBackend::corrector(&h.model)
            .generate(&req)
            .map_err(|e| Failure::from(Error::from(e)))?;
        let y = res.sequences.into_iter().next().unwrap_or_default();
        *out(out_correction, "out_correction")? = c_string(y.tokens().join(" "));
        Ok(())
    })
}

/// Draft-and-correct trajectory for a suite input id, as one JSON object.
/// `max_corrections < 0` keeps the run's setting.
///
/// # Safety
/// `handle` must come from [`sc_corrector_open`]; `input_id` must be
/// NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_corrector_infer(
    handle: *const ScCorrector,
    input_id: *const c_char,
    max_corrections: i64,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure(ScStatus::NullPointer, "handle is NULL".into()))?;
        let opts = EvalOptions {
            max_corrections: usize::try_from(max_corrections).ok(),
            ..Default::default()
        };
        let trajs = run::cmd_infer(&h.run_dir, &[text(input_id, "input_id")?.to_owned()], &opts)?;
        let json = serde_json::to_string(&trajs[0]).map_err(|e| Failure(ScStatus::Internal, e.to_string()))?;
        *out(out_json, "out_json")? = c_string(json);
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or come from [`sc_corrector_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn sc_corrector_free(handle: *mut ScCorrector) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Loads a datapool JSONL file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_datapool_open(path: *const c_char, out_handle: *mut *mut ScDatapool) -> ScStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let pool = Datapool::read(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(ScDatapool { pool }));
        Ok(())
    })
}

/// Number of distinct candidates.
///
/// # Safety
/// `handle` must come from [`sc_datapool_open`]; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_datapool_len(handle: *const ScDatapool, out_len: *mut usize) -> ScStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure(ScStatus::NullPointer, "handle is NULL".into()))?;
        *out(out_len, "out_len")? = h.pool.len();
        Ok(())
    })
}

/// Number of value-improving pairs over all inputs.
///
/// # Safety
/// `handle` must come from [`sc_datapool_open`]; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_datapool_pair_count(handle: *const ScDatapool, out_count: *mut usize) -> ScStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure(ScStatus::NullPointer, "handle is NULL".into()))?;
        let n = h
            .pool
            .input_ids()
            .map(|id| PairIndex::build(h.pool.bucket(id), PairRule::ValueImproving).pair_count())
            .sum();
        *out(out_count, "out_count")? = n;
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or come from [`sc_datapool_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn sc_datapool_free(handle: *mut ScDatapool) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
