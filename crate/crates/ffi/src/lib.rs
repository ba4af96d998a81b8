//! C interface to the feddpms simulator.
//!
//! Every function returns an [`FdpStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`fdp_last_error`]. Objects are opaque and must be released with their
//! matching `*_free` function. Strings returned to the caller are released
//! with [`fdp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use feddpms::config::ExperimentConfig;
use feddpms::experiment::{run_trials, summary_json, write_outputs, RunMetrics};
use feddpms::{costs, privacy, Error};

/// Result code for every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

/// Experiment configuration handle.
pub struct FdpConfig {
    inner: ExperimentConfig,
}

/// Finished experiment handle: per-seed round histories and summaries.
pub struct FdpRun {
    config: ExperimentConfig,
    metrics: RunMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> FdpStatus {
    match err {
        Error::Config(_) => FdpStatus::InvalidConfig,
        Error::Io { .. } | Error::IdxParse { .. } | Error::Csv(_) => FdpStatus::Io,
        Error::InvalidArgument(_) | Error::InvalidLabel { .. } | Error::ShapeMismatch { .. } => {
            FdpStatus::InvalidArgument
        }
        _ => FdpStatus::Runtime,
    }
}

struct Failure(FdpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FdpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FdpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FdpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(FdpStatus::Runtime, "string contains NUL".into()))
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_config_default(out: *mut *mut FdpConfig) -> FdpStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(FdpConfig {
            inner: ExperimentConfig::default(),
        }));
        Ok(())
    })
}

/// Parse a TOML document; missing keys take their defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_config_from_toml(
    text: *const c_char,
    out: *mut *mut FdpConfig,
) -> FdpStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        let out = out_ref(out, "out")?;
        let inner = ExperimentConfig::from_toml_str(text)?;
        *out = Box::into_raw(Box::new(FdpConfig { inner }));
        Ok(())
    })
}

/// Set one key. `value` is a TOML literal, e.g. `0.3`, `"fedavg"`, `true`.
/// The config is left unchanged if the result does not validate.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fdp_config_set(
    cfg: *mut FdpConfig,
    key: *const c_char,
    value: *const c_char,
) -> FdpStatus {
    guard(|| {
        let cfg = out_ref(cfg, "cfg")?;
        let key = read_str(key, "key")?;
        let value = read_str(value, "value")?;
        let bad = |e: String| Failure(FdpStatus::InvalidConfig, e);
        let parsed: toml::Table =
            toml::from_str(&format!("v = {value}")).map_err(|e| bad(format!("value for {key}: {e}")))?;
        let mut table = toml::Table::try_from(&cfg.inner).map_err(|e| bad(e.to_string()))?;
        table.insert(key.to_string(), parsed["v"].clone());
        cfg.inner = ExperimentConfig::from_table(table)?;
        Ok(())
    })
}

/// Serialize the config to TOML; free the result with [`fdp_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_config_to_toml(cfg: *const FdpConfig, out: *mut *mut c_char) -> FdpStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = out_ref(out, "out")?;
        *out = to_c_string(cfg.inner.to_toml_string()?)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fdp_config_free(cfg: *mut FdpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run every trial of the configured experiment. Nothing is written to disk.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_experiment(cfg: *const FdpConfig, out: *mut *mut FdpRun) -> FdpStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = out_ref(out, "out")?;
        let metrics = run_trials(&cfg.inner)?;
        *out = Box::into_raw(Box::new(FdpRun {
            config: cfg.inner.clone(),
            metrics,
        }));
        Ok(())
    })
}

fn trial(run: &FdpRun, trial: usize) -> Result<&feddpms::experiment::TrialResult, Failure> {
    run.metrics.trials.get(trial).ok_or_else(|| {
        Failure(
            FdpStatus::InvalidArgument,
            format!("trial {trial} out of range ({} trials)", run.metrics.trials.len()),
        )
    })
}

/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_trial_count(run: *const FdpRun, out: *mut usize) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(run, "run")?.metrics.trials.len();
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_round_count(run: *const FdpRun, trial_index: usize, out: *mut usize) -> FdpStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        *out_ref(out, "out")? = trial(run, trial_index)?.outcome.rounds.len();
        Ok(())
    })
}

/// Test accuracy after round `round` of trial `trial_index`.
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_round_accuracy(
    run: *const FdpRun,
    trial_index: usize,
    round: usize,
    out: *mut f64,
) -> FdpStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let rounds = &trial(run, trial_index)?.outcome.rounds;
        let r = rounds.get(round).ok_or_else(|| {
            Failure(
                FdpStatus::InvalidArgument,
                format!("round {round} out of range ({} rounds)", rounds.len()),
            )
        })?;
        *out_ref(out, "out")? = r.test_accuracy;
        Ok(())
    })
}

/// Final accuracy averaged over trials.
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_final_accuracy(run: *const FdpRun, out: *mut f64) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(run, "run")?.metrics.mean_final_accuracy;
        Ok(())
    })
}

/// JSON summary of the run; free the result with [`fdp_string_free`].
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_summary_json(run: *const FdpRun, out: *mut *mut c_char) -> FdpStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let out = out_ref(out, "out")?;
        *out = to_c_string(summary_json(&run.config, &run.metrics)?)?;
        Ok(())
    })
}

/// Write per-seed CSVs and the JSON summary into `dir`, or into the
/// configured output directory when `dir` is NULL.
///
/// # Safety
/// `run` must come from this library; `dir` must be NULL or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_write_outputs(run: *const FdpRun, dir: *const c_char) -> FdpStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let mut cfg = run.config.clone();
        if !dir.is_null() {
            cfg.output_dir = read_str(dir, "dir")?.into();
        }
        write_outputs(&cfg, &run.metrics)?;
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fdp_run_free(run: *mut FdpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Smallest mechanism σ giving (ε, δ)-DP for a sensitivity-1 query.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_calibrate_sigma(epsilon: f64, delta: f64, out: *mut f64) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = privacy::calibrate_sigma(epsilon, delta)?.sigma;
        Ok(())
    })
}

/// δ achieved by mechanism σ at privacy level ε.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_delta_for(sigma: f64, epsilon: f64, out: *mut f64) -> FdpStatus {
    guard(|| {
        if !(sigma > 0.0 && epsilon > 0.0) {
            return Err(Failure(FdpStatus::InvalidArgument, "sigma and epsilon must be positive".into()));
        }
        *out_ref(out, "out")? = privacy::delta_for(sigma, epsilon);
        Ok(())
    })
}

/// L2 sensitivity of a mean over `m` codes in the unit cube.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_sensitivity(m: usize, out: *mut f64) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = privacy::sensitivity(m)?;
        Ok(())
    })
}

/// Latent-sharing traffic relative to one model exchange.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_comm_r1(
    alpha: usize,
    n: usize,
    latent_dim: usize,
    theta: f64,
    out: *mut f64,
) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = costs::comm_r1(alpha, n, latent_dim, theta)?;
        Ok(())
    })
}

/// Expected number of first-time decoder downloads.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_expected_downloads(
    nu: f64,
    k: usize,
    rounds: usize,
    prelim_rounds: usize,
    out: *mut f64,
) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = costs::expected_downloads(nu, k, rounds, prelim_rounds)?;
        Ok(())
    })
}

/// Decoder traffic relative to baseline model traffic.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdp_comm_r2(nu: f64, rounds: usize, prelim_rounds: usize, out: *mut f64) -> FdpStatus {
    guard(|| {
        *out_ref(out, "out")? = costs::comm_r2(nu, rounds, prelim_rounds)?;
        Ok(())
    })
}
