//! C interface to `confdyn`.
//!
//! Every fallible call returns a [`CdStatus`]; on failure the message is
//! available from [`cd_last_error_message`] on the same thread. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use confdyn::conformal::{self, GaussianZ, QuantileMode};
use confdyn::metrics::{self, FlatPrediction};
use confdyn::surrogate::{lr_at, Forecaster, SurrogateModel, TrainSchedule};
use confdyn::{harness, Error, ExperimentConfig, Field, Method};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidField = 4,
    Numeric = 5,
    Config = 6,
    Format = 7,
    MissingFile = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdQuantileMode {
    SplitQuantile = 0,
    MaxScore = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CdMetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub sharpness: f64,
    pub ma: f64,
    pub ra: f64,
}

/// Square grid field.
pub struct CdField(Field);

/// Trained linear surrogate.
pub struct CdModel(SurrogateModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> CdStatus {
    match err.root() {
        Error::DimensionMismatch { .. } => CdStatus::DimensionMismatch,
        Error::InvalidField(_) => CdStatus::InvalidField,
        Error::InvalidArgument(_) => CdStatus::InvalidArgument,
        Error::Numeric(_) => CdStatus::Numeric,
        Error::Config(_) => CdStatus::Config,
        Error::Format { .. } => CdStatus::Format,
        Error::MissingFile(_) => CdStatus::MissingFile,
        Error::Io(_) => CdStatus::Io,
        Error::Stage { .. } => unreachable!("root strips stages"),
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CdStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            CdStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CdStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn reference<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Lib(Error::invalid(format!("{what} is not valid UTF-8"))))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Error message of the most recent call on this thread; empty after a
/// success. Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn cd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a `size x size` field from `len` row-major values.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out_field` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_field_new(
    size: usize,
    values: *const f64,
    len: usize,
    out_field: *mut *mut CdField,
) -> CdStatus {
    guard(|| {
        let values = slice(values, len, "values")?.to_vec();
        let slot = out(out_field, "out_field")?;
        *slot = Box::into_raw(Box::new(CdField(Field::new(size, values)?)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library and not be freed already; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cd_field_free(field: *mut CdField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Grid side length, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_field_size(field: *const CdField) -> usize {
    field.as_ref().map_or(0, |f| f.0.size())
}

/// Copies the values into `dst`, which must hold exactly `size * size` doubles.
///
/// # Safety
/// `field` must be a live handle and `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cd_field_values(
    field: *const CdField,
    dst: *mut f64,
    len: usize,
) -> CdStatus {
    guard(|| {
        let f = &reference(field, "field")?.0;
        let n = f.values().len();
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            }
            .into());
        }
        slice_mut(dst, len, "dst")?.copy_from_slice(f.values());
        Ok(())
    })
}

/// Quarter turn counter-clockwise.
///
/// # Safety
/// `field` must be a live handle; `out_field` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_field_rot90(
    field: *const CdField,
    out_field: *mut *mut CdField,
) -> CdStatus {
    guard(|| {
        let f = &reference(field, "field")?.0;
        *out(out_field, "out_field")? = Box::into_raw(Box::new(CdField(f.rot90())));
        Ok(())
    })
}

/// Nonconformity score between a prediction and the truth.
///
/// # Safety
/// Both handles must be live; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_score(
    pred: *const CdField,
    truth: *const CdField,
    out_score: *mut f64,
) -> CdStatus {
    guard(|| {
        let (p, t) = (reference(pred, "pred")?, reference(truth, "truth")?);
        *out(out_score, "out_score")? = conformal::score(&p.0, &t.0)?;
        Ok(())
    })
}

/// Weighted isotonic regression of `ys`; writes `n` fitted values to `out_fit`.
///
/// # Safety
/// `ys` and `weights` must hold `n` doubles; `out_fit` must have room for `n`.
#[no_mangle]
pub unsafe extern "C" fn cd_pava(
    ys: *const f64,
    weights: *const f64,
    n: usize,
    out_fit: *mut f64,
) -> CdStatus {
    guard(|| {
        let fit = metrics::pava(slice(ys, n, "ys")?, slice(weights, n, "weights")?)?;
        slice_mut(out_fit, n, "out_fit")?.copy_from_slice(&fit);
        Ok(())
    })
}

/// MAE, RMSE, sharpness, MA and RA of `n` Gaussian predictions.
///
/// # Safety
/// `mu`, `sigma` and `y` must hold `n` doubles; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_metrics(
    mu: *const f64,
    sigma: *const f64,
    y: *const f64,
    n: usize,
    n_grid: usize,
    out_report: *mut CdMetricReport,
) -> CdStatus {
    guard(|| {
        let fp = FlatPrediction::new(
            slice(mu, n, "mu")?.to_vec(),
            slice(sigma, n, "sigma")?.to_vec(),
            slice(y, n, "y")?.to_vec(),
        )?;
        let r = metrics::evaluate(&fp, n_grid)?;
        *out(out_report, "out_report")? = CdMetricReport {
            mae: r.mae,
            rmse: r.rmse,
            sharpness: r.sharpness,
            ma: r.ma,
            ra: r.ra,
        };
        Ok(())
    })
}

/// Conformal radius of `n` calibration scores.
///
/// # Safety
/// `scores` must hold `n` doubles; `out_q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_conformal_quantile(
    scores: *const f64,
    n: usize,
    alpha: f64,
    mode: CdQuantileMode,
    out_q: *mut f64,
) -> CdStatus {
    guard(|| {
        let mode = match mode {
            CdQuantileMode::SplitQuantile => QuantileMode::SplitQuantile,
            CdQuantileMode::MaxScore => QuantileMode::MaxScore,
        };
        *out(out_q, "out_q")? =
            conformal::conformal_quantile(slice(scores, n, "scores")?, alpha, mode)?;
        Ok(())
    })
}

/// `q / z` with `z` the two-sided Gaussian value for `alpha`, rounded to two
/// decimals unless `exact_z` is set.
///
/// # Safety
/// `out_sigma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_gaussian_sigma(
    q: f64,
    alpha: f64,
    exact_z: bool,
    out_sigma: *mut f64,
) -> CdStatus {
    guard(|| {
        let policy = if exact_z {
            GaussianZ::Exact
        } else {
            GaussianZ::Rounded
        };
        *out(out_sigma, "out_sigma")? = q / conformal::z_value(alpha, policy)?;
        Ok(())
    })
}

/// Cosine-annealed learning rate at position `t` of a `cycle_len` cycle.
///
/// # Safety
/// `out_lr` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_lr_at(
    eta_max: f64,
    eta_min: f64,
    cycle_len: usize,
    t: usize,
    out_lr: *mut f64,
) -> CdStatus {
    guard(|| {
        let schedule = TrainSchedule {
            eta_max,
            eta_min,
            cycle_len,
            cycles: 1,
        };
        *out(out_lr, "out_lr")? = lr_at(&schedule, t)?;
        Ok(())
    })
}

/// Loads a model saved by the `confdyn` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_model_load(
    path: *const c_char,
    out_model: *mut *mut CdModel,
) -> CdStatus {
    guard(|| {
        let path = PathBuf::from(string(path, "path")?);
        let model = SurrogateModel::load(&path)?;
        *out(out_model, "out_model")? = Box::into_raw(Box::new(CdModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed already; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cd_model_free(model: *mut CdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of past frames the model reads, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_model_window(model: *const CdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.window())
}

/// Rolls the model forward `horizon` steps from `n` window frames, oldest
/// first. Writes `horizon` new field handles to `out_fields`.
///
/// # Safety
/// `window` must hold `n` live field handles and `out_fields` must have room
/// for `horizon` pointers.
#[no_mangle]
pub unsafe extern "C" fn cd_model_rollout(
    model: *const CdModel,
    window: *const *const CdField,
    n: usize,
    horizon: usize,
    out_fields: *mut *mut CdField,
) -> CdStatus {
    guard(|| {
        let m = &reference(model, "model")?.0;
        let frames = slice(window, n, "window")?
            .iter()
            .map(|&f| reference(f, "window frame").map(|f| f.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let dst = slice_mut(out_fields, horizon, "out_fields")?;
        let steps = m.rollout(&frames, horizon)?;
        for (slot, f) in dst.iter_mut().zip(steps) {
            *slot = Box::into_raw(Box::new(CdField(f)));
        }
        Ok(())
    })
}

/// Runs one experiment and writes its run directory. `config_path` may be
/// null for the defaults; `method` is `cp`, `dropout` or `ensemble`. The run
/// directory path is copied NUL-terminated into `dir_buf` when it is non-null
/// and large enough.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_report` must be writable and
/// `dir_buf` must be null or hold `dir_buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cd_experiment_run(
    config_path: *const c_char,
    method: *const c_char,
    seed: u64,
    out_report: *mut CdMetricReport,
    dir_buf: *mut c_char,
    dir_buf_len: usize,
) -> CdStatus {
    guard(|| {
        let mut cfg = if config_path.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_file(&PathBuf::from(string(config_path, "config_path")?))?
        };
        cfg.seed = seed;
        cfg.validate()?;
        let method: Method = string(method, "method")?.parse()?;
        let run = harness::run_experiment(&cfg, method)?;
        let r = run.evaluation.report;
        *out(out_report, "out_report")? = CdMetricReport {
            mae: r.mae,
            rmse: r.rmse,
            sharpness: r.sharpness,
            ma: r.ma,
            ra: r.ra,
        };
        if !dir_buf.is_null() {
            let text = run.dir.to_string_lossy();
            let bytes = text.as_bytes();
            if bytes.len() < dir_buf_len {
                let dst = slice_mut(dir_buf.cast::<u8>(), dir_buf_len, "dir_buf")?;
                dst[..bytes.len()].copy_from_slice(bytes);
                dst[bytes.len()] = 0;
            } else if dir_buf_len > 0 {
                *dir_buf = 0;
            }
        }
        Ok(())
    })
}
