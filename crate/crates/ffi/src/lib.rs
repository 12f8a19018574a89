//! C interface over the pulse-affect library.
//!
//! Every fallible function returns a [`PaStatus`] and writes its result
//! through an out-pointer. On failure a message is kept per thread and can
//! be read with [`pa_last_error_message`]. Handles are opaque and must be
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pulse_affect::dataset::{self, BinaryValence, IbiSeries, Source};
use pulse_affect::hrv;
use pulse_affect::model::load_checkpoint;
use pulse_affect::selective::{self, Outcome};
use pulse_affect::{Error, ErrorKind};

/// Number of values written by [`pa_features`].
pub const PA_FEATURE_COUNT: usize = 11;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaOutcome {
    Low = 0,
    High = 1,
    Abstain = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaValence {
    Low = 0,
    Neutral = 1,
    High = 2,
}

/// A loaded dataset.
pub struct PaDataset(dataset::Dataset);

/// A trained model loaded from a checkpoint.
pub struct PaModel(pulse_affect::model::Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Usage => PaStatus::InvalidArgument,
            ErrorKind::Data => PaStatus::Data,
            ErrorKind::Numerical => PaStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(PaStatus::NullPointer, format!("{name} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(PaStatus::InvalidArgument, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {what}"));
            PaStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn intervals<'a>(ibis: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if ibis.is_null() {
        return Err(null("ibis"));
    }
    Ok(std::slice::from_raw_parts(ibis, len))
}

fn series(values: &[f64]) -> Result<IbiSeries, Failure> {
    let s = IbiSeries {
        subject_id: String::new(),
        stimulus_id: String::new(),
        source: Source::Ppg,
        intervals: values.to_vec(),
    };
    s.validate()?;
    Ok(s)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_dataset` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pa_dataset_load(path: *const c_char, out_dataset: *mut *mut PaDataset) -> PaStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        *slot = ptr::null_mut();
        let d = dataset::load_dataset(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(PaDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`pa_dataset_load`] and `out_len` be valid.
#[no_mangle]
pub unsafe extern "C" fn pa_dataset_len(dataset: *const PaDataset, out_len: *mut usize) -> PaStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(dataset, "dataset")?.0.len();
        Ok(())
    })
}

/// Copies up to `capacity` intervals of sample `index` into `buffer` and
/// reports the full length in `out_len`. Pass a null buffer to query the
/// length only.
///
/// # Safety
/// `buffer` must hold `capacity` doubles when non-null.
#[no_mangle]
pub unsafe extern "C" fn pa_dataset_sample_ibis(
    dataset: *const PaDataset,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> PaStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        let s = d.samples.get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        let values = &s.series.intervals;
        *out(out_len, "out_len")? = values.len();
        if !buffer.is_null() {
            let n = values.len().min(capacity);
            std::slice::from_raw_parts_mut(buffer, n).copy_from_slice(&values[..n]);
        }
        Ok(())
    })
}

/// Binary valence of sample `index`.
///
/// # Safety
/// `dataset` must be a live handle and `out_valence` valid.
#[no_mangle]
pub unsafe extern "C" fn pa_dataset_sample_valence(
    dataset: *const PaDataset,
    index: usize,
    out_valence: *mut PaValence,
) -> PaStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        let s = d.samples.get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        *out(out_valence, "out_valence")? = match s.label.binary() {
            BinaryValence::Low => PaValence::Low,
            BinaryValence::Neutral => PaValence::Neutral,
            BinaryValence::High => PaValence::High,
        };
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`pa_dataset_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pa_dataset_free(dataset: *mut PaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Writes the [`PA_FEATURE_COUNT`] HRV features of an interval series (in
/// seconds) to `out_features`, in the order hf, lf, vlf, lf/hf, mean,
/// median, sdsd, nn20, pnn20, rmssd, multiscale entropy.
///
/// # Safety
/// `ibis` must hold `len` doubles; `out_features` must hold
/// [`PA_FEATURE_COUNT`].
#[no_mangle]
pub unsafe extern "C" fn pa_features(ibis: *const f64, len: usize, out_features: *mut f64) -> PaStatus {
    guard(|| {
        let s = series(intervals(ibis, len)?)?;
        if out_features.is_null() {
            return Err(null("out_features"));
        }
        let values = hrv::compute_features(&s)?.to_array();
        std::slice::from_raw_parts_mut(out_features, PA_FEATURE_COUNT).copy_from_slice(&values);
        Ok(())
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` valid.
#[no_mangle]
pub unsafe extern "C" fn pa_model_load(path: *const c_char, out_model: *mut *mut PaModel) -> PaStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let ckpt = load_checkpoint(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(PaModel(ckpt.model)));
        Ok(())
    })
}

/// Input length the model was trained with; longer series are cut and
/// shorter ones zero-padded.
///
/// # Safety
/// `model` must be a live handle and `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn pa_model_input_len(model: *const PaModel, out_len: *mut usize) -> PaStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(model, "model")?.0.input_len;
        Ok(())
    })
}

/// Runs `n_passes` stochastic forward passes on an interval series and
/// writes the fraction of passes above the valence midpoint.
///
/// # Safety
/// `ibis` must hold `len` doubles; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pa_model_mc_predict(
    model: *const PaModel,
    ibis: *const f64,
    len: usize,
    n_passes: usize,
    seed: u64,
    out_mass_above: *mut f64,
) -> PaStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let s = series(intervals(ibis, len)?)?;
        let slot = out(out_mass_above, "out_mass_above")?;
        let input = dataset::model_input(&s, m.input_len);
        let posterior = selective::mc_predict(m, &input, n_passes, seed)?;
        *slot = posterior.mass_above(selective::MIDPOINT);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pa_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pa_model_free(model: *mut PaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Applies the confidence rule to a posterior mass above the midpoint.
///
/// # Safety
/// `out_outcome` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pa_decide(mass_above: f64, alpha: f64, out_outcome: *mut PaOutcome) -> PaStatus {
    guard(|| {
        let slot = out(out_outcome, "out_outcome")?;
        if !(0.0..=1.0).contains(&mass_above) {
            return Err(invalid(format!("mass_above must be in [0, 1], got {mass_above}")));
        }
        *slot = match selective::decide_mass(mass_above, alpha)?.outcome {
            Outcome::Low => PaOutcome::Low,
            Outcome::High => PaOutcome::High,
            Outcome::Abstain => PaOutcome::Abstain,
        };
        Ok(())
    })
}

/// F1 of uniform random guessing given the class counts.
///
/// # Safety
/// `out_f1` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pa_chance_f1(n_low: usize, n_high: usize, out_f1: *mut f64) -> PaStatus {
    guard(|| {
        *out(out_f1, "out_f1")? = selective::chance_f1(n_low, n_high)?;
        Ok(())
    })
}
