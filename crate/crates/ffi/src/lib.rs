//! C ABI over the qchannel library.
//!
//! Objects cross the boundary as opaque handles released with the matching
//! `qc_*_free`. Every fallible call
//! returns a [`QcStatus`]; on failure [`qc_last_error`] describes the cause.
//! Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qchannel::channel::{CoherenceVector, PauliBasis, StinespringModel, TransferMatrix};
use qchannel::dataset::TrajectoryDataset;
use qchannel::eval::{error_measure, floquet_check, FloquetVerdict};
use qchannel::experiment::{generate, ExperimentConfig};
use qchannel::io::{model_from_json, model_to_json, read_trajectories, write_trajectories};
use qchannel::linalg::RMat;
use qchannel::trainer::{pretrain_then_train, train, TrainConfig};
use qchannel::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Diverged = 4,
    InvalidArgument = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Floquet verdict codes written by [`qc_floquet_check`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcFloquetVerdict {
    Exists = 0,
    Absent = 1,
    Inconclusive = 2,
}

/// A Stinespring channel model.
pub struct QcModel(StinespringModel);

/// A collection of coherence-vector trajectories.
pub struct QcDataset(TrajectoryDataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> QcStatus {
    match err {
        Error::Config(_) => QcStatus::Config,
        Error::Parse { .. } | Error::MissingData(_) | Error::Json(_) | Error::NotNormalized(_) => QcStatus::Data,
        Error::Diverged { .. } => QcStatus::Diverged,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => QcStatus::InvalidArgument,
        Error::NonFinite(_) | Error::Integrator(_) => QcStatus::Numerical,
        Error::Io(_) => QcStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QcStatus>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QcStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            QcStatus::Panic
        }
    }
}

fn fail(err: Error) -> QcStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn invalid(msg: &str) -> QcStatus {
    set_error(msg);
    QcStatus::InvalidArgument
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, QcStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(QcStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid("string argument is not UTF-8"))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, QcStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        QcStatus::NullPointer
    })
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, QcStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer");
        QcStatus::NullPointer
    })
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], QcStatus> {
    if p.is_null() {
        set_error("null buffer");
        return Err(QcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], QcStatus> {
    if p.is_null() {
        set_error("null buffer");
        return Err(QcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn transfer_of(model: &StinespringModel) -> Result<TransferMatrix, QcStatus> {
    PauliBasis::for_dim(model.sys_dim())
        .and_then(|b| model.transfer_matrix(&b))
        .map_err(fail)
}

fn into_c_string(s: String) -> Result<*mut c_char, QcStatus> {
    CString::new(s).map(CString::into_raw).map_err(|_| invalid("string contains NUL"))
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Random model with generator entries of size `scale`, seeded
/// deterministically.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_model_random(
    sys_dim: usize,
    env_dim: usize,
    scale: f64,
    seed: u64,
    out: *mut *mut QcModel,
) -> QcStatus {
    guard(|| {
        let out = out_arg(out)?;
        if PauliBasis::for_dim(sys_dim).is_err() || env_dim == 0 || env_dim > sys_dim * sys_dim {
            return Err(invalid("sys_dim must be a power of two and 1 <= env_dim <= sys_dim^2"));
        }
        let model = StinespringModel::random(sys_dim, env_dim, scale, &mut ChaCha8Rng::seed_from_u64(seed));
        *out = Box::into_raw(Box::new(QcModel(model)));
        Ok(())
    })
}

/// Model from its `len` real parameters.
///
/// # Safety
/// `params` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qc_model_from_params(
    sys_dim: usize,
    env_dim: usize,
    params: *const f64,
    len: usize,
    out: *mut *mut QcModel,
) -> QcStatus {
    guard(|| {
        let out = out_arg(out)?;
        let params = slice_arg(params, len)?;
        let model = StinespringModel::new(sys_dim, env_dim, params.to_vec()).map_err(fail)?;
        *out = Box::into_raw(Box::new(QcModel(model)));
        Ok(())
    })
}

/// Parses a model file.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_model_from_json(json: *const c_char, out: *mut *mut QcModel) -> QcStatus {
    guard(|| {
        let out = out_arg(out)?;
        let model = model_from_json(str_arg(json)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(QcModel(model)));
        Ok(())
    })
}

/// Serializes a model; free the result with [`qc_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_model_to_json(model: *const QcModel, out: *mut *mut c_char) -> QcStatus {
    guard(|| {
        let model = ref_arg(model)?;
        let out = out_arg(out)?;
        *out = into_c_string(model_to_json(&model.0))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qc_model_free(model: *mut QcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// System dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_model_sys_dim(model: *const QcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.sys_dim())
}

/// Environment dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_model_env_dim(model: *const QcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.env_dim())
}

/// Number of real parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_model_param_count(model: *const QcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params().len())
}

/// Copies the parameters into `buf`, which must hold exactly
/// [`qc_model_param_count`] values.
///
/// # Safety
/// `model` must be a live handle and `buf` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qc_model_params(model: *const QcModel, buf: *mut f64, len: usize) -> QcStatus {
    guard(|| {
        let model = ref_arg(model)?;
        let params = model.0.params();
        if len != params.len() {
            return Err(invalid(&format!("buffer holds {len} values, model has {}", params.len())));
        }
        slice_out(buf, len)?.copy_from_slice(params);
        Ok(())
    })
}

/// Pauli transfer matrix, `d² × d²` row-major.
///
/// # Safety
/// `model` must be a live handle and `buf` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qc_model_transfer_matrix(model: *const QcModel, buf: *mut f64, len: usize) -> QcStatus {
    guard(|| {
        let model = ref_arg(model)?;
        let t = transfer_of(&model.0)?;
        let n = t.len();
        if len != n * n {
            return Err(invalid(&format!("buffer holds {len} values, need {}", n * n)));
        }
        let out = slice_out(buf, len)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = t.matrix()[(i, j)];
            }
        }
        Ok(())
    })
}

/// Applies the channel `steps` times to the coherence vector `input`
/// (length `d²`, leading entry 1) and writes the result to `output`.
///
/// # Safety
/// `model` must be a live handle; `input` and `output` point to `len`
/// doubles each and may alias.
#[no_mangle]
pub unsafe extern "C" fn qc_model_propagate(
    model: *const QcModel,
    input: *const f64,
    output: *mut f64,
    len: usize,
    steps: usize,
) -> QcStatus {
    guard(|| {
        let model = ref_arg(model)?;
        let d = model.0.sys_dim();
        if len != d * d {
            return Err(invalid(&format!("vector length {len}, need {}", d * d)));
        }
        let v = CoherenceVector::new(slice_arg(input, len)?.to_vec());
        let t = transfer_of(&model.0)?;
        let r = t.propagate_steps(&v, steps);
        slice_out(output, len)?.copy_from_slice(r.values());
        Ok(())
    })
}

/// Parses trajectories in the library's CSV format.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_dataset_from_csv(csv: *const c_char, out: *mut *mut QcDataset) -> QcStatus {
    guard(|| {
        let out = out_arg(out)?;
        let ds = read_trajectories(str_arg(csv)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(QcDataset(ds)));
        Ok(())
    })
}

/// Serializes a dataset; free the result with [`qc_string_free`].
///
/// # Safety
/// `dataset` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_dataset_to_csv(dataset: *const QcDataset, out: *mut *mut c_char) -> QcStatus {
    guard(|| {
        let ds = ref_arg(dataset)?;
        let out = out_arg(out)?;
        *out = into_c_string(write_trajectories(&ds.0))?;
        Ok(())
    })
}

/// Number of trajectories, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_dataset_len(dataset: *const QcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qc_dataset_free(dataset: *mut QcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Generates the training and validation sets of an experiment TOML.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn qc_experiment_generate(
    config_toml: *const c_char,
    train_out: *mut *mut QcDataset,
    validation_out: *mut *mut QcDataset,
) -> QcStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(str_arg(config_toml)?).map_err(fail)?;
        let train_out = out_arg(train_out)?;
        let validation_out = out_arg(validation_out)?;
        let data = generate(&cfg).map_err(fail)?;
        *train_out = Box::into_raw(Box::new(QcDataset(data.train)));
        *validation_out = Box::into_raw(Box::new(QcDataset(data.validation)));
        Ok(())
    })
}

fn parse_train_config(text: &str) -> Result<TrainConfig, QcStatus> {
    toml::from_str(text).map_err(|e| fail(Error::Config(e.to_string())))
}

/// Trains a model on `dataset` with a training-config TOML. A non-null
/// `pretrain_toml` runs that phase first. On divergence the last finite
/// model is still returned together with [`QcStatus::Diverged`].
///
/// # Safety
/// `dataset` must be a live handle, `train_toml` a NUL-terminated string,
/// `pretrain_toml` null or a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_train(
    dataset: *const QcDataset,
    train_toml: *const c_char,
    pretrain_toml: *const c_char,
    out: *mut *mut QcModel,
) -> QcStatus {
    guard(|| {
        let ds = ref_arg(dataset)?;
        let main = parse_train_config(str_arg(train_toml)?)?;
        let pre = if pretrain_toml.is_null() {
            None
        } else {
            Some(parse_train_config(str_arg(pretrain_toml)?)?)
        };
        let out = out_arg(out)?;
        let report = match &pre {
            Some(p) => pretrain_then_train(&ds.0, p, &main, None),
            None => train(&ds.0, &main, None),
        }
        .map_err(fail)?;
        let diverged = report.diverged.clone();
        *out = Box::into_raw(Box::new(QcModel(report.model)));
        match diverged {
            Some(d) => Err(fail(Error::Diverged {
                epoch: d.epoch,
                loss: d.loss,
            })),
            None => Ok(()),
        }
    })
}

/// Mean validation error of `model` on `dataset` over `t_min..=t_max`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qc_error_measure(
    model: *const QcModel,
    dataset: *const QcDataset,
    t_min: u32,
    t_max: u32,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let model = ref_arg(model)?;
        let ds = ref_arg(dataset)?;
        let out = out_arg(out)?;
        let t = transfer_of(&model.0)?;
        *out = error_measure(&t, &ds.0, t_min, t_max).map_err(fail)?;
        Ok(())
    })
}

/// Whether the one-period transfer matrix `transfer` (`n × n` row-major,
/// `n = d²`) has a time-independent Lindblad generator at drive frequency
/// `omega`.
///
/// # Safety
/// `transfer` must point to `n * n` doubles and `verdict` be valid.
#[no_mangle]
pub unsafe extern "C" fn qc_floquet_check(
    transfer: *const f64,
    n: usize,
    omega: f64,
    verdict: *mut QcFloquetVerdict,
) -> QcStatus {
    guard(|| {
        let values = slice_arg(transfer, n * n)?;
        let verdict = out_arg(verdict)?;
        let t = TransferMatrix::new(RMat::from_row_slice(n, n, values));
        let r = floquet_check(&t, omega).map_err(fail)?;
        *verdict = match r.verdict {
            FloquetVerdict::Exists => QcFloquetVerdict::Exists,
            FloquetVerdict::Absent => QcFloquetVerdict::Absent,
            FloquetVerdict::Inconclusive => QcFloquetVerdict::Inconclusive,
        };
        Ok(())
    })
}
