//! C ABI for the pclfpca pipeline.
//!
//! All objects cross the boundary as opaque handles that must be released
//! with their `_free` function. Fallible calls return a status code
//! (`PCLFPCA_OK` on success); the most recent error message is available
//! per-thread through `pclfpca_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pclfpca::dataset::{center, load_dataset, DataFormat, FunctionalDataset};
use pclfpca::diagnostics;
use pclfpca::fpca::{decompose, FpcaBasis, RetainRule};
use pclfpca::model::{McmcConfig, ModelConfig, PosteriorDraws};
use pclfpca::Error;

pub const PCLFPCA_OK: i32 = 0;
pub const PCLFPCA_ERR_NULL: i32 = 1;
pub const PCLFPCA_ERR_VALIDATION: i32 = 2;
pub const PCLFPCA_ERR_NUMERICAL: i32 = 3;
pub const PCLFPCA_ERR_PANIC: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn code_for(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::NonFinite { .. } => PCLFPCA_ERR_NUMERICAL,
        _ => PCLFPCA_ERR_VALIDATION,
    }
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes). Returns the full message length in bytes.
#[no_mangle]
pub extern "C" fn pclfpca_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

unsafe fn path_from(ptr: *const c_char) -> Option<&'static Path> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok().map(Path::new)
}

/// Opaque functional dataset (curves on a shared grid).
pub struct Dataset(FunctionalDataset);

/// Opaque fitted model: the fPCA basis plus posterior draws.
pub struct Fit {
    basis: FpcaBasis,
    draws: PosteriorDraws,
}

/// Load a CSV dataset (rows = curves). Returns NULL on failure.
#[no_mangle]
pub unsafe extern "C" fn pclfpca_dataset_load(path: *const c_char) -> *mut Dataset {
    let Some(path) = path_from(path) else {
        set_error("path is NULL or not UTF-8");
        return ptr::null_mut();
    };
    match load_dataset(path, DataFormat::Csv) {
        Ok(dataset) => Box::into_raw(Box::new(Dataset(dataset))),
        Err(err) => {
            set_error(err.to_string());
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn pclfpca_dataset_shape(
    dataset: *const Dataset,
    n_curves: *mut usize,
    n_points: *mut usize,
) -> i32 {
    let Some(dataset) = dataset.as_ref() else {
        set_error("dataset is NULL");
        return PCLFPCA_ERR_NULL;
    };
    if !n_curves.is_null() {
        *n_curves = dataset.0.n_curves();
    }
    if !n_points.is_null() {
        *n_points = dataset.0.n_points();
    }
    PCLFPCA_OK
}

#[no_mangle]
pub unsafe extern "C" fn pclfpca_dataset_free(dataset: *mut Dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Smooth, decompose into `k` eigendimensions and run the Gibbs sampler.
/// `standard_mode != 0` fits the single-cluster zero-mean variant.
/// Returns NULL on failure.
#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit(
    dataset: *const Dataset,
    k: usize,
    burn_in: usize,
    iterations: usize,
    thinning: usize,
    chains: usize,
    seed: u64,
    standard_mode: i32,
) -> *mut Fit {
    let Some(dataset) = dataset.as_ref() else {
        set_error("dataset is NULL");
        return ptr::null_mut();
    };
    let result = catch_unwind(AssertUnwindSafe(|| -> pclfpca::Result<Fit> {
        let spline = pclfpca::bspline::BSplineBasis::default_for(dataset.0.grid())?;
        let smoothed = pclfpca::bspline::smooth(&dataset.0, &spline)?;
        let centered = center(&smoothed);
        let basis = decompose(&centered, RetainRule::Fixed(k), spline.n_basis())?;
        let model = if standard_mode != 0 {
            ModelConfig::standard_for(&basis)
        } else {
            ModelConfig::default_for(&basis)
        };
        let mcmc = McmcConfig { burn_in, iterations, thinning, chains, seed };
        let draws = pclfpca::sampler::run(&centered, &basis, &model, &mcmc)?;
        Ok(Fit { basis, draws })
    }));
    match result {
        Ok(Ok(fit)) => Box::into_raw(Box::new(fit)),
        Ok(Err(err)) => {
            set_error(err.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic during fit");
            ptr::null_mut()
        }
    }
}

/// Number of retained eigendimensions of a fit.
#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit_dims(fit: *const Fit) -> usize {
    fit.as_ref().map(|f| f.basis.k).unwrap_or(0)
}

/// Write the posterior-mode partition of eigendimension `dim` into `labels`
/// (capacity `len`, needs one slot per curve).
#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit_map_partition(
    fit: *const Fit,
    dim: usize,
    labels: *mut usize,
    len: usize,
) -> i32 {
    let Some(fit) = fit.as_ref() else {
        set_error("fit is NULL");
        return PCLFPCA_ERR_NULL;
    };
    if labels.is_null() {
        set_error("labels is NULL");
        return PCLFPCA_ERR_NULL;
    }
    if dim >= fit.basis.k {
        set_error(format!("dimension {dim} out of range (K={})", fit.basis.k));
        return PCLFPCA_ERR_VALIDATION;
    }
    if len < fit.draws.n_curves {
        set_error(format!(
            "labels capacity {len} below curve count {}",
            fit.draws.n_curves
        ));
        return PCLFPCA_ERR_VALIDATION;
    }
    match diagnostics::map_partition(&fit.draws, dim) {
        Ok(map) => {
            ptr::copy_nonoverlapping(map.as_ptr(), labels, map.len());
            PCLFPCA_OK
        }
        Err(err) => {
            let code = code_for(&err);
            set_error(err.to_string());
            code
        }
    }
}

/// Mean split-chain PSRF over the monitored scalar parameters.
#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit_mean_psrf(fit: *const Fit, out: *mut f64) -> i32 {
    let Some(fit) = fit.as_ref() else {
        set_error("fit is NULL");
        return PCLFPCA_ERR_NULL;
    };
    if out.is_null() {
        set_error("out is NULL");
        return PCLFPCA_ERR_NULL;
    }
    match diagnostics::chain_diagnostics(&fit.draws) {
        Ok(d) => {
            *out = d.mean_psrf();
            PCLFPCA_OK
        }
        Err(err) => {
            let code = code_for(&err);
            set_error(err.to_string());
            code
        }
    }
}

/// Persist the fit (draw files, manifest, basis) into a directory.
#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit_save(fit: *const Fit, dir: *const c_char) -> i32 {
    let Some(fit) = fit.as_ref() else {
        set_error("fit is NULL");
        return PCLFPCA_ERR_NULL;
    };
    let Some(dir) = path_from(dir) else {
        set_error("dir is NULL or not UTF-8");
        return PCLFPCA_ERR_NULL;
    };
    let result = std::fs::create_dir_all(dir)
        .map_err(Error::from)
        .and_then(|_| pclfpca::draws::save(&fit.draws, dir).map(|_| ()))
        .and_then(|_| {
            let json = fit.basis.to_json()?;
            std::fs::write(dir.join("basis.json"), json)?;
            Ok(())
        });
    match result {
        Ok(()) => PCLFPCA_OK,
        Err(err) => {
            let code = code_for(&err);
            set_error(err.to_string());
            code
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn pclfpca_fit_free(fit: *mut Fit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
