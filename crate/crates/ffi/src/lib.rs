//! C ABI over the nerbias core.
//!
//! Every function returns an [`NbStatus`]. On failure the message is kept in
//! thread-local storage and read with [`nb_last_error`]. Strings returned
//! through out-pointers are owned by the caller and released with
//! [`nb_string_free`]. Handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nerbias::conll::EntitySpan;
use nerbias::crf::CrfModel;
use nerbias::metrics::{mean, percentile, std_pop};
use nerbias::registry::{builtin_registry, deaccent, load_registry, NameRegistry};
use nerbias::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Parse = 4,
    Io = 5,
    Backend = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Opaque name registry.
pub struct NbRegistry(NameRegistry);

/// Opaque trained CRF model.
pub struct NbModel(CrfModel);

/// Summary of a confidence sample. Percentiles interpolate linearly,
/// `std` is the population standard deviation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NbConfidenceStats {
    pub n: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NbStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => NbStatus::Parse,
        Error::Validation(_) => NbStatus::Validation,
        Error::Protocol { .. } | Error::Connection(_) | Error::Timeout(_) => NbStatus::Backend,
        Error::Io(_) => NbStatus::Io,
        Error::File { source, .. } => status_of(source),
    }
}

struct Fail(NbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NbStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NbStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NbStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(NbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn tokens_arg(tokens: *const *const c_char, n: usize) -> Result<Vec<String>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if tokens.is_null() {
        return Err(null("tokens"));
    }
    (0..n)
        .map(|i| str_arg(*tokens.add(i), "token").map(str::to_owned))
        .collect()
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(NbStatus::Validation, "string contains a NUL byte".into()))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn nb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_builtin(out: *mut *mut NbRegistry) -> NbStatus {
    guard(|| put(out, Box::into_raw(Box::new(NbRegistry(builtin_registry())))))
}

/// Loads a `Name,CATEGORY` registry file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_load(path: *const c_char, out: *mut *mut NbRegistry) -> NbStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
        let reg = load_registry(BufReader::new(file)).map_err(|e| e.in_file(path))?;
        put(out, Box::into_raw(Box::new(NbRegistry(reg))))
    })
}

/// Number of audited names, excluding the out-of-vocabulary baseline.
///
/// # Safety
/// `reg` must be a live registry handle or null.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_len(reg: *const NbRegistry) -> usize {
    reg.as_ref().map_or(0, |r| r.0.len())
}

/// Surface form and category code of entry `index`.
///
/// # Safety
/// `reg` must be a live registry handle; `surface` and `category` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_entry(
    reg: *const NbRegistry,
    index: usize,
    surface: *mut *mut c_char,
    category: *mut *mut c_char,
) -> NbStatus {
    guard(|| {
        let reg = reg.as_ref().ok_or_else(|| null("registry"))?;
        let entry = reg.0.entries().get(index).ok_or_else(|| {
            Fail(NbStatus::OutOfRange, format!("index {index} out of range for {} names", reg.0.len()))
        })?;
        if surface.is_null() || category.is_null() {
            return Err(null("output pointer"));
        }
        let s = c_string(entry.surface.clone())?;
        let c = match c_string(entry.category.code().to_string()) {
            Ok(c) => c,
            Err(e) => {
                nb_string_free(s);
                return Err(e);
            }
        };
        surface.write(s);
        category.write(c);
        Ok(())
    })
}

/// Hex SHA-256 digest of the registry contents.
///
/// # Safety
/// `reg` must be a live registry handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_digest(reg: *const NbRegistry, out: *mut *mut c_char) -> NbStatus {
    guard(|| {
        let reg = reg.as_ref().ok_or_else(|| null("registry"))?;
        put(out, c_string(reg.0.digest())?)
    })
}

/// # Safety
/// `reg` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn nb_registry_free(reg: *mut NbRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Strips combining marks after canonical decomposition.
///
/// # Safety
/// `s` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_deaccent(s: *const c_char, out: *mut *mut c_char) -> NbStatus {
    guard(|| {
        let s = str_arg(s, "input")?;
        put(out, c_string(deaccent(s))?)
    })
}

/// Loads a saved model. `embeddings` may be null to use the path recorded
/// at training time.
///
/// # Safety
/// `path` must be a NUL-terminated string, `embeddings` null or one, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_model_load(
    path: *const c_char,
    embeddings: *const c_char,
    out: *mut *mut NbModel,
) -> NbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let emb = if embeddings.is_null() {
            None
        } else {
            Some(Path::new(str_arg(embeddings, "embeddings")?))
        };
        let model = CrfModel::load(Path::new(path), emb)?;
        put(out, Box::into_raw(Box::new(NbModel(model))))
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn nb_model_free(model: *mut NbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tags `n` tokens and writes `{"tags":[...],"confidences":[...]}` to `out`,
/// with one confidence per predicted entity.
///
/// # Safety
/// `model` must be a live handle, `tokens` point to `n` NUL-terminated
/// strings, and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_model_tag_json(
    model: *const NbModel,
    tokens: *const *const c_char,
    n: usize,
    out: *mut *mut c_char,
) -> NbStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let tokens = tokens_arg(tokens, n)?;
        let (tags, preds) = model.0.tags_and_predictions(&tokens);
        let confidences: Vec<f64> = preds.iter().filter_map(|p| p.confidence).collect();
        let json = serde_json::json!({ "tags": tags, "confidences": confidences });
        put(out, c_string(json.to_string())?)
    })
}

/// Posterior probability that tokens `[start, end)` form exactly one entity
/// of type `entity_type`.
///
/// # Safety
/// `model` must be a live handle, `tokens` point to `n` NUL-terminated
/// strings, `entity_type` be NUL-terminated, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_model_entity_confidence(
    model: *const NbModel,
    tokens: *const *const c_char,
    n: usize,
    start: usize,
    end: usize,
    entity_type: *const c_char,
    out: *mut f64,
) -> NbStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let tokens = tokens_arg(tokens, n)?;
        let label = str_arg(entity_type, "entity_type")?;
        if start >= end || end > n {
            return Err(Fail(NbStatus::OutOfRange, format!("span [{start}, {end}) invalid for {n} tokens")));
        }
        let c = model.0.entity_confidence(&tokens, &EntitySpan::new(start, end, label))?;
        put(out, c)
    })
}

/// Log partition function over all legal tag sequences.
///
/// # Safety
/// `model` must be a live handle, `tokens` point to `n` NUL-terminated
/// strings, and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_model_log_partition(
    model: *const NbModel,
    tokens: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> NbStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let tokens = tokens_arg(tokens, n)?;
        put(out, model.0.log_partition(&tokens))
    })
}

/// # Safety
/// `values` must point to `n` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nb_confidence_stats(
    values: *const f64,
    n: usize,
    out: *mut NbConfidenceStats,
) -> NbStatus {
    guard(|| {
        if n == 0 {
            return Err(Fail(NbStatus::Validation, "empty sample".into()));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let xs = std::slice::from_raw_parts(values, n);
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Fail(NbStatus::Validation, "non-finite value".into()));
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        put(
            out,
            NbConfidenceStats {
                n,
                min: sorted[0],
                p25: percentile(&sorted, 0.25),
                median: percentile(&sorted, 0.5),
                mean: mean(&sorted),
                std: std_pop(&sorted),
                max: sorted[n - 1],
            },
        )
    })
}
