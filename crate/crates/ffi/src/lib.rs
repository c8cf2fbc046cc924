//! C ABI over grnkit.
//!
//! Objects are opaque handles released with their `*_free` function. Every
//! fallible call returns a [`GrnkitStatus`]; on failure the message is
//! available from [`grnkit_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use grnkit::expression::{load_matrix, ExpressionMatrix, MatrixFormat, Scale};
use grnkit::grn::{self, GeneVocabulary, Grn, TfPartition};
use grnkit::llm::parse_answer;
use grnkit::metrics::{self, Bandwidths, MmdConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrnkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Grn = 4,
    Data = 5,
    Metric = 6,
    Parse = 7,
    Panic = 99,
}

/// GRN handle.
pub struct GrnkitGrn(Grn);

/// Expression matrix handle.
pub struct GrnkitMatrix(ExpressionMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let c = CString::new(msg.to_string().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(GrnkitStatus, String);

impl Fail {
    fn new(status: GrnkitStatus, msg: impl std::fmt::Display) -> Self {
        Fail(status, msg.to_string())
    }
}

impl From<grn::GrnError> for Fail {
    fn from(e: grn::GrnError) -> Self {
        let status = match e {
            grn::GrnError::Io(_) => GrnkitStatus::Io,
            _ => GrnkitStatus::Grn,
        };
        Fail::new(status, e)
    }
}

impl From<grnkit::expression::DataError> for Fail {
    fn from(e: grnkit::expression::DataError) -> Self {
        let status = match e {
            grnkit::expression::DataError::Io(_) => GrnkitStatus::Io,
            _ => GrnkitStatus::Data,
        };
        Fail::new(status, e)
    }
}

impl From<metrics::MetricError> for Fail {
    fn from(e: metrics::MetricError) -> Self {
        Fail::new(GrnkitStatus::Metric, e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GrnkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrnkitStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GrnkitStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(GrnkitStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(GrnkitStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn str_list(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<String>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Fail::new(GrnkitStatus::NullPointer, format!("{what} is null")));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .map(|&s| str_arg(s, what).map(str::to_string))
        .collect()
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail::new(GrnkitStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(out: *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail::new(GrnkitStatus::NullPointer, "output pointer is null"))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grnkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn grnkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Uniformly random GRN with exactly `k` regulators per target.
///
/// # Safety
/// `tfs` and `targets` point to arrays of `n_tfs` / `n_targets` NUL-terminated
/// strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_random(
    tfs: *const *const c_char,
    n_tfs: usize,
    targets: *const *const c_char,
    n_targets: usize,
    k: usize,
    seed: u64,
    out: *mut *mut GrnkitGrn,
) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        let tfs = str_list(tfs, n_tfs, "tfs")?;
        let targets = str_list(targets, n_targets, "targets")?;
        let partition = TfPartition::new(tfs, targets)?;
        let g = grn::random_grn(&partition, k, seed)?;
        *out = Box::into_raw(Box::new(GrnkitGrn(g)));
        Ok(())
    })
}

/// Reads a `TF\ttarget` edge list and its JSON sidecar.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_read(path: *const c_char, out: *mut *mut GrnkitGrn) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let g = grn::read_grn(&path)?;
        *out = Box::into_raw(Box::new(GrnkitGrn(g)));
        Ok(())
    })
}

/// # Safety
/// `grn` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_write(grn: *const GrnkitGrn, path: *const c_char) -> GrnkitStatus {
    guard(|| {
        let g = handle(grn, "grn")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        grn::write_grn(&g.0, &path)?;
        Ok(())
    })
}

/// Edges per possible TF→target pair: `k / n_tfs`. NaN for a null handle.
///
/// # Safety
/// `grn` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_density(grn: *const GrnkitGrn) -> f64 {
    grn.as_ref().map_or(f64::NAN, |g| grn::density(&g.0))
}

/// # Safety
/// `grn` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_n_edges(grn: *const GrnkitGrn) -> usize {
    grn.as_ref().map_or(0, |g| g.0.n_edges())
}

/// Fraction of edges of `a` also present in `b`.
///
/// # Safety
/// `a` and `b` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_overlap(a: *const GrnkitGrn, b: *const GrnkitGrn, out: *mut f64) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        *out = grn::overlap(&handle(a, "a")?.0, &handle(b, "b")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `grn` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grnkit_grn_free(grn: *mut GrnkitGrn) {
    if !grn.is_null() {
        drop(Box::from_raw(grn));
    }
}

/// Loads a matrix; `format` is 0 for CSV, 1 for Matrix Market.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_matrix_load(path: *const c_char, format: u32, out: *mut *mut GrnkitMatrix) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = match format {
            0 => MatrixFormat::Csv,
            1 => MatrixFormat::Mtx,
            f => return Err(Fail::new(GrnkitStatus::InvalidArgument, format!("unknown format {f}"))),
        };
        let m = load_matrix(&path, format)?;
        *out = Box::into_raw(Box::new(GrnkitMatrix(m)));
        Ok(())
    })
}

/// Builds a raw-count matrix from row-major `n_cells × n_genes` values.
///
/// # Safety
/// `values` holds `n_cells * n_genes` doubles, `genes` holds `n_genes`
/// NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_matrix_from_dense(
    values: *const f64,
    n_cells: usize,
    n_genes: usize,
    genes: *const *const c_char,
    out: *mut *mut GrnkitMatrix,
) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        if values.is_null() && n_cells * n_genes > 0 {
            return Err(Fail::new(GrnkitStatus::NullPointer, "values is null"));
        }
        let genes = str_list(genes, n_genes, "genes")?;
        let vocab = GeneVocabulary::new(genes)?;
        let data = if n_cells * n_genes == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, n_cells * n_genes).to_vec()
        };
        let arr = ndarray::Array2::from_shape_vec((n_cells, n_genes), data)
            .map_err(|e| Fail::new(GrnkitStatus::InvalidArgument, e))?;
        let m = ExpressionMatrix::from_rows(arr, vocab, Scale::Raw)?;
        *out = Box::into_raw(Box::new(GrnkitMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grnkit_matrix_n_cells(m: *const GrnkitMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_cells())
}

/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grnkit_matrix_n_genes(m: *const GrnkitMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_genes())
}

/// # Safety
/// `m` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grnkit_matrix_free(m: *mut GrnkitMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Cosine distance between the centroids of `r` and `s`.
///
/// # Safety
/// `r`, `s` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_cosine_distance(r: *const GrnkitMatrix, s: *const GrnkitMatrix, out: *mut f64) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        *out = metrics::cosine_distance(&handle(r, "r")?.0, &handle(s, "s")?.0)?;
        Ok(())
    })
}

/// Euclidean distance between the centroids of `r` and `s`.
///
/// # Safety
/// `r`, `s` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_euclidean_distance(
    r: *const GrnkitMatrix,
    s: *const GrnkitMatrix,
    out: *mut f64,
) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        *out = metrics::euclidean_distance(&handle(r, "r")?.0, &handle(s, "s")?.0)?;
        Ok(())
    })
}

/// Biased MMD² with RBF kernels. `n_bandwidths == 0` selects the median
/// heuristic.
///
/// # Safety
/// `r`, `s` are live handles; `bandwidths` holds `n_bandwidths` doubles;
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_mmd(
    r: *const GrnkitMatrix,
    s: *const GrnkitMatrix,
    bandwidths: *const f64,
    n_bandwidths: usize,
    out: *mut f64,
) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        let bandwidths = if n_bandwidths == 0 {
            Bandwidths::MedianHeuristic
        } else if bandwidths.is_null() {
            return Err(Fail::new(GrnkitStatus::NullPointer, "bandwidths is null"));
        } else {
            Bandwidths::Explicit(std::slice::from_raw_parts(bandwidths, n_bandwidths).to_vec())
        };
        *out = metrics::mmd(&handle(r, "r")?.0, &handle(s, "s")?.0, &MmdConfig { bandwidths })?;
        Ok(())
    })
}

/// Rank-based AUROC; `labels[i]` nonzero marks a positive.
///
/// # Safety
/// `scores` and `labels` hold `n` elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        if n > 0 && (scores.is_null() || labels.is_null()) {
            return Err(Fail::new(GrnkitStatus::NullPointer, "scores or labels is null"));
        }
        let (scores, labels): (&[f64], Vec<bool>) = if n == 0 {
            (&[], Vec::new())
        } else {
            (
                std::slice::from_raw_parts(scores, n),
                std::slice::from_raw_parts(labels, n).iter().map(|&l| l != 0).collect(),
            )
        };
        *out = metrics::auroc(scores, &labels)?;
        Ok(())
    })
}

/// Parses an `<Answer> [..] </Answer>` reply into newline-separated symbols.
/// Release the string with [`grnkit_string_free`].
///
/// # Safety
/// `raw` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn grnkit_parse_answer(raw: *const c_char, out: *mut *mut c_char) -> GrnkitStatus {
    guard(|| {
        out_ptr(out)?;
        let list = parse_answer(str_arg(raw, "raw")?).map_err(|e| Fail::new(GrnkitStatus::Parse, e))?;
        let joined = CString::new(list.symbols().join("\n"))
            .map_err(|e| Fail::new(GrnkitStatus::Parse, e))?;
        *out = joined.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grnkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
