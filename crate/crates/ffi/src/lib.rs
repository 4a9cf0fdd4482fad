//! C ABI for the analysis pipeline.
//!
//! The binding surface is an opaque analysis handle plus accessor functions
//! returning JSON/markdown strings. Every returned string is owned by the
//! caller and must be released with [`pvota_string_free`]; the handle is
//! released with [`pvota_analysis_free`].
//!
//! Functions taking an out-parameter report failures through a status code
//! and, when non-null, an error string written to `out_error`.

use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};

use pvota_core::pipeline::{config_for_case, run_pipeline, PipelineArtifacts};

/// Opaque handle to one completed analysis.
pub struct PvotaAnalysis {
    artifacts: PipelineArtifacts,
}

/// Status codes returned by fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvotaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    AnalysisFailed = 3,
}

fn to_cstring(s: &str) -> *mut c_char {
    // interior NULs cannot survive the C boundary; replace them
    let cleaned: String = s.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    CString::new(cleaned)
        .expect("no interior NUL after cleaning")
        .into_raw()
}

fn set_error(out_error: *mut *mut c_char, message: &str) {
    if !out_error.is_null() {
        unsafe { *out_error = to_cstring(message) };
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, PvotaStatus> {
    if ptr.is_null() {
        return Err(PvotaStatus::NullArgument);
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| PvotaStatus::InvalidUtf8)?;
    Ok(PathBuf::from(s))
}

/// Run the full pipeline on a case directory (`field.csv`, `network.csv`,
/// `app.log`, `events.csv`; `config.json` is searched beside it unless
/// `config_path` is given). On success writes a handle to `out_analysis`.
///
/// # Safety
/// `case_dir` must be a valid NUL-terminated string; `config_path` may be
/// null; `out_analysis` must be a valid pointer; `out_error` may be null.
#[no_mangle]
pub unsafe extern "C" fn pvota_analyze_case(
    case_dir: *const c_char,
    config_path: *const c_char,
    out_analysis: *mut *mut PvotaAnalysis,
    out_error: *mut *mut c_char,
) -> PvotaStatus {
    if out_analysis.is_null() {
        return PvotaStatus::NullArgument;
    }
    *out_analysis = std::ptr::null_mut();
    let case = match path_arg(case_dir) {
        Ok(p) => p,
        Err(status) => {
            set_error(out_error, "case_dir is null or not UTF-8");
            return status;
        }
    };
    let config: Option<PathBuf> = if config_path.is_null() {
        None
    } else {
        match path_arg(config_path) {
            Ok(p) => Some(p),
            Err(status) => {
                set_error(out_error, "config_path is not UTF-8");
                return status;
            }
        }
    };
    let result = config_for_case(&case, config.as_deref().map(Path::new))
        .and_then(|cfg| run_pipeline(&cfg));
    match result {
        Ok(artifacts) => {
            *out_analysis = Box::into_raw(Box::new(PvotaAnalysis { artifacts }));
            PvotaStatus::Ok
        }
        Err(e) => {
            set_error(out_error, &e.to_string());
            PvotaStatus::AnalysisFailed
        }
    }
}

unsafe fn analysis<'a>(ptr: *const PvotaAnalysis) -> Option<&'a PvotaAnalysis> {
    ptr.as_ref()
}

/// Concluded cause class: 0 benign/inconclusive, 10 system fault, 20 false
/// data injection, 30 memory corruption, 40 suspected log manipulation,
/// 41 suspected dispatch manipulation; -1 on a null handle.
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_cause_code(ptr: *const PvotaAnalysis) -> c_int {
    match analysis(ptr) {
        Some(a) => a.artifacts.verdict.cause.exit_code() as c_int,
        None => -1,
    }
}

unsafe fn string_of(
    ptr: *const PvotaAnalysis,
    render: fn(&PvotaAnalysis) -> String,
) -> *mut c_char {
    match analysis(ptr) {
        Some(a) => to_cstring(&render(a)),
        None => std::ptr::null_mut(),
    }
}

/// Verdict as JSON. Returns null on a null handle; free with
/// [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_verdict_json(ptr: *const PvotaAnalysis) -> *mut c_char {
    string_of(ptr, |a| a.artifacts.verdict.to_json())
}

/// Human-readable analysis report (markdown). Returns null on a null
/// handle; free with [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_report_markdown(
    ptr: *const PvotaAnalysis,
) -> *mut c_char {
    string_of(ptr, |a| a.artifacts.report_md.clone())
}

/// Simplified dependency graph as JSON. Returns null on a null handle; free
/// with [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_graph_json(ptr: *const PvotaAnalysis) -> *mut c_char {
    string_of(ptr, |a| a.artifacts.graph.to_json())
}

/// Simplified dependency graph as DOT. Returns null on a null handle; free
/// with [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_graph_dot(ptr: *const PvotaAnalysis) -> *mut c_char {
    string_of(ptr, |a| {
        let numbering = a.artifacts.graph.display_numbering();
        a.artifacts.graph.to_dot(&numbering)
    })
}

/// Pattern-match ledger as JSON. Returns null on a null handle; free with
/// [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_matches_json(ptr: *const PvotaAnalysis) -> *mut c_char {
    string_of(ptr, |a| a.artifacts.ledger.to_json())
}

/// Pruning report as JSON. Returns null on a null handle; free with
/// [`pvota_string_free`].
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`].
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_prune_report_json(
    ptr: *const PvotaAnalysis,
) -> *mut c_char {
    string_of(ptr, |a| a.artifacts.prune_report.to_json())
}

/// Release an analysis handle.
///
/// # Safety
/// `ptr` must be null or a handle from [`pvota_analyze_case`], not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn pvota_analysis_free(ptr: *mut PvotaAnalysis) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

/// Release a string returned by any accessor.
///
/// # Safety
/// `ptr` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvota_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn pvota_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        pvota_core::fixtures::write_all(dir.path(), 42).unwrap();
        dir
    }

    fn c_path(p: &std::path::Path) -> CString {
        CString::new(p.to_str().unwrap()).unwrap()
    }

    #[test]
    fn analyze_through_the_c_abi() {
        let dir = case_dir();
        let case = c_path(&dir.path().join("case3"));
        let mut handle: *mut PvotaAnalysis = std::ptr::null_mut();
        let mut err: *mut c_char = std::ptr::null_mut();
        let status = unsafe {
            pvota_analyze_case(case.as_ptr(), std::ptr::null(), &mut handle, &mut err)
        };
        assert_eq!(status, PvotaStatus::Ok, "err: {:?}", unsafe {
            err.as_ref().map(|p| CStr::from_ptr(p).to_string_lossy().into_owned())
        });
        assert!(!handle.is_null());
        unsafe {
            assert_eq!(pvota_analysis_cause_code(handle), 30);
            let json = pvota_analysis_verdict_json(handle);
            let text = CStr::from_ptr(json).to_str().unwrap();
            assert!(text.contains("MemoryCorruption"));
            pvota_string_free(json);
            let report = pvota_analysis_report_markdown(handle);
            assert!(CStr::from_ptr(report).to_str().unwrap().contains("N17"));
            pvota_string_free(report);
            let dot = pvota_analysis_graph_dot(handle);
            assert!(CStr::from_ptr(dot).to_str().unwrap().starts_with("digraph"));
            pvota_string_free(dot);
            pvota_analysis_free(handle);
        }
    }

    #[test]
    fn null_and_error_paths() {
        unsafe {
            assert_eq!(pvota_analysis_cause_code(std::ptr::null()), -1);
            assert!(pvota_analysis_verdict_json(std::ptr::null()).is_null());
            let mut handle: *mut PvotaAnalysis = std::ptr::null_mut();
            let status =
                pvota_analyze_case(std::ptr::null(), std::ptr::null(), &mut handle, std::ptr::null_mut());
            assert_eq!(status, PvotaStatus::NullArgument);

            let missing = CString::new("/nonexistent/case").unwrap();
            let mut err: *mut c_char = std::ptr::null_mut();
            let status = pvota_analyze_case(
                missing.as_ptr(),
                std::ptr::null(),
                &mut handle,
                &mut err,
            );
            assert_eq!(status, PvotaStatus::AnalysisFailed);
            assert!(!err.is_null());
            pvota_string_free(err);
        }
    }

    #[test]
    fn version_is_static() {
        let v = pvota_version();
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }
}
