//! C ABI surface over the msgpipe library.
//!
//! Conventions:
//! - Opaque handles (`MsgpipeWorkspace`) own parsed state; free them with the
//!   matching `_free` function exactly once.
//! - Every fallible call returns a `MsgpipeStatus`; out-parameters are only
//!   written on `Ok`.
//! - Strings returned through out-parameters are NUL-terminated, owned by the
//!   caller, and must be released with `msgpipe_string_free`.
//! - `msgpipe_last_error_message` returns the thread's last failure detail.

use msgpipe::coverage::{measure, mutate};
use msgpipe::deps::{render_closure_report, slice, FunctionPath, Workspace};
use msgpipe::frontend::{parse_source, pretty_print, pretty_print_function};
use msgpipe::inline::inline_best_effort;
use msgpipe::prover::{parse_mock_rules, verify, ProverConfig};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_ulonglong};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgpipeStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Move source or rule text failed to parse.
    ParseError = 3,
    /// The named target/module does not exist in the workspace.
    NotFound = 4,
    /// Verification or coverage machinery failed.
    ProverError = 5,
    /// A panic or other internal fault; details via last_error_message.
    Internal = 6,
}

/// Opaque handle over a parsed workspace.
pub struct MsgpipeWorkspace {
    inner: Workspace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Detail text for the most recent failure on this thread. Borrowed; valid
/// until the next failing call on the same thread. Never NULL.
#[no_mangle]
pub extern "C" fn msgpipe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MsgpipeStatus> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(MsgpipeStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(&format!("invalid utf-8: {e}"));
        MsgpipeStatus::InvalidUtf8
    })
}

fn give_string(text: String, out: *mut *mut c_char) -> MsgpipeStatus {
    if out.is_null() {
        set_error("null out-parameter");
        return MsgpipeStatus::NullArgument;
    }
    let sanitized: String = text.chars().filter(|c| *c != '\0').collect();
    let c = CString::new(sanitized).unwrap();
    unsafe { *out = c.into_raw() };
    MsgpipeStatus::Ok
}

fn guarded(f: impl FnOnce() -> MsgpipeStatus) -> MsgpipeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MsgpipeStatus::Internal
        }
    }
}

/// Parse Move source (one or more modules) into a workspace handle.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_workspace_parse(
    source: *const c_char,
    out: *mut *mut MsgpipeWorkspace,
) -> MsgpipeStatus {
    guarded(|| {
        let text = match read_str(source) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() {
            set_error("null out-parameter");
            return MsgpipeStatus::NullArgument;
        }
        match parse_source(text) {
            Ok(modules) => {
                let handle = Box::new(MsgpipeWorkspace {
                    inner: Workspace::new(modules),
                });
                *out = Box::into_raw(handle);
                MsgpipeStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                MsgpipeStatus::ParseError
            }
        }
    })
}

/// Release a workspace handle. NULL is a no-op.
///
/// # Safety
/// `ws` must be a pointer previously returned by `msgpipe_workspace_parse`
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_workspace_free(ws: *mut MsgpipeWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Number of modules held by the workspace.
///
/// # Safety
/// `ws` must be a live workspace handle.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_workspace_module_count(
    ws: *const MsgpipeWorkspace,
) -> c_ulonglong {
    if ws.is_null() {
        return 0;
    }
    (*ws).inner.modules.len() as c_ulonglong
}

fn parse_target_str(text: &str) -> Result<FunctionPath, MsgpipeStatus> {
    FunctionPath::parse(text).ok_or_else(|| {
        set_error(&format!("target must be `module::function`, got `{text}`"));
        MsgpipeStatus::NotFound
    })
}

/// Render the dependency-closure report for `target` (`module::function`).
///
/// # Safety
/// `ws` must be a live workspace handle; `target` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_analyze(
    ws: *const MsgpipeWorkspace,
    target: *const c_char,
    out: *mut *mut c_char,
) -> MsgpipeStatus {
    guarded(|| {
        if ws.is_null() {
            set_error("null workspace");
            return MsgpipeStatus::NullArgument;
        }
        let target = match read_str(target).and_then(|t| parse_target_str(t)) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match slice(&(*ws).inner, &target) {
            Ok(closure) => give_string(render_closure_report(&closure), out),
            Err(e) => {
                set_error(&e.to_string());
                MsgpipeStatus::NotFound
            }
        }
    })
}

/// Best-effort inline `target` and return report text plus the inlined
/// function source.
///
/// # Safety
/// `ws` must be a live workspace handle; `target` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_inline(
    ws: *const MsgpipeWorkspace,
    target: *const c_char,
    out: *mut *mut c_char,
) -> MsgpipeStatus {
    guarded(|| {
        if ws.is_null() {
            set_error("null workspace");
            return MsgpipeStatus::NullArgument;
        }
        let target = match read_str(target).and_then(|t| parse_target_str(t)) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let closure = match slice(&(*ws).inner, &target) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return MsgpipeStatus::NotFound;
            }
        };
        let report = inline_best_effort(&(*ws).inner, &closure);
        let text = format!(
            "{}{}",
            report.render(),
            pretty_print_function(&report.result)
        );
        give_string(text, out)
    })
}

/// Canonically pretty-print the module named `module_name`.
///
/// # Safety
/// `ws` must be a live workspace handle; `module_name` NUL-terminated;
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_pretty_print_module(
    ws: *const MsgpipeWorkspace,
    module_name: *const c_char,
    out: *mut *mut c_char,
) -> MsgpipeStatus {
    guarded(|| {
        if ws.is_null() {
            set_error("null workspace");
            return MsgpipeStatus::NullArgument;
        }
        let name = match read_str(module_name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match (*ws).inner.module(name) {
            Some(m) => give_string(pretty_print(m), out),
            None => {
                set_error(&format!("module `{name}` not found"));
                MsgpipeStatus::NotFound
            }
        }
    })
}

/// Verify Move source with the mock prover. `rules` holds
/// `pattern<TAB>verdict<TAB>diagnostic` lines; pass an empty string for the
/// default everything-passes ruleset. The verdict line plus diagnostics are
/// returned as text.
///
/// # Safety
/// `source` and `rules` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_verify_mock(
    source: *const c_char,
    rules: *const c_char,
    out: *mut *mut c_char,
) -> MsgpipeStatus {
    guarded(|| {
        let source = match read_str(source) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let rules_text = match read_str(rules) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let rules = match parse_mock_rules(rules_text) {
            Ok(r) => r,
            Err(e) => {
                set_error(&e.to_string());
                return MsgpipeStatus::ParseError;
            }
        };
        let config = ProverConfig::mock(rules);
        match verify(source, &config) {
            Ok(v) => {
                let mut text = format!("{}\n", v.kind);
                for d in &v.diagnostics {
                    text.push_str(d);
                    text.push('\n');
                }
                give_string(text, out)
            }
            Err(e) => {
                set_error(&e.to_string());
                MsgpipeStatus::ProverError
            }
        }
    })
}

/// Mutation coverage of a spec (snippet syntax) for `target`, scored with the
/// mock prover; returns the rendered report.
///
/// # Safety
/// `ws` must be a live workspace handle; `target`, `spec_text`, and `rules`
/// NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_coverage(
    ws: *const MsgpipeWorkspace,
    target: *const c_char,
    spec_text: *const c_char,
    rules: *const c_char,
    seed: c_ulonglong,
    mutants: c_ulonglong,
    out: *mut *mut c_char,
) -> MsgpipeStatus {
    guarded(|| {
        if ws.is_null() {
            set_error("null workspace");
            return MsgpipeStatus::NullArgument;
        }
        let target = match read_str(target).and_then(|t| parse_target_str(t)) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec_text = match read_str(spec_text) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let rules_text = match read_str(rules) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let f = match (*ws).inner.function(&target) {
            Some(f) => f.clone(),
            None => {
                set_error(&format!("target `{target}` not found"));
                return MsgpipeStatus::NotFound;
            }
        };
        let (bindings, clauses, helpers) =
            match msgpipe::frontend::parse_spec_snippet(spec_text) {
                Ok(parts) => parts,
                Err(e) => {
                    set_error(&e.to_string());
                    return MsgpipeStatus::ParseError;
                }
            };
        let mut spec = msgpipe::frontend::SpecBlock::empty(&target.name);
        spec.bindings = bindings;
        spec.clauses = clauses;
        spec.helper_funs = helpers;
        let prover = match parse_mock_rules(rules_text) {
            Ok(r) => ProverConfig::mock(r),
            Err(e) => {
                set_error(&e.to_string());
                return MsgpipeStatus::ParseError;
            }
        };
        let sampled = match mutate(&(*ws).inner, &target.module, &f, seed, mutants as usize) {
            Ok(m) => m,
            Err(e) => {
                set_error(&e.to_string());
                return MsgpipeStatus::ParseError;
            }
        };
        match measure(
            &(*ws).inner,
            &target.module,
            &target.name,
            &spec,
            sampled,
            &prover,
        ) {
            Ok(report) => give_string(report.render(), out),
            Err(e) => {
                set_error(&e.to_string());
                MsgpipeStatus::ProverError
            }
        }
    })
}

/// Release a string returned by any msgpipe call. NULL is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned through a msgpipe out-parameter
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msgpipe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    const SRC: &str = "module 0x1::coin {\n    struct Balance has key {\n        value: u64,\n    }\n\n    public fun transfer(from: address, to: address, amount: u64) acquires Balance {\n        withdraw(from, amount);\n        deposit(to, amount);\n    }\n\n    fun withdraw(addr: address, amount: u64) acquires Balance {\n        let b = borrow_global_mut<Balance>(addr);\n        assert!(b.value >= amount, 1);\n        b.value = b.value - amount;\n    }\n\n    fun deposit(addr: address, amount: u64) acquires Balance {\n        let b = borrow_global_mut<Balance>(addr);\n        b.value = b.value + amount;\n    }\n}\n";

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn parse_ws(src: &str) -> *mut MsgpipeWorkspace {
        let mut ws: *mut MsgpipeWorkspace = ptr::null_mut();
        let status = unsafe { msgpipe_workspace_parse(cstr(src).as_ptr(), &mut ws) };
        assert_eq!(status, MsgpipeStatus::Ok);
        assert!(!ws.is_null());
        ws
    }

    fn take_string(p: *mut c_char) -> String {
        assert!(!p.is_null());
        let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
        unsafe { msgpipe_string_free(p) };
        s
    }

    #[test]
    fn parse_and_free_roundtrip() {
        let ws = parse_ws(SRC);
        assert_eq!(unsafe { msgpipe_workspace_module_count(ws) }, 1);
        unsafe { msgpipe_workspace_free(ws) };
    }

    #[test]
    fn parse_error_reports_status_and_message() {
        let mut ws: *mut MsgpipeWorkspace = ptr::null_mut();
        let status =
            unsafe { msgpipe_workspace_parse(cstr("module oops").as_ptr(), &mut ws) };
        assert_eq!(status, MsgpipeStatus::ParseError);
        assert!(ws.is_null());
        let msg = unsafe { CStr::from_ptr(msgpipe_last_error_message()) };
        assert!(!msg.to_str().unwrap().is_empty());
    }

    #[test]
    fn null_arguments_are_rejected_not_crashed() {
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(
            unsafe { msgpipe_workspace_parse(ptr::null(), ptr::null_mut()) },
            MsgpipeStatus::NullArgument
        );
        assert_eq!(
            unsafe { msgpipe_analyze(ptr::null(), cstr("a::b").as_ptr(), &mut out) },
            MsgpipeStatus::NullArgument
        );
        unsafe { msgpipe_string_free(ptr::null_mut()) };
        unsafe { msgpipe_workspace_free(ptr::null_mut()) };
    }

    #[test]
    fn analyze_renders_closure() {
        let ws = parse_ws(SRC);
        let mut out: *mut c_char = ptr::null_mut();
        let status =
            unsafe { msgpipe_analyze(ws, cstr("coin::transfer").as_ptr(), &mut out) };
        assert_eq!(status, MsgpipeStatus::Ok);
        let text = take_string(out);
        assert!(text.contains("coin::withdraw"));
        assert!(text.contains("coin::deposit"));
        unsafe { msgpipe_workspace_free(ws) };
    }

    #[test]
    fn analyze_unknown_target_is_not_found() {
        let ws = parse_ws(SRC);
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { msgpipe_analyze(ws, cstr("coin::nope").as_ptr(), &mut out) };
        assert_eq!(status, MsgpipeStatus::NotFound);
        assert!(out.is_null());
        unsafe { msgpipe_workspace_free(ws) };
    }

    #[test]
    fn inline_returns_report_and_source() {
        let ws = parse_ws(SRC);
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { msgpipe_inline(ws, cstr("coin::transfer").as_ptr(), &mut out) };
        assert_eq!(status, MsgpipeStatus::Ok);
        let text = take_string(out);
        assert!(text.contains("inlined coin::withdraw"));
        assert!(text.contains("borrow_global_mut<Balance>"));
        unsafe { msgpipe_workspace_free(ws) };
    }

    #[test]
    fn verify_mock_applies_rules() {
        let mut out: *mut c_char = ptr::null_mut();
        let rules = "withdraw\tcounterexample\terror: post-condition does not hold\n";
        let status = unsafe {
            msgpipe_verify_mock(cstr(SRC).as_ptr(), cstr(rules).as_ptr(), &mut out)
        };
        assert_eq!(status, MsgpipeStatus::Ok);
        let text = take_string(out);
        assert!(text.starts_with("counterexample"));

        let status = unsafe {
            msgpipe_verify_mock(cstr(SRC).as_ptr(), cstr("").as_ptr(), &mut out)
        };
        assert_eq!(status, MsgpipeStatus::Ok);
        assert!(take_string(out).starts_with("pass"));
    }

    #[test]
    fn coverage_reports_ratio() {
        let ws = parse_ws(SRC);
        let mut out: *mut c_char = ptr::null_mut();
        let spec = "ensures global<Balance>(addr).value == old(global<Balance>(addr).value) + amount;\n";
        let status = unsafe {
            msgpipe_coverage(
                ws,
                cstr("coin::deposit").as_ptr(),
                cstr(spec).as_ptr(),
                cstr("").as_ptr(),
                0,
                4,
                &mut out,
            )
        };
        assert_eq!(status, MsgpipeStatus::Ok);
        let text = take_string(out);
        assert!(text.contains("coverage:"));
        unsafe { msgpipe_workspace_free(ws) };
    }

    #[test]
    fn utf8_violation_is_flagged() {
        let bytes: [u8; 3] = [0xff, 0xfe, 0x00];
        let mut ws: *mut MsgpipeWorkspace = ptr::null_mut();
        let status = unsafe {
            msgpipe_workspace_parse(bytes.as_ptr() as *const c_char, &mut ws)
        };
        assert_eq!(status, MsgpipeStatus::InvalidUtf8);
    }
}
