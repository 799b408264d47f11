//! C ABI over `iecode`.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`IecStatus`]; `IEC_STATUS_OK` is 0.
//! * Results come back through out-pointers as NUL-terminated UTF-8 JSON,
//!   owned by the caller and released with [`iec_string_free`].
//! * Schemas are opaque [`IecSchema`] handles from [`iec_schema_from_toml`],
//!   released with [`iec_schema_free`]. A handle is immutable and may be shared
//!   across threads.
//! * On failure, [`iec_last_error`] describes the most recent error on the
//!   calling thread.
//! * Panics never cross the boundary; they surface as `IEC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iecode::codegen::{render_prompt, RenderOptions};
use iecode::outparse::parse_result;
use iecode::regularize::RegularizationTrace;
use iecode::schema::{validate_schema, Annotation, Document, TaskSchema};
use iecode::score::{MatchPolicy, Scorer};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IecStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Schema text did not parse or broke a schema rule.
    SchemaError = 3,
    /// A JSON argument did not parse or had the wrong shape.
    InvalidJson = 4,
    /// The document could not be rendered (invalid gold, bad characters).
    RenderError = 5,
    /// Unknown policy name or a policy the task kind does not allow.
    InvalidArgument = 6,
    Panic = 99,
}

/// Opaque, immutable task schema.
pub struct IecSchema(TaskSchema);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(IecStatus, String);

fn fail<T>(status: IecStatus, msg: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

/// Runs `f`, recording any error and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IecStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IecStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(IecStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(IecStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn schema_arg<'a>(p: *const IecSchema) -> Result<&'a TaskSchema, Failure> {
    p.as_ref()
        .map(|s| &s.0)
        .ok_or(Failure(IecStatus::NullArgument, "schema is null".into()))
}

fn json_arg<T: serde::de::DeserializeOwned>(s: &str, name: &str) -> Result<T, Failure> {
    serde_json::from_str(s).or_else(|e| fail(IecStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn write_out(out: *mut *mut c_char, json: String) -> Result<(), Failure> {
    if out.is_null() {
        return fail(IecStatus::NullArgument, "out is null");
    }
    let c = CString::new(json).or_else(|_| fail(IecStatus::InvalidJson, "output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Parses a TOML schema and checks it. On success `*out` owns a new handle.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iec_schema_from_toml(toml: *const c_char, out: *mut *mut IecSchema) -> IecStatus {
    guard(|| {
        if out.is_null() {
            return fail(IecStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let schema = TaskSchema::from_toml_str(text).or_else(|e| fail(IecStatus::SchemaError, e))?;
        let violations = validate_schema(&schema);
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return fail(IecStatus::SchemaError, msg.join("; "));
        }
        *out = Box::into_raw(Box::new(IecSchema(schema)));
        Ok(())
    })
}

/// Releases a schema handle. Null is a no-op.
///
/// # Safety
/// `schema` must come from [`iec_schema_from_toml`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn iec_schema_free(schema: *mut IecSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Number of labels in the schema, or 0 for a null handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iec_schema_label_count(schema: *const IecSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.0.labels.len())
}

/// Renders a document (`{doc_id, text, annotations}`) into a compiled example
/// (`{doc_id, prompt, result, split_offset, trace}`). `options_json` may be
/// null for the defaults.
///
/// # Safety
/// Pointers must be valid; string arguments NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn iec_render_prompt(
    schema: *const IecSchema,
    document_json: *const c_char,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> IecStatus {
    guard(|| {
        let schema = schema_arg(schema)?;
        let doc: Document = json_arg(str_arg(document_json, "document_json")?, "document_json")?;
        let opts: RenderOptions = match opt_str_arg(options_json, "options_json")? {
            Some(s) => json_arg(s, "options_json")?,
            None => RenderOptions::default(),
        };
        let ex = render_prompt(schema, &doc, &opts, &RegularizationTrace::identity(schema, 0))
            .or_else(|e| fail(IecStatus::RenderError, e))?;
        write_out(out, serde_json::to_string(&ex).expect("serializable"))
    })
}

/// Parses model output into a parse outcome (`{status, annotations,
/// hallucinations, ...}`). Unparseable text is a successful call whose
/// outcome has `status = "unparseable"`.
///
/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn iec_parse_result(
    schema: *const IecSchema,
    text: *const c_char,
    out: *mut *mut c_char,
) -> IecStatus {
    guard(|| {
        let schema = schema_arg(schema)?;
        let outcome = parse_result(str_arg(text, "text")?, schema);
        write_out(out, serde_json::to_string(&outcome).expect("serializable"))
    })
}

/// Scores two JSON arrays of annotations under `policy` (`exact`,
/// `category` or `partial`) and returns `{per_label, micro}`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn iec_score(
    schema: *const IecSchema,
    gold_json: *const c_char,
    pred_json: *const c_char,
    policy: *const c_char,
    out: *mut *mut c_char,
) -> IecStatus {
    guard(|| {
        let schema = schema_arg(schema)?;
        let gold: Vec<Annotation> = json_arg(str_arg(gold_json, "gold_json")?, "gold_json")?;
        let pred: Vec<Annotation> = json_arg(str_arg(pred_json, "pred_json")?, "pred_json")?;
        let policy: MatchPolicy = str_arg(policy, "policy")?
            .parse()
            .or_else(|e| fail(IecStatus::InvalidArgument, e))?;
        let scorer = Scorer::for_schema(policy, schema).or_else(|e| fail(IecStatus::InvalidArgument, e))?;
        let report = scorer.score(&gold, &pred);
        let json = serde_json::json!({ "per_label": report.per_label, "micro": report.micro() });
        write_out(out, json.to_string())
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread; do not
/// free it.
#[no_mangle]
pub extern "C" fn iec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned through an out-pointer. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn iec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn iec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
