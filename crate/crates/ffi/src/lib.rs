//! C ABI over the elicitation engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`PeStatus`];
//! on failure [`pe_last_error_message`] describes the error for the calling
//! thread. Panics are caught at the boundary and reported as
//! [`PeStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use prefelicit::dataset::{read_csv, DatasetConfig};
use prefelicit::model::{PerformanceTable, PreferenceStatement};
use prefelicit::session::{session_seed, Session, SessionConfig, SessionStatus};
use prefelicit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidTable = 3,
    Conflict = 4,
    Done = 5,
    BufferTooSmall = 6,
    Numerical = 7,
    Io = 8,
    Internal = 9,
    Panic = 10,
}

/// Opaque performance table.
pub struct PeTable {
    table: PerformanceTable,
}

/// Opaque elicitation session.
pub struct PeSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> PeStatus {
    match e {
        Error::InvalidTable(_) => PeStatus::InvalidTable,
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } => PeStatus::InvalidArgument,
        Error::Conflict(_) | Error::DuplicatePair(..) | Error::SessionNotFound(_) => PeStatus::Conflict,
        Error::Saturated => PeStatus::Done,
        Error::NonFiniteGradient { .. } | Error::Infeasible | Error::Lp(_) => PeStatus::Numerical,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => PeStatus::Io,
    }
}

fn fail(status: PeStatus, msg: impl Into<String>) -> PeStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PeStatus>) -> PeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PeStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PeStatus::Panic, msg)
        }
    }
}

fn engine(e: Error) -> PeStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PeStatus> {
    p.as_ref()
        .ok_or_else(|| fail(PeStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PeStatus> {
    p.as_mut()
        .ok_or_else(|| fail(PeStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PeStatus> {
    if p.is_null() {
        return Err(fail(PeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies `data` into `out` when it fits; always reports the needed length.
unsafe fn copy_out(data: &[f64], out: *mut f64, len: usize, required: *mut usize) -> Result<(), PeStatus> {
    if let Some(r) = required.as_mut() {
        *r = data.len();
    }
    if len < data.len() || out.is_null() {
        return Err(fail(
            PeStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", data.len()),
        ));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    Ok(())
}

/// Message for the last failed call on this thread. Valid until the next
/// call on the same thread; empty after a success.
#[no_mangle]
pub extern "C" fn pe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a CSV table (`id` column then criterion columns, all gains).
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_table_from_csv(csv: *const c_char, out: *mut *mut PeTable) -> PeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let text = c_str(csv, "csv")?;
        let table = read_csv(text.as_bytes(), &DatasetConfig::default()).map_err(engine)?;
        *out = Box::into_raw(Box::new(PeTable { table }));
        Ok(())
    })
}

/// Builds a table on unit scales from `n × m` row-major performances.
///
/// # Safety
/// `values` must point to `n * m` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_table_from_rows(
    values: *const f64,
    n: usize,
    m: usize,
    subintervals: usize,
    out: *mut *mut PeTable,
) -> PeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        deref(values, "values")?;
        let flat = std::slice::from_raw_parts(values, n * m);
        let rows = flat.chunks(m.max(1)).map(<[f64]>::to_vec).collect();
        let table = PerformanceTable::from_unit_rows(rows, subintervals).map_err(engine)?;
        *out = Box::into_raw(Box::new(PeTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pe_table_n_alternatives(table: *const PeTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.n_alternatives())
}

/// # Safety
/// `table` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pe_table_free(table: *mut PeTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Starts a session and selects its first question. `config_json` may be
/// null for defaults; `seed` overrides any seed in it.
///
/// # Safety
/// `table` must be a live table handle, `config_json` null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_session_new(
    table: *const PeTable,
    horizon: usize,
    seed: u64,
    config_json: *const c_char,
    out: *mut *mut PeSession,
) -> PeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let table = deref(table, "table")?.table.clone();
        let mut config: SessionConfig = if config_json.is_null() {
            SessionConfig::default()
        } else {
            serde_json::from_str(c_str(config_json, "config_json")?)
                .map_err(|e| fail(PeStatus::InvalidArgument, format!("config: {e}")))?
        };
        config.seed = Some(seed);
        let seed = session_seed(0, "ffi", config.seed);
        let mut session = Session::new("ffi".into(), table, horizon, config, seed, 0).map_err(|errs| {
            let msg: Vec<String> = errs.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
            fail(PeStatus::InvalidArgument, msg.join("; "))
        })?;
        session.run_pending(0).map_err(engine)?;
        *out = Box::into_raw(Box::new(PeSession { session }));
        Ok(())
    })
}

/// Writes the pending question. Returns `Done` once the horizon is reached.
///
/// # Safety
/// `session` must be a live handle; `first` and `second` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pe_session_question(
    session: *const PeSession,
    first: *mut usize,
    second: *mut usize,
) -> PeStatus {
    guard(|| {
        let s = &deref(session, "session")?.session;
        let (first, second) = (deref_mut(first, "first")?, deref_mut(second, "second")?);
        match s.pending_question {
            Some(p) => {
                *first = p.first;
                *second = p.second;
                Ok(())
            }
            None => Err(fail(PeStatus::Done, "no question pending")),
        }
    })
}

/// Answers the pending question, refits, and selects the next one. Blocks
/// for the duration of the fit.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pe_session_answer(session: *mut PeSession, preferred: usize, other: usize) -> PeStatus {
    guard(|| {
        let s = &mut deref_mut(session, "session")?.session;
        let st = PreferenceStatement::new(preferred, other).map_err(engine)?;
        s.answer_blocking(st, 0).map_err(engine)
    })
}

/// Number of answers recorded so far.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pe_session_answered(session: *const PeSession) -> usize {
    session.as_ref().map_or(0, |s| s.session.answered())
}

/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pe_session_is_done(session: *const PeSession) -> bool {
    session
        .as_ref()
        .is_some_and(|s| s.session.status == SessionStatus::Done)
}

/// Copies the posterior Dirichlet parameters. `*required` receives the
/// dimension even when the buffer is too small.
///
/// # Safety
/// `session` must be a live handle; `out` must hold `len` doubles;
/// `required` may be null.
#[no_mangle]
pub unsafe extern "C" fn pe_session_posterior(
    session: *const PeSession,
    out: *mut f64,
    len: usize,
    required: *mut usize,
) -> PeStatus {
    guard(|| {
        let s = &deref(session, "session")?.session;
        copy_out(s.posterior.as_slice(), out, len, required)
    })
}

/// Copies the row-major `n × n` pairwise winning index matrix.
///
/// # Safety
/// As for [`pe_session_posterior`].
#[no_mangle]
pub unsafe extern "C" fn pe_session_pwi(
    session: *const PeSession,
    out: *mut f64,
    len: usize,
    required: *mut usize,
) -> PeStatus {
    guard(|| {
        let s = &deref(session, "session")?.session;
        let summary = s
            .summary
            .as_ref()
            .ok_or_else(|| fail(PeStatus::Internal, "session has no posterior summary"))?;
        let flat: Vec<f64> = summary.pwi.iter().flatten().copied().collect();
        copy_out(&flat, out, len, required)
    })
}

/// Full transcript as JSON. Free the result with [`pe_string_free`].
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_session_export_json(session: *const PeSession, out: *mut *mut c_char) -> PeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let s = &deref(session, "session")?.session;
        let json = serde_json::to_string(&s.transcript()).map_err(|e| engine(e.into()))?;
        *out = CString::new(json)
            .map_err(|e| fail(PeStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pe_session_free(session: *mut PeSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn pe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
