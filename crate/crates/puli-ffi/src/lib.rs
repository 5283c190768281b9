//! C ABI over the puli engine: opaque handles, integer status codes, and
//! JSON strings at the boundary so any language with a C FFI can load a
//! corpus, load trained artifacts, and drive a streaming session.
//!
//! Conventions:
//! - Functions return [`PuliStatus`]; outputs go through out-pointers.
//! - Strings returned through out-pointers are heap-allocated and must be
//!   released with `puli_string_free`.
//! - Handles are freed with their matching `*_free` function; passing null
//!   to a free function is a no-op.
//! - On any non-Ok status, `puli_last_error` returns a message describing
//!   the failure for the current thread.
//!
//! The matching header lives in `include/puli.h` (kept by hand; a
//! `cbindgen.toml` is provided for regeneration where cbindgen is
//! available).

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use libc::{c_char, c_double, c_int};

use puli::corpus::{self, Corpus, ProjectProposal};
use puli::memory::ExtractiveSummarizer;
use puli::metrics;
use puli::runtime::{GateMode, Session};
use puli::trainloop::{self, LoadedArtifacts};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuliStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Backend = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn guard<F: FnOnce() -> PuliStatus>(f: F) -> PuliStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PuliStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, PuliStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PuliStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        PuliStatus::InvalidUtf8
    })
}

fn give_string(out: *mut *mut c_char, value: String) -> PuliStatus {
    match CString::new(value) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            PuliStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            PuliStatus::Parse
        }
    }
}

/// Opaque corpus handle.
pub struct PuliCorpus {
    inner: Corpus,
}

/// Opaque trained-artifacts handle (policy + surrogate backends).
pub struct PuliArtifacts {
    inner: Arc<LoadedArtifacts>,
}

/// Opaque streaming session handle. Sessions are not thread-safe; drive one
/// session from one thread.
pub struct PuliSession {
    inner: Session,
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn puli_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

/// Message for the last error on this thread, or null if none. Free with
/// `puli_string_free`.
#[no_mangle]
pub extern "C" fn puli_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `ptr` must have been returned by a puli function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn puli_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Loads a corpus file into an opaque handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn puli_corpus_load(
    path: *const c_char,
    out: *mut *mut PuliCorpus,
) -> PuliStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return PuliStatus::NullArgument;
        }
        let path = match read_str(path) {
            Ok(path) => path,
            Err(status) => return status,
        };
        match corpus::load_corpus(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PuliCorpus { inner }));
                PuliStatus::Ok
            }
            Err(error) => {
                set_error(error.to_string());
                PuliStatus::Parse
            }
        }
    })
}

/// # Safety
/// `corpus` must come from `puli_corpus_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn puli_corpus_free(corpus: *mut PuliCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Corpus statistics as a JSON string.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_corpus_stats_json(
    corpus: *const PuliCorpus,
    out: *mut *mut c_char,
) -> PuliStatus {
    guard(|| {
        if corpus.is_null() || out.is_null() {
            set_error("null argument");
            return PuliStatus::NullArgument;
        }
        let stats = corpus::corpus_stats(&(*corpus).inner);
        match serde_json::to_string(&stats) {
            Ok(json) => give_string(out, json),
            Err(error) => {
                set_error(error.to_string());
                PuliStatus::Parse
            }
        }
    })
}

unsafe fn overlap_metric(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut c_double,
    f: fn(&metrics::TokenSeq, &metrics::TokenSeq) -> Result<f64, metrics::MetricsError>,
) -> PuliStatus {
    if out.is_null() {
        set_error("null out pointer");
        return PuliStatus::NullArgument;
    }
    let candidate = match read_str(candidate) {
        Ok(text) => text,
        Err(status) => return status,
    };
    let reference = match read_str(reference) {
        Ok(text) => text,
        Err(status) => return status,
    };
    match f(&metrics::tokenize(candidate), &metrics::tokenize(reference)) {
        Ok(score) => {
            *out = score;
            PuliStatus::Ok
        }
        Err(error) => {
            set_error(error.to_string());
            PuliStatus::InvalidArgument
        }
    }
}

/// ROUGE-1 F1 between two texts under the shared tokenizer.
///
/// # Safety
/// Both strings must be valid NUL-terminated UTF-8; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_rouge1(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut c_double,
) -> PuliStatus {
    guard(|| overlap_metric(candidate, reference, out, metrics::rouge1))
}

/// BLEU-1 between two texts under the shared tokenizer.
///
/// # Safety
/// Both strings must be valid NUL-terminated UTF-8; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_bleu1(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut c_double,
) -> PuliStatus {
    guard(|| overlap_metric(candidate, reference, out, metrics::bleu1))
}

/// Loads trained artifacts (policy checkpoint plus surrogate backends) from
/// a training output directory.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_artifacts_load(
    dir: *const c_char,
    out: *mut *mut PuliArtifacts,
) -> PuliStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return PuliStatus::NullArgument;
        }
        let dir = match read_str(dir) {
            Ok(dir) => dir,
            Err(status) => return status,
        };
        match trainloop::load_artifacts(dir) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PuliArtifacts {
                    inner: Arc::new(inner),
                }));
                PuliStatus::Ok
            }
            Err(error) => {
                set_error(error.to_string());
                PuliStatus::Io
            }
        }
    })
}

/// # Safety
/// `artifacts` must come from `puli_artifacts_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn puli_artifacts_free(artifacts: *mut PuliArtifacts) {
    if !artifacts.is_null() {
        drop(Box::from_raw(artifacts));
    }
}

/// Gate selection for `puli_session_new`.
pub const PULI_GATE_OBSERVER: c_int = 0;
pub const PULI_GATE_COORDINATOR: c_int = 1;
pub const PULI_GATE_SILENT: c_int = 2;

/// Opens a streaming session for one dialogue. `proposal_json` carries the
/// project proposal as JSON with fields id, goal, background, datasets_desc,
/// golden_conclusion (optional), roles.
///
/// # Safety
/// `artifacts` must be a live handle; `proposal_json` must be valid
/// NUL-terminated UTF-8; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_session_new(
    artifacts: *const PuliArtifacts,
    proposal_json: *const c_char,
    gate: c_int,
    out: *mut *mut PuliSession,
) -> PuliStatus {
    guard(|| {
        if artifacts.is_null() || out.is_null() {
            set_error("null argument");
            return PuliStatus::NullArgument;
        }
        let proposal_json = match read_str(proposal_json) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let proposal: ProjectProposal = match serde_json::from_str(proposal_json) {
            Ok(proposal) => proposal,
            Err(error) => {
                set_error(format!("bad proposal JSON: {error}"));
                return PuliStatus::Parse;
            }
        };
        let gate = match gate {
            PULI_GATE_OBSERVER => GateMode::Observer,
            PULI_GATE_COORDINATOR => GateMode::Coordinator,
            PULI_GATE_SILENT => GateMode::Silent,
            other => {
                set_error(format!("unknown gate mode {other}"));
                return PuliStatus::InvalidArgument;
            }
        };
        let loaded = (*artifacts).inner.clone();
        let summarizer = ExtractiveSummarizer::for_proposal(&proposal);
        let session = Session::new(
            proposal,
            Box::new(summarizer),
            Arc::new(loaded.observer.clone()),
            Arc::new(loaded.presenter.clone()),
            Some(loaded.policy.clone()),
            gate,
        );
        *out = Box::into_raw(Box::new(PuliSession { inner: session }));
        PuliStatus::Ok
    })
}

/// Feeds the next round (in arrival order) through the gate. On success,
/// `out_events_json` receives a JSON array of this round's events
/// (round_arrived, decision, optional intervention, latency).
///
/// # Safety
/// `session` must be a live handle owned by this thread; `role` and `text`
/// must be valid NUL-terminated UTF-8; `out_events_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn puli_session_push_round(
    session: *mut PuliSession,
    role: *const c_char,
    text: *const c_char,
    out_events_json: *mut *mut c_char,
) -> PuliStatus {
    guard(|| {
        if session.is_null() || out_events_json.is_null() {
            set_error("null argument");
            return PuliStatus::NullArgument;
        }
        let role = match read_str(role) {
            Ok(role) => role,
            Err(status) => return status,
        };
        let text = match read_str(text) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let session = &mut (*session).inner;
        let round = corpus::DialogueRound {
            dialogue_id: session.proposal().id.clone(),
            t: session.arrived(),
            role: role.to_string(),
            text: text.to_string(),
            label: corpus::RoundLabel::Unlabeled,
        };
        match session.push_round(&round) {
            Ok(events) => match serde_json::to_string(&events) {
                Ok(json) => give_string(out_events_json, json),
                Err(error) => {
                    set_error(error.to_string());
                    PuliStatus::Parse
                }
            },
            Err(error) => {
                set_error(error.to_string());
                PuliStatus::Backend
            }
        }
    })
}

/// Number of interventions injected so far.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn puli_session_intervention_count(session: *const PuliSession) -> c_int {
    if session.is_null() {
        return -1;
    }
    (*session).inner.intervention_count() as c_int
}

/// # Safety
/// `session` must come from `puli_session_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn puli_session_free(session: *mut PuliSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}
