//! C ABI over the parkbarrier core: frame codec, power arithmetic and an
//! in-process cloud service.
//!
//! Every fallible function returns a [`PbStatus`]. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`pb_string_free`]. Handles are opaque and released with their `_free`
//! function; passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use parkbarrier::cloud::{AlarmAction, CloudConfig, CloudError, CloudService};
use parkbarrier::detection::head_filters;
use parkbarrier::power::{savings_vs_always_on, PowerModel};
use parkbarrier::protocol::{crc16_ccitt, FrameCodec, FrameDecoder, TelemetryMessage};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    BufferTooSmall = 4,
    EncodeFailed = 5,
    SchemaViolation = 6,
    UnknownSpace = 7,
    UnknownAlarm = 8,
    IllegalTransition = 9,
    Internal = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PbStatus, msg: impl Into<String>) -> PbStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PbStatus) -> PbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PbStatus::Internal, "panic inside parkbarrier"))
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, PbStatus> {
    if p.is_null() {
        return Err(fail(PbStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PbStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn cloud_status(e: &CloudError) -> PbStatus {
    match e {
        CloudError::UnknownSpace(_) | CloudError::TerminalMismatch { .. } => PbStatus::UnknownSpace,
        CloudError::UnknownAlarm(_) => PbStatus::UnknownAlarm,
        CloudError::IllegalTransition { .. } | CloudError::OrderClosed(_) => PbStatus::IllegalTransition,
        CloudError::Schema(_) | CloudError::WrongType { .. } => PbStatus::SchemaViolation,
        CloudError::Log(_) => PbStatus::Internal,
    }
}

/// Static description of a status code. Never NULL; do not free.
#[no_mangle]
pub extern "C" fn pb_status_str(status: PbStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PbStatus::Ok => c"ok",
        PbStatus::NullPointer => c"null pointer",
        PbStatus::InvalidUtf8 => c"invalid UTF-8",
        PbStatus::InvalidArgument => c"invalid argument",
        PbStatus::BufferTooSmall => c"buffer too small",
        PbStatus::EncodeFailed => c"encode failed",
        PbStatus::SchemaViolation => c"schema violation",
        PbStatus::UnknownSpace => c"unknown space",
        PbStatus::UnknownAlarm => c"unknown alarm",
        PbStatus::IllegalTransition => c"illegal transition",
        PbStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Detail for the last failing call on this thread, or NULL. The caller
/// frees the result with `pb_string_free`.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn pb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// CRC16-CCITT-FALSE of `len` bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes, or be NULL with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn pb_crc16(data: *const u8, len: usize) -> u16 {
    if data.is_null() || len == 0 {
        return crc16_ccitt(&[]);
    }
    crc16_ccitt(std::slice::from_raw_parts(data, len))
}

/// Detection head output channels for `classes` classes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_head_filters(classes: u32, out: *mut u32) -> PbStatus {
    guard(|| {
        if out.is_null() {
            return fail(PbStatus::NullPointer, "out is null");
        }
        match head_filters(classes) {
            Ok(v) => {
                *out = v;
                PbStatus::Ok
            }
            Err(e) => fail(PbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Fractional savings of `avg_w` against an always-on draw of
/// `always_on_w`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_savings_vs_always_on(avg_w: f64, always_on_w: f64, out: *mut f64) -> PbStatus {
    guard(|| {
        if out.is_null() {
            return fail(PbStatus::NullPointer, "out is null");
        }
        let model = PowerModel { always_on_w, ..PowerModel::default() };
        match savings_vs_always_on(avg_w, &model) {
            Ok(v) => {
                *out = v;
                PbStatus::Ok
            }
            Err(e) => fail(PbStatus::InvalidArgument, e.to_string()),
        }
    })
}

fn parse_message(json: &str) -> Result<TelemetryMessage, PbStatus> {
    let v: serde_json::Value =
        serde_json::from_str(json).map_err(|e| fail(PbStatus::SchemaViolation, e.to_string()))?;
    TelemetryMessage::from_value(&v).map_err(|e| fail(PbStatus::SchemaViolation, e.to_string()))
}

/// Frame a JSON telemetry message into `out`. On `BufferTooSmall`,
/// `written` holds the required size.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` must hold `cap` writable
/// bytes, `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pb_encode_json(
    json: *const c_char,
    max_payload: usize,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> PbStatus {
    guard(|| {
        if written.is_null() || (out.is_null() && cap > 0) {
            return fail(PbStatus::NullPointer, "out or written is null");
        }
        let msg = match read_str(json).and_then(parse_message) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let frame = match (FrameCodec { max_payload }).encode(&msg) {
            Ok(f) => f,
            Err(e) => return fail(PbStatus::EncodeFailed, e.to_string()),
        };
        *written = frame.len();
        if frame.len() > cap {
            return fail(PbStatus::BufferTooSmall, format!("need {} bytes", frame.len()));
        }
        ptr::copy_nonoverlapping(frame.as_ptr(), out, frame.len());
        PbStatus::Ok
    })
}

/// Streaming frame decoder.
pub struct PbDecoder {
    inner: FrameDecoder,
}

/// Returns NULL if `max_payload` is zero.
#[no_mangle]
pub extern "C" fn pb_decoder_new(max_payload: usize) -> *mut PbDecoder {
    if max_payload == 0 || max_payload > u16::MAX as usize {
        set_error("max_payload must be in 1..=65535");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(PbDecoder { inner: FrameDecoder::new(FrameCodec { max_payload }) }))
}

/// # Safety
/// `dec` must be NULL or a handle from `pb_decoder_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn pb_decoder_free(dec: *mut PbDecoder) {
    if !dec.is_null() {
        drop(Box::from_raw(dec));
    }
}

/// Feed bytes. `messages_json` receives a JSON array of every complete
/// message; `errors` the number of decode errors in this chunk. Partial
/// frames are kept for the next call.
///
/// # Safety
/// `dec` must be a live handle, `data` must hold `len` readable bytes and
/// the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pb_decoder_feed(
    dec: *mut PbDecoder,
    data: *const u8,
    len: usize,
    messages_json: *mut *mut c_char,
    errors: *mut usize,
) -> PbStatus {
    guard(|| {
        if dec.is_null() || messages_json.is_null() || errors.is_null() || (data.is_null() && len > 0) {
            return fail(PbStatus::NullPointer, "null argument");
        }
        let chunk = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let out = (*dec).inner.feed(chunk);
        *errors = out.errors.len();
        *messages_json = to_c_string(serde_json::to_string(&out.messages).expect("messages serialize"));
        PbStatus::Ok
    })
}

/// Bytes buffered as a possible partial frame.
///
/// # Safety
/// `dec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_decoder_pending(dec: *const PbDecoder) -> usize {
    if dec.is_null() {
        0
    } else {
        (*dec).inner.pending()
    }
}

/// In-process cloud service without persistence.
pub struct PbCloud {
    inner: CloudService,
}

/// Create a service from TOML configuration text, or defaults when
/// `config_toml` is NULL.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_new(config_toml: *const c_char, out: *mut *mut PbCloud) -> PbStatus {
    guard(|| {
        if out.is_null() {
            return fail(PbStatus::NullPointer, "out is null");
        }
        let config = if config_toml.is_null() {
            CloudConfig::default()
        } else {
            match read_str(config_toml).map(CloudConfig::from_toml) {
                Ok(Ok(c)) => c,
                Ok(Err(e)) => return fail(PbStatus::InvalidArgument, e.to_string()),
                Err(s) => return s,
            }
        };
        *out = Box::into_raw(Box::new(PbCloud { inner: CloudService::new(config) }));
        PbStatus::Ok
    })
}

/// # Safety
/// `cloud` must be NULL or a handle from `pb_cloud_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_free(cloud: *mut PbCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Submit one JSON message received at `now_ms`. `applied` is false for
/// duplicates and stale reports.
///
/// # Safety
/// `cloud` must be a live handle, `json` NUL-terminated, `applied` valid.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_submit(
    cloud: *mut PbCloud,
    json: *const c_char,
    now_ms: u64,
    applied: *mut bool,
) -> PbStatus {
    guard(|| {
        if cloud.is_null() || applied.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        let msg = match read_str(json).and_then(parse_message) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match (*cloud).inner.submit(&msg, now_ms) {
            Ok(o) => {
                *applied = o.applied;
                PbStatus::Ok
            }
            Err(e) => fail(cloud_status(&e), e.to_string()),
        }
    })
}

/// Run health, persistence-window and illegal-parking checks at `now_ms`.
/// Returns the number of effects produced, or a negative value on a NULL
/// handle.
///
/// # Safety
/// `cloud` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_sweep(cloud: *mut PbCloud, now_ms: u64) -> i64 {
    if cloud.is_null() {
        set_error("cloud is null");
        return -1;
    }
    (*cloud).inner.sweep(now_ms).len() as i64
}

unsafe fn alarm_action(
    cloud: *mut PbCloud,
    id: *const c_char,
    operator: *const c_char,
    now_ms: u64,
    action: AlarmAction,
) -> PbStatus {
    guard(|| {
        if cloud.is_null() {
            return fail(PbStatus::NullPointer, "cloud is null");
        }
        let (id, operator) = match (read_str(id), read_str(operator)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match (*cloud).inner.alarm_transition(id, action, operator, now_ms) {
            Ok(_) => PbStatus::Ok,
            Err(e) => fail(cloud_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `cloud` must be a live handle; `id` and `operator` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_alarm_ack(
    cloud: *mut PbCloud,
    id: *const c_char,
    operator: *const c_char,
    now_ms: u64,
) -> PbStatus {
    alarm_action(cloud, id, operator, now_ms, AlarmAction::Ack)
}

/// # Safety
/// `cloud` must be a live handle; `id` and `operator` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_alarm_resolve(
    cloud: *mut PbCloud,
    id: *const c_char,
    operator: *const c_char,
    now_ms: u64,
) -> PbStatus {
    alarm_action(cloud, id, operator, now_ms, AlarmAction::Resolve)
}

/// Full business state as JSON.
///
/// # Safety
/// `cloud` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_state_json(cloud: *const PbCloud, out: *mut *mut c_char) -> PbStatus {
    guard(|| {
        if cloud.is_null() || out.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        *out = to_c_string(serde_json::to_string((*cloud).inner.state()).expect("state serializes"));
        PbStatus::Ok
    })
}

/// Metrics snapshot as JSON.
///
/// # Safety
/// `cloud` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pb_cloud_metrics_json(cloud: *const PbCloud, out: *mut *mut c_char) -> PbStatus {
    guard(|| {
        if cloud.is_null() || out.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        *out = to_c_string(serde_json::to_string(&(*cloud).inner.metrics()).expect("metrics serialize"));
        PbStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings_are_static() {
        let s = unsafe { CStr::from_ptr(pb_status_str(PbStatus::BufferTooSmall)) };
        assert_eq!(s.to_str().unwrap(), "buffer too small");
    }

    #[test]
    fn null_out_pointer_reports_error() {
        assert_eq!(unsafe { pb_head_filters(1, ptr::null_mut()) }, PbStatus::NullPointer);
        let msg = pb_last_error_message();
        assert!(!msg.is_null());
        unsafe { pb_string_free(msg) };
    }

    #[test]
    fn free_functions_accept_null() {
        unsafe {
            pb_decoder_free(ptr::null_mut());
            pb_cloud_free(ptr::null_mut());
            pb_string_free(ptr::null_mut());
        }
        assert!(pb_decoder_new(0).is_null());
    }
}
