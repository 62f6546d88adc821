use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use parkbarrier_ffi::*;

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { pb_string_free(p) };
    s
}

const REPORT: &str = r#"{"type":"report","sid":"s1","tid":"t1","seq":1,"ts":0,"occ":true,"conf":0.9,"rsn":"visual","dist":40.0,"tilt":0.0,"pwr":0.92}"#;

#[test]
fn arithmetic_entry_points() {
    let mut f = 0;
    assert_eq!(unsafe { pb_head_filters(1, &mut f) }, PbStatus::Ok);
    assert_eq!(f, 18);
    assert_eq!(unsafe { pb_head_filters(80, &mut f) }, PbStatus::Ok);
    assert_eq!(f, 255);
    assert_eq!(unsafe { pb_head_filters(0, &mut f) }, PbStatus::InvalidArgument);
    let mut s = 0.0;
    assert_eq!(unsafe { pb_savings_vs_always_on(1.02, 4.02, &mut s) }, PbStatus::Ok);
    assert!((s - 0.746).abs() < 1e-3);
    assert_eq!(unsafe { pb_savings_vs_always_on(1.0, 0.0, &mut s) }, PbStatus::InvalidArgument);
    assert_eq!(unsafe { pb_crc16(b"123456789".as_ptr(), 9) }, 0x29B1);
}

#[test]
fn encode_then_decode_in_chunks() {
    let json = CString::new(REPORT).unwrap();
    let mut written = 0;
    assert_eq!(
        unsafe { pb_encode_json(json.as_ptr(), 240, ptr::null_mut(), 0, &mut written) },
        PbStatus::BufferTooSmall
    );
    let mut buf = vec![0u8; written];
    assert_eq!(unsafe { pb_encode_json(json.as_ptr(), 240, buf.as_mut_ptr(), buf.len(), &mut written) }, PbStatus::Ok);

    let dec = pb_decoder_new(240);
    let (first, second) = buf.split_at(5);
    let mut out = ptr::null_mut();
    let mut errors = 0;
    assert_eq!(unsafe { pb_decoder_feed(dec, first.as_ptr(), first.len(), &mut out, &mut errors) }, PbStatus::Ok);
    assert_eq!(take_string(out), "[]");
    assert_eq!(unsafe { pb_decoder_pending(dec) }, 5);
    assert_eq!(unsafe { pb_decoder_feed(dec, second.as_ptr(), second.len(), &mut out, &mut errors) }, PbStatus::Ok);
    let msgs: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(msgs[0]["seq"], 1);
    assert_eq!(errors, 0);
    unsafe { pb_decoder_free(dec) };
}

#[test]
fn cloud_handle_round_trip() {
    let cfg = CString::new("[[spaces]]\nspace_id = \"s1\"\nterminal_id = \"t1\"\n").unwrap();
    let mut cloud = ptr::null_mut();
    assert_eq!(unsafe { pb_cloud_new(cfg.as_ptr(), &mut cloud) }, PbStatus::Ok);
    let json = CString::new(REPORT).unwrap();
    let mut applied = false;
    assert_eq!(unsafe { pb_cloud_submit(cloud, json.as_ptr(), 1_000, &mut applied) }, PbStatus::Ok);
    assert!(applied);
    assert_eq!(unsafe { pb_cloud_submit(cloud, json.as_ptr(), 2_000, &mut applied) }, PbStatus::Ok);
    assert!(!applied);
    assert_eq!(unsafe { pb_cloud_sweep(cloud, 20_000) }, 1);

    let alarm = CString::new(
        r#"{"type":"alarm","sid":"s1","tid":"t1","seq":2,"ts":0,"tilt":26.0,"pwr":0.92,"akind":"tilt","sev":"critical"}"#,
    )
    .unwrap();
    assert_eq!(unsafe { pb_cloud_submit(cloud, alarm.as_ptr(), 21_000, &mut applied) }, PbStatus::Ok);
    let id = CString::new("a000001").unwrap();
    let op = CString::new("op").unwrap();
    assert_eq!(unsafe { pb_cloud_alarm_resolve(cloud, id.as_ptr(), op.as_ptr(), 22_000) }, PbStatus::IllegalTransition);
    assert_eq!(unsafe { pb_cloud_alarm_ack(cloud, id.as_ptr(), op.as_ptr(), 22_000) }, PbStatus::Ok);
    assert_eq!(unsafe { pb_cloud_alarm_resolve(cloud, id.as_ptr(), op.as_ptr(), 23_000) }, PbStatus::Ok);
    let missing = CString::new("a999999").unwrap();
    assert_eq!(unsafe { pb_cloud_alarm_ack(cloud, missing.as_ptr(), op.as_ptr(), 0) }, PbStatus::UnknownAlarm);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pb_cloud_state_json(cloud, &mut out) }, PbStatus::Ok);
    let state: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(state["spaces"]["s1"]["business_occ"], true);
    assert_eq!(unsafe { pb_cloud_metrics_json(cloud, &mut out) }, PbStatus::Ok);
    let metrics: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(metrics["occupied"], 1);

    let bad = CString::new(r#"{"type":"report"}"#).unwrap();
    assert_eq!(unsafe { pb_cloud_submit(cloud, bad.as_ptr(), 0, &mut applied) }, PbStatus::SchemaViolation);
    let err = take_string(pb_last_error_message());
    assert!(err.contains("missing"), "{err}");
    unsafe { pb_cloud_free(cloud) };
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/parkbarrier.h")).unwrap();
    for name in [
        "pb_status_str",
        "pb_last_error_message",
        "pb_string_free",
        "pb_crc16",
        "pb_head_filters",
        "pb_savings_vs_always_on",
        "pb_encode_json",
        "pb_decoder_new",
        "pb_decoder_feed",
        "pb_decoder_pending",
        "pb_decoder_free",
        "pb_cloud_new",
        "pb_cloud_submit",
        "pb_cloud_sweep",
        "pb_cloud_alarm_ack",
        "pb_cloud_alarm_resolve",
        "pb_cloud_state_json",
        "pb_cloud_metrics_json",
        "pb_cloud_free",
        "PB_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compile and run a C program against the header and static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libparkbarrier_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pb_smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
