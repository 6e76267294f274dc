use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use corpusdex_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cdx_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { cdx_string_free(p) };
    s
}

#[test]
fn index_add_refresh_count() {
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(cdx_index_in_memory(&mut idx), CdxStatus::Ok);
        let mut id = u64::MAX;
        let mut skipped = true;
        for text in ["climate and change", "climate action and change", "climate change"] {
            let t = c(text);
            assert_eq!(cdx_index_add(idx, t.as_ptr(), ptr::null(), ptr::null(), true, &mut id, &mut skipped), CdxStatus::Ok);
            assert!(!skipped);
        }
        let dup = c("climate change");
        assert_eq!(cdx_index_add(idx, dup.as_ptr(), ptr::null(), ptr::null(), true, &mut id, &mut skipped), CdxStatus::Ok);
        assert!(skipped);
        assert_eq!(id, 2);

        let phrase = c("climate change");
        let mut n = 0;
        assert_eq!(cdx_phrase_count(idx, phrase.as_ptr(), 0, &mut n), CdxStatus::Ok);
        assert_eq!(n, 0, "not searchable before refresh");
        assert_eq!(cdx_index_refresh(idx), CdxStatus::Ok);
        for (slop, want) in [(0, 1), (1, 2), (2, 3)] {
            assert_eq!(cdx_phrase_count(idx, phrase.as_ptr(), slop, &mut n), CdxStatus::Ok);
            assert_eq!(n, want, "slop {slop}");
        }
        assert_eq!(cdx_phrase_occurrences(idx, phrase.as_ptr(), 2, &mut n), CdxStatus::Ok);
        assert_eq!(n, 3);
        let q = c(r#"{"match": {"query": "action"}}"#);
        assert_eq!(cdx_count_json(idx, q.as_ptr(), &mut n), CdxStatus::Ok);
        assert_eq!(n, 1);
        let mut json = ptr::null_mut();
        assert_eq!(cdx_search_json(idx, q.as_ptr(), 5, &mut json), CdxStatus::Ok);
        let body: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        cdx_string_free(json);
        assert_eq!(body["total"], 1);
        assert_eq!(cdx_index_doc_count(idx, &mut n), CdxStatus::Ok);
        assert_eq!(n, 3);
        cdx_index_free(idx);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(cdx_index_in_memory(&mut idx), CdxStatus::Ok);
        let mut n = 0;
        let bad = c("{not json");
        assert_eq!(cdx_count_json(idx, bad.as_ptr(), &mut n), CdxStatus::InvalidQuery);
        assert!(!last_error().is_empty());
        assert_eq!(cdx_count_json(idx, ptr::null(), &mut n), CdxStatus::NullArgument);
        assert_eq!(cdx_phrase_count(ptr::null(), bad.as_ptr(), 0, &mut n), CdxStatus::NullArgument);
        let invalid = [0xffu8, 0];
        assert_eq!(
            cdx_phrase_count(idx, invalid.as_ptr().cast(), 0, &mut n),
            CdxStatus::InvalidUtf8
        );
        let missing = c("/nonexistent/corpusdex/index");
        let mut other = ptr::null_mut();
        assert_ne!(cdx_index_open(missing.as_ptr(), &mut other), CdxStatus::Ok);
        assert!(other.is_null());
        cdx_index_free(idx);
        cdx_index_free(ptr::null_mut());
    }
}

#[test]
fn on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("idx").to_str().unwrap());
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(cdx_index_create(path.as_ptr(), &mut idx), CdxStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(cdx_index_create(path.as_ptr(), &mut again), CdxStatus::AlreadyExists);
        let t = c("persisted text");
        let lang = c("eng");
        let id = c("doc-1");
        assert_eq!(cdx_index_add(idx, t.as_ptr(), id.as_ptr(), lang.as_ptr(), false, ptr::null_mut(), ptr::null_mut()), CdxStatus::Ok);
        cdx_index_free(idx);
        let mut reopened = ptr::null_mut();
        assert_eq!(cdx_index_open(path.as_ptr(), &mut reopened), CdxStatus::Ok);
        let mut n = 0;
        let q = c(r#"{"match": {"field": "language", "query": "eng"}}"#);
        assert_eq!(cdx_count_json(reopened, q.as_ptr(), &mut n), CdxStatus::Ok);
        assert_eq!(n, 1);
        cdx_index_free(reopened);
    }
}

#[test]
fn pure_functions() {
    unsafe {
        let mut ceiling = 0.0;
        assert_eq!(cdx_throughput_ceiling(50e-6, &mut ceiling), CdxStatus::Ok);
        assert_eq!(ceiling, 10_000.0);
        assert_eq!(cdx_throughput_ceiling(0.0, &mut ceiling), CdxStatus::InvalidParams);
        let mut p = CdxBulkParams::default();
        assert_eq!(cdx_plan_bulk_params(10_240, 100 * 1024 * 1024, 4, 1 << 40, &mut p), CdxStatus::Ok);
        assert_eq!(p.chunk_size, 10_240);
        assert_eq!(cdx_plan_bulk_params(0, 1, 1, 1, &mut p), CdxStatus::InvalidParams);
        let key = c("abc");
        let mut shard = 0;
        assert_eq!(cdx_route(key.as_ptr(), 1_000, &mut shard), CdxStatus::Ok);
        assert_eq!(shard as u64, 0xba7816bf8f01cfea_u64 % 1_000);
        assert_eq!(cdx_route(key.as_ptr(), 0, &mut shard), CdxStatus::InvalidParams);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/corpusdex.h")).unwrap();
    for f in [
        "cdx_index_create", "cdx_index_open", "cdx_index_in_memory", "cdx_index_add", "cdx_index_refresh",
        "cdx_index_doc_count", "cdx_index_free", "cdx_count_json", "cdx_search_json", "cdx_phrase_count",
        "cdx_phrase_occurrences", "cdx_route", "cdx_throughput_ceiling", "cdx_plan_bulk_params",
        "cdx_last_error_message", "cdx_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compiles and runs a C program against the shared library when a C
/// compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    let profile_dir: PathBuf = exe.parent().and_then(|d| d.parent()).unwrap().to_owned();
    let lib = profile_dir.join("libcorpusdex_ffi.so");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no shared library or C compiler");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out_dir = tempfile::tempdir().unwrap();
    let bin = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&profile_dir)
        .arg("-lcorpusdex_ffi")
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).env("LD_LIBRARY_PATH", &profile_dir).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
