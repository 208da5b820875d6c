use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ipslab_ffi::*;

const C3: &str = r#"
seed = 4
reps = 2000
horizon = 0.6
[topology]
kind = "torus"
d = 1
side = 3
[model]
kind = "voter"
[query]
sites = [[0], [1]]
[initial]
eta = [1, 1, 0]
"#;

fn parse(text: &str) -> (IpsStatus, *mut IpsConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let s = unsafe { ips_config_parse(c.as_ptr(), &mut cfg) };
    (s, cfg)
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { ips_string_free(s) };
    out
}

#[test]
fn duality_runs_through_the_abi() {
    let (s, cfg) = parse(C3);
    assert_eq!(s, IpsStatus::Ok);
    let exp = CString::new("duality").unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { ips_run(cfg, exp.as_ptr(), &mut rep) }, IpsStatus::Ok);
    assert_eq!(unsafe { ips_report_passed(rep) }, 1);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ips_report_json(rep, true, &mut json) }, IpsStatus::Ok);
    let text = take(json);
    assert!(text.contains("\"schema\": \"ips-duality-lab/1\""));
    assert!(text.contains("\"wall_time_s\": 0.0"));
    unsafe {
        ips_report_free(rep);
        ips_config_free(cfg);
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let run = || {
        let (_, cfg) = parse(C3);
        unsafe { ips_config_override(cfg, 99, 500) };
        let exp = CString::new("duality").unwrap();
        let mut rep = ptr::null_mut();
        unsafe { ips_run(cfg, exp.as_ptr(), &mut rep) };
        let mut json = ptr::null_mut();
        unsafe { ips_report_json(rep, true, &mut json) };
        unsafe {
            ips_report_free(rep);
            ips_config_free(cfg);
        }
        take(json)
    };
    assert_eq!(run(), run());
}

#[test]
fn errors_carry_codes_and_messages() {
    let (s, cfg) = parse("seed = 1\nbogus = 2\n[topology]\nkind = \"path\"\nn = 3\n");
    assert_eq!(s, IpsStatus::InvalidConfig);
    assert!(cfg.is_null());
    let msg = unsafe { CStr::from_ptr(ips_last_error()) }.to_str().unwrap();
    assert!(msg.contains("bogus"), "{msg}");

    let (s, cfg) = parse(&C3.replace("kind = \"voter\"", "kind = \"vmdyn\"\np = 1.5"));
    assert_eq!(s, IpsStatus::Ok);
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { ips_config_violations(cfg, ptr::null(), &mut v) }, IpsStatus::Ok);
    let list = take(v);
    assert!(list.contains("p must lie in [0,1]"), "{list}");
    let exp = CString::new("duality").unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { ips_run(cfg, exp.as_ptr(), &mut rep) }, IpsStatus::InvalidConfig);
    let unknown = CString::new("teleport").unwrap();
    assert_eq!(unsafe { ips_run(cfg, unknown.as_ptr(), &mut rep) }, IpsStatus::InvalidConfig);
    assert_eq!(unsafe { ips_run(ptr::null(), exp.as_ptr(), &mut rep) }, IpsStatus::NullPointer);
    assert_eq!(unsafe { ips_report_passed(ptr::null()) }, -1);
    unsafe { ips_config_free(cfg) };
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(ips_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles and runs `tests/smoke.c` against the generated header and the
/// static library when a C compiler is present.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libipslab_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "passed 1");
}
