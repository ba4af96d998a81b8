use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use feddpms_ffi::*;

fn last_error() -> String {
    let p = fdp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut FdpConfig {
    let toml = CString::new(
        "classes = 3\nper_class = 40\ntest_per_class = 10\ndim = 4\nclients = 3\nper_round = 2\n\
         rounds = 4\nprelim_rounds = 2\nlocal_epochs = 1\nbatch_size = 16\nalpha = 3\nn = 1\n\
         latent_dim = 4\nencoder_hidden = 12\nclassifier_hidden = 8\nmin_m = 1\n",
    )
    .unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { fdp_config_from_toml(toml.as_ptr(), &mut cfg) }, FdpStatus::Ok);
    cfg
}

#[test]
fn header_is_generated_and_parses_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/feddpms.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["fdp_run_experiment", "fdp_config_set", "FDP_STATUS_PANIC", "typedef struct FdpRun FdpRun"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"feddpms.h\"\nint main(void) {\n  FdpConfig *c = 0;\n  \
         if (fdp_config_default(&c) != FDP_STATUS_OK) return 1;\n  fdp_config_free(c);\n  return 0;\n}\n",
    )
    .unwrap();
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&compiler)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("no C compiler ({compiler}): {e}; syntax check skipped"),
    }
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(unsafe { fdp_config_default(ptr::null_mut()) }, FdpStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mut out = 0.0;
    assert_eq!(unsafe { fdp_run_final_accuracy(ptr::null(), &mut out) }, FdpStatus::NullPointer);
    unsafe {
        fdp_config_free(ptr::null_mut());
        fdp_run_free(ptr::null_mut());
        fdp_string_free(ptr::null_mut());
    }
}

#[test]
fn config_set_validates_and_round_trips() {
    let cfg = small_config();
    let key = CString::new("beta").unwrap();
    let good = CString::new("0.3").unwrap();
    let bad = CString::new("-1.0").unwrap();
    unsafe {
        assert_eq!(fdp_config_set(cfg, key.as_ptr(), good.as_ptr()), FdpStatus::Ok);
        assert_eq!(fdp_config_set(cfg, key.as_ptr(), bad.as_ptr()), FdpStatus::InvalidConfig);
        let unknown = CString::new("no_such_key").unwrap();
        assert_eq!(fdp_config_set(cfg, unknown.as_ptr(), good.as_ptr()), FdpStatus::InvalidConfig);
        let garbage = CString::new("= =").unwrap();
        assert_eq!(fdp_config_set(cfg, key.as_ptr(), garbage.as_ptr()), FdpStatus::InvalidConfig);
        let mut text = ptr::null_mut();
        assert_eq!(fdp_config_to_toml(cfg, &mut text), FdpStatus::Ok);
        let s = CStr::from_ptr(text).to_str().unwrap().to_owned();
        fdp_string_free(text);
        assert!(s.contains("beta = 0.3"), "{s}");
        fdp_config_free(cfg);
    }
}

#[test]
fn malformed_toml_is_an_invalid_config() {
    let text = CString::new("rounds = [").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { fdp_config_from_toml(text.as_ptr(), &mut cfg) }, FdpStatus::InvalidConfig);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn run_lifecycle() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(fdp_run_experiment(cfg, &mut run), FdpStatus::Ok, "{}", last_error());
        let (mut trials, mut rounds) = (0usize, 0usize);
        assert_eq!(fdp_run_trial_count(run, &mut trials), FdpStatus::Ok);
        assert_eq!(trials, 1);
        assert_eq!(fdp_run_round_count(run, 0, &mut rounds), FdpStatus::Ok);
        assert_eq!(rounds, 4);
        let (mut last, mut fin) = (0.0, -1.0);
        assert_eq!(fdp_run_round_accuracy(run, 0, rounds - 1, &mut last), FdpStatus::Ok);
        assert_eq!(fdp_run_final_accuracy(run, &mut fin), FdpStatus::Ok);
        assert_eq!(last, fin);
        assert!((0.0..=1.0).contains(&fin));
        assert_eq!(fdp_run_round_accuracy(run, 0, rounds, &mut last), FdpStatus::InvalidArgument);
        assert_eq!(fdp_run_round_count(run, 1, &mut rounds), FdpStatus::InvalidArgument);

        let mut json = ptr::null_mut();
        assert_eq!(fdp_run_summary_json(run, &mut json), FdpStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("mean_final_accuracy"));
        fdp_string_free(json);

        let out = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(fdp_run_write_outputs(run, out.as_ptr()), FdpStatus::Ok);
        assert!(dir.path().join("feddpms_beta0.5_seed0.csv").exists());
        assert!(dir.path().join("feddpms_beta0.5_summary.json").exists());
        fdp_run_free(run);
        fdp_config_free(cfg);
    }
}

#[test]
fn numeric_helpers() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(fdp_comm_r1(200, 3, 128, 1e6, &mut v), FdpStatus::Ok);
        assert!((v - 0.0768).abs() < 1e-15);
        assert_eq!(fdp_expected_downloads(1.0, 7, 50, 20, &mut v), FdpStatus::Ok);
        assert_eq!(v, 7.0);
        assert_eq!(fdp_comm_r2(1.0, 50, 20, &mut v), FdpStatus::Ok);
        assert!((v - 0.01).abs() < 1e-15);
        assert_eq!(fdp_sensitivity(4, &mut v), FdpStatus::Ok);
        assert_eq!(v, 0.25);
        assert_eq!(fdp_sensitivity(0, &mut v), FdpStatus::InvalidArgument);
        let mut sigma = 0.0;
        assert_eq!(fdp_calibrate_sigma(0.5, 0.01, &mut sigma), FdpStatus::Ok);
        assert_eq!(fdp_delta_for(sigma, 0.5, &mut v), FdpStatus::Ok);
        assert!((v - 0.01).abs() < 1e-12);
        assert_eq!(fdp_delta_for(-1.0, 0.5, &mut v), FdpStatus::InvalidArgument);
        assert_eq!(fdp_comm_r2(2.0, 50, 20, &mut v), FdpStatus::InvalidArgument);
    }
}
