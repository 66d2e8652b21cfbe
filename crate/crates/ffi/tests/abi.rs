use std::ffi::{CStr, CString};
use std::ptr;

use rcstruct_ffi::*;

const TINY: &str = r#"{
  "nt": 2, "nr": 2, "nsc": 16, "ncp": 4, "np": 4, "nd": 4,
  "modulation": 4, "lc": 2, "decay": 1.0,
  "ebn0_db": [5.0, 15.0],
  "detectors": ["rcnet", "lmmse"],
  "subframes_per_point": 2,
  "seed": 3,
  "esn": { "neurons": 8, "window": 4 },
  "classifier": { "train": { "hidden": 8, "epochs": 5 } }
}"#;

fn last_error() -> String {
    let p = rcs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> *mut RcsConfig {
    let json = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rcs_config_from_json(json.as_ptr(), &mut cfg) }, RcsStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

fn csv(sweep: *const RcsSweep) -> String {
    let mut needed = 0usize;
    assert_eq!(unsafe { rcs_sweep_csv(sweep, ptr::null_mut(), 0, &mut needed) }, RcsStatus::Ok);
    let mut buf = vec![0u8; needed];
    assert_eq!(unsafe { rcs_sweep_csv(sweep, buf.as_mut_ptr().cast(), buf.len(), &mut needed) }, RcsStatus::Ok);
    CStr::from_bytes_with_nul(&buf).unwrap().to_string_lossy().into_owned()
}

#[test]
fn sweep_round_trip_matches_library() {
    let cfg = config(TINY);
    unsafe {
        assert_eq!(rcs_config_set_timing(cfg, false), RcsStatus::Ok);
        let mut sweep = ptr::null_mut();
        assert_eq!(rcs_run_sweep(cfg, &mut sweep), RcsStatus::Ok);
        assert_eq!(rcs_sweep_row_count(sweep), 4);

        let mut row = std::mem::zeroed::<RcsRow>();
        assert_eq!(rcs_sweep_row(sweep, 1, &mut row), RcsStatus::Ok);
        assert_eq!(row.ebn0_db, 5.0);
        assert_eq!(row.detector, RcsDetector::Lmmse);
        assert_eq!(row.bits, 2 * 2 * 16 * 4 * 2);
        assert_eq!(row.ber, row.errors as f64 / row.bits as f64);
        assert_eq!(row.seconds, 0.0);

        let mut lib_cfg = rcstruct::harness::SimConfig::from_json(TINY).unwrap();
        lib_cfg.timing = false;
        let expect = rcstruct::harness::run_ber_sweep(&lib_cfg).unwrap().to_csv(&lib_cfg);
        assert_eq!(csv(sweep), expect);

        assert_eq!(rcs_sweep_row(sweep, 4, &mut row), RcsStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut small = [0 as std::ffi::c_char; 8];
        let mut needed = 0;
        assert_eq!(rcs_sweep_csv(sweep, small.as_mut_ptr(), small.len(), &mut needed), RcsStatus::BufferTooSmall);
        assert_eq!(needed, expect.len() + 1);

        rcs_sweep_free(sweep);
        rcs_config_free(cfg);
    }
}

#[test]
fn setters_validate_and_keep_old_value_on_error() {
    let cfg = config(TINY);
    unsafe {
        let points = [0.0, 10.0, 20.0];
        assert_eq!(rcs_config_set_ebn0(cfg, points.as_ptr(), 3), RcsStatus::Ok);
        assert_eq!(rcs_config_set_subframes(cfg, 1), RcsStatus::Ok);
        assert_eq!(rcs_config_set_seed(cfg, 99), RcsStatus::Ok);
        assert_eq!(rcs_config_set_pa(cfg, true, 6.0), RcsStatus::Ok);
        assert_eq!(rcs_config_set_subframes(cfg, 0), RcsStatus::InvalidConfig);
        assert!(last_error().contains("subframes_per_point"));
        let bad = [f64::NAN];
        assert_eq!(rcs_config_set_ebn0(cfg, bad.as_ptr(), 1), RcsStatus::InvalidConfig);
        assert_eq!(rcs_config_set_ebn0(cfg, ptr::null(), 2), RcsStatus::NullPointer);

        let mut sweep = ptr::null_mut();
        assert_eq!(rcs_run_sweep(cfg, &mut sweep), RcsStatus::Ok);
        assert_eq!(rcs_sweep_row_count(sweep), 6);
        rcs_sweep_free(sweep);
        rcs_config_free(cfg);
    }
}

#[test]
fn config_errors_report_codes_and_messages() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let bad = CString::new(TINY.replace("\"lc\": 2", "\"lc\": 9")).unwrap();
        assert_eq!(rcs_config_from_json(bad.as_ptr(), &mut cfg), RcsStatus::InvalidConfig);
        assert!(cfg.is_null());
        assert!(last_error().contains("lc"));

        let broken = CString::new("{").unwrap();
        assert_eq!(rcs_config_from_json(broken.as_ptr(), &mut cfg), RcsStatus::InvalidConfig);
        assert_eq!(rcs_config_from_json(ptr::null(), &mut cfg), RcsStatus::NullPointer);
        let json = CString::new(TINY).unwrap();
        assert_eq!(rcs_config_from_json(json.as_ptr(), ptr::null_mut()), RcsStatus::NullPointer);

        let missing = CString::new("/nonexistent/config.json").unwrap();
        assert_eq!(rcs_config_load(missing.as_ptr(), &mut cfg), RcsStatus::InvalidConfig);

        let desk = CString::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/configs/desk.json")).unwrap();
        assert_eq!(rcs_config_load(desk.as_ptr(), &mut cfg), RcsStatus::Ok);
        rcs_config_free(cfg);

        let mut sweep = ptr::null_mut();
        assert_eq!(rcs_run_sweep(ptr::null(), &mut sweep), RcsStatus::NullPointer);
        assert_eq!(rcs_sweep_row_count(ptr::null()), 0);
        rcs_config_free(ptr::null_mut());
        rcs_sweep_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(rcs_eesm(ptr::null(), 0, 1.0, &mut out), RcsStatus::InvalidArgument);
        assert!(!rcs_last_error().is_null());
        assert_eq!(rcs_eesm([2.0].as_ptr(), 1, 1.0, &mut out), RcsStatus::Ok);
        assert!(rcs_last_error().is_null());
    }
}

#[test]
fn primitives() {
    unsafe {
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(rcs_rapp_pa(0.0, 0.0, 1.0, 3.0, &mut re, &mut im), RcsStatus::Ok);
        assert_eq!((re, im), (0.0, 0.0));
        assert_eq!(rcs_rapp_pa(0.3, -0.4, 1.0, 2.0, &mut re, &mut im), RcsStatus::Ok);
        // |x| = 0.5: gain (1 + 0.5^4)^(-1) with outer exponent 0.5·ρ = 1.
        let g = 1.0 / (1.0 + 0.0625);
        assert!((re - 0.3 * g).abs() < 1e-15 && (im + 0.4 * g).abs() < 1e-15);
        assert_eq!(rcs_rapp_pa(1.0, 0.0, 0.0, 3.0, &mut re, &mut im), RcsStatus::InvalidConfig);

        let mut out = 0.0;
        assert_eq!(rcs_eesm([4.0, 4.0, 4.0].as_ptr(), 3, 2.5, &mut out), RcsStatus::Ok);
        assert!((out - 4.0).abs() < 1e-12);

        assert_eq!(rcs_raw_ber([0.1, 0.05].as_ptr(), [2u32, 4].as_ptr(), 2, &mut out), RcsStatus::Ok);
        assert!((out - 0.4 / 6.0).abs() < 1e-15);
        assert_eq!(rcs_raw_ber([0.1].as_ptr(), ptr::null(), 1, &mut out), RcsStatus::NullPointer);

        let v = CStr::from_ptr(rcs_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rcstruct.h")).unwrap();
    for name in [
        "rcs_last_error",
        "rcs_version",
        "rcs_config_from_json",
        "rcs_config_load",
        "rcs_config_free",
        "rcs_config_set_seed",
        "rcs_config_set_subframes",
        "rcs_config_set_timing",
        "rcs_config_set_ebn0",
        "rcs_config_set_pa",
        "rcs_run_sweep",
        "rcs_sweep_free",
        "rcs_sweep_row_count",
        "rcs_sweep_row",
        "rcs_sweep_csv",
        "rcs_rapp_pa",
        "rcs_eesm",
        "rcs_raw_ber",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["typedef struct RcsConfig RcsConfig", "typedef struct RcsSweep RcsSweep", "RCS_STATUS_BUFFER_TOO_SMALL"] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}
