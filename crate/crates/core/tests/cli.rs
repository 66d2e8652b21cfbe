use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rcstruct::harness::{SimConfig, CSV_HEADER};

const TINY: &str = r#"{
  "nt": 2, "nr": 2, "nsc": 16, "ncp": 4, "np": 4, "nd": 4,
  "modulation": 4, "lc": 2, "decay": 1.0,
  "ebn0_db": [0.0, 10.0],
  "detectors": ["rcstruct", "rcnet", "lmmse"],
  "subframes_per_point": 2,
  "seed": 5,
  "esn": { "neurons": 8, "window": 4 },
  "classifier": { "train": { "hidden": 8, "epochs": 5 } }
}"#;

fn rcstruct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcstruct")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_preamble_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.json", TINY);
    let out = dir.path().join("out.csv");
    let o = rcstruct(&["simulate", "--config", &cfg, "--no-timing", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# Eb/N0 convention"));
    assert_eq!(lines[1], CSV_HEADER);
    assert_eq!(lines.len(), 2 + 2 * 3);
    let columns = CSV_HEADER.split(',').count();
    for row in &lines[2..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), columns);
        assert_eq!(f[2], "none");
        assert_eq!(f[10], "0");
        let ber: f64 = f[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&ber));
    }
}

#[test]
fn overrides_reach_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.json", TINY);
    let o = rcstruct(&[
        "simulate", "--config", &cfg, "--no-timing", "--ebn0", "-2,30", "--detector", "lmmse", "--subframes", "1",
        "--pa-ibo", "6",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("-2,lmmse,") && rows[1].starts_with("30,lmmse,"));
}

#[test]
fn stdout_matches_library_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write(dir.path(), "tiny.json", TINY);
    let o = rcstruct(&["simulate", "--config", &cfg_path, "--no-timing"]);
    assert!(o.status.success());
    let mut cfg = SimConfig::load(Path::new(&cfg_path)).unwrap();
    cfg.timing = false;
    let lib = rcstruct::harness::run_ber_sweep(&cfg).unwrap().to_csv(&cfg);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), lib);
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.json", &TINY.replace("\"lc\": 2", "\"lc\": 2, \"taps\": 3"));
    let long_channel = write(dir.path(), "lc.json", &TINY.replace("\"lc\": 2", "\"lc\": 9"));
    let broken = write(dir.path(), "broken.json", "{ not json");
    for cfg in [&unknown, &long_channel, &broken, &dir.path().join("missing.json").to_string_lossy().into_owned()] {
        let o = rcstruct(&["simulate", "--config", cfg]);
        assert_eq!(o.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    let tiny = write(dir.path(), "tiny.json", TINY);
    assert_eq!(rcstruct(&["simulate", "--config", &tiny, "--ebn0", "1,x"]).status.code(), Some(2));
    assert_eq!(rcstruct(&["simulate", "--config", &tiny, "--pilots", "diagonal"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(rcstruct(&["simulate"]).status.code(), Some(2));
    assert_eq!(rcstruct(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rcstruct(&["simulate", "--config", "x.json", "--pa-off", "--pa-ibo", "3"]).status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["desk.json", "large.json"] {
        let cfg = SimConfig::load(&dir.join(name)).unwrap();
        assert!(cfg.cqi().unwrap().rows.len() == 3);
    }
    let table = rcstruct::adaptation::CqiTable::load(&dir.join("cqi_default.json")).unwrap();
    assert_eq!(table, rcstruct::adaptation::CqiTable::default());
}
