use std::path::{Path, PathBuf};
use std::process::Command;

/// Newest `librcstruct_ffi.a` under `target/{debug,release}`.
fn static_library() -> Option<PathBuf> {
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent()?.parent()?.parent()?;
    ["debug", "release"]
        .iter()
        .map(|p| target.join(p).join("librcstruct_ffi.a"))
        .filter(|p| p.exists())
        .max_by_key(|p| p.metadata().and_then(|m| m.modified()).ok())
}

#[test]
#[ignore = "needs a C compiler and the static library: cargo build -p rcstruct-ffi first"]
fn c_program_links_against_static_library() {
    let lib = static_library().expect("librcstruct_ffi.a not built; run cargo build -p rcstruct-ffi");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("rcstruct_smoke");
    let status = Command::new("cc")
        .arg(root.join("examples/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.starts_with("# Eb/N0 convention"));
    assert!(text.lines().nth(2).unwrap().starts_with("10,lmmse,none,"));
}
