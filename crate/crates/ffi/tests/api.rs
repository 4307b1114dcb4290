use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use biot_dd_ffi::*;

const SMALL: &str = "[problem]\nkind = \"manufactured\"\n[mesh]\nnx = 4\nny = 4\npx = 2\npy = 2\n[time]\ndt = 1e-2\nsteps = 2\n";

fn last_error() -> String {
    let p = biot_dd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> *mut BiotDdConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { biot_dd_config_parse(text.as_ptr(), &mut cfg) }, BiotDdStatus::Ok);
    cfg
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(biot_dd_config_parse(ptr::null(), &mut cfg), BiotDdStatus::NullPointer);
        assert!(last_error().contains("toml"));
        assert_eq!(biot_dd_run(ptr::null(), ptr::null(), ptr::null_mut()), BiotDdStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(biot_dd_result_stability_ratio(ptr::null(), &mut x), BiotDdStatus::NullPointer);
        biot_dd_config_free(ptr::null_mut());
        biot_dd_result_free(ptr::null_mut());
    }
}

#[test]
fn invalid_settings_keep_the_previous_config() {
    let cfg = parse(SMALL);
    unsafe {
        assert_eq!(biot_dd_config_set_mesh(cfg, 6, 4), BiotDdStatus::Config);
        assert!(!last_error().is_empty());
        let bad = CString::new("gauss-seidel").unwrap();
        assert_eq!(biot_dd_config_set_scheme(cfg, bad.as_ptr()), BiotDdStatus::Config);
        assert_eq!(biot_dd_config_set_time(cfg, -1.0, 3), BiotDdStatus::InvalidArgument);
        assert_eq!(biot_dd_config_set_storativity(cfg, f64::NAN), BiotDdStatus::InvalidArgument);

        let mut res = ptr::null_mut();
        assert_eq!(biot_dd_run(cfg, ptr::null(), &mut res), BiotDdStatus::Ok);
        let mut len = 0;
        assert_eq!(biot_dd_result_pressure(res, ptr::null_mut(), 0, &mut len), BiotDdStatus::BufferTooSmall);
        assert_eq!(len, 16);
        biot_dd_result_free(res);
        biot_dd_config_free(cfg);
    }
}

#[test]
fn malformed_toml_reports_a_message() {
    let text = CString::new("[mesh\nnx = ").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { biot_dd_config_parse(text.as_ptr(), &mut cfg) }, BiotDdStatus::Config);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn each_scheme_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    for (scheme, solvers) in [
        ("monolithic", &[BiotDdSolver::Gmres][..]),
        ("ds", &[BiotDdSolver::CgElasticity, BiotDdSolver::CgDarcy][..]),
        ("fs", &[BiotDdSolver::CgElasticity, BiotDdSolver::CgDarcy][..]),
    ] {
        let cfg = parse(SMALL);
        let name = CString::new(scheme).unwrap();
        let out_dir = CString::new(dir.path().join(scheme).to_str().unwrap()).unwrap();
        unsafe {
            assert_eq!(biot_dd_config_set_scheme(cfg, name.as_ptr()), BiotDdStatus::Ok);
            assert_eq!(biot_dd_config_set_time(cfg, 1e-2, 3), BiotDdStatus::Ok);
            let mut res = ptr::null_mut();
            assert_eq!(biot_dd_run(cfg, out_dir.as_ptr(), &mut res), BiotDdStatus::Ok);

            let mut steps = 0;
            assert_eq!(biot_dd_result_steps(res, &mut steps), BiotDdStatus::Ok);
            assert_eq!(steps, 3);
            for &s in solvers {
                let mut its = 0.0;
                assert_eq!(biot_dd_result_mean_iterations(res, s, &mut its), BiotDdStatus::Ok);
                assert!(its > 0.0, "{scheme} {s:?}");
            }
            let mut errors = [0.0; 4];
            assert_eq!(biot_dd_result_errors(res, errors.as_mut_ptr()), BiotDdStatus::Ok);
            assert!(errors.iter().all(|e| e.is_finite() && *e > 0.0 && *e < 1.0), "{errors:?}");
            let mut ratio = 0.0;
            assert_eq!(biot_dd_result_stability_ratio(res, &mut ratio), BiotDdStatus::Ok);
            assert!(ratio.is_finite());

            let mut p = vec![0.0; 16];
            let mut len = 0;
            assert_eq!(biot_dd_result_pressure(res, p.as_mut_ptr(), p.len(), &mut len), BiotDdStatus::Ok);
            assert!(p.iter().any(|v| *v != 0.0));
            biot_dd_result_free(res);
            biot_dd_config_free(cfg);
        }
        assert!(dir.path().join(scheme).read_dir().unwrap().next().is_some(), "{scheme} wrote no files");
    }
}

/// Builds the static library, which `cargo test` does not produce. A
/// separate target directory avoids the lock held by the running cargo.
fn static_library() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let target = exe.ancestors().nth(3).unwrap().join("c-abi");
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml");
    let status = Command::new(env!("CARGO"))
        .args(["build", "--release", "--lib", "--manifest-path"])
        .arg(&manifest)
        .arg("--target-dir")
        .arg(&target)
        .status()
        .expect("cargo not found");
    assert!(status.success(), "building the static library failed");
    target.join("release/libbiot_dd_ffi.a")
}

#[test]
fn c_program_links_against_the_header() {
    let lib = static_library();
    assert!(lib.exists(), "missing {}", lib.display());
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler not found");
    assert!(status.success(), "compiling the C program failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C program failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("steps 2"));
}
