use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use approx::assert_abs_diff_eq;
use funnel_ffi::*;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(fc_last_error()) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut FcScenario {
    let path = CString::new(scenario(name).to_str().unwrap()).unwrap();
    let mut scn = ptr::null_mut();
    assert_eq!(unsafe { fc_scenario_from_file(path.as_ptr(), &mut scn) }, FcStatus::Ok, "{}", last_error());
    scn
}

#[test]
fn xi_eval_matches_hand_values() {
    let z = [-0.3, 0.79, -2.0];
    let mut out = [0.0];
    unsafe {
        assert_eq!(fc_xi_eval(3.0, 3, 1, z.as_ptr(), 2, out.as_mut_ptr()), FcStatus::Ok);
        assert_abs_diff_eq!(out[0], -0.11, epsilon = 1e-12);
        assert_eq!(fc_xi_eval(3.0, 3, 1, z.as_ptr(), 3, out.as_mut_ptr()), FcStatus::Ok);
        assert_abs_diff_eq!(out[0], 0.04, epsilon = 1e-12);
        assert_eq!(fc_xi_eval(3.0, 3, 1, z.as_ptr(), 4, out.as_mut_ptr()), FcStatus::InvalidArgument);
        assert_eq!(fc_xi_eval(3.0, 3, 1, ptr::null(), 1, out.as_mut_ptr()), FcStatus::NullPointer);
    }
    assert!(last_error().contains("null"));
}

#[test]
fn control_law_and_singularity() {
    let z = [-0.3, 0.79, -2.0];
    let (mut u, mut w) = ([0.0], 0.0);
    unsafe {
        assert_eq!(fc_new_fc_control(3.0, 1.0, 0.1, 3, 1, z.as_ptr(), u.as_mut_ptr(), &mut w), FcStatus::Ok);
        assert_abs_diff_eq!(u[0], -0.04 / 0.84, epsilon = 1e-12);
        assert_abs_diff_eq!(w, 0.16, epsilon = 1e-12);
        let edge = [0.0, 0.0, 0.1];
        assert_eq!(
            fc_new_fc_control(3.0, 1.0, 0.1, 3, 1, edge.as_ptr(), u.as_mut_ptr(), ptr::null_mut()),
            FcStatus::Singularity
        );
    }
    assert!(last_error().contains("gain singularity"));
}

#[test]
fn bad_json_is_a_config_error() {
    let text = CString::new(r#"{"name": "x"}"#).unwrap();
    let mut scn = ptr::null_mut();
    assert_eq!(unsafe { fc_scenario_from_json(text.as_ptr(), &mut scn) }, FcStatus::Config);
    assert!(scn.is_null());
}

#[test]
fn feasibility_of_nominal_initial_data() {
    let scn = load("bench_nominal.json");
    let (mut feasible, mut n) = (-1, 0usize);
    let mut margins = [0.0; 3];
    unsafe {
        assert_eq!(fc_check_feasibility(scn, &mut feasible, margins.as_mut_ptr(), 3, &mut n), FcStatus::Ok);
        assert_eq!(feasible, 0);
        assert_eq!(n, 3);
        assert_abs_diff_eq!(margins[1], -0.01, epsilon = 1e-12);
        let mut small = [0.0; 2];
        assert_eq!(
            fc_check_feasibility(scn, &mut feasible, small.as_mut_ptr(), 2, &mut n),
            FcStatus::BufferTooSmall
        );
        fc_scenario_free(scn);
    }
}

#[test]
fn simulate_and_read_columns() {
    let scn = load("bench_feasible.json");
    unsafe {
        let set = CString::new("integrator.t_end=1").unwrap();
        assert_eq!(fc_scenario_set(scn, set.as_ptr()), FcStatus::Ok);
        let bad = CString::new("integrator.dt=-1").unwrap();
        assert_eq!(fc_scenario_set(scn, bad.as_ptr()), FcStatus::Config);
        assert_eq!(fc_scenario_controller_count(scn), 1);

        let mut run = ptr::null_mut();
        assert_eq!(fc_simulate(scn, 0, &mut run), FcStatus::Ok, "{}", last_error());
        assert_eq!(fc_run_exit_code(run), 0);
        let n = fc_run_len(run);
        assert_eq!(n, 1001);

        let name = CString::new("t").unwrap();
        let mut buf = vec![0.0; n];
        let mut written = 0;
        assert_eq!(fc_run_column(run, name.as_ptr(), buf.as_mut_ptr(), n, &mut written), FcStatus::Ok);
        assert_eq!(written, n);
        assert_eq!(buf[n - 1], 1.0);
        let name = CString::new("nope").unwrap();
        assert_eq!(fc_run_column(run, name.as_ptr(), buf.as_mut_ptr(), n, &mut written), FcStatus::InvalidArgument);

        let json = fc_run_report_json(run);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_string();
        fc_string_free(json);
        assert!(text.contains("\"status\": \"completed\""));

        let mut other = ptr::null_mut();
        assert_eq!(fc_simulate(scn, 5, &mut other), FcStatus::InvalidArgument);
        fc_run_free(run);
        fc_scenario_free(scn);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        fc_scenario_free(ptr::null_mut());
        fc_run_free(ptr::null_mut());
        fc_string_free(ptr::null_mut());
        assert_eq!(fc_run_exit_code(ptr::null()), -1);
        assert_eq!(fc_run_len(ptr::null()), 0);
        assert!(fc_run_report_json(ptr::null()).is_null());
    }
}

/// The generated header must compile as C.
#[test]
fn header_compiles() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-"])
        .arg("-I")
        .arg(&include)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child
                .stdin
                .take()
                .unwrap()
                .write_all(b"#include \"funnelctl.h\"\nint main(void) { FcScenario *s = 0; fc_scenario_free(s); return FC_STATUS_OK; }\n")?;
            child.wait_with_output()
        })
    else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
