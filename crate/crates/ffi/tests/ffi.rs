use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dispersive_forge_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { df_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn soliton_round_trip_through_the_c_api() {
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(df_grid_new(16.0 * std::f64::consts::PI, 256, &mut grid), DfStatus::Ok);
        assert_eq!(df_grid_len(grid), 256);

        let name = CString::new("kdv").unwrap();
        let mut spec = ptr::null_mut();
        assert_eq!(df_spec_preset(name.as_ptr(), &mut spec), DfStatus::Ok);
        let mut u0 = ptr::null_mut();
        assert_eq!(df_state_preset_data(name.as_ptr(), grid, &mut u0), DfStatus::Ok);

        let mut lam = 0.0;
        assert_eq!(df_dispersion_lambda(spec, u0, &mut lam), DfStatus::Ok);
        assert_eq!(lam, 1.0);
        let mut err = 1.0;
        assert_eq!(df_reconstruction_error(spec, u0, 7, &mut err), DfStatus::Ok);
        assert!(err < 1e-6);

        let mut traj = ptr::null_mut();
        assert_eq!(df_integrate(spec, u0, 1e-4, 0.2, 0.1, 1e-9, &mut traj), DfStatus::Ok);
        assert_eq!(df_trajectory_len(traj), 3);
        assert!((df_trajectory_final_time(traj) - 0.2).abs() < 1e-12);
        let mut term = DfTermination::StepUnderflow;
        assert_eq!(df_trajectory_termination(traj, &mut term), DfStatus::Ok);
        assert_eq!(term, DfTermination::ReachedTEnd);

        let mut last = ptr::null_mut();
        assert_eq!(df_trajectory_snapshot(traj, 2, &mut last), DfStatus::Ok);
        assert!((df_state_time(last) - 0.2).abs() < 1e-12);
        let mut values = vec![0.0; df_state_len(last)];
        assert_eq!(df_state_values(last, values.as_mut_ptr(), values.len()), DfStatus::Ok);
        assert!(values.iter().all(|v| v.is_finite()));
        // Hyperdiffusion only removes L² mass.
        let (mut n0, mut n1) = (0.0, 0.0);
        df_state_sobolev_norm(u0, 0.0, &mut n0);
        df_state_sobolev_norm(last, 0.0, &mut n1);
        assert!(n1 < n0);

        let mut bad = ptr::null_mut();
        assert_eq!(df_trajectory_snapshot(traj, 9, &mut bad), DfStatus::InvalidArgument);
        assert!(bad.is_null());
        assert!(last_error().contains("out of range"));

        df_state_free(last);
        df_trajectory_free(traj);
        df_state_free(u0);
        df_spec_free(spec);
        df_grid_free(grid);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(df_grid_new(1.0, 7, &mut grid), DfStatus::InvalidArgument);
        assert!(grid.is_null());
        assert_eq!(df_grid_new(1.0, 8, ptr::null_mut()), DfStatus::NullPointer);
        assert!(last_error().contains("out"));

        let name = CString::new("burgers").unwrap();
        let mut spec = ptr::null_mut();
        assert_eq!(df_spec_preset(name.as_ptr(), &mut spec), DfStatus::UnknownPreset);
        assert!(last_error().contains("kdv"));
        assert_eq!(df_spec_preset(ptr::null(), &mut spec), DfStatus::NullPointer);

        let (n, e) = (CString::new("bad").unwrap(), CString::new("z3 +").unwrap());
        assert_eq!(df_spec_from_expr(n.as_ptr(), e.as_ptr(), 3, &mut spec), DfStatus::Config);

        let e = CString::new("-z3 + z0^2*z1").unwrap();
        assert_eq!(df_spec_from_expr(n.as_ptr(), e.as_ptr(), 3, &mut spec), DfStatus::Ok);
        assert_eq!(df_grid_new(2.0 * std::f64::consts::PI, 32, &mut grid), DfStatus::Ok);
        let values: Vec<f64> = (0..32).map(|i| (i as f64 * std::f64::consts::PI / 16.0).sin()).collect();
        let mut u = ptr::null_mut();
        assert_eq!(df_state_from_values(grid, values.as_ptr(), 31, 0.0, &mut u), DfStatus::InvalidArgument);
        assert_eq!(df_state_from_values(grid, values.as_ptr(), 32, 0.0, &mut u), DfStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(df_mollify(u, 2.0, &mut m), DfStatus::InvalidArgument);
        assert_eq!(df_mollify(u, 0.5, &mut m), DfStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(df_evaluate_rhs(spec, m, &mut f), DfStatus::Ok);
        let mut short = vec![0.0; 4];
        assert_eq!(df_state_values(f, short.as_mut_ptr(), 4), DfStatus::InvalidArgument);

        // Null handles are tolerated by the free functions and getters.
        df_state_free(ptr::null_mut());
        assert_eq!(df_state_len(ptr::null()), 0);
        assert!(df_state_time(ptr::null()).is_nan());

        df_state_free(f);
        df_state_free(m);
        df_state_free(u);
        df_spec_free(spec);
        df_grid_free(grid);
    }
    assert!((df_coupled_epsilon(0.1) - 1e-5).abs() < 1e-20);
}

#[test]
fn last_error_is_truncated_safely() {
    unsafe {
        df_grid_new(-1.0, 16, &mut ptr::null_mut());
        let full = df_last_error_message(ptr::null_mut(), 0);
        let mut tiny = [1 as c_char; 4];
        assert_eq!(df_last_error_message(tiny.as_mut_ptr(), 4), full);
        assert_eq!(tiny[3], 0);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(header_dir.join("dispersive_forge.h")).unwrap();
    for sym in ["df_grid_new", "df_integrate", "DF_STATUS_NULL_POINTER", "typedef struct DfState DfState"] {
        assert!(header.contains(sym), "{sym}");
    }
    let lib = target_dir().join("libdispersive_forge_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C link check: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "dispersive_forge.h"
int main(void) {
    DfGrid *g = NULL; DfSpec *s = NULL; DfState *u = NULL; DfTrajectory *t = NULL;
    if (df_grid_new(50.26548245743669, 128, &g) != DF_STATUS_OK) return 1;
    if (df_spec_preset("kdv", &s) != DF_STATUS_OK) return 2;
    if (df_state_preset_data("kdv", g, &u) != DF_STATUS_OK) return 3;
    if (df_integrate(s, u, 1e-3, 0.05, 0.05, 1e-8, &t) != DF_STATUS_OK) return 4;
    DfTermination term;
    df_trajectory_termination(t, &term);
    if (term != DF_TERMINATION_REACHED_T_END) return 5;
    if (df_spec_preset("nope", &s) != DF_STATUS_UNKNOWN_PRESET) return 6;
    printf("%zu\n", df_trajectory_len(t));
    df_trajectory_free(t); df_state_free(u); df_spec_free(s); df_grid_free(g);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "2");
}
