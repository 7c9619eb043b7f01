use std::f64::consts::PI;

use dispersive_forge::data::InitialData;
use dispersive_forge::harness::{
    continuous_dependence_probe, coupled_epsilon, pde_residual, run_ladder, LadderConfig,
};
use dispersive_forge::nonlinearity::preset;
use dispersive_forge::solver::{SolverConfig, Termination};
use dispersive_forge::{SpectralGrid, StateFunction};

fn solver() -> SolverConfig {
    SolverConfig {
        t_end: 0.1,
        rtol: 1e-13,
        atol: 1e-14,
        gauge_diagnostics: false,
        ..SolverConfig::default()
    }
}

fn gaussian(grid: &SpectralGrid) -> StateFunction {
    InitialData::Gaussian { amplitude: 0.5, width: 3.0, center: None }.sample(grid).unwrap()
}

#[test]
fn coupling_is_fifth_power() {
    assert!((coupled_epsilon(0.1) - 1e-5).abs() < 1e-20);
    assert_eq!(coupled_epsilon(1.0), 1.0);
}

#[test]
fn kdv_ladder_contracts_and_artifacts() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let cfg = LadderConfig {
        deltas: vec![0.2, 0.1, 0.05],
        u0: gaussian(&grid),
        solver: solver(),
        t_target: Some(0.1),
        dt_out: 2.5e-3,
    };
    let (report, rungs) = run_ladder(&spec, &cfg).unwrap();
    assert_eq!(rungs.len(), 3);
    assert!(rungs.iter().all(|r| r.trajectory.termination == Termination::ReachedTEnd));
    assert!((report.window - 0.1).abs() < 1e-12);
    assert_eq!(report.pairs.len(), 3);
    for (r, d) in report.rungs.iter().zip([0.2f64, 0.1, 0.05]) {
        assert!((r.epsilon / d.powi(5) - 1.0).abs() < 1e-14);
        let scaled = r.residual_zero / (r.epsilon * r.sup_d4_l2);
        assert!((0.5..=2.0).contains(&scaled), "δ = {d}: {scaled}");
        assert!(r.residual_eps < r.residual_zero);
    }
    let h3 = report.consecutive_h3();
    assert!(h3[1] < h3[0]);
    assert!(report.contracts.all_hold(), "{:?}", report.contracts);
    // Far pair dominated by the coarse rung: ‖u_i − u_j‖ ≈ c(ε_i + ε_j).
    let far = report.pair(0, 2).unwrap();
    assert!(far.h3_diff > report.pair(1, 2).unwrap().h3_diff);
    assert!(far.eps_ratio > 0.0 && far.eps_ratio.is_finite());

    let dir = tempfile::tempdir().unwrap();
    report.write_to(dir.path()).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ladder_report.json")).unwrap()).unwrap();
    assert_eq!(json["spec"], "kdv");
    let rungs_csv = std::fs::read_to_string(dir.path().join("rungs.csv")).unwrap();
    assert_eq!(rungs_csv.lines().count(), 4);
    assert_eq!(std::fs::read_to_string(dir.path().join("pairs.csv")).unwrap().lines().count(), 4);
}

#[test]
fn residual_of_an_exact_soliton_is_small() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(32.0 * PI, 512).unwrap();
    let kappa = 0.5;
    let snaps: Vec<StateFunction> = (0..9)
        .map(|m| {
            let t = m as f64 * 1e-3;
            StateFunction::from_fn(&grid, t, |x| {
                let s = 1.0 / (kappa * (x - 40.0 - 4.0 * kappa * kappa * t)).cosh();
                2.0 * kappa * kappa * s * s
            })
            .unwrap()
        })
        .collect();
    let res = pde_residual(&spec, &snaps, 0.0).unwrap();
    assert_eq!(res.len(), snaps.len());
    assert!(res.iter().all(|p| p.residual < 1e-9), "{res:?}");
    // Claiming a viscosity that is not there shows up as ε‖∂⁴u‖.
    let biased = pde_residual(&spec, &snaps, 1e-2).unwrap();
    assert!(biased.iter().all(|p| p.residual > 1e-4));
    assert!(pde_residual(&spec, &snaps[..4], 0.0).is_err());
}

#[test]
fn dependence_probe_scales_linearly() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(16.0 * PI, 128).unwrap();
    let u0 = gaussian(&grid);
    let shape = StateFunction::from_fn(&grid, 0.0, |x| (x / 8.0).sin()).unwrap();
    let perturbations = vec![
        StateFunction::zeros(&grid, 0.0),
        shape.scale(1e-3),
        shape.scale(1e-4),
        shape.scale(1e-5),
    ];
    let mut cfg = solver();
    cfg.rtol = 1e-12;
    let table = continuous_dependence_probe(&spec, &u0, &perturbations, 0.1, &cfg, 0.01).unwrap();
    assert_eq!(table.rows.len(), 4);
    let zero = &table.rows[0];
    assert!(zero.bitwise_identical);
    assert_eq!(zero.solution_h7_diff, 0.0);
    assert_eq!(zero.data_h7_diff, 0.0);
    for r in &table.rows[1..] {
        assert!(!r.bitwise_identical);
        assert!(r.ratio.is_finite() && r.ratio > 0.0);
    }
    let (a, b) = (table.rows[2].ratio, table.rows[3].ratio);
    assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
}

#[test]
fn invalid_ladders_are_rejected() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    let base = LadderConfig {
        deltas: vec![0.2, 0.1],
        u0: StateFunction::zeros(&grid, 0.0),
        solver: solver(),
        t_target: Some(0.1),
        dt_out: 0.01,
    };
    for deltas in [vec![], vec![0.1, 0.2], vec![0.2, 0.0]] {
        let cfg = LadderConfig { deltas, ..base.clone() };
        assert!(run_ladder(&spec, &cfg).is_err());
    }
    let cfg = LadderConfig { dt_out: -1.0, ..base };
    assert!(run_ladder(&spec, &cfg).is_err());
}
