use std::f64::consts::PI;

use dispersive_forge::coeff::linearized_coefficients;
use dispersive_forge::data::InitialData;
use dispersive_forge::gauge::{build_gauge, coefficient_norms, gauged_energy_rate, solution_norms};
use dispersive_forge::nonlinearity::preset;
use dispersive_forge::solver::{integrate, OutputPolicy, SolverConfig};
use dispersive_forge::spectral::derivative;
use dispersive_forge::{ForgeError, SpectralGrid, StateFunction};
use proptest::prelude::*;

fn run(name: &str, u0: &StateFunction, eps: f64, t_end: f64, dt_out: f64) -> Vec<StateFunction> {
    let spec = preset(name).unwrap().spec;
    let cfg = SolverConfig {
        epsilon: eps,
        t_end,
        rtol: 1e-10,
        output: OutputPolicy::Uniform(dt_out),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    integrate(&spec, u0, &cfg).unwrap().snapshots
}

fn packet(grid: &SpectralGrid) -> StateFunction {
    InitialData::Packet {
        amplitude: 0.01,
        width: 1.0,
        wavenumber: 6.0,
        center: Some(7.0 * PI),
    }
    .sample(grid)
    .unwrap()
}

#[test]
fn airy_conserves_the_gauged_energy() {
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let u0 = packet(&grid);
    let snaps = run("airy", &u0, 0.0, 0.2, 0.02);
    let spec = preset("airy").unwrap().spec;
    let ledger = gauged_energy_rate(&spec, &snaps, 7, 0.0).unwrap();
    assert!(ledger.sup_rate().abs() < 1e-6, "sup r = {}", ledger.sup_rate());
    for row in &ledger.rows {
        // φ ≡ 1, so gauged and ungauged quantities coincide.
        assert_eq!(row.phi_min, 1.0);
        assert_eq!(row.phi_max, 1.0);
        assert!((row.v_l2 - row.w_l2).abs() <= 1e-14 * row.w_l2);
        if !row.rate.is_nan() {
            assert!((row.normalized_rate - row.ungauged_rate).abs() < 1e-12);
        }
        assert!((row.k_g - 2.0).abs() < 1e-14);
    }
    assert_eq!(ledger.gronwall_holds(), Some(true));
}

#[test]
fn kdv_gauge_norm_is_two() {
    // a₃ = −1 and a₂ = f_z2 + n∂x f_z3 = 0 for every n.
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let u = InitialData::Gaussian { amplitude: 0.5, width: 2.0, center: None }.sample(&grid).unwrap();
    for n in [3, 7, 11] {
        let c = linearized_coefficients(&spec, &u, n, 0.0).unwrap();
        assert!((coefficient_norms(&c, None).unwrap().k_g - 2.0).abs() < 1e-13);
    }
}

#[test]
fn backwards_diffusion_has_infinite_gauge_norm() {
    let spec = preset("linear_backwards").unwrap().spec;
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    let u = InitialData::Mode { k: 2, amplitude: 1.0 }.sample(&grid).unwrap();
    let c = linearized_coefficients(&spec, &u, 7, 0.0).unwrap();
    let norms = coefficient_norms(&c, None).unwrap();
    assert_eq!(norms.k_g, f64::INFINITY);
    assert_eq!(norms.m_tilde, f64::INFINITY);
    let g = build_gauge(&c.a3, &c.a2).unwrap();
    assert!(!g.is_periodic());
    // ∫ a₂/(3a₃) = ∫ −1/3.
    assert!((g.ramp_slope.abs() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sign_changing_a3_is_degenerate() {
    let grid = SpectralGrid::new(2.0 * PI, 64).unwrap();
    let a3 = StateFunction::from_fn(&grid, 0.0, |x| 0.5 + x.cos()).unwrap();
    let zero = StateFunction::zeros(&grid, 0.0);
    assert!(matches!(build_gauge(&a3, &zero), Err(ForgeError::Degeneracy(_))));
}

#[test]
fn gauged_ledger_on_the_oscillatory_preset() {
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let u0 = packet(&grid);
    let eps = 1e-3;
    let snaps = run("linear_gauged", &u0, eps, 0.2, 0.005);
    let spec = preset("linear_gauged").unwrap().spec;
    let ledger = gauged_energy_rate(&spec, &snaps, 7, eps).unwrap();
    assert_eq!(ledger.rows.len(), snaps.len());
    assert!(ledger.rows.last().unwrap().rate.is_nan());
    for row in &ledger.rows {
        // ‖w‖ = ‖φv‖ lies between min φ and max φ times ‖v‖.
        let ratio = row.w_l2 / row.v_l2;
        assert!(ratio >= row.phi_min * (1.0 - 1e-12) && ratio <= row.phi_max * (1.0 + 1e-12));
        assert!(row.gauge_residual < 1e-8);
        assert!(row.k_g.is_finite() && row.m_tilde >= row.k_g);
        assert!(row.parabolic_term <= 0.0);
        if !row.rate.is_nan() {
            assert!(row.normalized_rate <= row.c0_bound, "{row:?}");
        }
    }
    assert!(ledger.sup_ungauged_rate() > ledger.sup_rate());
    assert_eq!(ledger.gronwall_holds(), Some(true));
    for w in ledger.rows.windows(2) {
        assert!(w[1].m_eps >= w[0].m_eps && w[1].k >= w[0].k);
    }
}

#[test]
fn ledger_rejects_bad_input() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    let u = StateFunction::zeros(&grid, 0.0);
    assert!(gauged_energy_rate(&spec, &[u.clone(), u.clone()], 7, 0.0).is_err());
    assert!(gauged_energy_rate(&spec, &[u.clone(), u.clone(), u], 12, 0.0).is_err());
}

#[test]
fn solution_norms_are_running_suprema() {
    let spec = preset("kdv").unwrap().spec;
    let grid = SpectralGrid::new(16.0 * PI, 128).unwrap();
    let u0 = InitialData::Gaussian { amplitude: 0.5, width: 3.0, center: None }.sample(&grid).unwrap();
    let cfg = SolverConfig {
        epsilon: 1e-3,
        t_end: 0.2,
        output: OutputPolicy::Uniform(0.02),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let traj = integrate(&spec, &u0, &cfg).unwrap();
    let rows = solution_norms(&spec, &traj).unwrap();
    assert_eq!(rows.len(), traj.snapshots.len());
    for (r, u) in rows.iter().zip(&traj.snapshots) {
        assert!(r.m_eps >= u.h_norm(7));
        assert!(r.k >= u.h_norm(4).max(1.0));
        assert!(r.dt_u_h4 > 0.0);
    }
    for w in rows.windows(2) {
        assert!(w[1].m_eps >= w[0].m_eps && w[1].k >= w[0].k);
    }
}

fn smooth(grid: &SpectralGrid, base: f64, c: &[(f64, f64)]) -> StateFunction {
    StateFunction::from_fn(grid, 0.0, |x| {
        base + c
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let k = (m + 1) as f64;
                (a * (k * x).cos() + b * (k * x).sin()) / k
            })
            .sum::<f64>()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_gauges_solve_their_ode(
        base in prop_oneof![1.0f64..3.0, -3.0f64..-1.0],
        c3 in proptest::collection::vec((-0.2f64..0.2, -0.2f64..0.2), 4),
        c2 in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4),
    ) {
        let grid = SpectralGrid::new(2.0 * PI, 128).unwrap();
        let a3 = smooth(&grid, base, &c3);
        // a₂/a₃ has zero mean, so φ is periodic and spectral ∂x applies.
        let a2 = a3.zip_values(&smooth(&grid, 0.0, &c2), |a, s| a * s).unwrap();
        let g = build_gauge(&a3, &a2).unwrap();
        prop_assert!(g.is_periodic());
        prop_assert!(g.ode_residual <= 1e-8);
        // Independent check of 6a₃φ′ = (3a₃′ − 2a₂)φ with spectral derivatives.
        let dphi = derivative(&g.phi, 1).unwrap();
        let da3 = derivative(&a3, 1).unwrap();
        let scale = g.phi.max_abs() * (a3.max_abs() + a2.max_abs() + da3.max_abs());
        for i in 0..grid.n() {
            let lhs = 6.0 * a3.values()[i] * dphi.values()[i];
            let rhs = (3.0 * da3.values()[i] - 2.0 * a2.values()[i]) * g.phi.values()[i];
            prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
        }
        prop_assert!((g.phi.values()[0] - 1.0).abs() < 1e-12);
        prop_assert!(g.min() > 0.0);
    }
}
