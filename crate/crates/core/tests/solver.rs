use std::f64::consts::PI;

use dispersive_forge::data::InitialData;
use dispersive_forge::expr::parse;
use dispersive_forge::nonlinearity::{preset, NonlinearitySpec};
use dispersive_forge::solver::{
    check_blowup, integrate, integrate_reversed, step, OutputPolicy, SolverConfig, Termination,
};
use dispersive_forge::{SpectralGrid, StateFunction};
use proptest::prelude::*;

fn soliton(grid: &SpectralGrid, kappa: f64, center: f64, t: f64) -> StateFunction {
    let c = 4.0 * kappa * kappa;
    StateFunction::from_fn(grid, t, |x| {
        let s = 1.0 / (kappa * (x - center - c * t)).cosh();
        2.0 * kappa * kappa * s * s
    })
    .unwrap()
}

fn kdv() -> NonlinearitySpec {
    preset("kdv").unwrap().spec
}

#[test]
fn kdv_soliton_translates() {
    let grid = SpectralGrid::new(32.0 * PI, 512).unwrap();
    let x0 = 16.0 * PI - 10.0;
    let u0 = soliton(&grid, 0.5, x0, 0.0);
    let cfg = SolverConfig {
        t_end: 1.0,
        rtol: 1e-11,
        atol: 1e-14,
        output: OutputPolicy::Uniform(0.5),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let traj = integrate(&kdv(), &u0, &cfg).unwrap();
    assert_eq!(traj.termination, Termination::ReachedTEnd);
    let exact = soliton(&grid, 0.5, x0, 1.0);
    let err = traj.final_state().sub(&exact).unwrap().l2_norm();
    assert!(err < 1e-6, "soliton L2 error {err:e}");
    assert!(traj.reality_defect < 1e-10);
}

#[test]
fn fixed_step_order_is_four() {
    let grid = SpectralGrid::new(16.0 * PI, 128).unwrap();
    let u0 = InitialData::Gaussian {
        amplitude: 0.5,
        width: 3.0,
        center: None,
    }
    .sample(&grid)
    .unwrap();
    let run = |dt: f64| {
        let cfg = SolverConfig {
            epsilon: 1e-3,
            dt_init: dt,
            dt_min: dt,
            t_end: 0.1,
            adaptive: false,
            output: OutputPolicy::Uniform(0.1),
            gauge_diagnostics: false,
            ..SolverConfig::default()
        };
        integrate(&kdv(), &u0, &cfg).unwrap().final_state().clone()
    };
    let dt = 0.01;
    let reference = run(dt / 16.0);
    let e1 = run(dt).sub(&reference).unwrap().l2_norm();
    let e2 = run(dt / 2.0).sub(&reference).unwrap().l2_norm();
    let ratio = e1 / e2;
    assert!((12.0..=20.0).contains(&ratio), "halving ratio {ratio}");
}

#[test]
fn kdv_reverses_to_initial_data() {
    let grid = SpectralGrid::new(32.0 * PI, 256).unwrap();
    let u0 = soliton(&grid, 0.5, 40.0, 0.0);
    let cfg = SolverConfig {
        t_end: 1.0,
        rtol: 1e-10,
        output: OutputPolicy::Uniform(1.0),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let fwd = integrate(&kdv(), &u0, &cfg).unwrap();
    let (_, back) = integrate_reversed(&kdv(), fwd.final_state(), 0.0, &cfg).unwrap();
    assert!(back.time().abs() < 1e-12);
    let err = back.sub(&u0).unwrap().l2_norm();
    assert!(err < 1e-5, "round trip error {err:e}");
}

#[test]
fn backwards_heat_mode_grows_exponentially() {
    let spec = preset("linear_backwards").unwrap().spec;
    // Roundoff in any higher retained mode would grow like e^{ξ²t} and swamp
    // the signal, so the grid keeps only |k| ≤ 2.
    let grid = SpectralGrid::new(2.0 * PI, 8).unwrap();
    for k in [1.0f64, 2.0] {
        let u0 = StateFunction::from_fn(&grid, 0.0, |x| 1e-3 * (k * x).cos()).unwrap();
        let t_end = 2.0 / (k * k);
        let cfg = SolverConfig {
            t_end,
            output: OutputPolicy::Uniform(t_end / 8.0),
            blowup_threshold_h4: Some(1e12),
            gauge_diagnostics: false,
            ..SolverConfig::default()
        };
        let traj = integrate(&spec, &u0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd, "k = {k}, t = {}", traj.final_time());
        for s in &traj.snapshots {
            let expect = u0.l2_norm() * (k * k * s.time()).exp();
            assert!((s.l2_norm() / expect - 1.0).abs() < 0.01);
        }
    }
}

#[test]
fn kdv_hyperdiffusion_dissipates_l2() {
    let grid = SpectralGrid::new(32.0 * PI, 256).unwrap();
    let u0 = soliton(&grid, 0.5, 40.0, 0.0);
    let eps = 1e-4;
    let cfg = SolverConfig {
        epsilon: eps,
        t_end: 1.0,
        rtol: 1e-10,
        output: OutputPolicy::Uniform(0.05),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let traj = integrate(&kdv(), &u0, &cfg).unwrap();
    assert_eq!(traj.termination, Termination::ReachedTEnd);
    for w in traj.snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert!(b.l2_norm() < a.l2_norm());
        // d/dt ‖u‖² = −2ε‖∂²u‖², trapezoid in time.
        let dt = b.time() - a.time();
        let rate = -eps
            * (a.derivative(2).unwrap().l2_norm().powi(2) + b.derivative(2).unwrap().l2_norm().powi(2))
            * dt;
        let actual = b.l2_norm().powi(2) - a.l2_norm().powi(2);
        assert!((actual - rate).abs() < 1e-3 * rate.abs() + 1e-12, "{actual:e} vs {rate:e}");
    }
}

#[test]
fn blowup_fires_within_one_step_of_crossing() {
    let spec = preset("linear_backwards").unwrap().spec;
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    let u0 = StateFunction::from_fn(&grid, 0.0, |x| 1e-3 * (4.0 * x).cos()).unwrap();
    let threshold = 100.0 * u0.h_norm(4);
    let cfg = SolverConfig {
        t_end: 10.0,
        blowup_threshold_h4: Some(threshold),
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let traj = integrate(&spec, &u0, &cfg).unwrap();
    assert_eq!(traj.termination, Termination::BlowupDetected);
    let t_cross = (threshold / u0.h_norm(4)).ln() / 16.0;
    let rows = &traj.diagnostics.rows;
    let t_hit = rows.last().unwrap().t;
    let h = t_hit - rows[rows.len() - 2].t;
    assert!(t_hit >= t_cross && t_hit <= t_cross + h, "{t_hit} vs {t_cross} (h = {h})");
    assert!(rows[..rows.len() - 1].iter().all(|r| r.h4 <= threshold));
}

#[test]
fn pilod_survives_longer_with_viscosity() {
    let spec = preset("pilod_illposed").unwrap().spec;
    let grid = SpectralGrid::new(2.0 * PI, 64).unwrap();
    let u0 = StateFunction::from_fn(&grid, 0.0, |x| 0.5 * x.cos() + 1e-3 * (15.0 * x).sin()).unwrap();
    let run = |eps: f64| {
        let cfg = SolverConfig {
            epsilon: eps,
            t_end: 5.0,
            dt_min: 1e-9,
            gauge_diagnostics: false,
            ..SolverConfig::default()
        };
        integrate(&spec, &u0, &cfg).unwrap()
    };
    let inviscid = run(0.0);
    assert!(matches!(
        inviscid.termination,
        Termination::BlowupDetected | Termination::StepUnderflow
    ));
    let viscous = run(1e-3);
    assert!(viscous.final_time() > inviscid.final_time());
}

#[test]
fn check_blowup_definition() {
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    assert!(!check_blowup(&StateFunction::zeros(&grid, 0.0), 1.0));
    let u = StateFunction::from_fn(&grid, 0.0, f64::sin).unwrap();
    let th = u.h_norm(4) / 1.01;
    assert!(check_blowup(&u, th));
}

#[test]
fn diagnostics_track_every_accepted_step() {
    let grid = SpectralGrid::new(16.0 * PI, 128).unwrap();
    let u0 = soliton(&grid, 0.5, 25.0, 0.0);
    let cfg = SolverConfig {
        t_end: 0.2,
        epsilon: 1e-3,
        ..SolverConfig::default()
    };
    let traj = integrate(&kdv(), &u0, &cfg).unwrap();
    assert_eq!(traj.diagnostics.rows.len(), traj.steps_accepted + 1);
    assert_eq!(traj.snapshots.len(), traj.steps_accepted + 1);
    for w in traj.snapshots.windows(2) {
        assert!(w[1].time() > w[0].time());
    }
    for w in traj.diagnostics.rows.windows(2) {
        assert!(w[1].k_of_t >= w[0].k_of_t);
        assert!(w[1].m_eps >= w[0].m_eps);
    }
    let r = traj.diagnostics.rows.last().unwrap();
    assert!(r.gauge_residual < 1e-8 && r.energy_rate.is_finite());
    assert!(traj.dissipation_integral > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hyperdiffusion_contracts_every_mode(
        eps in 0.0f64..2.0,
        dt in 1e-4f64..0.5,
        coeffs in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
        let u = StateFunction::from_fn(&grid, 0.0, |x| {
            coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * x + k as f64).sin()).sum()
        })
        .unwrap();
        let zero = NonlinearitySpec::from_expr("zero", parse("0").unwrap(), 3).unwrap();
        let out = step(&zero, &u, dt, eps).unwrap().state;
        for (a, b) in out.spectrum().iter().zip(u.spectrum()) {
            prop_assert!(a.norm() <= b.norm() * (1.0 + 1e-12) + 1e-15);
        }
        for s in [0.0, 2.0, 4.0, 7.0] {
            prop_assert!(out.sobolev_norm(s).unwrap() <= u.sobolev_norm(s).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn runs_stay_real(amp in 0.05f64..0.5, width in 1.5f64..4.0) {
        let grid = SpectralGrid::new(16.0 * PI, 64).unwrap();
        let u0 = InitialData::Gaussian { amplitude: amp, width, center: None }.sample(&grid).unwrap();
        let cfg = SolverConfig {
            t_end: 0.05,
            epsilon: 1e-3,
            gauge_diagnostics: false,
            ..SolverConfig::default()
        };
        let traj = integrate(&kdv(), &u0, &cfg).unwrap();
        prop_assert!(traj.reality_defect < 1e-10);
    }
}
