use std::f64::consts::PI;

use dispersive_forge::spectral::{antiderivative_from_zero, check_interpolation, derivative};
use dispersive_forge::{SpectralGrid, StateFunction};
use proptest::prelude::*;

fn band_limited(grid: &SpectralGrid, coeffs: &[(f64, f64)]) -> StateFunction {
    let k0 = 2.0 * PI / grid.length();
    StateFunction::from_fn(grid, 0.0, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let k = k0 * (m + 1) as f64;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum()
    })
    .unwrap()
}

#[test]
fn sobolev_norm_of_a_mode_matches_quadrature() {
    // ∫₀^{2π} sin²(kx) dx = π, and each derivative multiplies the weight by k².
    let grid = SpectralGrid::new(2.0 * PI, 64).unwrap();
    for k in [1.0f64, 3.0, 7.0] {
        let u = StateFunction::from_fn(&grid, 0.0, |x| (k * x).sin()).unwrap();
        assert!((u.l2_norm() - PI.sqrt()).abs() < 1e-13);
        for s in [1.0, 2.5, 7.0] {
            let expect = (PI * (1.0 + k * k).powf(s)).sqrt();
            assert!((u.sobolev_norm(s).unwrap() / expect - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn gaussian_derivatives_match_closed_form() {
    let grid = SpectralGrid::new(16.0 * PI, 512).unwrap();
    let c = 8.0 * PI;
    let u = StateFunction::from_fn(&grid, 0.0, |x| (-(x - c) * (x - c)).exp()).unwrap();
    let d2 = derivative(&u, 2).unwrap();
    let d3 = derivative(&u, 3).unwrap();
    for (i, x) in grid.nodes().iter().enumerate() {
        let y = x - c;
        let g = (-y * y).exp();
        assert!((d2.values()[i] - (4.0 * y * y - 2.0) * g).abs() < 1e-11);
        assert!((d3.values()[i] - (12.0 * y - 8.0 * y * y * y) * g).abs() < 1e-10);
    }
}

#[test]
fn nyquist_mode_is_dropped_by_derivatives() {
    let grid = SpectralGrid::new(2.0 * PI, 16).unwrap();
    let u = StateFunction::from_fn(&grid, 0.0, |x| (8.0 * x).cos()).unwrap();
    assert!(u.l2_norm() > 1.0);
    assert_eq!(derivative(&u, 1).unwrap().max_abs(), 0.0);
    assert_eq!(derivative(&u, 0).unwrap().values(), u.values());
}

#[test]
fn dealias_keeps_two_thirds() {
    let grid = SpectralGrid::new(2.0 * PI, 24).unwrap();
    let cut = grid.dealias_cutoff();
    assert_eq!(cut, 7);
    let keep = StateFunction::from_fn(&grid, 0.0, |x| (7.0 * x).sin()).unwrap();
    let drop = StateFunction::from_fn(&grid, 0.0, |x| (8.0 * x).sin()).unwrap();
    assert!(keep.dealiased().sub(&keep).unwrap().max_abs() < 1e-14);
    assert!(drop.dealiased().max_abs() < 1e-14);
    assert!((drop.tail_fraction() - 1.0).abs() < 1e-14);
}

#[test]
fn ramp_antiderivative_is_flagged() {
    let grid = SpectralGrid::new(4.0, 32).unwrap();
    let g = StateFunction::from_fn(&grid, 0.0, |x| 0.25 + (PI * x / 2.0).cos()).unwrap();
    let a = antiderivative_from_zero(&g);
    assert!(!a.is_periodic());
    assert!((a.slope() - 0.25).abs() < 1e-14);
    let back = a.derivative().sub(&g).unwrap().max_abs();
    assert!(back < 1e-12);
}

proptest! {
    #[test]
    fn derivatives_compose(
        coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..8),
        a in 0usize..=7,
        b in 0usize..=7,
    ) {
        let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
        let u = band_limited(&grid, &coeffs);
        let two = derivative(&derivative(&u, a).unwrap(), b).unwrap();
        let one = derivative(&u, a + b).unwrap();
        let scale = one.l2_norm().max(1e-300);
        prop_assert!(two.sub(&one).unwrap().l2_norm() <= 1e-10 * scale + 1e-13);
    }

    #[test]
    fn sobolev_norms_are_monotone_in_s(
        coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        s in 0.0f64..10.0,
        ds in 0.0f64..3.0,
    ) {
        let grid = SpectralGrid::new(10.0, 64).unwrap();
        let u = band_limited(&grid, &coeffs);
        prop_assert!(u.sobolev_norm(s).unwrap() <= u.sobolev_norm(s + ds).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn interpolation_inequality_holds(
        coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10),
        theta in 0.0f64..=4.0,
    ) {
        let grid = SpectralGrid::new(2.0 * PI, 64).unwrap();
        let u = band_limited(&grid, &coeffs);
        prop_assume!(u.l2_norm() > 1e-8);
        prop_assert!(check_interpolation(&u, theta).unwrap().satisfied);
    }

    #[test]
    fn transform_round_trips(values in proptest::collection::vec(-10.0f64..10.0, 32)) {
        let grid = SpectralGrid::new(3.0, 32).unwrap();
        let back = grid.inverse(&grid.forward(&values));
        for (a, b) in back.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
