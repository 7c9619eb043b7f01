use std::collections::BTreeMap;
use std::f64::consts::PI;

use dispersive_forge::coeff::{
    all_indices, enumerate_indices, explicit_coefficients, expansion_terms, leading_coefficients,
    linearized_coefficients, reconstruction_error, remainder_norm_check, IndexFilter, MAX_ORDER,
};
use dispersive_forge::data::InitialData;
use dispersive_forge::nonlinearity::preset;
use dispersive_forge::spectral::derivative;
use dispersive_forge::{SpectralGrid, StateFunction};
use proptest::prelude::*;

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

fn stirling2(n: usize, k: usize) -> u64 {
    let mut s = vec![vec![0u64; n + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for j in 1..=i {
            s[i][j] = j as u64 * s[i - 1][j] + s[i - 1][j - 1];
        }
    }
    s[n][k]
}

#[test]
fn multiplicities_follow_faa_di_bruno() {
    for n in 1..=MAX_ORDER {
        for t in all_indices(n, IndexFilter::Unrestricted).unwrap() {
            let mut repeats: BTreeMap<(u8, i8), u64> = BTreeMap::new();
            for p in t.orders.iter().zip(&t.slots) {
                *repeats.entry((*p.0, *p.1)).or_insert(0) += 1;
            }
            let denom: u64 = t.orders.iter().map(|&i| factorial(i as u64)).product::<u64>()
                * repeats.values().map(|&m| factorial(m)).product::<u64>();
            assert_eq!(t.multiplicity, factorial(n as u64) / denom, "{t:?}");
            assert_eq!(t.n(), n);
        }
    }
}

#[test]
fn total_weight_is_a_stirling_sum() {
    // Each block of a set partition of the n derivatives picks one of 5 slots.
    for n in 1..=MAX_ORDER {
        for k in 1..=n {
            let weight: u64 = enumerate_indices(n, k, IndexFilter::Unrestricted)
                .unwrap()
                .iter()
                .map(|t| t.multiplicity)
                .sum();
            assert_eq!(weight, stirling2(n, k) * 5u64.pow(k as u32), "n={n} k={k}");
        }
    }
}

#[test]
fn pruning_only_drops_vanishing_tuples() {
    for n in 1..=MAX_ORDER {
        let full = all_indices(n, IndexFilter::Unrestricted).unwrap();
        let kept = all_indices(n, IndexFilter::NonVanishing).unwrap();
        let expected: Vec<_> = full.into_iter().filter(|t| t.is_nonvanishing()).collect();
        let mut a = expected.clone();
        let mut b = kept.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b, "n={n}");
        for t in all_indices(n, IndexFilter::Remainder).unwrap() {
            assert!(t.orders.iter().zip(&t.slots).all(|(&i, &j)| (i as i64 + j as i64) < n as i64));
        }
    }
}

#[test]
fn merged_terms_conserve_weight() {
    for n in 1..=MAX_ORDER {
        let tuples: u64 = all_indices(n, IndexFilter::NonVanishing).unwrap().iter().map(|t| t.multiplicity).sum();
        let merged: u64 = expansion_terms(n).unwrap().iter().map(|t| t.coeff).sum();
        assert_eq!(tuples, merged);
    }
}

#[test]
fn kdv_third_order_buckets() {
    // ∂x³(−u₃ − 6uu₁) = −u₆ − 6uu₄ − 24u₁u₃ − 18u₂².
    let p = preset("kdv").unwrap();
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let u = p.data.sample(&grid).unwrap();
    let c = linearized_coefficients(&p.spec, &u, 3, 0.0).unwrap();
    let ud = u.dealiased();
    let d = |k| derivative(&ud, k).unwrap();
    let (u1, u2) = (d(1), d(2));
    for i in 0..grid.n() {
        assert!((c.a3.values()[i] + 1.0).abs() < 1e-14);
        assert!(c.a2.values()[i].abs() < 1e-14);
        assert!((c.a1.values()[i] + 6.0 * ud.values()[i]).abs() < 1e-12);
        assert!((c.a0.values()[i] + 24.0 * u1.values()[i]).abs() < 1e-12);
        assert!((c.remainder.values()[i] + 18.0 * u2.values()[i].powi(2)).abs() < 1e-12);
    }
}

#[test]
fn recursion_agrees_with_direct_assembly() {
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    for name in ["kdv", "k22"] {
        let p = preset(name).unwrap();
        let u = p.data.sample(&grid).unwrap();
        for n in 8..=MAX_ORDER {
            let direct = explicit_coefficients(&p.spec, &u, n, 0.0).unwrap();
            let rec = linearized_coefficients(&p.spec, &u, n, 0.0).unwrap();
            for (a, b) in [(&direct.a3, &rec.a3), (&direct.a2, &rec.a2), (&direct.a1, &rec.a1), (&direct.a0, &rec.a0)] {
                let scale = a.l2_norm().max(1e-300);
                assert!(a.sub(b).unwrap().l2_norm() <= 1e-9 * scale + 1e-12, "{name} n={n}");
            }
            let (a3, a2) = leading_coefficients(&p.spec, &u, n).unwrap();
            assert!(a3.sub(&rec.a3).unwrap().max_abs() < 1e-12);
            assert!(a2.sub(&rec.a2).unwrap().max_abs() < 1e-9 * rec.a2.max_abs().max(1.0));
        }
    }
}

#[test]
fn remainder_constant_depends_on_low_norm_only() {
    let p = preset("kdv").unwrap();
    let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
    let states: Vec<StateFunction> = [0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&a| InitialData::Gaussian { amplitude: a, width: 2.0, center: None }.sample(&grid).unwrap())
        .collect();
    // KdV is quadratic, so the ratio may grow like ‖u‖_{H⁷}² but never faster.
    for n in [7, 8, 11] {
        let report = remainder_norm_check(&p.spec, &states, n, 2.5).unwrap();
        assert!(report.bounded, "n={n}: {:?}", report.growth_exponent);
    }
    assert!(remainder_norm_check(&p.spec, &states, 9, 2.0).is_err());
}

#[test]
fn order_bounds_are_enforced() {
    let p = preset("kdv").unwrap();
    let grid = SpectralGrid::new(2.0 * PI, 32).unwrap();
    let u = StateFunction::zeros(&grid, 0.0);
    assert!(linearized_coefficients(&p.spec, &u, 2, 0.0).is_err());
    assert!(linearized_coefficients(&p.spec, &u, 12, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_identity_on_random_data(
        amp in 0.05f64..0.6,
        // Wider profiles make ‖∂x¹¹f‖ so small that FFT roundoff in the top
        // modes, amplified by ξ¹⁴, dominates the relative error.
        width in 1.0f64..2.5,
        n in 3usize..=11,
        k22 in any::<bool>(),
    ) {
        let grid = SpectralGrid::new(16.0 * PI, 256).unwrap();
        let (name, data) = if k22 {
            ("k22", InitialData::Bump { base: 1.5, amplitude: amp, width, center: None })
        } else {
            ("kdv", InitialData::Gaussian { amplitude: amp, width, center: None })
        };
        let p = preset(name).unwrap();
        let u = data.sample(&grid).unwrap();
        let tol = if n <= 7 { 1e-6 } else { 1e-4 };
        prop_assert!(reconstruction_error(&p.spec, &u, n).unwrap() <= tol);
    }
}
