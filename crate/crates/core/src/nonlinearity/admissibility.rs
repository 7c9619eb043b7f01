use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{Expr, Var};
use crate::spectral::{antiderivative_from_zero, derivative, StateFunction};

use super::{modified_diffusion_ratio_on, Jet, NonlinearitySpec, PartialKey};

#[derive(Clone, Debug)]
pub struct AdmissibilityOptions {
    pub seed: u64,
    pub tuples: usize,
    pub z_bound: f64,
    pub x_range: f64,
    pub fd_step: f64,
    pub rel_tol: f64,
    pub decomposition_tol: f64,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            tuples: 1000,
            z_bound: 5.0,
            x_range: 8.0 * std::f64::consts::PI,
            fd_step: 1e-5,
            rel_tol: 1e-6,
            decomposition_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub passed: bool,
    /// Worst residual or bound the verdict was based on.
    pub metric: f64,
    pub detail: String,
}

impl ConditionOutcome {
    fn new(passed: bool, metric: f64, detail: impl Into<String>) -> Self {
        Self {
            passed,
            metric,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub spec: String,
    pub a1: ConditionOutcome,
    pub a2: ConditionOutcome,
    pub a3: ConditionOutcome,
    /// Largest `|mean(g_M)|` over the samples: the slope of `∫₀ˣ g_M`.
    pub ramp_slope: f64,
    /// Partials whose finite-difference check failed, with the relative error.
    pub partial_mismatches: Vec<(String, f64)>,
}

impl AdmissibilityReport {
    pub fn all_passed(&self) -> bool {
        self.a1.passed && self.a2.passed && self.a3.passed
    }
}

pub fn check_admissibility(spec: &NonlinearitySpec, samples: &[StateFunction]) -> AdmissibilityReport {
    check_admissibility_with(spec, samples, &AdmissibilityOptions::default())
}

pub fn check_admissibility_with(
    spec: &NonlinearitySpec,
    samples: &[StateFunction],
    opts: &AdmissibilityOptions,
) -> AdmissibilityReport {
    let jets: Vec<Jet> = samples.iter().filter_map(|u| Jet::new(u, 3, true).ok()).collect();
    let a3 = check_zero_at_zero(spec, &jets, opts);
    let (a1, partial_mismatches) = check_consistency(spec, &jets, opts);
    let (a2, ramp_slope) = check_decomposition(spec, samples, &jets, opts);
    AdmissibilityReport {
        spec: spec.name().to_string(),
        a1,
        a2,
        a3,
        ramp_slope,
        partial_mismatches,
    }
}

fn random_points(opts: &AdmissibilityOptions) -> Vec<[f64; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.tuples)
        .map(|_| {
            let mut p = [0.0; 6];
            for v in p.iter_mut().take(4) {
                *v = rng.gen_range(-opts.z_bound..=opts.z_bound);
            }
            p[4] = rng.gen_range(0.0..opts.x_range);
            p[5] = rng.gen_range(-1.0..=1.0);
            p
        })
        .collect()
}

fn check_zero_at_zero(spec: &NonlinearitySpec, jets: &[Jet], opts: &AdmissibilityOptions) -> ConditionOutcome {
    let mut worst = 0.0f64;
    let mut probe = |x: f64, t: f64| {
        let v = spec.f().eval(&[0.0, 0.0, 0.0, 0.0, x, t]);
        worst = if v.is_finite() { worst.max(v.abs()) } else { f64::INFINITY };
    };
    for jet in jets {
        for &x in &jet.x {
            probe(x, jet.t);
        }
    }
    for p in random_points(opts).iter().take(100) {
        probe(p[4], p[5]);
    }
    let passed = worst <= 1e-14;
    ConditionOutcome::new(
        passed,
        worst,
        if passed {
            "f vanishes on the zero jet".to_string()
        } else {
            format!("f(0, x, t) reaches {worst:e}")
        },
    )
}

fn check_consistency(
    spec: &NonlinearitySpec,
    jets: &[Jet],
    opts: &AdmissibilityOptions,
) -> (ConditionOutcome, Vec<(String, f64)>) {
    let points = random_points(opts);
    let h = opts.fd_step;
    let mut keys: Vec<PartialKey> = spec
        .partials()
        .map(|(k, _)| *k)
        .filter(|k| k.order() <= 3)
        .collect();
    for k in spec.supplied_partials() {
        if !keys.contains(k) {
            keys.push(*k);
        }
    }
    let mut mismatches = Vec::new();
    let mut worst = 0.0f64;
    for key in &keys {
        let (parent, var) = key.parent().expect("stored partials have order >= 1");
        let slot = match var {
            Var::Z3 => 0,
            Var::Z2 => 1,
            Var::Z1 => 2,
            Var::Z0 => 3,
            Var::X => 4,
            Var::T => 5,
        };
        let mut key_worst = 0.0f64;
        let mut usable = 0usize;
        for p in &points {
            let exact = spec.eval_point(key, p).unwrap_or(f64::NAN);
            let mut hi = *p;
            let mut lo = *p;
            hi[slot] += h;
            lo[slot] -= h;
            let fd = (spec.eval_point(&parent, &hi).unwrap_or(f64::NAN)
                - spec.eval_point(&parent, &lo).unwrap_or(f64::NAN))
                / (2.0 * h);
            if !(exact.is_finite() && fd.is_finite()) {
                continue;
            }
            usable += 1;
            key_worst = key_worst.max((exact - fd).abs() / exact.abs().max(1.0));
        }
        if usable == 0 {
            key_worst = f64::INFINITY;
        }
        worst = worst.max(key_worst);
        if key_worst > opts.rel_tol {
            mismatches.push((key.label(), key_worst));
        }
    }

    let mut unbounded = Vec::new();
    for jet in jets {
        let env = jet.env();
        if spec.f().eval_fields(&env).iter().any(|v| !v.is_finite()) {
            unbounded.push("f".to_string());
        }
        for (k, e) in spec.partials().filter(|(k, _)| k.order() <= 3) {
            if e.eval_fields(&env).iter().any(|v| !v.is_finite()) {
                unbounded.push(k.label());
            }
        }
    }
    unbounded.sort();
    unbounded.dedup();

    let passed = mismatches.is_empty() && unbounded.is_empty();
    let detail = if passed {
        format!("{} partials consistent with central differences; all finite on samples", keys.len())
    } else if !unbounded.is_empty() {
        format!("non-finite on samples: {}", unbounded.join(", "))
    } else {
        let names: Vec<&str> = mismatches.iter().map(|m| m.0.as_str()).collect();
        format!("finite-difference mismatch in {}", names.join(", "))
    };
    (ConditionOutcome::new(passed, worst, detail), mismatches)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

fn check_decomposition(
    spec: &NonlinearitySpec,
    samples: &[StateFunction],
    jets: &[Jet],
    opts: &AdmissibilityOptions,
) -> (ConditionOutcome, f64) {
    if samples.is_empty() {
        return (ConditionOutcome::new(false, f64::NAN, "no sample states"), 0.0);
    }
    let mut ramp = 0.0f64;
    let mut ratios = Vec::with_capacity(samples.len());
    for (u, jet) in samples.iter().zip(jets) {
        match modified_diffusion_ratio_on(spec, jet) {
            Ok(g) => {
                let field = match StateFunction::from_values(u.grid(), g, u.time()) {
                    Ok(f) => f,
                    Err(e) => return (ConditionOutcome::new(false, f64::INFINITY, e.to_string()), ramp),
                };
                ramp = ramp.max(antiderivative_from_zero(&field).slope().abs());
                ratios.push(field);
            }
            Err(e) => {
                return (
                    ConditionOutcome::new(false, f64::INFINITY, format!("g_M undefined: {e}")),
                    ramp,
                )
            }
        }
    }

    if let Some(dec) = spec.decomposition() {
        let mut worst = 0.0f64;
        for ((u, jet), g_m) in samples.iter().zip(jets).zip(&ratios) {
            let env = jet.env();
            let gd = match StateFunction::from_values(u.grid(), dec.g_d.eval_fields(&env), u.time()) {
                Ok(f) => f,
                Err(e) => return (ConditionOutcome::new(false, f64::INFINITY, format!("g_D: {e}")), ramp),
            };
            let dgd = derivative(&gd, 1).expect("order 1");
            let gh = dec.g_h.eval_fields(&env);
            for i in 0..gh.len() {
                let r = g_m.values()[i] - dgd.values()[i] - gh[i];
                worst = if r.is_finite() { worst.max(r.abs()) } else { f64::INFINITY };
            }
        }
        let cubic = g_h_vanishing(&dec.g_h, jets, opts);
        let passed = worst <= opts.decomposition_tol && cubic <= 1e-12;
        let detail = if passed {
            format!("g_M = d/dx g_D + g_H holds to {worst:.2e}")
        } else if cubic > 1e-12 {
            format!("g_H or its first jet partials do not vanish at zero ({cubic:.2e})")
        } else {
            format!("decomposition residual {worst:.2e} exceeds {:.0e}", opts.decomposition_tol)
        };
        return (ConditionOutcome::new(passed, worst.max(cubic), detail), ramp);
    }

    // No decomposition supplied: test the necessary structure at the zero jet.
    let f3 = spec.partial(&PartialKey::z(3)).ok().flatten();
    let f2 = spec.partial(&PartialKey::z(2)).ok().flatten();
    let Some(f3) = f3 else {
        return (ConditionOutcome::new(false, f64::INFINITY, "f_z3 vanishes identically"), ramp);
    };
    let mut constant_term = 0.0f64;
    let mut adjoint = 0.0f64;
    for (u, jet) in samples.iter().zip(jets) {
        let grid = u.grid();
        let n = grid.n();
        let mut gc = vec![0.0; n];
        let mut gj = vec![vec![0.0; n]; 4];
        for (i, &x) in jet.x.iter().enumerate() {
            let p = [0.0, 0.0, 0.0, 0.0, x, jet.t];
            let d = f3.eval(&p);
            if !(d.abs() > 1e-14) {
                return (
                    ConditionOutcome::new(
                        false,
                        f64::INFINITY,
                        "dispersion degenerates at the zero jet and no decomposition was supplied",
                    ),
                    ramp,
                );
            }
            let num = f2.map_or(0.0, |e| e.eval(&p));
            gc[i] = num / d;
            for (j, slot) in gj.iter_mut().enumerate() {
                let v = Var::z(j);
                let dn = spec.eval_point(&PartialKey::z(2).with(v), &p).unwrap_or(f64::NAN);
                let dd = spec.eval_point(&PartialKey::z(3).with(v), &p).unwrap_or(f64::NAN);
                slot[i] = (dn * d - num * dd) / (d * d);
            }
        }
        constant_term = constant_term.max(sup(&gc));
        // Formal adjoint of the linear part applied to 1: Σ_j (−∂x)^j g_j.
        let mut acc = vec![0.0; n];
        for (j, g) in gj.into_iter().enumerate() {
            let field = match StateFunction::from_values(grid, g, u.time()) {
                Ok(f) => f,
                Err(e) => return (ConditionOutcome::new(false, f64::INFINITY, e.to_string()), ramp),
            };
            let d = derivative(&field, j).expect("order <= 3");
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            for (a, v) in acc.iter_mut().zip(d.values()) {
                *a += sign * v;
            }
        }
        adjoint = adjoint.max(sup(&acc));
    }
    let tol = opts.decomposition_tol;
    let passed = constant_term <= tol && adjoint <= tol;
    let mut detail = if passed {
        "no decomposition supplied; zero-jet structure admits one (necessary conditions only)".to_string()
    } else if constant_term > tol {
        format!("g_M has a constant-in-z part of size {constant_term:.2e}")
    } else {
        format!("linear part of g_M is not a total derivative (adjoint residual {adjoint:.2e})")
    };
    if ramp > 1e-12 {
        detail.push_str(&format!("; ramp detected in the antiderivative of g_M (slope {ramp:.3e})"));
    }
    (ConditionOutcome::new(passed, constant_term.max(adjoint), detail), ramp)
}

/// Largest `|g_H|` or `|∂_{z_j} g_H|` at the zero jet over the sampled `(x, t)`.
fn g_h_vanishing(g_h: &Expr, jets: &[Jet], opts: &AdmissibilityOptions) -> f64 {
    let partials: Vec<Expr> = (0..4).map(|j| g_h.diff(Var::z(j))).collect();
    let mut worst = 0.0f64;
    let mut probe = |x: f64, t: f64| {
        let p = [0.0, 0.0, 0.0, 0.0, x, t];
        let mut vals = vec![g_h.eval(&p)];
        vals.extend(partials.iter().map(|e| e.eval(&p)));
        for v in vals {
            worst = if v.is_finite() { worst.max(v.abs()) } else { f64::INFINITY };
        }
    };
    for jet in jets {
        for &x in jet.x.iter().step_by(4) {
            probe(x, jet.t);
        }
    }
    for p in random_points(opts).iter().take(50) {
        probe(p[4], p[5]);
    }
    worst
}
