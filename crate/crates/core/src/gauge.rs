//! Gauge transforms for the linearized equation and the energy ledger built
//! on them.
//!
//! For `w_t = a₃∂³w + a₂∂²w + … + h`, the multiplier
//! `φ = (a₃/a₃(0))^{1/2} exp(−∫₀ˣ a₂/(3a₃))` solves `6a₃φ′ = (3a₃′ − 2a₂)φ`, and
//! `v = w/φ` has no net second-order energy flux.

use serde::Serialize;

use crate::coeff::{linearized_coefficients, LinearizedCoefficients};
use crate::error::{ForgeError, Result};
use crate::nonlinearity::{dispersion_lambda, NonlinearitySpec};
use crate::solver::Trajectory;
use crate::spectral::{antiderivative_from_zero, derivative, Antiderivative, StateFunction};

const A3_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct GaugeField {
    pub phi: StateFunction,
    pub a3: StateFunction,
    pub a2: StateFunction,
    pub ode_residual: f64,
    /// Slope of `∫₀ˣ a₂/(3a₃)`; nonzero means `φ` is not periodic.
    pub ramp_slope: f64,
    periodic: bool,
    log_phi_derivative: Vec<f64>,
}

impl GaugeField {
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn min(&self) -> f64 {
        self.phi.values().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.phi.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `φ′/φ` on the grid.
    pub fn log_derivative(&self) -> &[f64] {
        &self.log_phi_derivative
    }

    /// `v = w/φ`.
    pub fn apply_inverse(&self, w: &StateFunction) -> Result<StateFunction> {
        w.zip_values(&self.phi, |a, p| a / p)
    }
}

fn check_a3(a3: &StateFunction) -> Result<()> {
    let v = a3.values();
    let sign = v[0].signum();
    for (i, &a) in v.iter().enumerate() {
        if !(a.abs() > A3_FLOOR) {
            return Err(ForgeError::Degeneracy(format!(
                "a3 vanishes at node {i} (x = {})",
                i as f64 * a3.grid().spacing()
            )));
        }
        if a.signum() != sign {
            return Err(ForgeError::Degeneracy(format!("a3 changes sign at node {i}")));
        }
    }
    Ok(())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

pub fn build_gauge(a3: &StateFunction, a2: &StateFunction) -> Result<GaugeField> {
    a3.check_same_grid(a2)?;
    check_a3(a3)?;
    let grid = a3.grid();
    let ratio = a2.zip_values(a3, |b, a| b / (3.0 * a))?;
    let g: Antiderivative = antiderivative_from_zero(&ratio);
    let a30 = a3.values()[0];
    let log_a = a3.map_values(|a| 0.5 * (a / a30).ln())?;
    let g_vals = g.values();
    let phi_vals: Vec<f64> = log_a
        .values()
        .iter()
        .zip(&g_vals)
        .map(|(l, gv)| (l - gv).exp())
        .collect();
    let phi = StateFunction::from_values(grid, phi_vals, a3.time())?;

    let dlog_a = derivative(&log_a, 1)?;
    let dg = g.derivative();
    let log_phi_derivative: Vec<f64> = dlog_a
        .values()
        .iter()
        .zip(dg.values())
        .map(|(a, b)| a - b)
        .collect();

    // The periodic case differentiates φ itself; otherwise the log-derivative
    // route avoids the jump at the wrap point.
    let dphi: Vec<f64> = if g.is_periodic() {
        derivative(&phi, 1)?.into_values()
    } else {
        phi.values()
            .iter()
            .zip(&log_phi_derivative)
            .map(|(p, l)| p * l)
            .collect()
    };
    let da3 = derivative(a3, 1)?;
    let mut worst = 0.0f64;
    for i in 0..grid.n() {
        let r = 6.0 * a3.values()[i] * dphi[i]
            - (3.0 * da3.values()[i] - 2.0 * a2.values()[i]) * phi.values()[i];
        worst = worst.max(r.abs());
    }
    let ode_residual = worst / phi.max_abs();
    Ok(GaugeField {
        periodic: g.is_periodic(),
        ramp_slope: g.slope(),
        phi,
        a3: a3.clone(),
        a2: a2.clone(),
        ode_residual,
        log_phi_derivative,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoefficientNorms {
    pub k_g: f64,
    pub m_tilde: f64,
}

fn w_norm(a: &StateFunction, order: usize) -> Result<f64> {
    let mut s = 0.0;
    for m in 0..=order {
        s += sup(derivative(a, m)?.values());
    }
    Ok(s)
}

/// `k_G = ‖∫₀ˣ a₂/a₃‖ + ‖1/a₃‖ + ‖a₃‖` and the larger `M̃`, all in sup norms.
///
/// The time derivatives in `M̃` are differences between the coefficient sets
/// in `probe = (earlier, later, dt_probe)`; pass `None` for a static
/// evaluation. A ramp in `∫ a₂/a₃` or a vanishing `a₃` gives `+∞`.
pub fn coefficient_norms(
    coeffs: &LinearizedCoefficients,
    probe: Option<(&LinearizedCoefficients, &LinearizedCoefficients, f64)>,
) -> Result<CoefficientNorms> {
    let infinite = CoefficientNorms {
        k_g: f64::INFINITY,
        m_tilde: f64::INFINITY,
    };
    if check_a3(&coeffs.a3).is_err() {
        return Ok(infinite);
    }
    let integral = |c: &LinearizedCoefficients| -> Result<Antiderivative> {
        let ratio = c.a2.zip_values(&c.a3, |b, a| b / a)?;
        Ok(antiderivative_from_zero(&ratio))
    };
    let i_now = integral(coeffs)?;
    if !i_now.is_periodic() {
        return Ok(infinite);
    }
    let inv = sup(&coeffs.a3.values().iter().map(|a| 1.0 / a).collect::<Vec<_>>());
    let i_sup = i_now.max_abs();
    let k_g = i_sup + inv + sup(coeffs.a3.values());

    let mut m_tilde = w_norm(&coeffs.a3, 3)?
        + w_norm(&coeffs.a2, 2)?
        + w_norm(&coeffs.a1, 1)?
        + w_norm(&coeffs.a0, 0)?
        + inv
        + i_sup;
    if let Some((early, late, dt_probe)) = probe {
        if dt_probe > 0.0 && check_a3(&early.a3).is_ok() && check_a3(&late.a3).is_ok() {
            let (i_early, i_late) = (integral(early)?, integral(late)?);
            let di: Vec<f64> = i_late
                .values()
                .iter()
                .zip(i_early.values())
                .map(|(a, b)| (a - b) / dt_probe)
                .collect();
            let da3: Vec<f64> = late
                .a3
                .values()
                .iter()
                .zip(early.a3.values())
                .map(|(a, b)| (a - b) / dt_probe)
                .collect();
            m_tilde += sup(&di) + sup(&da3);
        }
    }
    Ok(CoefficientNorms { k_g, m_tilde })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRow {
    pub t: f64,
    pub v_l2: f64,
    pub w_l2: f64,
    /// Forward difference of `‖v‖²` over the next interval.
    pub rate: f64,
    /// `2‖c₀‖_∞`, the rate bound predicted by integrating by parts.
    pub c0_bound: f64,
    pub k_g: f64,
    pub m_tilde: f64,
    pub m_eps: f64,
    pub k: f64,
    pub forcing_l2: f64,
    /// `rate / (‖v‖² + ‖v‖‖f̃ₙ‖)`.
    pub normalized_rate: f64,
    /// Same normalization for `‖w‖²` without the gauge.
    pub ungauged_rate: f64,
    /// `−2ε(φ⁻²∂⁴w, w) / ‖w‖²`.
    pub parabolic_term: f64,
    pub gauge_residual: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyLedger {
    pub order: usize,
    pub epsilon: f64,
    pub rows: Vec<EnergyRow>,
}

impl EnergyLedger {
    /// `sup r(t)` over rows with a defined rate.
    pub fn sup_rate(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.normalized_rate)
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_ungauged_rate(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ungauged_rate)
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete Grönwall bound implied by the ledger's own headline
    /// `R = max(sup r, 0)`:
    /// `‖v(tᵢ)‖ ≤ e^{R(tᵢ−t₀)/2} (‖v(t₀)‖ + (R/2) Σ_{m<i} Δt_m ‖f̃ₙ(t_m)‖)`.
    ///
    /// Returns `None` when a degenerate row leaves the rate undefined.
    pub fn gronwall_holds(&self) -> Option<bool> {
        if self.rows.iter().any(|r| r.degenerate) || self.rows.is_empty() {
            return None;
        }
        let r = self.sup_rate().max(0.0);
        let t0 = self.rows[0].t;
        let y0 = self.rows[0].v_l2;
        let mut forcing = 0.0;
        for i in 0..self.rows.len() {
            if i > 0 {
                let prev = &self.rows[i - 1];
                forcing += (self.rows[i].t - prev.t) * prev.forcing_l2;
            }
            let bound = (r * (self.rows[i].t - t0) / 2.0).exp() * (y0 + 0.5 * r * forcing);
            if self.rows[i].v_l2 > bound * (1.0 + 1e-10) + 1e-300 {
                return Some(false);
            }
        }
        Some(true)
    }

    /// The cruder form `‖v(tᵢ)‖ ≤ e^{R(tᵢ−t₀)} (‖v(t₀)‖ + ∫ ‖f̃ₙ‖)`, which
    /// does not follow from the rate bound when `R > 2`; reported, not relied on.
    pub fn gronwall_literal_holds(&self) -> Option<bool> {
        if self.rows.iter().any(|r| r.degenerate) || self.rows.is_empty() {
            return None;
        }
        let r = self.sup_rate().max(0.0);
        let (t0, y0) = (self.rows[0].t, self.rows[0].v_l2);
        let mut forcing = 0.0;
        for i in 0..self.rows.len() {
            if i > 0 {
                let prev = &self.rows[i - 1];
                forcing += (self.rows[i].t - prev.t) * prev.forcing_l2;
            }
            if self.rows[i].v_l2 > (r * (self.rows[i].t - t0)).exp() * (y0 + forcing) * (1.0 + 1e-10) {
                return Some(false);
            }
        }
        Some(true)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_rows(w, &self.rows)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionNormRow {
    pub t: f64,
    pub m_eps: f64,
    pub k: f64,
    /// Centered difference of the snapshots in `H⁴`, one-sided at the ends.
    pub dt_u_h4: f64,
}

/// Running suprema `M_ε(t)`, `k(t)` and the `‖∂t u‖_{H⁴}` surrogate along a
/// trajectory's snapshots.
pub fn solution_norms(spec: &NonlinearitySpec, traj: &Trajectory) -> Result<Vec<SolutionNormRow>> {
    let snaps = &traj.snapshots;
    let (mut h7, mut h8, mut k) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(snaps.len());
    for (i, u) in snaps.iter().enumerate() {
        h7 = h7.max(u.h_norm(7));
        h8 = h8.max(u.h_norm(8));
        k = k.max(u.h_norm(4).max(dispersion_lambda(spec, u)));
        let dt_u_h4 = if snaps.len() < 2 {
            0.0
        } else {
            let lo = &snaps[i.saturating_sub(1)];
            let hi = &snaps[(i + 1).min(snaps.len() - 1)];
            hi.sub(lo)?.h_norm(4) / (hi.time() - lo.time())
        };
        out.push(SolutionNormRow {
            t: u.time(),
            m_eps: h7 + traj.epsilon * h8,
            k,
            dt_u_h4,
        });
    }
    Ok(out)
}

/// Gauged energy bookkeeping for `w = ∂xⁿu` along a sequence of snapshots.
pub fn gauged_energy_rate(
    spec: &NonlinearitySpec,
    snapshots: &[StateFunction],
    n: usize,
    epsilon: f64,
) -> Result<EnergyLedger> {
    if !(3..=11).contains(&n) {
        return Err(ForgeError::Argument(format!("energy order must lie in [3, 11], got {n}")));
    }
    if snapshots.len() < 3 {
        return Err(ForgeError::Argument("energy ledger needs at least 3 snapshots".into()));
    }
    struct Sample {
        t: f64,
        coeffs: LinearizedCoefficients,
        gauge: Option<GaugeField>,
        w: StateFunction,
        v_l2: f64,
        forcing: f64,
        h4: f64,
        h7: f64,
        h8: f64,
        lambda: f64,
    }
    let mut samples = Vec::with_capacity(snapshots.len());
    for u in snapshots {
        let coeffs = linearized_coefficients(spec, u, n, epsilon)?;
        let w = derivative(u, n)?;
        let gauge = build_gauge(&coeffs.a3, &coeffs.a2).ok();
        let v_l2 = match &gauge {
            Some(g) => g.apply_inverse(&w)?.l2_norm(),
            None => f64::NAN,
        };
        samples.push(Sample {
            t: u.time(),
            forcing: coeffs.remainder.l2_norm(),
            coeffs,
            gauge,
            w,
            v_l2,
            h4: u.h_norm(4),
            h7: u.h_norm(7),
            h8: u.h_norm(8),
            lambda: dispersion_lambda(spec, u),
        });
    }

    let mut rows = Vec::with_capacity(samples.len());
    let (mut sup_h7, mut sup_h8, mut sup_k) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..samples.len() {
        let s = &samples[i];
        sup_h7 = sup_h7.max(s.h7);
        sup_h8 = sup_h8.max(s.h8);
        sup_k = sup_k.max(s.h4.max(s.lambda));
        // Centered where both neighbors exist, one-sided at the ends.
        let lo = &samples[i.saturating_sub(1)];
        let hi = &samples[(i + 1).min(samples.len() - 1)];
        let norms = coefficient_norms(&s.coeffs, Some((&lo.coeffs, &hi.coeffs, hi.t - lo.t)))?;
        let w_l2 = s.w.l2_norm();
        let (rate, normalized_rate, ungauged_rate) = match samples.get(i + 1) {
            Some(next) => {
                let dt = next.t - s.t;
                let rate = (next.v_l2.powi(2) - s.v_l2.powi(2)) / dt;
                let wrate = (next.w.l2_norm().powi(2) - w_l2.powi(2)) / dt;
                (
                    rate,
                    normalize(rate, s.v_l2, s.forcing),
                    normalize(wrate, w_l2, s.forcing),
                )
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let (c0_bound, parabolic_term, gauge_residual, phi_min, phi_max) = match &s.gauge {
            Some(g) => {
                let phi_t = neighbor_phi_t(&samples.iter().map(|q| (q.t, q.gauge.as_ref())).collect::<Vec<_>>(), i);
                (
                    2.0 * sup(&c0_field(&s.coeffs, g, &phi_t)?),
                    parabolic(&s.w, g, epsilon)?,
                    g.ode_residual,
                    g.min(),
                    g.max(),
                )
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        rows.push(EnergyRow {
            t: s.t,
            v_l2: s.v_l2,
            w_l2,
            rate,
            c0_bound,
            k_g: norms.k_g,
            m_tilde: norms.m_tilde,
            m_eps: sup_h7 + epsilon * sup_h8,
            k: sup_k,
            forcing_l2: s.forcing,
            normalized_rate,
            ungauged_rate,
            parabolic_term,
            gauge_residual,
            phi_min,
            phi_max,
            degenerate: s.gauge.is_none(),
        });
    }
    Ok(EnergyLedger {
        order: n,
        epsilon,
        rows,
    })
}

fn normalize(rate: f64, y: f64, h: f64) -> f64 {
    let d = y * y + y * h;
    if d > 0.0 {
        rate / d
    } else if rate == 0.0 {
        0.0
    } else {
        f64::INFINITY * rate.signum()
    }
}

/// `∂t φ` by a centered (or one-sided at the ends) difference of neighbors.
fn neighbor_phi_t(gauges: &[(f64, Option<&GaugeField>)], i: usize) -> Vec<f64> {
    let here = gauges[i].1.expect("caller checked");
    let n = here.phi.values().len();
    let lo = if i > 0 { i - 1 } else { i };
    let hi = if i + 1 < gauges.len() { i + 1 } else { i };
    match (gauges[lo].1, gauges[hi].1) {
        (Some(a), Some(b)) if hi > lo => {
            let dt = gauges[hi].0 - gauges[lo].0;
            a.phi
                .values()
                .iter()
                .zip(b.phi.values())
                .map(|(p, q)| (q - p) / dt)
                .collect()
        }
        _ => vec![0.0; n],
    }
}

/// `c₀ = b₀ − ½(∂b₁ − ∂²b₂ + ∂³b₃)` for the conjugated operator
/// `φ⁻¹(∂t + Σ A_j ∂^j)φ` with `A_j = −a_j`.
fn c0_field(c: &LinearizedCoefficients, g: &GaugeField, phi_t: &[f64]) -> Result<Vec<f64>> {
    let grid = g.phi.grid();
    let phi = g.phi.values();
    // Derivatives of φ through the log-derivative ℓ = φ′/φ, which stays
    // valid when φ carries a ramp.
    let l = StateFunction::from_values(grid, g.log_derivative().to_vec(), g.phi.time())?;
    let l1 = derivative(&l, 1)?;
    let l2 = derivative(&l, 2)?;
    let (lv, l1v, l2v) = (l.values(), l1.values(), l2.values());
    let n = phi.len();
    let mut p1 = vec![0.0; n];
    let mut p2 = vec![0.0; n];
    let mut p3 = vec![0.0; n];
    for i in 0..n {
        let (a, b, d) = (lv[i], l1v[i], l2v[i]);
        p1[i] = a;
        p2[i] = b + a * a;
        p3[i] = d + 3.0 * a * b + a * a * a;
    }
    let a3: Vec<f64> = c.a3.values().iter().map(|v| -v).collect();
    let a2: Vec<f64> = c.a2.values().iter().map(|v| -v).collect();
    let a1: Vec<f64> = c.a1.values().iter().map(|v| -v).collect();
    let a0: Vec<f64> = c.a0.values().iter().map(|v| -v).collect();
    let mut b3 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut b1 = vec![0.0; n];
    let mut b0 = vec![0.0; n];
    for i in 0..n {
        b3[i] = a3[i];
        b2[i] = a2[i] + 3.0 * a3[i] * p1[i];
        b1[i] = a1[i] + 2.0 * a2[i] * p1[i] + 3.0 * a3[i] * p2[i];
        b0[i] = a0[i] + phi_t[i] / phi[i] + a1[i] * p1[i] + a2[i] * p2[i] + a3[i] * p3[i];
    }
    let field = |v: Vec<f64>| StateFunction::from_values(grid, v, 0.0);
    let db1 = derivative(&field(b1)?, 1)?;
    let d2b2 = derivative(&field(b2)?, 2)?;
    let d3b3 = derivative(&field(b3)?, 3)?;
    Ok((0..n)
        .map(|i| b0[i] - 0.5 * (db1.values()[i] - d2b2.values()[i] + d3b3.values()[i]))
        .collect())
}

fn parabolic(w: &StateFunction, g: &GaugeField, epsilon: f64) -> Result<f64> {
    let w2 = w.l2_norm().powi(2);
    if epsilon == 0.0 || w2 == 0.0 {
        return Ok(0.0);
    }
    let d4 = derivative(w, 4)?;
    let h = w.grid().spacing();
    let mut s = 0.0;
    for i in 0..w.values().len() {
        let p = g.phi.values()[i];
        s += d4.values()[i] * w.values()[i] / (p * p);
    }
    Ok(-2.0 * epsilon * s * h / w2)
}
