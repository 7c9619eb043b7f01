//! Smooth spectral cutoff of initial data.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{arg, Result};
use crate::spectral::StateFunction;

/// Radial cutoff equal to 1 on `[0, 1]`, 0 on `[2, ∞)`, and `C^∞` in between.
#[derive(Clone, Copy, Debug, Default)]
pub struct BumpCutoff;

fn ramp(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = ramp(s);
        a / (a + ramp(1.0 - s))
    }
}

impl BumpCutoff {
    pub fn eval(&self, r: f64) -> f64 {
        smooth_step(2.0 - r.abs())
    }

    /// `(r, φ(r))` samples on `[0, r_max]`.
    pub fn table(&self, samples: usize, r_max: f64) -> Vec<(f64, f64)> {
        let m = samples.max(2);
        (0..m)
            .map(|i| {
                let r = r_max * i as f64 / (m - 1) as f64;
                (r, self.eval(r))
            })
            .collect()
    }
}

pub fn build_bump() -> BumpCutoff {
    BumpCutoff
}

/// Data before and after the cutoff `û ↦ û·φ(δ|ξ|)`.
#[derive(Clone, Debug)]
pub struct MollifiedData {
    pub original: StateFunction,
    pub delta: f64,
    pub result: StateFunction,
}

pub fn mollify(u0: &StateFunction, delta: f64) -> Result<MollifiedData> {
    if !(delta > 0.0 && delta <= 1.0) {
        return arg(format!("mollification scale must lie in (0, 1], got {delta}"));
    }
    let bump = build_bump();
    let grid = u0.grid();
    let spectrum: Vec<Complex64> = u0
        .spectrum()
        .iter()
        .zip(grid.wavenumbers())
        .map(|(c, &xi)| c * bump.eval(delta * xi.abs()))
        .collect();
    let result = StateFunction::from_hermitian_spectrum(grid, spectrum, u0.time());
    Ok(MollifiedData {
        original: u0.clone(),
        delta,
        result,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierRow {
    pub delta: f64,
    pub h7: f64,
    pub h8: f64,
    pub h9: f64,
    pub h10: f64,
    pub h11: f64,
    pub l2_diff: f64,
    pub h7_diff: f64,
}

impl MollifierRow {
    /// `‖(u₀)_δ‖_{H^{7+j}}` for `j = 0..=4`.
    pub fn high_norm(&self, j: usize) -> f64 {
        [self.h7, self.h8, self.h9, self.h10, self.h11][j]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MollifierReport {
    pub rows: Vec<MollifierRow>,
    /// Log-log slope of `l2_diff` against `δ` over rows where it is nonzero.
    pub l2_rate: Option<f64>,
    pub h7_rate: Option<f64>,
    /// `‖u₀‖_{H⁷}` of the unmollified data.
    pub base_h7: f64,
}

impl MollifierReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_rows(w, &self.rows)
    }

    /// Largest `‖(u₀)_δ‖_{H^{7+j}} / (3^j δ^{-j} ‖u₀‖_{H⁷})` over rows and `j = 1..=4`.
    pub fn worst_inflation_ratio(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            for j in 1..=4 {
                let bound = 3f64.powi(j as i32) * row.delta.powi(-(j as i32)) * self.base_h7;
                if bound > 0.0 {
                    worst = worst.max(row.high_norm(j) / bound);
                }
            }
        }
        worst
    }
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

pub fn mollifier_report(u0: &StateFunction, deltas: &[f64]) -> Result<MollifierReport> {
    if deltas.is_empty() {
        return arg("mollifier ladder is empty");
    }
    for w in deltas.windows(2) {
        if !(w[1] < w[0]) {
            return arg("mollifier ladder must be strictly decreasing");
        }
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let m = mollify(u0, delta)?;
        let diff = m.result.sub(u0)?;
        rows.push(MollifierRow {
            delta,
            h7: m.result.h_norm(7),
            h8: m.result.h_norm(8),
            h9: m.result.h_norm(9),
            h10: m.result.h_norm(10),
            h11: m.result.h_norm(11),
            l2_diff: diff.l2_norm(),
            h7_diff: diff.h_norm(7),
        });
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_diff).collect();
    let h7: Vec<f64> = rows.iter().map(|r| r.h7_diff).collect();
    Ok(MollifierReport {
        l2_rate: log_log_slope(&ds, &l2),
        h7_rate: log_log_slope(&ds, &h7),
        base_h7: u0.h_norm(7),
        rows,
    })
}
