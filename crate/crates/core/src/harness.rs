//! The `ε = δ⁵` ladder: mollified data, one regularized run per rung, and
//! the measurements that show the runs converging to a solution of the
//! unregularized equation.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg, ForgeError, Result};
use crate::mollify::mollify;
use crate::nonlinearity::{evaluate_rhs, NonlinearitySpec};
use crate::solver::{integrate, OutputPolicy, SolverConfig, Termination, Trajectory};
use crate::spectral::{derivative, StateFunction};

pub const COUPLING_EXPONENT: i32 = 5;

#[derive(Clone, Debug)]
pub struct LadderConfig {
    /// Strictly decreasing, each in `(0, 1]`.
    pub deltas: Vec<f64>,
    pub u0: StateFunction,
    /// `epsilon`, `t_end` and `output` are overwritten per rung.
    pub solver: SolverConfig,
    /// Defaults to the common time the rungs actually reach.
    pub t_target: Option<f64>,
    /// Spacing of the shared output grid; the residual needs it dense.
    pub dt_out: f64,
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() {
            return arg("ladder needs at least one delta");
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !(d > 0.0 && d <= 1.0) {
                return arg(format!("delta {d} outside (0, 1]"));
            }
            if i > 0 && d >= self.deltas[i - 1] {
                return arg("deltas must be strictly decreasing");
            }
            // ε = δ⁵ ≤ δ² holds on (0, 1].
        }
        if !(self.dt_out > 0.0) {
            return arg("dt_out must be positive");
        }
        if let Some(t) = self.t_target {
            if !(t > self.u0.time()) {
                return arg("t_target must exceed the start time");
            }
        }
        Ok(())
    }

    fn end_time(&self) -> f64 {
        self.t_target.unwrap_or(self.solver.t_end)
    }
}

pub fn coupled_epsilon(delta: f64) -> f64 {
    delta.powi(COUPLING_EXPONENT)
}

#[derive(Clone, Debug)]
pub struct Rung {
    pub delta: f64,
    pub epsilon: f64,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, Serialize)]
pub struct RungRow {
    pub delta: f64,
    pub epsilon: f64,
    pub final_time: f64,
    pub termination: Termination,
    pub steps: usize,
    pub m_eps: f64,
    pub k: f64,
    pub sup_h11: f64,
    /// `δ⁴ sup_t ‖u‖_{H¹¹}`.
    pub h11_product: f64,
    /// Sup over the window of the residual with the rung's own `ε`.
    pub residual_eps: f64,
    /// Same with the `ε∂x⁴u` term dropped.
    pub residual_zero: f64,
    pub sup_d4_l2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairRow {
    pub i: usize,
    pub j: usize,
    pub delta_i: f64,
    pub delta_j: f64,
    pub h3_diff: f64,
    pub h7_diff: f64,
    /// `h3_diff / (ε_i + ε_j)`.
    pub eps_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Extrapolation {
    /// `sup_t ‖U − u_finest‖_{H³}` for the Richardson extrapolant `U`.
    pub h3_gap: f64,
    pub residual_zero: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderContracts {
    pub cauchy_decreasing: bool,
    pub h11_product_non_growing: bool,
    pub residual_zero_shrinking: bool,
    /// `eps_ratio` of the two finest consecutive pairs agree within a factor 2.
    pub linear_in_eps: Option<bool>,
}

impl LadderContracts {
    pub fn all_hold(&self) -> bool {
        self.cauchy_decreasing
            && self.h11_product_non_growing
            && self.residual_zero_shrinking
            && self.linear_in_eps.unwrap_or(true)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderReport {
    pub spec: String,
    pub t_start: f64,
    /// End of the window shared by every rung.
    pub window: f64,
    /// Largest time up to which the consecutive H³ differences stay strictly
    /// decreasing down the ladder.
    pub cauchy_window: f64,
    pub rungs: Vec<RungRow>,
    /// All `i < j` pairs; the table is symmetric so only one half is stored.
    pub pairs: Vec<PairRow>,
    pub finest_residual_eps: Vec<ResidualPoint>,
    pub finest_residual_zero: Vec<ResidualPoint>,
    pub extrapolation: Option<Extrapolation>,
    pub contracts: LadderContracts,
}

impl LadderReport {
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairRow> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs.iter().find(|p| p.i == a && p.j == b)
    }

    pub fn consecutive_h3(&self) -> Vec<f64> {
        (0..self.rungs.len().saturating_sub(1))
            .map(|i| self.pair(i, i + 1).map_or(f64::NAN, |p| p.h3_diff))
            .collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_json_file(&dir.join("ladder_report.json"), self)?;
        crate::io::write_csv_file(&dir.join("rungs.csv"), &self.rungs)?;
        crate::io::write_csv_file(&dir.join("pairs.csv"), &self.pairs)
    }
}

fn run_one(spec: &NonlinearitySpec, u0: &StateFunction, delta: f64, cfg: &LadderConfig) -> Result<Rung> {
    let epsilon = coupled_epsilon(delta);
    let data = mollify(u0, delta)?.result;
    let solver = SolverConfig {
        epsilon,
        t_end: cfg.end_time(),
        output: OutputPolicy::Uniform(cfg.dt_out),
        ..cfg.solver.clone()
    };
    let trajectory = integrate(spec, &data, &solver)?;
    Ok(Rung {
        delta,
        epsilon,
        trajectory,
    })
}

/// Runs every rung concurrently and returns them in ladder order.
pub fn run_rungs(spec: &NonlinearitySpec, cfg: &LadderConfig) -> Result<Vec<Rung>> {
    cfg.validate()?;
    cfg.deltas
        .par_iter()
        .map(|&d| run_one(spec, &cfg.u0, d, cfg))
        .collect()
}

/// Leading snapshots that sit on the shared output grid `t₀ + m·dt_out`.
fn on_grid(traj: &Trajectory, t0: f64, dt_out: f64) -> Vec<&StateFunction> {
    traj.snapshots
        .iter()
        .enumerate()
        .take_while(|(m, s)| (s.time() - (t0 + *m as f64 * dt_out)).abs() <= 1e-9 * dt_out)
        .map(|(_, s)| s)
        .collect()
}

fn sup_diff(a: &[&StateFunction], b: &[&StateFunction], s: u32) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        worst = worst.max(x.sub(y)?.h_norm(s));
    }
    Ok(worst)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn run_ladder(spec: &NonlinearitySpec, cfg: &LadderConfig) -> Result<(LadderReport, Vec<Rung>)> {
    let rungs = run_rungs(spec, cfg)?;
    let report = assemble_report(spec, cfg, &rungs)?;
    Ok((report, rungs))
}

pub fn assemble_report(spec: &NonlinearitySpec, cfg: &LadderConfig, rungs: &[Rung]) -> Result<LadderReport> {
    let t0 = cfg.u0.time();
    let grids: Vec<Vec<&StateFunction>> = rungs
        .iter()
        .map(|r| on_grid(&r.trajectory, t0, cfg.dt_out))
        .collect();
    let count = grids.iter().map(|g| g.len()).min().unwrap_or(0);
    if count < 2 {
        return Err(ForgeError::Harness(
            "no rung advanced past the first output time".into(),
        ));
    }
    let window = grids[0][count - 1].time();
    let common: Vec<&[&StateFunction]> = grids.iter().map(|g| &g[..count]).collect();

    let mut pairs = Vec::new();
    for i in 0..rungs.len() {
        for j in i + 1..rungs.len() {
            let h3 = sup_diff(common[i], common[j], 3)?;
            pairs.push(PairRow {
                i,
                j,
                delta_i: rungs[i].delta,
                delta_j: rungs[j].delta,
                h3_diff: h3,
                h7_diff: sup_diff(common[i], common[j], 7)?,
                eps_ratio: h3 / (rungs[i].epsilon + rungs[j].epsilon),
            });
        }
    }

    let dense = count >= 5;
    let mut rows = Vec::with_capacity(rungs.len());
    let mut finest_eps = Vec::new();
    let mut finest_zero = Vec::new();
    for (idx, (r, snaps)) in rungs.iter().zip(&common).enumerate() {
        let owned: Vec<StateFunction> = snaps.iter().map(|s| (*s).clone()).collect();
        let sup_h11 = owned.iter().map(|s| s.h_norm(11)).fold(0.0, f64::max);
        let (res_eps, res_zero) = if dense {
            (pde_residual(spec, &owned, r.epsilon)?, pde_residual(spec, &owned, 0.0)?)
        } else {
            (Vec::new(), Vec::new())
        };
        let sup = |v: &[ResidualPoint]| v.iter().map(|p| p.residual).fold(f64::NAN, f64::max);
        let mut sup_d4 = 0.0f64;
        for s in &owned {
            sup_d4 = sup_d4.max(derivative(s, 4)?.l2_norm());
        }
        let last_diag = r
            .trajectory
            .diagnostics
            .rows
            .iter()
            .take_while(|d| d.t <= window * (1.0 + 1e-12) + 1e-300)
            .last()
            .expect("initial diagnostics row");
        rows.push(RungRow {
            delta: r.delta,
            epsilon: r.epsilon,
            final_time: r.trajectory.final_time(),
            termination: r.trajectory.termination,
            steps: r.trajectory.steps_accepted,
            m_eps: last_diag.m_eps,
            k: last_diag.k_of_t,
            sup_h11,
            h11_product: r.delta.powi(4) * sup_h11,
            residual_eps: sup(&res_eps),
            residual_zero: sup(&res_zero),
            sup_d4_l2: sup_d4,
        });
        if idx + 1 == rungs.len() {
            finest_eps = res_eps;
            finest_zero = res_zero;
        }
    }

    let consecutive: Vec<f64> = (0..rungs.len().saturating_sub(1))
        .map(|i| pairs.iter().find(|p| p.i == i && p.j == i + 1).unwrap().h3_diff)
        .collect();
    let products: Vec<f64> = rows.iter().map(|r| r.h11_product).collect();
    let zeros: Vec<f64> = rows.iter().map(|r| r.residual_zero).collect();
    let eps_ratios: Vec<f64> = (0..rungs.len().saturating_sub(1))
        .map(|i| pairs.iter().find(|p| p.i == i && p.j == i + 1).unwrap().eps_ratio)
        .collect();
    let linear_in_eps = if eps_ratios.len() >= 2 {
        let a = eps_ratios[eps_ratios.len() - 2];
        let b = eps_ratios[eps_ratios.len() - 1];
        Some(a > 0.0 && b > 0.0 && (a / b).max(b / a) <= 2.0)
    } else {
        None
    };
    let contracts = LadderContracts {
        cauchy_decreasing: strictly_decreasing(&consecutive),
        h11_product_non_growing: products.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)),
        residual_zero_shrinking: !dense || strictly_decreasing(&zeros),
        linear_in_eps,
    };

    let cauchy_window = cauchy_window(&common)?;
    let extrapolation = if rungs.len() >= 2 && dense {
        Some(extrapolate(
            spec,
            common[rungs.len() - 2],
            common[rungs.len() - 1],
            rungs[rungs.len() - 2].epsilon,
            rungs[rungs.len() - 1].epsilon,
        )?)
    } else {
        None
    };

    Ok(LadderReport {
        spec: spec.name().to_string(),
        t_start: t0,
        window,
        cauchy_window,
        rungs: rows,
        pairs,
        finest_residual_eps: finest_eps,
        finest_residual_zero: finest_zero,
        extrapolation,
        contracts,
    })
}

fn cauchy_window(common: &[&[&StateFunction]]) -> Result<f64> {
    let count = common[0].len();
    let mut running = vec![0.0f64; common.len().saturating_sub(1)];
    let mut last_ok = common[0][0].time();
    for m in 0..count {
        for (i, r) in running.iter_mut().enumerate() {
            *r = r.max(common[i][m].sub(common[i + 1][m])?.h_norm(3));
        }
        if m > 0 && !strictly_decreasing(&running) {
            break;
        }
        last_ok = common[0][m].time();
    }
    Ok(last_ok)
}

/// Removes the leading `O(ε)` term with the last two rungs:
/// `U = u_f + (u_f − u_c) ε_f / (ε_c − ε_f)`.
fn extrapolate(
    spec: &NonlinearitySpec,
    coarse: &[&StateFunction],
    fine: &[&StateFunction],
    eps_c: f64,
    eps_f: f64,
) -> Result<Extrapolation> {
    let w = eps_f / (eps_c - eps_f);
    let mut fields = Vec::with_capacity(fine.len());
    let mut gap = 0.0f64;
    for (c, f) in coarse.iter().zip(fine) {
        let diff = f.sub(c)?;
        let u = f.axpy(w, &diff)?;
        gap = gap.max(u.sub(f)?.h_norm(3));
        fields.push(u);
    }
    let res = pde_residual(spec, &fields, 0.0)?;
    Ok(Extrapolation {
        h3_gap: gap,
        residual_zero: res.iter().map(|p| p.residual).fold(0.0, f64::max),
    })
}

/// `‖∂t u − f(∂x³u, …) + ε_used ∂x⁴u‖_{L²}` at each snapshot, with `∂t`
/// from five-point differences on a uniform time grid.
pub fn pde_residual(
    spec: &NonlinearitySpec,
    snapshots: &[StateFunction],
    eps_used: f64,
) -> Result<Vec<ResidualPoint>> {
    let n = snapshots.len();
    if n < 5 {
        return arg(format!("fourth-order time differences need 5 snapshots, got {n}"));
    }
    let dt = snapshots[1].time() - snapshots[0].time();
    if !(dt > 0.0) {
        return arg("snapshot times must increase");
    }
    for w in snapshots.windows(2) {
        w[0].check_same_grid(&w[1])?;
        if ((w[1].time() - w[0].time()) - dt).abs() > 1e-9 * dt {
            return arg("pde_residual needs uniformly spaced snapshots");
        }
    }
    const INTERIOR: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (start, weights, sign) = match i {
            0 => (0, EDGE0, 1.0),
            1 => (0, EDGE1, 1.0),
            _ if i + 2 < n => (i - 2, INTERIOR, 1.0),
            _ if i + 2 == n => (n - 5, EDGE1, -1.0),
            _ => (n - 5, EDGE0, -1.0),
        };
        let len = snapshots[i].values().len();
        let mut ut = vec![0.0; len];
        for (k, w) in weights.iter().enumerate() {
            // The trailing edge stencils are the leading ones mirrored in time.
            let idx = if sign > 0.0 { start + k } else { start + 4 - k };
            for (acc, v) in ut.iter_mut().zip(snapshots[idx].values()) {
                *acc += sign * w * v / (12.0 * dt);
            }
        }
        let u = &snapshots[i];
        let f = evaluate_rhs(spec, u)?;
        let d4 = derivative(u, 4)?;
        let r: Vec<f64> = (0..len)
            .map(|p| ut[p] - f.values()[p] + eps_used * d4.values()[p])
            .collect();
        let residual = StateFunction::from_values(u.grid(), r, u.time())?.l2_norm();
        out.push(ResidualPoint { t: u.time(), residual });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DependenceRow {
    pub data_h7_diff: f64,
    pub data_h3_diff: f64,
    /// `sup_t ‖U_n − U_0‖_{H⁷}` over the shared window.
    pub solution_h7_diff: f64,
    pub solution_h3_diff: f64,
    pub ratio: f64,
    pub bitwise_identical: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DependenceTable {
    pub delta: f64,
    pub epsilon: f64,
    pub window: f64,
    pub rows: Vec<DependenceRow>,
}

/// Runs the unperturbed datum and `u₀ + p` for every perturbation `p` at a
/// single rung and compares the solutions.
pub fn continuous_dependence_probe(
    spec: &NonlinearitySpec,
    u0: &StateFunction,
    perturbations: &[StateFunction],
    delta: f64,
    solver: &SolverConfig,
    dt_out: f64,
) -> Result<DependenceTable> {
    let cfg = LadderConfig {
        deltas: vec![delta],
        u0: u0.clone(),
        solver: solver.clone(),
        t_target: None,
        dt_out,
    };
    cfg.validate()?;
    let mut data = vec![u0.clone()];
    for p in perturbations {
        data.push(u0.axpy(1.0, p)?);
    }
    let runs: Vec<Rung> = data
        .par_iter()
        .map(|d| run_one(spec, d, delta, &cfg))
        .collect::<Result<_>>()?;
    let t0 = u0.time();
    let grids: Vec<Vec<&StateFunction>> = runs
        .iter()
        .map(|r| on_grid(&r.trajectory, t0, dt_out))
        .collect();
    let count = grids.iter().map(|g| g.len()).min().unwrap_or(0);
    if count < 1 {
        return Err(ForgeError::Harness("dependence probe produced no snapshots".into()));
    }
    let mut rows = Vec::new();
    for (k, p) in perturbations.iter().enumerate() {
        let a = &grids[0][..count];
        let b = &grids[k + 1][..count];
        let sol7 = sup_diff(a, b, 7)?;
        let data7 = p.h_norm(7);
        let identical = runs[0].trajectory.snapshots.len() == runs[k + 1].trajectory.snapshots.len()
            && runs[0]
                .trajectory
                .snapshots
                .iter()
                .zip(&runs[k + 1].trajectory.snapshots)
                .all(|(x, y)| {
                    x.time().to_bits() == y.time().to_bits()
                        && x.values().iter().zip(y.values()).all(|(s, t)| s.to_bits() == t.to_bits())
                });
        rows.push(DependenceRow {
            data_h7_diff: data7,
            data_h3_diff: p.h_norm(3),
            solution_h7_diff: sol7,
            solution_h3_diff: sup_diff(a, b, 3)?,
            ratio: if data7 > 0.0 { sol7 / data7 } else { 0.0 },
            bitwise_identical: identical,
        });
    }
    Ok(DependenceTable {
        delta,
        epsilon: coupled_epsilon(delta),
        window: grids[0][count - 1].time(),
        rows,
    })
}
