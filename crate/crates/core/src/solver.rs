//! Time stepping for `u_t = f(∂x³u, ∂x²u, ∂xu, u, x, t) − ε∂x⁴u`.
//!
//! The hyperdiffusion symbol is handled by an integrating factor so that
//! `e^{−εξ⁴h}` is applied exactly; the remaining dealiased nonlinear term is
//! advanced with the Kutta–Merson 4(3) pair on the transformed variable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeff::leading_coefficients;
use crate::error::{arg, ForgeError, Result};
use crate::expr::FieldEnv;
use crate::gauge::build_gauge;
use crate::nonlinearity::{dispersion_lambda, NonlinearitySpec};
use crate::spectral::{derivative, derivative_symbol, SpectralGrid, StateFunction};

const C: [f64; 5] = [0.0, 1.0 / 3.0, 1.0 / 3.0, 0.5, 1.0];
const A: [[f64; 4]; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [1.0 / 3.0, 0.0, 0.0, 0.0],
    [1.0 / 6.0, 1.0 / 6.0, 0.0, 0.0],
    [1.0 / 8.0, 0.0, 3.0 / 8.0, 0.0],
    [0.5, 0.0, -1.5, 2.0],
];
const B: [f64; 5] = [1.0 / 6.0, 0.0, 0.0, 2.0 / 3.0, 1.0 / 6.0];
/// `h/30 · (2k₁ − 9k₃ + 8k₄ − k₅)`.
const E: [f64; 5] = [2.0 / 30.0, 0.0, -9.0 / 30.0, 8.0 / 30.0, -1.0 / 30.0];

/// Which part of the operator is integrated exactly. Only the hyperdiffusion
/// symbol is diagonal for every nonlinearity, so that is the only choice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffSplit {
    #[default]
    ExactHyperdiffusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "dt")]
pub enum OutputPolicy {
    EveryStep,
    /// Snapshots at `t₀ + m·dt` and at `t_end`; steps are shortened to land on them.
    Uniform(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Absolute end time; the start is the time stamp of the initial state.
    pub t_end: f64,
    pub safety: f64,
    /// Defaults to `10³ ‖u₀‖_{H⁴}` when unset.
    pub blowup_threshold_h4: Option<f64>,
    pub stiff_split: StiffSplit,
    pub rtol: f64,
    pub atol: f64,
    /// With `false` every step has length `dt_init` (clipped at output times).
    pub adaptive: bool,
    pub output: OutputPolicy,
    /// Gauge residual and gauged energy columns cost a few extra transforms per step.
    pub gauge_diagnostics: bool,
    pub gauge_order: usize,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.0,
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: f64::INFINITY,
            t_end: 1.0,
            safety: 0.9,
            blowup_threshold_h4: None,
            stiff_split: StiffSplit::ExactHyperdiffusion,
            rtol: 1e-8,
            atol: 1e-12,
            adaptive: true,
            output: OutputPolicy::EveryStep,
            gauge_diagnostics: true,
            gauge_order: 7,
            max_steps: 5_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, t0: f64) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return arg(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if !positive(self.dt_init) || !positive(self.dt_min) || self.dt_min > self.dt_init {
            return arg(format!(
                "need 0 < dt_min <= dt_init, got dt_min = {}, dt_init = {}",
                self.dt_min, self.dt_init
            ));
        }
        if !(self.dt_max > 0.0) {
            return arg("dt_max must be positive");
        }
        if !(self.t_end.is_finite() && self.t_end > t0) {
            return arg(format!("t_end = {} must exceed the start time {t0}", self.t_end));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return arg(format!("safety must lie in (0, 1], got {}", self.safety));
        }
        if let Some(th) = self.blowup_threshold_h4 {
            if !positive(th) {
                return arg("blow-up threshold must be positive");
            }
        }
        if !(self.rtol >= 0.0 && self.atol >= 0.0 && self.rtol + self.atol > 0.0) {
            return arg("tolerances must be nonnegative and not both zero");
        }
        if let OutputPolicy::Uniform(dt) = self.output {
            if !positive(dt) {
                return arg("output interval must be positive");
            }
        }
        if !(3..=11).contains(&self.gauge_order) {
            return arg("gauge order must lie in [3, 11]");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    BlowupDetected,
    DispersionDegenerate,
    StepUnderflow,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupDetected => "blowup_detected",
            Termination::DispersionDegenerate => "dispersion_degenerate",
            Termination::StepUnderflow => "step_underflow",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub l2: f64,
    pub h4: f64,
    pub h7: f64,
    pub h8: f64,
    pub h11: f64,
    pub lambda: f64,
    /// Running `sup max(‖u‖_{H⁴}, λ)`.
    pub k_of_t: f64,
    /// Running `sup ‖u‖_{H⁷} + ε sup ‖u‖_{H⁸}`.
    pub m_eps: f64,
    pub gauge_residual: f64,
    /// Backward difference of `‖φ⁻¹∂xⁿu‖²`.
    pub energy_rate: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsRecord {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::io::write_rows(w, &self.rows)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<StateFunction>,
    pub diagnostics: DiagnosticsRecord,
    pub termination: Termination,
    pub epsilon: f64,
    pub spec_name: String,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Largest imaginary part seen when leaving spectral space, relative to `max(1, ‖u‖_∞)`.
    pub reality_defect: f64,
    /// Set when a run with `ε > 0` passed through a state with infinite `λ`.
    pub degenerate_flagged: bool,
    /// `ε ∫ ‖∂x^{n+2}u‖² dt` accumulated over accepted steps, `n` the gauge order.
    pub dissipation_integral: f64,
    pub blowup_threshold_h4: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateFunction {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.final_state().time()
    }
}

pub fn check_blowup(u: &StateFunction, threshold: f64) -> bool {
    u.h_norm(4) > threshold
}

/// Precomputed spectral operators for one grid.
struct Operator {
    grid: SpectralGrid,
    symbols: [Vec<Complex64>; 4],
    mask: Vec<f64>,
    xi4: Vec<f64>,
    x: Vec<f64>,
}

impl Operator {
    fn new(grid: &SpectralGrid) -> Self {
        let n = grid.n();
        let cut = grid.dealias_cutoff() as i64;
        let sym = |order| (0..n).map(|j| derivative_symbol(grid, j, order)).collect::<Vec<_>>();
        Operator {
            grid: grid.clone(),
            symbols: [sym(0), sym(1), sym(2), sym(3)],
            mask: (0..n)
                .map(|j| if grid.mode_index(j).abs() <= cut { 1.0 } else { 0.0 })
                .collect(),
            xi4: grid.wavenumbers().iter().map(|k| k.powi(4)).collect(),
            x: grid.nodes(),
        }
    }

    fn propagator(&self, epsilon: f64, s: f64) -> Vec<f64> {
        self.xi4.iter().map(|k| (-epsilon * k * s).exp()).collect()
    }

    /// Dealiased spectrum of `f` evaluated on the dealiased jet of `v`.
    fn rhs(&self, spec: &NonlinearitySpec, v: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        let masked: Vec<Complex64> = v.iter().zip(&self.mask).map(|(c, m)| c * m).collect();
        let jets: Vec<Vec<f64>> = self
            .symbols
            .iter()
            .map(|s| {
                let spec: Vec<Complex64> = masked.iter().zip(s).map(|(a, b)| a * b).collect();
                self.grid.inverse(&spec)
            })
            .collect();
        let env = FieldEnv::new([&jets[0], &jets[1], &jets[2], &jets[3]], &self.x, t);
        let f = spec.f().eval_fields(&env);
        if let Some(node) = f.iter().position(|v| !v.is_finite()) {
            return Err(ForgeError::Evaluation {
                node,
                x: self.x[node],
            });
        }
        let mut out = self.grid.forward(&f);
        for (c, m) in out.iter_mut().zip(&self.mask) {
            *c *= m;
        }
        Ok(out)
    }

    /// One Lawson Kutta–Merson step; returns the new spectrum and the error estimate.
    fn step(
        &self,
        spec: &NonlinearitySpec,
        v: &[Complex64],
        t: f64,
        h: f64,
        epsilon: f64,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        // Every exponent needed is (c_i − c_j)h or (1 − c_j)h, one of these multiples of h.
        const THETAS: [f64; 5] = [1.0 / 6.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0];
        let props: Vec<Vec<f64>> = THETAS.iter().map(|th| self.propagator(epsilon, th * h)).collect();
        let prop = |s: f64| -> Option<&Vec<f64>> {
            if s <= 0.0 {
                return None;
            }
            let i = THETAS
                .iter()
                .position(|th| (th - s).abs() < 1e-12)
                .expect("Kutta-Merson node differences are tabulated");
            Some(&props[i])
        };
        let apply = |dst: &mut [Complex64], src: &[Complex64], w: f64, p: Option<&Vec<f64>>| match p {
            Some(p) => {
                for ((d, s), e) in dst.iter_mut().zip(src).zip(p) {
                    *d += s * (w * e);
                }
            }
            None => {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * w;
                }
            }
        };

        let n = v.len();
        let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(5);
        for i in 0..5 {
            let mut stage = vec![Complex64::new(0.0, 0.0); n];
            apply(&mut stage, v, 1.0, prop(C[i]));
            for j in 0..i {
                if A[i][j] != 0.0 {
                    apply(&mut stage, &k[j], h * A[i][j], prop(C[i] - C[j]));
                }
            }
            k.push(self.rhs(spec, &stage, t + C[i] * h)?);
        }
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        apply(&mut next, v, 1.0, prop(1.0));
        let mut err = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..5 {
            if B[j] != 0.0 {
                apply(&mut next, &k[j], h * B[j], prop(1.0 - C[j]));
            }
            if E[j] != 0.0 {
                apply(&mut err, &k[j], h * E[j], prop(1.0 - C[j]));
            }
        }
        if let Some(node) = next.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(ForgeError::Evaluation {
                node,
                x: self.x[node],
            });
        }
        Ok((next, err))
    }

    fn l2(&self, v: &[Complex64]) -> f64 {
        (self.grid.length() * v.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StateFunction,
    /// `L²` norm of the embedded error estimate.
    pub error_estimate: f64,
}

/// One integrating-factor Kutta–Merson step of length `dt` from `u`.
pub fn step(spec: &NonlinearitySpec, u: &StateFunction, dt: f64, epsilon: f64) -> Result<StepOutcome> {
    if !(dt.is_finite() && dt > 0.0) {
        return arg(format!("dt must be positive, got {dt}"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return arg(format!("epsilon must be >= 0, got {epsilon}"));
    }
    let op = Operator::new(u.grid());
    let (next, err) = op.step(spec, u.spectrum(), u.time(), dt, epsilon)?;
    let state = StateFunction::from_spectrum(u.grid(), next, u.time() + dt)?;
    Ok(StepOutcome {
        state,
        error_estimate: op.l2(&err),
    })
}

struct DiagnosticsSink<'a> {
    spec: &'a NonlinearitySpec,
    cfg: &'a SolverConfig,
    rows: Vec<DiagnosticsRow>,
    sup_h4_lambda: f64,
    sup_h7: f64,
    sup_h8: f64,
    last_energy: Option<(f64, f64)>,
    dissipation: f64,
    last_dissipation_density: Option<(f64, f64)>,
}

impl<'a> DiagnosticsSink<'a> {
    fn record(&mut self, u: &StateFunction) -> DiagnosticsRow {
        let (l2, h4, h7, h8, h11) = (u.l2_norm(), u.h_norm(4), u.h_norm(7), u.h_norm(8), u.h_norm(11));
        let lambda = dispersion_lambda(self.spec, u);
        self.sup_h4_lambda = self.sup_h4_lambda.max(h4.max(lambda));
        self.sup_h7 = self.sup_h7.max(h7);
        self.sup_h8 = self.sup_h8.max(h8);
        let n = self.cfg.gauge_order;
        let (mut gauge_residual, mut energy_rate) = (f64::NAN, f64::NAN);
        if self.cfg.gauge_diagnostics {
            if let Ok((a3, a2)) = leading_coefficients(self.spec, u, n) {
                if let Ok(g) = build_gauge(&a3, &a2) {
                    gauge_residual = g.ode_residual;
                    let energy = derivative(u, n)
                        .and_then(|w| g.apply_inverse(&w))
                        .map(|v| v.l2_norm().powi(2))
                        .unwrap_or(f64::NAN);
                    if let Some((t_prev, e_prev)) = self.last_energy {
                        if u.time() > t_prev {
                            energy_rate = (energy - e_prev) / (u.time() - t_prev);
                        }
                    }
                    self.last_energy = Some((u.time(), energy));
                } else {
                    self.last_energy = None;
                }
            }
        }
        if self.cfg.epsilon > 0.0 {
            let density = derivative(u, n + 2).map(|d| d.l2_norm().powi(2)).unwrap_or(f64::NAN);
            if let Some((t_prev, d_prev)) = self.last_dissipation_density {
                self.dissipation += self.cfg.epsilon * 0.5 * (density + d_prev) * (u.time() - t_prev);
            }
            self.last_dissipation_density = Some((u.time(), density));
        }
        let row = DiagnosticsRow {
            t: u.time(),
            l2,
            h4,
            h7,
            h8,
            h11,
            lambda,
            k_of_t: self.sup_h4_lambda,
            m_eps: self.sup_h7 + self.cfg.epsilon * self.sup_h8,
            gauge_residual,
            energy_rate,
        };
        self.rows.push(row.clone());
        row
    }
}

/// Adaptive integration from `u0.time()` to `cfg.t_end`.
pub fn integrate(spec: &NonlinearitySpec, u0: &StateFunction, cfg: &SolverConfig) -> Result<Trajectory> {
    let t0 = u0.time();
    cfg.validate(t0)?;
    let grid = u0.grid().clone();
    let op = Operator::new(&grid);
    let threshold = cfg
        .blowup_threshold_h4
        .unwrap_or_else(|| 1e3 * u0.h_norm(4).max(f64::MIN_POSITIVE));

    let mut sink = DiagnosticsSink {
        spec,
        cfg,
        rows: Vec::new(),
        sup_h4_lambda: 0.0,
        sup_h7: 0.0,
        sup_h8: 0.0,
        last_energy: None,
        dissipation: 0.0,
        last_dissipation_density: None,
    };
    let first = sink.record(u0);
    let mut traj = Trajectory {
        snapshots: vec![u0.clone()],
        diagnostics: DiagnosticsRecord::default(),
        termination: Termination::ReachedTEnd,
        epsilon: cfg.epsilon,
        spec_name: spec.name().to_string(),
        steps_accepted: 0,
        steps_rejected: 0,
        reality_defect: 0.0,
        degenerate_flagged: first.lambda.is_infinite(),
        dissipation_integral: 0.0,
        blowup_threshold_h4: threshold,
    };
    if first.lambda.is_infinite() && cfg.epsilon == 0.0 {
        traj.termination = Termination::DispersionDegenerate;
        traj.diagnostics.rows = sink.rows;
        return Ok(traj);
    }

    let next_output = |m: usize| -> f64 {
        match cfg.output {
            OutputPolicy::EveryStep => cfg.t_end,
            OutputPolicy::Uniform(dt) => (t0 + m as f64 * dt).min(cfg.t_end),
        }
    };
    let mut m_out = 1usize;
    let mut target = next_output(m_out);
    let mut t = t0;
    let mut v = u0.spectrum().to_vec();
    let mut h = cfg.dt_init.min(cfg.dt_max);
    let mut err_prev = 1.0f64;
    let mut rejected_last = false;

    loop {
        if traj.steps_accepted + traj.steps_rejected >= cfg.max_steps {
            traj.termination = Termination::StepUnderflow;
            break;
        }
        let remaining = target - t;
        let (h_try, clipped) = if h >= remaining * (1.0 - 1e-10) {
            (remaining, true)
        } else {
            (h, false)
        };
        let attempt = op.step(spec, &v, t, h_try, cfg.epsilon);
        let (accepted, err_ratio) = match &attempt {
            Ok((next, err)) => {
                if cfg.adaptive {
                    let scale = cfg.atol + cfg.rtol * op.l2(&v).max(op.l2(next));
                    let ratio = op.l2(err) / scale;
                    (ratio <= 1.0, ratio)
                } else {
                    (true, 0.0)
                }
            }
            Err(ForgeError::Evaluation { .. }) => (false, f64::INFINITY),
            Err(e) => return Err(e.clone()),
        };

        if !accepted {
            traj.steps_rejected += 1;
            if !cfg.adaptive {
                traj.termination = Termination::StepUnderflow;
                break;
            }
            let fac = if err_ratio.is_finite() {
                (cfg.safety * err_ratio.powf(-0.25)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h = h_try * fac;
            rejected_last = true;
            if h < cfg.dt_min {
                traj.termination = Termination::StepUnderflow;
                break;
            }
            continue;
        }

        let (next, _) = attempt.expect("accepted steps are Ok");
        traj.steps_accepted += 1;
        t = if clipped { target } else { t + h_try };
        v = next;
        let (values, imag) = grid.inverse_checked(&v);
        let state = match StateFunction::from_values(&grid, values, t) {
            Ok(s) => s,
            Err(_) => {
                traj.termination = Termination::BlowupDetected;
                break;
            }
        };
        traj.reality_defect = traj.reality_defect.max(imag / state.max_abs().max(1.0));
        let row = sink.record(&state);
        if row.lambda.is_infinite() {
            traj.degenerate_flagged = true;
        }

        if cfg.adaptive {
            let e = err_ratio.max(1e-10);
            let mut fac = cfg.safety * e.powf(-0.7 / 4.0) * err_prev.powf(0.4 / 4.0);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_prev = e;
            // A step shortened to hit an output time only caps the request.
            h = if clipped {
                h.min(h_try * fac.max(1.0))
            } else {
                h_try * fac
            }
            .min(cfg.dt_max);
        }
        rejected_last = false;

        let at_end = clipped && target >= cfg.t_end;
        let store = matches!(cfg.output, OutputPolicy::EveryStep) || clipped;
        if store {
            traj.snapshots.push(state.clone());
        }
        if clipped {
            m_out += 1;
            target = next_output(m_out);
        }
        if check_blowup(&state, threshold) {
            if !store {
                traj.snapshots.push(state);
            }
            traj.termination = Termination::BlowupDetected;
            break;
        }
        if row.lambda.is_infinite() && cfg.epsilon == 0.0 {
            if !store {
                traj.snapshots.push(state);
            }
            traj.termination = Termination::DispersionDegenerate;
            break;
        }
        if at_end {
            traj.termination = Termination::ReachedTEnd;
            break;
        }
    }
    traj.dissipation_integral = sink.dissipation;
    traj.diagnostics.rows = sink.rows;
    Ok(traj)
}

/// Runs the equation backwards from `u_end` (stamped at its own time `T`) to
/// `t_target < T` through the substitution `s = −t`, `f ↦ −f(…, −s)`.
///
/// Only `ε = 0` is accepted: the reversed hyperdiffusion is ill-posed. The
/// trajectory is reported in the reversed clock `s`; the returned state is
/// stamped with the original time `t_target`.
pub fn integrate_reversed(
    spec: &NonlinearitySpec,
    u_end: &StateFunction,
    t_target: f64,
    cfg: &SolverConfig,
) -> Result<(Trajectory, StateFunction)> {
    if cfg.epsilon != 0.0 {
        return arg("time reversal is only defined for epsilon = 0");
    }
    if !(t_target < u_end.time()) {
        return arg(format!(
            "reversed target {t_target} must precede the state time {}",
            u_end.time()
        ));
    }
    let reversed = spec.time_reversed();
    let start = u_end.clone().with_time(-u_end.time());
    let rcfg = SolverConfig {
        t_end: -t_target,
        ..cfg.clone()
    };
    let traj = integrate(&reversed, &start, &rcfg)?;
    let last = traj.final_state().clone();
    let back = last.clone().with_time(-last.time());
    Ok((traj, back))
}
