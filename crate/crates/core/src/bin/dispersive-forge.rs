//! Batch front end: single runs, mollifier and gauge reports, coefficient
//! audits, ladders and dependence probes, each writing CSV/JSON into `--out`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dispersive_forge::coeff::{appendix_audit, appendix_terms, expansion_terms, reconstruction_error};
use dispersive_forge::gauge::{build_gauge, gauged_energy_rate, solution_norms};
use dispersive_forge::harness::{continuous_dependence_probe, coupled_epsilon, run_ladder, LadderConfig};
use dispersive_forge::io::{write_csv_file, write_f64_file, write_json_file};
use dispersive_forge::mollify::{mollifier_report, mollify};
use dispersive_forge::nonlinearity::{
    check_admissibility_with, load_spec_file, preset, AdmissibilityOptions, Preset,
};
use dispersive_forge::solver::{integrate, OutputPolicy, SolverConfig, Termination};
use dispersive_forge::{coeff::leading_coefficients, ForgeError, SpectralGrid, StateFunction};

const THREADS_ENV: &str = "DISPERSIVE_FORGE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "dispersive-forge", version, about = "Regularize-and-pass-to-the-limit experiments for fully nonlinear KdV-type equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one regularized equation and write the trajectory.
    Solve(SolveArgs),
    /// Mollifier norm inflation and convergence over a δ ladder.
    MollifyReport(MollifyArgs),
    /// Admissibility checks, the gauge at the initial state and an energy ledger.
    GaugeAudit(GaugeArgs),
    /// Term list of the n-times differentiated equation and its reconstruction error.
    CoeffAudit(CoeffArgs),
    /// The ε = δ⁵ ladder with Cauchy, growth and residual contracts.
    Ladder(LadderArgs),
    /// Solution differences under shrinking perturbations of the data.
    DependProbe(DependArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    preset: Option<String>,
    /// TOML equation file (name, f, optional partials/decomposition/data).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "N", default_value_t = 256)]
    n: usize,
    #[arg(long = "L", default_value_t = 16.0 * PI)]
    length: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for ladders and probes; defaults to $DISPERSIVE_FORGE_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Replay a previously written manifest instead of reading flags.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Use ε = δ⁵.
    #[arg(long)]
    couple_eps: bool,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long)]
    dt_out: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,
}

#[derive(Args, Debug)]
struct MollifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625])]
    deltas: Vec<f64>,
}

#[derive(Args, Debug)]
struct GaugeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 7)]
    n_order: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Length of the run feeding the energy ledger; 0 skips it.
    #[arg(long, default_value_t = 0.1)]
    t_end: f64,
    #[arg(long)]
    dt_out: Option<f64>,
}

#[derive(Args, Debug)]
struct CoeffArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "n", default_value_t = 3)]
    n_order: usize,
}

#[derive(Args, Debug)]
struct LadderArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05])]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    t_end: f64,
    #[arg(long, default_value_t = 5e-4)]
    dt_out: f64,
    #[arg(long, default_value_t = 1e-13)]
    rtol: f64,
}

#[derive(Args, Debug)]
struct DependArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3, 1e-4])]
    amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    dt_out: f64,
}

/// Everything needed to reproduce a run; written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct RunManifest {
    command: String,
    preset: Option<String>,
    config: Option<PathBuf>,
    length: f64,
    n: usize,
    out: PathBuf,
    seed: u64,
    threads: Option<usize>,
    delta: Option<f64>,
    epsilon: Option<f64>,
    couple_eps: bool,
    t_end: Option<f64>,
    dt_out: Option<f64>,
    rtol: Option<f64>,
    n_order: Option<usize>,
    deltas: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl RunManifest {
    fn base(command: &str, c: &Common) -> Self {
        RunManifest {
            command: command.into(),
            preset: c.preset.clone(),
            config: c.config.clone(),
            length: c.length,
            n: c.n,
            out: c.out.clone(),
            seed: c.seed,
            threads: c.threads,
            delta: None,
            epsilon: None,
            couple_eps: false,
            t_end: None,
            dt_out: None,
            rtol: None,
            n_order: None,
            deltas: Vec::new(),
            amplitudes: Vec::new(),
        }
    }
}

enum Failure {
    Usage(String),
    Contract(String),
}

impl From<ForgeError> for Failure {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Argument(_)
            | ForgeError::Config(_)
            | ForgeError::UnknownPreset { .. }
            | ForgeError::Parse { .. }
            | ForgeError::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Contract(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<Vec<String>, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let manifest = match manifest_from(cli.command) {
        Ok(m) => m,
        Err(Failure::Usage(msg)) | Err(Failure::Contract(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Err(msg) = configure_threads(manifest.threads) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match execute(&manifest) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in violations {
                eprintln!("contract violated: {v}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Contract(msg)) => {
            eprintln!("contract violated: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> std::result::Result<(), String> {
    let count = match (flag, std::env::var(THREADS_ENV)) {
        (Some(n), _) => Some(n),
        (None, Ok(v)) => Some(
            v.parse::<usize>()
                .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?,
        ),
        (None, Err(_)) => None,
    };
    if let Some(n) = count {
        if n == 0 {
            return Err("thread count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn manifest_from(cmd: Command) -> std::result::Result<RunManifest, Failure> {
    let common = match &cmd {
        Command::Solve(a) => &a.common,
        Command::MollifyReport(a) => &a.common,
        Command::GaugeAudit(a) => &a.common,
        Command::CoeffAudit(a) => &a.common,
        Command::Ladder(a) => &a.common,
        Command::DependProbe(a) => &a.common,
    };
    if let Some(path) = &common.manifest {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())));
    }
    Ok(match cmd {
        Command::Solve(a) => {
            let epsilon = match (a.couple_eps, a.eps, a.delta) {
                (true, Some(_), _) => return Err(Failure::Usage("--eps conflicts with --couple-eps".into())),
                (true, None, Some(d)) => Some(coupled_epsilon(d)),
                (true, None, None) => return Err(Failure::Usage("--couple-eps needs --delta".into())),
                (false, e, _) => e,
            };
            RunManifest {
                delta: a.delta,
                epsilon,
                couple_eps: a.couple_eps,
                t_end: Some(a.t_end),
                dt_out: a.dt_out,
                rtol: Some(a.rtol),
                ..RunManifest::base("solve", &a.common)
            }
        }
        Command::MollifyReport(a) => RunManifest {
            deltas: a.deltas,
            ..RunManifest::base("mollify-report", &a.common)
        },
        Command::GaugeAudit(a) => RunManifest {
            epsilon: Some(a.eps),
            t_end: Some(a.t_end),
            dt_out: a.dt_out,
            n_order: Some(a.n_order),
            ..RunManifest::base("gauge-audit", &a.common)
        },
        Command::CoeffAudit(a) => RunManifest {
            n_order: Some(a.n_order),
            ..RunManifest::base("coeff-audit", &a.common)
        },
        Command::Ladder(a) => RunManifest {
            deltas: a.deltas,
            t_end: Some(a.t_end),
            dt_out: Some(a.dt_out),
            rtol: Some(a.rtol),
            ..RunManifest::base("ladder", &a.common)
        },
        Command::DependProbe(a) => RunManifest {
            delta: Some(a.delta),
            amplitudes: a.amplitudes,
            t_end: Some(a.t_end),
            dt_out: Some(a.dt_out),
            ..RunManifest::base("depend-probe", &a.common)
        },
    })
}

fn load(m: &RunManifest) -> std::result::Result<Preset, Failure> {
    match (&m.preset, &m.config) {
        (Some(_), Some(_)) => Err(Failure::Usage("give either --preset or --config, not both".into())),
        (Some(name), None) => Ok(preset(name)?),
        (None, Some(path)) => Ok(load_spec_file(path)?),
        (None, None) => Err(Failure::Usage("one of --preset or --config is required".into())),
    }
}

fn execute(m: &RunManifest) -> Outcome {
    let p = load(m)?;
    let grid = SpectralGrid::new(m.length, m.n)?;
    let u0 = p.data.sample(&grid)?;
    std::fs::create_dir_all(&m.out).map_err(|e| Failure::Usage(format!("{}: {e}", m.out.display())))?;
    write_json_file(&m.out.join("manifest.json"), m)?;
    match m.command.as_str() {
        "solve" => solve(m, &p, &u0),
        "mollify-report" => mollify_report(m, &u0),
        "gauge-audit" => gauge_audit(m, &p, &u0),
        "coeff-audit" => coeff_audit(m, &p, &u0),
        "ladder" => ladder(m, &p, &u0),
        "depend-probe" => depend_probe(m, &p, &u0),
        other => Err(Failure::Usage(format!("unknown command `{other}` in manifest"))),
    }
}

#[derive(Serialize)]
struct SnapshotRow {
    t: f64,
    x: f64,
    u: f64,
}

fn write_snapshots(dir: &Path, snaps: &[StateFunction]) -> std::result::Result<(), Failure> {
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for s in snaps {
        let nodes = s.grid().nodes();
        for (x, u) in nodes.iter().zip(s.values()) {
            rows.push(SnapshotRow { t: s.time(), x: *x, u: *u });
        }
        flat.extend_from_slice(s.values());
    }
    write_csv_file(&dir.join("trajectory.csv"), &rows)?;
    write_f64_file(&dir.join("snapshots.bin"), &flat)?;
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    spec: String,
    termination: Termination,
    final_time: f64,
    epsilon: f64,
    delta: Option<f64>,
    steps_accepted: usize,
    steps_rejected: usize,
    reality_defect: f64,
    dissipation_integral: f64,
    blowup_threshold_h4: f64,
    snapshot_times: Vec<f64>,
    grid_length: f64,
    grid_points: usize,
}

fn solve(m: &RunManifest, p: &Preset, u0: &StateFunction) -> Outcome {
    let data = match m.delta {
        Some(d) => mollify(u0, d)?.result,
        None => u0.clone(),
    };
    let t_end = m.t_end.unwrap_or(1.0);
    let cfg = SolverConfig {
        epsilon: m.epsilon.unwrap_or(0.0),
        t_end,
        rtol: m.rtol.unwrap_or(1e-8),
        output: OutputPolicy::Uniform(m.dt_out.unwrap_or(t_end / 100.0)),
        ..SolverConfig::default()
    };
    let traj = integrate(&p.spec, &data, &cfg)?;
    write_snapshots(&m.out, &traj.snapshots)?;
    write_csv_file(&m.out.join("diagnostics.csv"), &traj.diagnostics.rows)?;
    write_csv_file(&m.out.join("solution_norms.csv"), &solution_norms(&p.spec, &traj)?)?;
    write_json_file(
        &m.out.join("summary.json"),
        &SolveSummary {
            spec: traj.spec_name.clone(),
            termination: traj.termination,
            final_time: traj.final_time(),
            epsilon: traj.epsilon,
            delta: m.delta,
            steps_accepted: traj.steps_accepted,
            steps_rejected: traj.steps_rejected,
            reality_defect: traj.reality_defect,
            dissipation_integral: traj.dissipation_integral,
            blowup_threshold_h4: traj.blowup_threshold_h4,
            snapshot_times: traj.times(),
            grid_length: m.length,
            grid_points: m.n,
        },
    )?;
    let mut violations = Vec::new();
    if traj.termination != Termination::ReachedTEnd {
        violations.push(format!(
            "run stopped at t = {} with {}",
            traj.final_time(),
            traj.termination.as_str()
        ));
    }
    if traj.reality_defect >= 1e-10 {
        violations.push(format!("imaginary part {:e} leaked into physical values", traj.reality_defect));
    }
    let worst_gauge = traj
        .diagnostics
        .rows
        .iter()
        .map(|r| r.gauge_residual)
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    if worst_gauge > 1e-8 {
        violations.push(format!("gauge ODE residual {worst_gauge:e} above 1e-8"));
    }
    Ok(violations)
}

fn mollify_report(m: &RunManifest, u0: &StateFunction) -> Outcome {
    let report = mollifier_report(u0, &m.deltas)?;
    report
        .write_csv(std::io::BufWriter::new(
            std::fs::File::create(m.out.join("mollifier.csv")).map_err(ForgeError::from)?,
        ))
        .map_err(Failure::from)?;
    write_json_file(&m.out.join("mollifier_report.json"), &report)?;
    let worst = report.worst_inflation_ratio();
    Ok(if worst > 1.0 {
        vec![format!("high-norm inflation exceeds 3^j δ^-j by a factor {worst}")]
    } else {
        Vec::new()
    })
}

#[derive(Serialize)]
struct GaugeRow {
    x: f64,
    phi: f64,
    a3: f64,
    a2: f64,
}

fn gauge_audit(m: &RunManifest, p: &Preset, u0: &StateFunction) -> Outcome {
    let n = m.n_order.unwrap_or(7);
    let opts = AdmissibilityOptions {
        seed: m.seed,
        ..AdmissibilityOptions::default()
    };
    let adm = check_admissibility_with(&p.spec, std::slice::from_ref(u0), &opts);
    write_json_file(&m.out.join("admissibility.json"), &adm)?;
    let mut violations = Vec::new();
    if !adm.all_passed() {
        for (name, c) in [("A1", &adm.a1), ("A2", &adm.a2), ("A3", &adm.a3)] {
            if !c.passed {
                violations.push(format!("condition {name} fails: {}", c.detail));
            }
        }
    }
    let (a3, a2) = leading_coefficients(&p.spec, u0, n)?;
    match build_gauge(&a3, &a2) {
        Ok(g) => {
            let rows: Vec<GaugeRow> = g
                .phi
                .grid()
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, x)| GaugeRow {
                    x: *x,
                    phi: g.phi.values()[i],
                    a3: a3.values()[i],
                    a2: a2.values()[i],
                })
                .collect();
            write_csv_file(&m.out.join("gauge.csv"), &rows)?;
            if g.ode_residual > 1e-8 {
                violations.push(format!("gauge ODE residual {:e}", g.ode_residual));
            }
            if !g.is_periodic() {
                violations.push(format!("gauge carries a ramp of slope {}", g.ramp_slope));
            }
        }
        Err(e) => violations.push(e.to_string()),
    }
    let t_end = m.t_end.unwrap_or(0.0);
    if t_end > 0.0 && violations.is_empty() {
        let eps = m.epsilon.unwrap_or(1e-3);
        let cfg = SolverConfig {
            epsilon: eps,
            t_end,
            gauge_diagnostics: false,
            output: OutputPolicy::Uniform(m.dt_out.unwrap_or(t_end / 40.0)),
            ..SolverConfig::default()
        };
        let traj = integrate(&p.spec, u0, &cfg)?;
        let ledger = gauged_energy_rate(&p.spec, &traj.snapshots, n, eps)?;
        write_csv_file(&m.out.join("energy_ledger.csv"), &ledger.rows)?;
        if ledger.gronwall_holds() == Some(false) {
            violations.push("energy ledger violates its own Gronwall bound".into());
        }
    }
    Ok(violations)
}

#[derive(Serialize)]
struct TermRow {
    term: String,
    coeff: u64,
    partial: String,
    monomial: String,
}

#[derive(Serialize)]
struct CoeffSummary {
    order: usize,
    terms: usize,
    appendix_matched: Option<usize>,
    only_in_engine: Vec<String>,
    only_in_appendix: Vec<String>,
    reconstruction_error: f64,
    tolerance: f64,
}

fn coeff_audit(m: &RunManifest, p: &Preset, u0: &StateFunction) -> Outcome {
    let n = m.n_order.unwrap_or(3);
    let terms = if n == 3 { appendix_terms() } else { expansion_terms(n)? };
    let rows: Vec<TermRow> = terms
        .iter()
        .map(|t| TermRow {
            term: t.describe(),
            coeff: t.coeff,
            partial: t.partial.label(),
            monomial: t.monomial.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect();
    write_csv_file(&m.out.join("terms.csv"), &rows)?;
    let audit = (n == 3).then(appendix_audit);
    let err = reconstruction_error(&p.spec, u0, n)?;
    let tolerance = if n <= 7 { 1e-6 } else { 1e-4 };
    write_json_file(
        &m.out.join("coeff_audit.json"),
        &CoeffSummary {
            order: n,
            terms: terms.len(),
            appendix_matched: audit.as_ref().map(|a| a.matched),
            only_in_engine: audit.as_ref().map_or(Vec::new(), |a| a.only_in_engine.clone()),
            only_in_appendix: audit.as_ref().map_or(Vec::new(), |a| a.only_in_appendix.clone()),
            reconstruction_error: err,
            tolerance,
        },
    )?;
    let mut violations = Vec::new();
    if let Some(a) = &audit {
        if !a.bijective() {
            violations.push("engine term list and appendix table differ".into());
        }
    }
    if !(err <= tolerance) {
        violations.push(format!("reconstruction error {err:e} above {tolerance:e}"));
    }
    Ok(violations)
}

fn ladder(m: &RunManifest, p: &Preset, u0: &StateFunction) -> Outcome {
    let t_end = m.t_end.unwrap_or(0.1);
    let cfg = LadderConfig {
        deltas: m.deltas.clone(),
        u0: u0.clone(),
        solver: SolverConfig {
            t_end,
            rtol: m.rtol.unwrap_or(1e-13),
            atol: 1e-14,
            gauge_diagnostics: false,
            ..SolverConfig::default()
        },
        t_target: Some(t_end),
        dt_out: m.dt_out.unwrap_or(5e-4),
    };
    let (report, _) = run_ladder(&p.spec, &cfg)?;
    report.write_to(&m.out)?;
    let c = &report.contracts;
    let mut violations = Vec::new();
    if !c.cauchy_decreasing {
        violations.push(format!("consecutive H3 differences not decreasing: {:?}", report.consecutive_h3()));
    }
    if !c.h11_product_non_growing {
        violations.push("delta^4 * H11 grows down the ladder".into());
    }
    if !c.residual_zero_shrinking {
        violations.push("epsilon-free residual does not shrink down the ladder".into());
    }
    if c.linear_in_eps == Some(false) {
        violations.push("H3 differences are not linear in epsilon".into());
    }
    Ok(violations)
}

/// A smooth random combination of the first four Fourier modes with unit sup norm.
fn perturbation_shape(grid: &SpectralGrid, seed: u64) -> Result<StateFunction, ForgeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let k0 = 2.0 * PI / grid.length();
    let raw = StateFunction::from_fn(grid, 0.0, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let k = k0 * (m + 1) as f64;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum()
    })?;
    let scale = raw.max_abs();
    Ok(raw.scale(1.0 / scale))
}

fn depend_probe(m: &RunManifest, p: &Preset, u0: &StateFunction) -> Outcome {
    let shape = perturbation_shape(u0.grid(), m.seed)?;
    let mut perturbations = vec![StateFunction::zeros(u0.grid(), 0.0)];
    for &a in &m.amplitudes {
        perturbations.push(shape.scale(a));
    }
    let t_end = m.t_end.unwrap_or(0.1);
    let solver = SolverConfig {
        t_end,
        rtol: 1e-12,
        atol: 1e-15,
        gauge_diagnostics: false,
        ..SolverConfig::default()
    };
    let table = continuous_dependence_probe(
        &p.spec,
        u0,
        &perturbations,
        m.delta.unwrap_or(0.1),
        &solver,
        m.dt_out.unwrap_or(0.01),
    )?;
    write_csv_file(&m.out.join("dependence.csv"), &table.rows)?;
    write_json_file(&m.out.join("dependence.json"), &table)?;
    let mut violations = Vec::new();
    let zero = &table.rows[0];
    if !(zero.bitwise_identical && zero.solution_h7_diff == 0.0) {
        violations.push("zero perturbation changed the solution".into());
    }
    let ratios: Vec<f64> = table.rows[1..].iter().map(|r| r.ratio).collect();
    if let (Some(lo), Some(hi)) = (
        ratios.iter().cloned().reduce(f64::min),
        ratios.iter().cloned().reduce(f64::max),
    ) {
        if !(lo > 0.0 && hi / lo <= 3.0) {
            violations.push(format!("solution/data difference ratios {ratios:?} spread beyond a factor 3"));
        }
    }
    Ok(violations)
}
