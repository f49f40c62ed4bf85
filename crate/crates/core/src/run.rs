//! Run orchestration for the command-line harness.
//!
//! Every command writes into the output directory:
//!
//! | command      | files                                                                  |
//! |--------------|------------------------------------------------------------------------|
//! | `asymptotic` | `profile.csv`, `summary.json`                                          |
//! | `forward`    | `energy.csv`, `max_dtu.csv`, `summary.json`, and on blow-up `certificate.json`, `n_functional.csv` |
//! | `backward`   | `energy.csv`, `max_dtu.csv`, `initial_data.csv`, `summary.json`        |
//! | `sign_check` | `summary.json`                                                         |
//! | `diagnose`   | the `forward` files plus `beta_functional.csv`                         |
//! | `sweep`      | one `backward` directory per job plus `sweep.csv`                      |
//!
//! `field.csv` is added for `forward`, `diagnose` and `backward` when
//! `write_field = true`. `config.effective` holds the resolved configuration.
//! Nothing time- or host-dependent is written, so equal configs give
//! byte-identical files.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approximate::CutoffSpec;
use crate::asymptotic::{
    decay_rate_u, AsymptoticData, AsymptoticProfile, DecayReport, Extent, LifespanSummary, DEFAULT_QUAD_STEP,
};
use crate::config::{Command, RunConfig};
use crate::datum::Datum;
use crate::diagnostics::{
    best_n_certificate, beta_functional, beta_inequality_check, n_functional, BlowupCertificate, MarginReport,
};
use crate::error::{Error, Result};
use crate::fit::{linspace, LineFit};
use crate::linear::{classify_sign_condition, SignCondition, SignConditionReport, SignSearch};
use crate::output::{csv_table, extended_f64, fmt_extended, to_json, write_file};
use crate::par::{self, Exec};
use crate::radial::{sample_function, RadialGrid};
use crate::solver::{
    solve_backward, solve_forward, BackwardProblemSpec, BackwardRun, SolveOutcome, SolveStatus, SolverOptions,
    TailReport,
};
use crate::spherical::SphereQuadrature;

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
/// Blow-up is a scientific outcome, not a failure.
pub const EXIT_BLOWUP: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlewUp,
    Diverged,
}

impl RunStatus {
    fn of(status: &SolveStatus) -> Self {
        match status {
            SolveStatus::Completed => RunStatus::Completed,
            SolveStatus::BlewUp { .. } => RunStatus::BlewUp,
            SolveStatus::Diverged { .. } => RunStatus::Diverged,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => EXIT_COMPLETED,
            RunStatus::BlewUp => EXIT_BLOWUP,
            RunStatus::Diverged => EXIT_DIVERGED,
        }
    }

    fn worst(self, other: RunStatus) -> RunStatus {
        self.max(other)
    }
}

impl PartialOrd for RunStatus {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RunStatus {
    // Diverged > BlewUp > Completed
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let rank = |s: &RunStatus| match s {
            RunStatus::Completed => 0,
            RunStatus::BlewUp => 1,
            RunStatus::Diverged => 2,
        };
        rank(self).cmp(&rank(other))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub status: RunStatus,
    /// One line per job.
    pub summary: String,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

/// Runs the configured command inside a pool of `output.threads` workers.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let threads = (cfg.output.threads > 0).then_some(cfg.output.threads);
    par::with_threads(threads, || {
        let mut out = Outputs { dir: cfg.output.dir.clone(), written: Vec::new() };
        out.write("config.effective", &cfg.emit())?;
        let (status, summary) = match cfg.command {
            Command::Asymptotic => run_asymptotic(cfg, &mut out)?,
            Command::Forward => run_forward(cfg, &mut out, false)?,
            Command::Diagnose => run_forward(cfg, &mut out, true)?,
            Command::Backward => {
                let job = backward_job(cfg, cfg.solver.epsilon, cfg.solver.t_match, &mut out)?;
                (job.status, job.line)
            }
            Command::SignCheck => run_sign_check(cfg, &mut out)?,
            Command::Sweep => run_sweep(cfg, &mut out)?,
        };
        Ok(RunReport { command: cfg.command, status, summary, outputs: out.written })
    })
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_file(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn child(&self, name: &str) -> Outputs {
        Outputs { dir: self.dir.join(name), written: Vec::new() }
    }
}

fn quadrature(cfg: &RunConfig) -> SphereQuadrature {
    SphereQuadrature::new(cfg.grid.n_theta, cfg.grid.n_phi)
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        cfl: cfg.solver.cfl,
        t_max: cfg.solver.t_max,
        blowup_threshold: cfg.solver.blowup_threshold,
        source: cfg.solver.source,
        boundary: cfg.solver.boundary,
        decimation: cfg.output.decimation,
        exec: Exec::default(),
    }
}

#[derive(Serialize)]
struct AsymptoticSummary<'a> {
    command: Command,
    #[serde(flatten)]
    lifespan: &'a LifespanSummary,
    s_max: f64,
    q_min: f64,
    q_max: f64,
    /// Decay of `U(s, q_max)` over `s ∈ [10, 1000]`, for nonnegative data.
    decay: Option<DecayReport>,
}

fn run_asymptotic(cfg: &RunConfig, out: &mut Outputs) -> Result<(RunStatus, String)> {
    let data = cfg.asymptotic_data()?;
    let summary = data.summary();
    let (lo, hi) = match data.extent() {
        Extent::Compact { lo, hi } => (lo - 1.0, hi + 1.0),
        Extent::Decaying { .. } => (-16.0, 16.0),
    };
    let q_min = cfg.grid.q_min.unwrap_or(lo);
    let q_max = cfg.grid.q_max.unwrap_or(hi);
    let q_grid = linspace(q_min, q_max, cfg.grid.n_q);
    // U exists only below the lifespan
    let s_grid: Vec<f64> =
        linspace(0.0, cfg.grid.s_max, cfg.grid.n_s).into_iter().filter(|s| *s < summary.lifespan).collect();
    let profile = AsymptoticProfile::compute(&data, &s_grid, &q_grid, DEFAULT_QUAD_STEP, Exec::default())?;
    out.write("profile.csv", &profile.to_csv())?;
    let decay = if data.is_zero() || summary.lifespan.is_finite() {
        None
    } else {
        Some(decay_rate_u(&data, q_max, 10.0, 1000.0, 16)?)
    };
    let line = format!(
        "asymptotic: lifespan={} sign={} min_a={}{}",
        fmt_extended(summary.lifespan),
        serde_json::to_value(summary.sign_certificate)
            .map(|v| v.as_str().unwrap_or("").to_string())
            .unwrap_or_default(),
        summary.lattice_min_a,
        decay.as_ref().map(|d| format!(" decay_exponent={:.4}", d.exponent)).unwrap_or_default()
    );
    let s_max = s_grid.last().copied().unwrap_or(0.0);
    out.write(
        "summary.json",
        &to_json(&AsymptoticSummary { command: cfg.command, lifespan: &summary, s_max, q_min, q_max, decay }),
    )?;
    Ok((RunStatus::Completed, line))
}

fn radial_support(d: &Datum) -> Option<f64> {
    d.support().map(|(_, hi)| hi.max(0.0))
}

#[derive(Serialize)]
struct ForwardSummary {
    command: Command,
    u0: String,
    u1: String,
    r_max: f64,
    h: f64,
    #[serde(flatten)]
    status: SolveStatus,
    final_time: f64,
    final_energy: f64,
    boundary_contact: bool,
    certificate: Option<BlowupCertificate>,
    sign_condition: Option<SignConditionReport>,
    beta_check: Option<BetaSummary>,
}

#[derive(Serialize)]
struct BetaSummary {
    q: f64,
    support_radius: f64,
    truncated: bool,
    min_margin: f64,
    r_at_min: f64,
    #[serde(serialize_with = "extended_f64")]
    final_value: f64,
}

fn run_forward(cfg: &RunConfig, out: &mut Outputs, diagnose: bool) -> Result<(RunStatus, String)> {
    let (d0, d1) = (cfg.data.u0, cfg.data.u1);
    let opts = solver_options(cfg);
    let support = radial_support(&d0).zip(radial_support(&d1)).map(|(a, b)| a.max(b));
    let r_max = cfg.grid.r_max.unwrap_or_else(|| support.unwrap_or(20.0) + opts.t_max + 1.0);
    let grid = RadialGrid::with_spacing(r_max, cfg.grid.h)?;
    let u0 = sample_function(|r| d0.eval(r), grid)?;
    let u1 = sample_function(|r| d1.eval(r), grid)?;
    let outcome = solve_forward(&u0, &u1, &opts)?;
    let status = RunStatus::of(&outcome.status);
    write_run_traces(cfg, &outcome, out)?;

    let quad = quadrature(cfg);
    let sign_condition = if diagnose {
        let search = sign_search(cfg);
        Some(classify_sign_condition(|x| d0.eval_point(x), |x| d1.eval_point(x), &search, &quad, Exec::default())?)
    } else {
        None
    };

    let mut certificate = None;
    let mut cert_path = None;
    if status == RunStatus::BlewUp || diagnose {
        // witness center and characteristic from the sign search when one was found
        let (x0, q) = match sign_condition.as_ref().and_then(|s| s.witness.as_ref()) {
            Some(w) if sign_condition.as_ref().map(|s| s.condition) == Some(SignCondition::ForwardPositive) => {
                (w.x0, w.q)
            }
            _ => ([0.0; 3], cfg.solver.q),
        };
        // the characteristic t = r − q leaves the valid field at r = q + t_last
        let field = &outcome.field;
        let t_last = field.time(field.valid_slices().saturating_sub(1));
        let r_grid: Vec<f64> = grid.nodes().filter(|r| *r >= q && *r <= q + t_last).collect();
        let trace = n_functional(&outcome.field, &x0, q, &r_grid, &quad)?;
        out.write("n_functional.csv", &trace.to_csv("N"))?;
        let cond = sign_condition.as_ref().map(|s| s.condition);
        let cert = match cfg.solver.r0 {
            Some(r0) => crate::diagnostics::n_certificate(&trace, x0, r0, cond),
            None => best_n_certificate(&trace, x0, cond),
        };
        if let Ok(c) = cert {
            cert_path = Some(out.write("certificate.json", &to_json(&c))?);
            certificate = Some(c);
        }
    }

    let beta_check = match (diagnose, support) {
        (true, Some(radius)) if radius > 0.0 => {
            let q = -radius - 1.0;
            let rho: Vec<f64> = grid.nodes().filter(|r| *r >= -q).collect();
            let trace = beta_functional(&outcome.field, q, &rho)?;
            out.write("beta_functional.csv", &trace.to_csv("beta"))?;
            // empty when the run ends before the characteristic starts at t = −2q
            beta_inequality_check(&trace, radius).ok().map(|MarginReport { min_margin, r_at_min, .. }| BetaSummary {
                q,
                support_radius: radius,
                truncated: trace.truncated,
                min_margin,
                r_at_min,
                final_value: trace.value.last().copied().unwrap_or(0.0),
            })
        }
        _ => None,
    };

    let last = outcome.field.valid_slices().saturating_sub(1);
    let summary = ForwardSummary {
        command: cfg.command,
        u0: d0.to_string(),
        u1: d1.to_string(),
        r_max: grid.r_max(),
        h: grid.spacing(),
        status: outcome.status,
        final_time: outcome.field.time(last),
        final_energy: outcome.energy_trace.get(last).map(|p| p.value).unwrap_or(f64::NAN),
        boundary_contact: outcome.boundary_contact,
        certificate: certificate.clone(),
        sign_condition: sign_condition.clone(),
        beta_check,
    };
    out.write("summary.json", &to_json(&summary))?;

    let mut line = format!("{}: status={}", cfg.command, status_text(&outcome.status));
    if let Some(c) = &sign_condition {
        line += &format!(" condition={}", json_str(&c.condition));
    }
    if let (Some(c), Some(p)) = (&certificate, &cert_path) {
        line += &format!(" r_star={} certificate={}", fmt_extended(c.r_star), p.display());
    }
    Ok((status, line))
}

fn json_str<T: Serialize>(x: &T) -> String {
    serde_json::to_value(x).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn status_text(s: &SolveStatus) -> String {
    match *s {
        SolveStatus::Completed => "completed".into(),
        SolveStatus::BlewUp { t_blow, r_blow, .. } => format!("blow-up detected t_blow={t_blow} r_blow={r_blow}"),
        SolveStatus::Diverged { t } => format!("diverged t={t}"),
    }
}

fn write_run_traces(cfg: &RunConfig, outcome: &SolveOutcome, out: &mut Outputs) -> Result<()> {
    out.write("energy.csv", &outcome.energy_csv())?;
    out.write("max_dtu.csv", &outcome.max_dtu_csv())?;
    if cfg.output.write_field {
        out.write("field.csv", &outcome.field.to_csv(cfg.output.field_every))?;
    }
    Ok(())
}

fn sign_search(cfg: &RunConfig) -> SignSearch {
    let mut search = SignSearch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.output.seed);
    for _ in 0..cfg.output.random_probes {
        // uniform in the ball of radius 2
        let p: [f64; 3] = loop {
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            if p.iter().map(|x| x * x).sum::<f64>() <= 4.0 {
                break p;
            }
        };
        search.x0_candidates.push(p);
    }
    search
}

fn run_sign_check(cfg: &RunConfig, out: &mut Outputs) -> Result<(RunStatus, String)> {
    let (d0, d1) = (cfg.data.u0, cfg.data.u1);
    let search = sign_search(cfg);
    let report = classify_sign_condition(
        |x| d0.eval_point(x),
        |x| d1.eval_point(x),
        &search,
        &quadrature(cfg),
        Exec::default(),
    )?;
    out.write("summary.json", &to_json(&report))?;
    let margin = report.witness.as_ref().map(|w| format!(" margin={}", w.margin)).unwrap_or_default();
    Ok((RunStatus::Completed, format!("sign_check: condition={}{margin}", json_str(&report.condition))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BackwardSummary {
    pub epsilon: f64,
    pub t_match: f64,
    pub h: f64,
    pub r_max: f64,
    #[serde(flatten)]
    pub status: SolveStatus,
    /// Slope of `log E(u − u_app)^{1/2}` against `log(1 + t)` on `[2t₀, T]`.
    pub energy_decay: Option<LineFit>,
    /// Largest `|u|` with `r − t ≤ −R`.
    pub support_residual: Option<f64>,
    /// Lower bound of `|u(0, r)|·r(1 + ln r)` on `[R + 1, r_max/2]`.
    pub initial_tail: Option<TailReport>,
}

/// The derived quantities every backward run reports.
pub fn summarize_backward(run: &BackwardRun) -> BackwardSummary {
    let spec = &run.spec;
    let field = &run.outcome.field;
    let completed = run.outcome.status == SolveStatus::Completed;
    let radius = spec.data.support_radius();
    let t_lo = 2.0 * spec.cutoff.t0();
    BackwardSummary {
        epsilon: spec.cutoff.epsilon,
        t_match: spec.t_match,
        h: field.grid().spacing(),
        r_max: field.grid().r_max(),
        status: run.outcome.status,
        energy_decay: run.energy_decay(t_lo, spec.t_match).ok(),
        support_residual: radius.and_then(|_| run.support_residual().ok()),
        initial_tail: match (completed, radius) {
            (true, Some(r)) => run.initial_tail(r + 1.0, field.grid().r_max() / 2.0).ok(),
            _ => None,
        },
    }
}

struct JobResult {
    status: RunStatus,
    line: String,
    summary: BackwardSummary,
}

fn backward_job(cfg: &RunConfig, epsilon: f64, t_match: f64, out: &mut Outputs) -> Result<JobResult> {
    let data: AsymptoticData = cfg.asymptotic_data()?;
    let cutoff = CutoffSpec::new(epsilon, cfg.solver.delta)?;
    let mut spec = BackwardProblemSpec::new(data, cutoff, t_match, cfg.grid.h);
    spec.r_max = cfg.grid.r_max;
    spec.solver = solver_options(cfg);
    let run = solve_backward(&spec)?;
    write_run_traces(cfg, &run.outcome, out)?;
    let status = RunStatus::of(&run.outcome.status);
    if status == RunStatus::Completed {
        let (u, ut) = run.total_u(0)?;
        let rows = u.grid().nodes().zip(u.values()).zip(ut.values()).map(|((r, a), b)| vec![r, *a, *b]);
        out.write("initial_data.csv", &csv_table(&["r", "u", "u_t"], rows))?;
    }
    let summary = summarize_backward(&run);
    out.write("summary.json", &to_json(&summary))?;
    let mut line = format!("backward: epsilon={epsilon} T={t_match} status={}", status_text(&run.outcome.status));
    if let Some(fit) = &summary.energy_decay {
        line += &format!(" energy_exponent={:.4}", fit.slope);
    }
    if let Some(res) = summary.support_residual {
        line += &format!(" support_residual={res:e}");
    }
    Ok(JobResult { status, line, summary })
}

fn run_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(RunStatus, String)> {
    let eps =
        if cfg.solver.sweep_epsilon.is_empty() { vec![cfg.solver.epsilon] } else { cfg.solver.sweep_epsilon.clone() };
    let ts =
        if cfg.solver.sweep_t_match.is_empty() { vec![cfg.solver.t_match] } else { cfg.solver.sweep_t_match.clone() };
    let jobs: Vec<(f64, f64)> = eps.iter().flat_map(|e| ts.iter().map(move |t| (*e, *t))).collect();
    let results = par::map_range_coarse(Exec::default(), jobs.len(), |i| {
        let (e, t) = jobs[i];
        let mut child = out.child(&job_dir(e, t));
        backward_job(cfg, e, t, &mut child).map(|r| (r, child.written))
    });
    let mut status = RunStatus::Completed;
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for res in results {
        let (job, written) = res?;
        out.written.extend(written);
        status = status.worst(job.status);
        lines.push(job.line);
        let s = &job.summary;
        rows.push(vec![
            s.epsilon,
            s.t_match,
            job.status.exit_code() as f64,
            s.energy_decay.as_ref().map(|f| f.slope).unwrap_or(f64::NAN),
            s.support_residual.unwrap_or(f64::NAN),
            s.initial_tail.as_ref().map(|t| t.c).unwrap_or(f64::NAN),
        ]);
    }
    let path = out.write(
        "sweep.csv",
        &csv_table(&["epsilon", "t_match", "status", "energy_exponent", "support_residual", "tail_c"], rows),
    )?;
    lines.push(format!("sweep: {} jobs aggregate={}", jobs.len(), path.display()));
    Ok((status, lines.join("\n")))
}

fn job_dir(epsilon: f64, t_match: f64) -> String {
    format!("eps_{epsilon}_T_{t_match}")
}
