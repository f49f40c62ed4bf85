use super::scheme::{Breakdown, Kernel, OuterBoundary};
use super::{energy, SolveOutcome, SolveStatus, SolverOptions, TracePoint};
use crate::error::{Error, Result};
use crate::radial::{RadialGrid, RadialProfile, Represents, SpacetimeField};

/// Data below this magnitude count as vanished for the domain check.
const SUPPORT_TOL: f64 = 1e-12;

pub(super) fn check_options(grid: &RadialGrid, opts: &SolverOptions) -> Result<()> {
    if !(opts.cfl > 0.0) || opts.cfl > 1.0 {
        return Err(Error::Cfl { ratio: opts.cfl });
    }
    if grid.len() < 4 {
        return Err(Error::InvalidGrid("solver needs at least 4 radial nodes".into()));
    }
    if opts.decimation == 0 {
        return Err(Error::InvalidArgument("decimation must be at least 1".into()));
    }
    if !(opts.blowup_threshold > 0.0) {
        return Err(Error::InvalidArgument("blow-up threshold must be positive".into()));
    }
    Ok(())
}

/// Number of steps: a multiple of `decimation` with `dt ≤ cfl·h`.
pub(super) fn step_count(span: f64, h: f64, cfl: f64, decimation: usize) -> usize {
    let raw = (span / (cfl * h) - 1e-9).ceil().max(1.0) as usize;
    raw.div_ceil(decimation) * decimation
}

/// `max_j |rate_j / r_j|` over `j ≥ 1`, with its node.
pub(super) fn max_rate(rate: &[f64], h: f64) -> (f64, usize) {
    let mut best = (0.0, 0);
    for (j, v) in rate.iter().enumerate().skip(1) {
        let u_t = (v / (j as f64 * h)).abs();
        if u_t > best.0 || u_t.is_nan() {
            best = (u_t, j);
        }
    }
    best
}

/// Explicit evolution of `v = r·u` from `(u₀, u₁)` up to `t_max`.
///
/// Stops early on blow-up (rate above threshold or no real continuation)
/// or on non-finite values.
pub fn solve_forward(u0: &RadialProfile, u1: &RadialProfile, opts: &SolverOptions) -> Result<SolveOutcome> {
    let grid = *u0.grid();
    if grid != *u1.grid() {
        return Err(Error::GridMismatch("u₀ and u₁ must share a grid".into()));
    }
    check_options(&grid, opts)?;
    if !(opts.t_max > 0.0) {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {}", opts.t_max)));
    }
    let h = grid.spacing();
    let support = u0.support_radius(SUPPORT_TOL).max(u1.support_radius(SUPPORT_TOL));
    let compact = support < grid.r_max() - 2.0 * h;
    let reaches = support + opts.t_max > grid.r_max();
    if opts.boundary == OuterBoundary::Outgoing && compact && reaches {
        return Err(Error::InvalidGrid(format!(
            "r_max = {} is below support + t_max = {}",
            grid.r_max(),
            support + opts.t_max
        )));
    }

    let d = opts.decimation;
    let n_steps = step_count(opts.t_max, h, opts.cfl, d);
    let dt = opts.t_max / n_steps as f64;
    let kernel = Kernel { h, dt, mode: opts.source, boundary: opts.boundary, exec: opts.exec };
    let n = grid.len();
    let r: Vec<f64> = grid.nodes().collect();

    let v0: Vec<f64> = r.iter().zip(u0.values()).map(|(r, u)| r * u).collect();
    let vt0: Vec<f64> = r.iter().zip(u1.values()).map(|(r, u)| r * u).collect();

    let mut values = Vec::with_capacity((n_steps / d + 1) * n);
    let mut rates = Vec::with_capacity(values.capacity());
    values.extend_from_slice(&v0);
    rates.extend_from_slice(&vt0);
    let mut trace = Vec::with_capacity(n_steps + 1);
    let (m0, j0) = max_rate(&vt0, h);
    trace.push(TracePoint { t: 0.0, value: m0 });

    let mut status = SolveStatus::Completed;
    if m0 > opts.blowup_threshold {
        status = SolveStatus::BlewUp { t_blow: 0.0, r_blow: r[j0], t_last_valid: 0.0 };
    }

    let mut prev = v0;
    let mut cur = vec![0.0; n];
    kernel.first_level(&prev, &vt0, &mut cur);
    let mut next = vec![0.0; n];
    let mut rate = vec![0.0; n];

    let mut step = 1;
    while status == SolveStatus::Completed && step <= n_steps {
        let t = step as f64 * dt;
        if cur.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::Diverged { t };
            break;
        }
        if let Err(Breakdown(j)) = kernel.step(&prev, &cur, &mut next, None, None) {
            trace.push(TracePoint { t: t + dt, value: f64::INFINITY });
            status = SolveStatus::BlewUp { t_blow: t + dt, r_blow: r[j], t_last_valid: t };
            break;
        }
        for j in 0..n {
            rate[j] = (next[j] - prev[j]) / (2.0 * dt);
        }
        let (m, jm) = max_rate(&rate, h);
        trace.push(TracePoint { t, value: m });
        if m.is_nan() {
            status = SolveStatus::Diverged { t };
            break;
        }
        if m > opts.blowup_threshold {
            status = SolveStatus::BlewUp { t_blow: t, r_blow: r[jm], t_last_valid: t - dt };
            break;
        }
        if step % d == 0 {
            values.extend_from_slice(&cur);
            rates.extend_from_slice(&rate);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        step += 1;
    }

    let n_slices = values.len() / n;
    let last_valid = (status != SolveStatus::Completed).then(|| n_slices - 1);
    let field =
        SpacetimeField::new(grid, 0.0, d as f64 * dt, dt, values, Some(rates), Represents::VEqualsRTimesU, last_valid)?;
    let energy_trace = (0..field.valid_slices())
        .map(|k| Ok(TracePoint { t: field.time(k), value: energy(&field, k)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolveOutcome { field, status, energy_trace, max_dtu_trace: trace, boundary_contact: reaches })
}
