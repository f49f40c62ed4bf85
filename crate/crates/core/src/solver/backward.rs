//! The backward problem for `w = r·(u − u_app)`:
//!
//! ```text
//!     w_tt − w_rr = (w_t)²/r + 2(∂ₜw_app/r)·w_t − χ(t/T)·F_app,
//!     F_app = ∂ₜ²w_app − ∂_r²w_app − (∂ₜw_app)²/r,
//! ```
//!
//! with `w ≡ 0` for `t ≥ 2T`. It is stepped in `τ = 2T − t`; the equation
//! is invariant under this reversal. `F_app` is formed with the same
//! stencils the scheme uses, so where `χ = 1` the sum `w + w_app` satisfies
//! the discrete forward scheme exactly.

use super::energy::energy_of;
use super::forward::{check_options, max_rate, step_count};
use super::scheme::{Breakdown, Kernel};
use super::{SolveOutcome, SolveStatus, SolverOptions, TracePoint};
use crate::approximate::{smoothstep, ApproximateSolution, CutoffSpec};
use crate::asymptotic::{AsymptoticData, SignCertificate};
use crate::error::{Error, Result};
use crate::fit::{loglog_slope, LineFit};
use crate::radial::{RadialGrid, RadialProfile, Represents, SpacetimeField};
use serde::Serialize;

/// Extra cells beyond `5T + R`.
const MARGIN_CELLS: f64 = 20.0;

#[derive(Clone, Debug)]
pub struct BackwardProblemSpec {
    pub data: AsymptoticData,
    pub cutoff: CutoffSpec,
    /// Matching time `T`.
    pub t_match: f64,
    pub h: f64,
    /// Defaults to `5T + R + 20h`, enough for `w(0, ·)` to be boundary free.
    pub r_max: Option<f64>,
    /// `t_max` is ignored; the run always covers `[0, 2T]`.
    pub solver: SolverOptions,
}

impl BackwardProblemSpec {
    pub fn new(data: AsymptoticData, cutoff: CutoffSpec, t_match: f64, h: f64) -> Self {
        BackwardProblemSpec { data, cutoff, t_match, h, r_max: None, solver: SolverOptions::default() }
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        let r_max = match self.r_max {
            Some(r) => r,
            None => 5.0 * self.t_match + self.data.support_radius().unwrap_or(0.0) + MARGIN_CELLS * self.h,
        };
        RadialGrid::with_spacing(r_max, self.h)
    }
}

/// `χ(x) = 1` for `|x| ≤ 1`, 0 for `|x| ≥ 2`.
pub fn chi(x: f64) -> f64 {
    smoothstep(2.0 - x.abs())
}

#[derive(Clone, Debug)]
pub struct BackwardRun {
    /// Field of `w = r·(u − u_app)` in increasing `t`.
    pub outcome: SolveOutcome,
    pub spec: BackwardProblemSpec,
}

impl BackwardRun {
    /// `u = w/r + u_app` and `∂ₜu` on stored slice `k`.
    pub fn total_u(&self, k: usize) -> Result<(RadialProfile, RadialProfile)> {
        let field = &self.outcome.field;
        let grid = *field.grid();
        let app = ApproximateSolution::new(&self.spec.data, self.spec.cutoff)?;
        let t = field.time(k);
        let r: Vec<f64> = grid.nodes().collect();
        let dt = field.step_dt();
        let here = app.v_level(t, &r)?;
        let up = app.v_level(t + dt, &r)?;
        let down = app.v_level(t - dt, &r)?;
        let rates = field.rate_slice(k).ok_or_else(|| Error::InvalidArgument("field carries no rates".into()))?;
        let mut v = vec![0.0; r.len()];
        let mut vt = vec![0.0; r.len()];
        for j in 0..r.len() {
            v[j] = field.slice(k)[j] + here[j];
            vt[j] = rates[j] + (up[j] - down[j]) / (2.0 * dt);
        }
        let div = |x: Vec<f64>| -> Vec<f64> {
            let mut u: Vec<f64> = x.iter().enumerate().map(|(j, y)| if j == 0 { 0.0 } else { y / r[j] }).collect();
            u[0] = (4.0 * u[1] - u[2]) / 3.0;
            u
        };
        Ok((RadialProfile::new(grid, div(v))?, RadialProfile::new(grid, div(vt))?))
    }

    /// Slope of `log E(w)^{1/2}` against `log(1 + t)` over the stored
    /// slices in `[t_lo, t_hi]`.
    pub fn energy_decay(&self, t_lo: f64, t_hi: f64) -> Result<LineFit> {
        let (t, e): (Vec<f64>, Vec<f64>) = self
            .outcome
            .energy_trace
            .iter()
            .filter(|p| p.t >= t_lo - 1e-9 && p.t <= t_hi + 1e-9)
            .map(|p| (1.0 + p.t, p.value.sqrt()))
            .unzip();
        loglog_slope(&t, &e)
    }

    /// Largest `|u|` with `r − t ≤ −R` over all stored slices. Only nodes
    /// with `r > 0` count; `u(t, 0)` is extrapolated from its neighbours.
    pub fn support_residual(&self) -> Result<f64> {
        let radius =
            self.spec.data.support_radius().ok_or_else(|| {
                Error::InvalidArgument("support check needs compactly supported asymptotic data".into())
            })?;
        let field = &self.outcome.field;
        let mut worst: f64 = 0.0;
        for k in 0..field.valid_slices() {
            let t = field.time(k);
            let (u, _) = self.total_u(k)?;
            for (r, x) in field.grid().nodes().zip(u.values()).skip(1) {
                if r - t <= -radius {
                    worst = worst.max(x.abs());
                }
            }
        }
        Ok(worst)
    }

    /// Lower bound `|u(0, r)| ≥ c/(r(1 + ln r))` on `[r_lo, r_hi]`.
    pub fn initial_tail(&self, r_lo: f64, r_hi: f64) -> Result<TailReport> {
        let field = &self.outcome.field;
        if field.time(0).abs() > 1e-9 {
            return Err(Error::InsufficientRange(format!("run stopped at t = {}", field.time(0))));
        }
        let (u, _) = self.total_u(0)?;
        let samples: Vec<(f64, f64)> = field
            .grid()
            .nodes()
            .zip(u.values())
            .filter(|(r, _)| *r >= r_lo && *r <= r_hi)
            .map(|(r, x)| (r, x * r * (1.0 + r.ln())))
            .collect();
        if samples.len() < 2 {
            return Err(Error::InsufficientRange(format!("no grid nodes in [{r_lo}, {r_hi}]")));
        }
        let first_sign_change = samples.windows(2).find(|w| w[0].1 * w[1].1 <= 0.0).map(|w| w[1].0);
        let (r_at_min, weighted_min) =
            samples
                .iter()
                .fold((f64::NAN, f64::INFINITY), |best, s| if s.1.abs() < best.1 { (s.0, s.1.abs()) } else { best });
        let c = if first_sign_change.is_some() { 0.0 } else { weighted_min };
        Ok(TailReport { r_lo, r_hi, c, r_at_min, first_sign_change, samples })
    }

    /// `(u₀, −u₁)` at `t = 0`: the data of `t ↦ u(−t)`.
    pub fn time_reversed_data(&self) -> Result<(RadialProfile, RadialProfile)> {
        let (u, ut) = self.total_u(0)?;
        let flipped = ut.values().iter().map(|x| -x).collect();
        Ok((u, RadialProfile::new(*ut.grid(), flipped)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Largest `c` with `|u(0, r)| ≥ c/(r(1 + ln r))` on the range; 0 when
    /// `u(0, ·)` changes sign there.
    pub c: f64,
    pub r_at_min: f64,
    pub first_sign_change: Option<f64>,
    /// `(r, u(0, r)·r(1 + ln r))` at every node of the range.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

/// Solves the backward problem from `t = 2T` down to `t = 0`.
pub fn solve_backward(spec: &BackwardProblemSpec) -> Result<BackwardRun> {
    let t_match = spec.t_match;
    if !(t_match > 1.0) {
        return Err(Error::InvalidArgument(format!("matching time must exceed 1, got {t_match}")));
    }
    if spec.data.sign_certificate() != SignCertificate::Nonnegative {
        return Err(Error::InvalidArgument("backward construction needs A ≥ 0".into()));
    }
    let grid = spec.grid()?;
    let opts = &spec.solver;
    check_options(&grid, opts)?;
    let app = ApproximateSolution::new(&spec.data, spec.cutoff)?;

    let h = grid.spacing();
    let n = grid.len();
    let d = opts.decimation;
    let span = 2.0 * t_match;
    let n_steps = step_count(span, h, opts.cfl, d);
    let dt = span / n_steps as f64;
    let kernel = Kernel { h, dt, mode: opts.source, boundary: opts.boundary, exec: opts.exec };
    let r: Vec<f64> = grid.nodes().collect();
    let t_of = |step: usize| span - step as f64 * dt;

    let mut wa_prev = app.v_level(span + dt, &r)?;
    let mut wa_cur = app.v_level(span, &r)?;
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut coef = vec![0.0; n];
    let mut forcing = vec![0.0; n];
    let mut rate = vec![0.0; n];

    let mut slices: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n_steps / d + 1);
    let mut trace = Vec::with_capacity(n_steps + 1);
    let mut status = SolveStatus::Completed;
    let (lam2, dt2) = ((dt / h).powi(2), dt * dt);

    for step in 0..=n_steps {
        let t = t_of(step);
        let wa_next = app.v_level(t - dt, &r)?;
        let weight = chi(t / t_match);
        for j in 1..n - 1 {
            let a_rate = (wa_next[j] - wa_prev[j]) / (2.0 * dt);
            coef[j] = a_rate / r[j];
            let d_tt = (wa_next[j] - 2.0 * wa_cur[j] + wa_prev[j]) / dt2;
            let d_rr = lam2 * (wa_cur[j + 1] - 2.0 * wa_cur[j] + wa_cur[j - 1]) / dt2;
            forcing[j] = -weight * (d_tt - d_rr - a_rate * a_rate / r[j]);
        }
        if let Err(Breakdown(j)) = kernel.step(&prev, &cur, &mut next, Some(&coef), Some(&forcing)) {
            trace.push(TracePoint { t: t - dt, value: f64::INFINITY });
            status = SolveStatus::BlewUp { t_blow: t - dt, r_blow: r[j], t_last_valid: t };
            break;
        }
        if next.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::Diverged { t: t - dt };
            break;
        }
        for j in 0..n {
            // ∂ₜ = −∂_τ
            rate[j] = -(next[j] - prev[j]) / (2.0 * dt);
        }
        let (m, jm) = max_rate(&rate, h);
        trace.push(TracePoint { t, value: m });
        if m > opts.blowup_threshold {
            status = SolveStatus::BlewUp { t_blow: t, r_blow: r[jm], t_last_valid: t + dt };
            break;
        }
        if step % d == 0 {
            slices.push((cur.clone(), rate.clone()));
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        wa_prev = std::mem::replace(&mut wa_cur, wa_next);
    }

    // slices were taken at t = 2T − k·d·dt; store them in increasing t
    let stored = slices.len();
    let t_start = span - (stored.saturating_sub(1) * d) as f64 * dt;
    let mut values = Vec::with_capacity(stored * n);
    let mut rates = Vec::with_capacity(stored * n);
    for (v, rt) in slices.iter().rev() {
        values.extend_from_slice(v);
        rates.extend_from_slice(rt);
    }
    if stored == 0 {
        return Err(Error::InvalidArgument("backward run stored no slices".into()));
    }
    let field =
        SpacetimeField::new(grid, t_start, d as f64 * dt, dt, values, Some(rates), Represents::VEqualsRTimesU, None)?;
    let energy_trace = (0..field.n_slices())
        .map(|k| {
            let e = energy_of(&grid, field.slice(k), field.rate_slice(k).unwrap_or(&[]), Represents::VEqualsRTimesU)?;
            Ok(TracePoint { t: field.time(k), value: e })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BackwardRun {
        outcome: SolveOutcome { field, status, energy_trace, max_dtu_trace: trace, boundary_contact: false },
        spec: spec.clone(),
    })
}
