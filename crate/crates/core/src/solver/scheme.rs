//! One leapfrog step on `v = r·u`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::radial::RadialGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// `(D̂v)²/r` with the centered rate; second order, pointwise implicit.
    Centered,
    /// `((vⁿ − vⁿ⁻¹)/dt)²/r`; explicit, first order in time.
    Lagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Upwind `v_t + v_r = 0`; exact for outgoing waves when `λ = 1`.
    Outgoing,
    /// Linear extrapolation in `r`; exact for `v = r·f(t)` (spatially
    /// homogeneous `u`).
    Extrapolate,
}

/// Node index where a step had no real continuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Breakdown(pub usize);

#[derive(Clone, Copy, Debug)]
pub(crate) struct Kernel {
    pub h: f64,
    pub dt: f64,
    pub mode: SourceMode,
    pub boundary: OuterBoundary,
    pub exec: Exec,
}

impl Kernel {
    fn lam2(&self) -> f64 {
        (self.dt / self.h).powi(2)
    }

    /// Writes level `n + 1` into `next`.
    ///
    /// `coef[j]` is `a` in the extra linear term `2a·D̂v`; `forcing[j]` is an
    /// additive right-hand side `g`. Both are optional.
    pub fn step(
        &self,
        prev: &[f64],
        cur: &[f64],
        next: &mut [f64],
        coef: Option<&[f64]>,
        forcing: Option<&[f64]>,
    ) -> std::result::Result<(), Breakdown> {
        let n = cur.len();
        let (h, dt, lam2, mode) = (self.h, self.dt, self.lam2(), self.mode);
        let bad = AtomicUsize::new(usize::MAX);
        next[0] = 0.0;
        par::for_each_mut(self.exec, &mut next[1..n - 1], |i, out| {
            let j = i + 1;
            let r = j as f64 * h;
            let lap = cur[j + 1] - 2.0 * cur[j] + cur[j - 1];
            let g = forcing.map_or(0.0, |f| f[j]);
            let a = coef.map_or(0.0, |c| c[j]);
            let c = 2.0 * (cur[j] - prev[j]) + lam2 * lap + dt * dt * g;
            let w = match mode {
                SourceMode::Centered => {
                    // W²/(4r) − bW + c = 0, smaller root
                    let b = 1.0 - a * dt;
                    let disc = b * b - c / r;
                    if disc < 0.0 || b <= 0.0 {
                        bad.fetch_min(j, Ordering::Relaxed);
                        f64::NAN
                    } else {
                        2.0 * c / (b + disc.sqrt())
                    }
                }
                SourceMode::Lagged => {
                    let p = cur[j] - prev[j];
                    c + p * p / r + 2.0 * a * dt * p
                }
            };
            *out = prev[j] + w;
        });
        match bad.into_inner() {
            usize::MAX => {}
            j => return Err(Breakdown(j)),
        }
        self.close_boundary(cur, next);
        Ok(())
    }

    /// Second-order Taylor start `v¹ = v⁰ + dt·v_t + (dt²/2)(v_rr + v_t²/r)`.
    pub fn first_level(&self, v0: &[f64], vt0: &[f64], next: &mut [f64]) {
        let n = v0.len();
        let (h, dt, lam2) = (self.h, self.dt, self.lam2());
        next[0] = 0.0;
        par::for_each_mut(self.exec, &mut next[1..n - 1], |i, out| {
            let j = i + 1;
            let r = j as f64 * h;
            let lap = v0[j + 1] - 2.0 * v0[j] + v0[j - 1];
            *out = v0[j] + dt * vt0[j] + 0.5 * (lam2 * lap + dt * dt * vt0[j] * vt0[j] / r);
        });
        self.close_boundary(v0, next);
    }

    fn close_boundary(&self, cur: &[f64], next: &mut [f64]) {
        let n = next.len();
        next[n - 1] = match self.boundary {
            OuterBoundary::Outgoing => {
                let lam = self.dt / self.h;
                cur[n - 1] - lam * (cur[n - 1] - cur[n - 2])
            }
            OuterBoundary::Extrapolate => 2.0 * next[n - 2] - next[n - 3],
        };
    }
}

/// `max_j |D_tt v − D_rr v − S(v)|/r_j` over interior nodes at time `t`,
/// for an exact solution `v(t, r)` sampled on the scheme's stencil.
pub fn scheme_residual<F>(v: F, t: f64, grid: &RadialGrid, dt: f64, mode: SourceMode) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let h = grid.spacing();
    if !(dt > 0.0) || dt / h > 1.0 + 1e-12 {
        return Err(Error::Cfl { ratio: dt / h });
    }
    let mut worst: f64 = 0.0;
    for j in 1..grid.len() - 1 {
        let r = grid.r(j);
        let (up, mid, down) = (v(t + dt, r), v(t, r), v(t - dt, r));
        let d_tt = (up - 2.0 * mid + down) / (dt * dt);
        let d_rr = (v(t, r + h) - 2.0 * mid + v(t, r - h)) / (h * h);
        let rate = match mode {
            SourceMode::Centered => (up - down) / (2.0 * dt),
            SourceMode::Lagged => (mid - down) / dt,
        };
        worst = worst.max(((d_tt - d_rr - rate * rate / r) / r).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::loglog_slope;

    fn log_solution(c: f64) -> impl Fn(f64, f64) -> f64 {
        move |t, r| -r * (t + c).ln()
    }

    #[test]
    fn centered_residual_on_log_solution_is_second_order() {
        let mut steps = Vec::new();
        let mut errs = Vec::new();
        for k in 0..5 {
            let h = 0.1 / 2f64.powi(k);
            let grid = RadialGrid::with_spacing(2.0, h).unwrap();
            steps.push(h);
            errs.push(scheme_residual(log_solution(1.0), 0.5, &grid, h, SourceMode::Centered).unwrap());
        }
        let fit = loglog_slope(&steps, &errs).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.3, "{}", fit.slope);
    }

    #[test]
    fn lagged_residual_is_first_order() {
        let mut steps = Vec::new();
        let mut errs = Vec::new();
        for k in 0..5 {
            let h = 0.1 / 2f64.powi(k);
            let grid = RadialGrid::with_spacing(2.0, h).unwrap();
            steps.push(h);
            errs.push(scheme_residual(log_solution(1.0), 0.5, &grid, h, SourceMode::Lagged).unwrap());
        }
        let fit = loglog_slope(&steps, &errs).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.3, "{}", fit.slope);
    }

    #[test]
    fn residual_rejects_cfl_violation() {
        let grid = RadialGrid::with_spacing(1.0, 0.1).unwrap();
        assert!(matches!(scheme_residual(|_, _| 0.0, 0.0, &grid, 0.2, SourceMode::Centered), Err(Error::Cfl { .. })));
    }

    #[test]
    fn centered_step_reproduces_quadratic_root() {
        // homogeneous u: pₙ₊₁ − pₙ = (pₙ₊₁ + pₙ)²/4 with p the increment of u
        let k = Kernel {
            h: 0.1,
            dt: 0.1,
            mode: SourceMode::Centered,
            boundary: OuterBoundary::Extrapolate,
            exec: Exec::Sequential,
        };
        let r: Vec<f64> = (0..6).map(|j| j as f64 * 0.1).collect();
        let (u0, u1) = (0.0, 0.05);
        let prev: Vec<f64> = r.iter().map(|r| r * u0).collect();
        let cur: Vec<f64> = r.iter().map(|r| r * u1).collect();
        let mut next = vec![0.0; 6];
        k.step(&prev, &cur, &mut next, None, None).unwrap();
        let p = u1 - u0;
        let q = next[3] / r[3] - u1;
        assert!((q - p - (q + p).powi(2) / 4.0).abs() < 1e-15);
        for j in 1..6 {
            assert!((next[j] / r[j] - next[3] / r[3]).abs() < 1e-14);
        }
    }

    #[test]
    fn breakdown_is_reported_at_the_node() {
        let k = Kernel {
            h: 0.1,
            dt: 0.1,
            mode: SourceMode::Centered,
            boundary: OuterBoundary::Outgoing,
            exec: Exec::Sequential,
        };
        let prev = vec![0.0; 6];
        let mut cur = vec![0.0; 6];
        cur[4] = 1.0;
        let mut next = vec![0.0; 6];
        // node 3 sees c = 1 at r = 0.3: discriminant 1 − c/r < 0
        assert_eq!(k.step(&prev, &cur, &mut next, None, None), Err(Breakdown(3)));
    }
}
