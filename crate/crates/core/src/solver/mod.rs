//! Radial solver for `−□u = (∂ₜu)²`.
//!
//! The unknown is `v = r·u`, which satisfies `v_tt − v_rr = (v_t)²/r` with
//! `v(t, 0) = 0`. Time stepping is explicit leapfrog with `λ = dt/h ≤ 1`.
//! By default the source is time-centered,
//!
//! ```text
//!     D_tt v − D_rr v = (D̂v)²/r,     D̂v = (vⁿ⁺¹ − vⁿ⁻¹)/(2dt),
//! ```
//!
//! which is quadratic in `W = vⁿ⁺¹ − vⁿ⁻¹` at each node and is solved in
//! closed form. A negative discriminant means the discrete solution has no
//! real continuation (`∂ₜu·dt ≳ 1/2`) and is reported as blow-up.

mod backward;
mod energy;
mod forward;
mod scheme;

use serde::Serialize;

pub use backward::{chi, solve_backward, BackwardProblemSpec, BackwardRun, TailReport};
pub use energy::{cauchy_gap, energy, energy_at, velocity_profile};
pub use forward::solve_forward;
pub use scheme::{scheme_residual, OuterBoundary, SourceMode};

use crate::output::extended_f64;
use crate::par::Exec;
use crate::radial::SpacetimeField;

/// Default cap on `max|∂ₜu|`.
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// `λ = dt/h`.
    pub cfl: f64,
    pub t_max: f64,
    pub blowup_threshold: f64,
    pub source: SourceMode,
    pub boundary: OuterBoundary,
    /// Store every `decimation`-th time level.
    pub decimation: usize,
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cfl: 1.0,
            t_max: 1.0,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            source: SourceMode::Centered,
            boundary: OuterBoundary::Outgoing,
            decimation: 1,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Completed,
    /// `t_blow` is the first time level whose rate crossed the threshold or
    /// admitted no real continuation; `t_last_valid` precedes it by one step.
    BlewUp {
        t_blow: f64,
        r_blow: f64,
        t_last_valid: f64,
    },
    Diverged {
        t: f64,
    },
}

impl SolveStatus {
    pub fn is_blowup(&self) -> bool {
        matches!(self, SolveStatus::BlewUp { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    #[serde(serialize_with = "extended_f64")]
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    /// `v = r·u` for forward runs, `r·(u − u_app)` for backward runs.
    pub field: SpacetimeField,
    pub status: SolveStatus,
    /// `(t, E)` at every stored slice, in increasing `t`.
    pub energy_trace: Vec<TracePoint>,
    /// `(t, max|∂ₜu|)` at every time level, in stepping order; infinite where
    /// the step had no real solution.
    pub max_dtu_trace: Vec<TracePoint>,
    /// Set when data reaching the outer boundary may have influenced the run.
    pub boundary_contact: bool,
}

impl SolveOutcome {
    pub fn energy_csv(&self) -> String {
        crate::output::csv_table(&["t", "energy"], self.energy_trace.iter().map(|p| vec![p.t, p.value]))
    }

    pub fn max_dtu_csv(&self) -> String {
        crate::output::csv_table(&["t", "max_dtu"], self.max_dtu_trace.iter().map(|p| vec![p.t, p.value]))
    }
}
