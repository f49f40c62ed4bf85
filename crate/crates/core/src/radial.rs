//! Uniform radial grids, sampled radial profiles and space-time fields.
//!
//! Everything in this module is an immutable value once built. Derivatives
//! use fixed second-order stencils and radial integrals use the composite
//! trapezoid rule.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `r_j = j·h`, `j = 0..n_points`, `h = r_max/(n_points − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_max: f64,
    n_points: usize,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n_points}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("r_max must be positive and finite, got {r_max}")));
        }
        Ok(RadialGrid { r_max, n_points })
    }

    /// Grid with spacing `h` reaching at least `r_max`.
    pub fn with_spacing(r_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let cells = (r_max / h - 1e-9).ceil().max(2.0) as usize;
        RadialGrid::new(cells as f64 * h, cells + 1)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / (self.n_points - 1) as f64
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n_points).map(move |j| j as f64 * h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "profile has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(RadialProfile { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        RadialProfile { grid, values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolation; `None` outside `[0, r_max]`.
    pub fn interpolate(&self, r: f64) -> Option<f64> {
        interpolate_uniform(&self.values, self.grid.spacing(), r)
    }

    /// `a·self + b·other`, node-wise.
    pub fn combine(&self, a: f64, other: &RadialProfile, b: f64) -> Result<RadialProfile> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("profiles live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        RadialProfile::new(self.grid, values)
    }

    /// Largest radius at which `|value| > tol`, or 0 for a profile below `tol`.
    pub fn support_radius(&self, tol: f64) -> f64 {
        self.values.iter().rposition(|v| v.abs() > tol).map(|j| self.grid.r(j)).unwrap_or(0.0)
    }

    /// Two-column CSV with header `r,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,value\n");
        for (r, v) in self.grid.nodes().zip(&self.values) {
            let _ = writeln!(out, "{r},{v}");
        }
        out
    }
}

pub(crate) fn interpolate_uniform(values: &[f64], h: f64, r: f64) -> Option<f64> {
    let n = values.len();
    let x = r / h;
    if !(x >= -1e-12) || x > (n - 1) as f64 + 1e-9 {
        return None;
    }
    let x = x.clamp(0.0, (n - 1) as f64);
    let j = (x.floor() as usize).min(n - 2);
    let frac = x - j as f64;
    Some(values[j] * (1.0 - frac) + values[j + 1] * frac)
}

/// Node-wise evaluation of `f` on `grid`.
pub fn sample_function<F: Fn(f64) -> f64>(f: F, grid: RadialGrid) -> Result<RadialProfile> {
    let values: Vec<f64> = grid.nodes().map(f).collect();
    RadialProfile::new(grid, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Second-order finite-difference derivative: centered in the interior,
/// one-sided (still second order) at both ends.
pub fn radial_derivative(p: &RadialProfile, order: DerivativeOrder) -> Result<RadialProfile> {
    let n = p.grid.len();
    let h = p.grid.spacing();
    let f = &p.values;
    let values = match order {
        DerivativeOrder::First => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
            for j in 1..n - 1 {
                d[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
            }
            d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
            d
        }
        DerivativeOrder::Second => {
            if n < 5 {
                return Err(Error::InvalidGrid(format!("second derivative needs at least 5 points, got {n}")));
            }
            let h2 = h * h;
            let mut d = vec![0.0; n];
            d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
            for j in 1..n - 1 {
                d[j] = (f[j + 1] - 2.0 * f[j] + f[j - 1]) / h2;
            }
            d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
            d
        }
    };
    RadialProfile::new(p.grid, values)
}

/// Squared radial L² norm `∫₀^{r_max} f(r)² 4πr² dr` (composite trapezoid).
///
/// The caller is responsible for the profile having decayed by `r_max`.
pub fn weighted_l2(p: &RadialProfile) -> f64 {
    let h = p.grid.spacing();
    let n = p.values.len();
    let mut sum = 0.0;
    for (j, v) in p.values.iter().enumerate() {
        let r = j as f64 * h;
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        sum += w * v * v * r * r;
    }
    4.0 * PI * h * sum
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Represents {
    /// The solution `u` itself.
    U,
    /// The rescaled unknown `v = r·u` of the 1+1 reduction.
    VEqualsRTimesU,
}

/// Time slices of a radial field on a rectangular `(t, r)` lattice.
///
/// Slices are stored every `slice_dt` in time starting at `t_start`; the
/// scheme that produced them stepped with `step_dt ≤ h`. `rates`, when
/// present, holds `∂ₜ` of the stored quantity on the same lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimeField {
    grid: RadialGrid,
    t_start: f64,
    slice_dt: f64,
    step_dt: f64,
    n_slices: usize,
    values: Vec<f64>,
    rates: Option<Vec<f64>>,
    represents: Represents,
    last_valid: Option<usize>,
}

impl SpacetimeField {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: RadialGrid,
        t_start: f64,
        slice_dt: f64,
        step_dt: f64,
        values: Vec<f64>,
        rates: Option<Vec<f64>>,
        represents: Represents,
        last_valid: Option<usize>,
    ) -> Result<Self> {
        let h = grid.spacing();
        if !(step_dt > 0.0) || !(slice_dt > 0.0) {
            return Err(Error::InvalidArgument("time steps must be positive".into()));
        }
        if step_dt / h > 1.0 + 1e-12 {
            return Err(Error::Cfl { ratio: step_dt / h });
        }
        if !values.len().is_multiple_of(grid.len()) {
            return Err(Error::InvalidGrid("field values are not a whole number of slices".into()));
        }
        let n_slices = values.len() / grid.len();
        if let Some(r) = &rates {
            if r.len() != values.len() {
                return Err(Error::InvalidGrid("rates and values differ in length".into()));
            }
        }
        let checked = last_valid.map(|k| (k + 1).min(n_slices)).unwrap_or(n_slices) * grid.len();
        if let Some((index, &value)) = values[..checked].iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(SpacetimeField { grid, t_start, slice_dt, step_dt, n_slices, values, rates, represents, last_valid })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn t_end(&self) -> f64 {
        self.time(self.n_slices.saturating_sub(1))
    }
    pub fn slice_dt(&self) -> f64 {
        self.slice_dt
    }
    pub fn step_dt(&self) -> f64 {
        self.step_dt
    }
    pub fn n_slices(&self) -> usize {
        self.n_slices
    }
    pub fn represents(&self) -> Represents {
        self.represents
    }
    /// Index of the last trustworthy slice when a run ended in blow-up.
    pub fn last_valid(&self) -> Option<usize> {
        self.last_valid
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.slice_dt
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_slices).map(|k| self.time(k)).collect()
    }
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }
    pub fn rate_slice(&self, k: usize) -> Option<&[f64]> {
        let n = self.grid.len();
        self.rates.as_ref().map(|r| &r[k * n..(k + 1) * n])
    }
    pub fn has_rates(&self) -> bool {
        self.rates.is_some()
    }

    pub fn profile(&self, k: usize) -> RadialProfile {
        RadialProfile { grid: self.grid, values: self.slice(k).to_vec() }
    }

    pub fn rate_profile(&self, k: usize) -> Option<RadialProfile> {
        self.rate_slice(k).map(|v| RadialProfile { grid: self.grid, values: v.to_vec() })
    }

    /// Nearest stored slice index for time `t`, if within range.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.t_start) / self.slice_dt;
        let k = x.round();
        if k < -1e-9 || k as usize >= self.n_slices || (x - k).abs() > 1e-6 {
            return None;
        }
        Some(k as usize)
    }

    /// Bilinear interpolation of the stored values at `(t, r)`.
    pub fn value_at(&self, t: f64, r: f64) -> Option<f64> {
        self.bilinear(&self.values, t, r)
    }

    /// Bilinear interpolation of the stored rates at `(t, r)`.
    pub fn rate_at(&self, t: f64, r: f64) -> Option<f64> {
        self.rates.as_ref().and_then(|rates| self.bilinear(rates, t, r))
    }

    /// Number of slices that can be trusted.
    pub fn valid_slices(&self) -> usize {
        self.last_valid.map(|k| (k + 1).min(self.n_slices)).unwrap_or(self.n_slices)
    }

    fn bilinear(&self, data: &[f64], t: f64, r: f64) -> Option<f64> {
        let x = (t - self.t_start) / self.slice_dt;
        let last = self.valid_slices().checked_sub(1)?;
        if x < -1e-9 || x > last as f64 + 1e-9 {
            return None;
        }
        let x = x.clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let frac = if last == 0 { 0.0 } else { x - k as f64 };
        let n = self.grid.len();
        let h = self.grid.spacing();
        let a = interpolate_uniform(&data[k * n..(k + 1) * n], h, r)?;
        if frac == 0.0 {
            return Some(a);
        }
        let b = interpolate_uniform(&data[(k + 1) * n..(k + 2) * n], h, r)?;
        Some(a * (1.0 - frac) + b * frac)
    }

    /// Long-format CSV `t,r,value`, keeping every `every`-th slice and node.
    pub fn to_csv(&self, every: usize) -> String {
        let every = every.max(1);
        let mut out = String::from("t,r,value\n");
        for k in (0..self.valid_slices()).step_by(every) {
            let t = self.time(k);
            for (j, v) in self.slice(k).iter().enumerate().step_by(every) {
                let _ = writeln!(out, "{t},{},{v}", self.grid.r(j));
            }
        }
        out
    }
}
