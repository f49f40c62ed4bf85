use crate::error::{Error, Result};
use crate::radial::{
    radial_derivative, weighted_l2, DerivativeOrder, RadialGrid, RadialProfile, Represents, SpacetimeField,
};

/// `u = v/r` with the even extrapolation `u(0) = (4u(h) − u(2h))/3`.
fn divide_by_r(grid: &RadialGrid, v: &[f64]) -> Vec<f64> {
    let h = grid.spacing();
    let mut u: Vec<f64> = v.iter().enumerate().map(|(j, x)| if j == 0 { 0.0 } else { x / (j as f64 * h) }).collect();
    u[0] = (4.0 * u[1] - u[2]) / 3.0;
    u
}

fn to_u(grid: &RadialGrid, data: &[f64], represents: Represents) -> Vec<f64> {
    match represents {
        Represents::U => data.to_vec(),
        Represents::VEqualsRTimesU => divide_by_r(grid, data),
    }
}

/// `4π∫(uₜ² + u_r²)r² dr` from values and rates on one time level.
pub(crate) fn energy_of(grid: &RadialGrid, values: &[f64], rates: &[f64], represents: Represents) -> Result<f64> {
    let u = RadialProfile::new(*grid, to_u(grid, values, represents))?;
    let ut = RadialProfile::new(*grid, to_u(grid, rates, represents))?;
    let ur = radial_derivative(&u, DerivativeOrder::First)?;
    Ok(weighted_l2(&ut) + weighted_l2(&ur))
}

/// `∂ₜu` on stored slice `k`.
pub fn velocity_profile(field: &SpacetimeField, k: usize) -> Result<RadialProfile> {
    let rates =
        field.rate_slice(k).ok_or_else(|| Error::InvalidArgument("field carries no time derivatives".into()))?;
    RadialProfile::new(*field.grid(), to_u(field.grid(), rates, field.represents()))
}

/// Energy `E(t) = 4π∫(uₜ² + u_r²)r² dr` on stored slice `k`.
pub fn energy(field: &SpacetimeField, k: usize) -> Result<f64> {
    if k >= field.valid_slices() {
        return Err(Error::InvalidArgument(format!("slice {k} is outside the valid range")));
    }
    let rates =
        field.rate_slice(k).ok_or_else(|| Error::InvalidArgument("field carries no time derivatives".into()))?;
    energy_of(field.grid(), field.slice(k), rates, field.represents())
}

/// [`energy`] at the stored slice for time `t`.
pub fn energy_at(field: &SpacetimeField, t: f64) -> Result<f64> {
    let k = field.slice_index(t).ok_or_else(|| Error::InvalidArgument(format!("no stored slice at t = {t}")))?;
    energy(field, k)
}

/// `sup_{0 ≤ t ≤ t_hi} ‖∂(a − b)(t)‖_{L²}` over the slices both fields store.
pub fn cauchy_gap(a: &SpacetimeField, b: &SpacetimeField, t_hi: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("fields live on different radial grids".into()));
    }
    if (a.slice_dt() - b.slice_dt()).abs() > 1e-12 * a.slice_dt() || a.represents() != b.represents() {
        return Err(Error::GridMismatch("fields use different time lattices".into()));
    }
    let mut gap: f64 = 0.0;
    let mut compared = 0;
    for k in 0..a.valid_slices() {
        let t = a.time(k);
        if t < -1e-9 || t > t_hi + 1e-9 {
            continue;
        }
        let kb = b
            .slice_index(t)
            .filter(|kb| *kb < b.valid_slices())
            .ok_or_else(|| Error::GridMismatch(format!("second field has no slice at t = {t}")))?;
        let (ra, rb) = match (a.rate_slice(k), b.rate_slice(kb)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::InvalidArgument("fields carry no time derivatives".into())),
        };
        let dv: Vec<f64> = a.slice(k).iter().zip(b.slice(kb)).map(|(x, y)| x - y).collect();
        let dr: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| x - y).collect();
        gap = gap.max(energy_of(a.grid(), &dv, &dr, a.represents())?.sqrt());
        compared += 1;
    }
    if compared == 0 {
        return Err(Error::GridMismatch(format!("no common slices in [0, {t_hi}]")));
    }
    Ok(gap)
}
