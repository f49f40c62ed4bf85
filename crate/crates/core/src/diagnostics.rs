//! Blow-up functionals evaluated on computed solutions.
//!
//! Both functionals integrate along an outgoing characteristic
//! `t = ρ − q`. For radial fields and `x₀ = 0` the spherical means reduce to
//! point values; other centers average the radial field over spheres.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::SignCondition;
use crate::output::{csv_table, extended_f64};
use crate::radial::{Represents, SpacetimeField};
use crate::spherical::{spherical_mean, SphereQuadrature};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    CharacteristicBeta,
    MeanRateN,
}

/// Cumulative integral along a characteristic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalTrace {
    pub q: f64,
    pub r: Vec<f64>,
    pub value: Vec<f64>,
    /// The integrand at each sample, i.e. the exact derivative of `value`.
    pub integrand: Vec<f64>,
    /// The characteristic left the stored field before the last requested radius.
    pub truncated: bool,
}

impl FunctionalTrace {
    pub fn to_csv(&self, column: &str) -> String {
        csv_table(&["r", column], self.r.iter().zip(&self.value).map(|(r, v)| vec![*r, *v]))
    }

    /// Linear interpolation of the functional at `r`.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        let k = self.r.iter().position(|x| *x >= r)?;
        if k == 0 {
            return (self.r[0] == r).then_some(self.value[0]);
        }
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let w = (r - r0) / (r1 - r0);
        Some(self.value[k - 1] * (1.0 - w) + self.value[k] * w)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.value.windows(2).all(|w| w[1] >= w[0])
    }
}

fn point_value(field: &SpacetimeField, data_at: impl Fn(f64, f64) -> Option<f64>, t: f64, r: f64) -> Option<f64> {
    let x = data_at(t, r)?;
    Some(match field.represents() {
        Represents::U => x,
        Represents::VEqualsRTimesU => {
            if r == 0.0 {
                // u(t, 0) = ∂_r v(t, 0)
                let h = field.grid().spacing();
                data_at(t, h)? / h
            } else {
                x / r
            }
        }
    })
}

/// Trapezoid accumulation of `integrand(ρ)` over `rho`, stopping at the
/// first sample the integrand cannot be evaluated on.
fn accumulate(q: f64, rho: &[f64], integrand: impl Fn(f64) -> Option<f64>) -> FunctionalTrace {
    let mut trace = FunctionalTrace { q, r: Vec::new(), value: Vec::new(), integrand: Vec::new(), truncated: false };
    let mut acc = 0.0;
    for &p in rho {
        let Some(f) = integrand(p) else {
            trace.truncated = true;
            break;
        };
        if let (Some(&prev_r), Some(&prev_f)) = (trace.r.last(), trace.integrand.last()) {
            acc += 0.5 * (p - prev_r) * (f + prev_f);
        }
        trace.r.push(p);
        trace.value.push(acc);
        trace.integrand.push(f);
    }
    trace
}

fn check_grid(rho: &[f64], lower: f64) -> Result<Vec<f64>> {
    if rho.is_empty() {
        return Err(Error::EmptySearch("radius grid is empty".into()));
    }
    if rho.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radius grid must be increasing".into()));
    }
    if rho[0] < lower - 1e-12 {
        return Err(Error::InvalidArgument(format!("radius grid starts at {} below the lower limit {lower}", rho[0])));
    }
    let mut out = Vec::with_capacity(rho.len() + 1);
    if rho[0] > lower + 1e-12 {
        out.push(lower);
    }
    out.extend_from_slice(rho);
    Ok(out)
}

/// `β(ρ) = ∫_{−q}^{ρ} σ·u(σ − q, σ)² dσ` for `q < 0`, radial field, center 0.
pub fn beta_functional(field: &SpacetimeField, q: f64, rho_grid: &[f64]) -> Result<FunctionalTrace> {
    if !(q < 0.0) {
        return Err(Error::InvalidArgument(format!("β needs an interior characteristic q < 0, got {q}")));
    }
    let rho = check_grid(rho_grid, -q)?;
    Ok(accumulate(q, &rho, |s| {
        let u = point_value(field, |t, r| field.value_at(t, r), s - q, s)?;
        Some(s * u * u)
    }))
}

/// `N(r) = ∫_q^r ρ·(M_{x₀}[∂ₜu(ρ − q)](ρ))² dρ`, for `q ≥ 0`.
pub fn n_functional(
    field: &SpacetimeField,
    x0: &Point,
    q: f64,
    r_grid: &[f64],
    quad: &SphereQuadrature,
) -> Result<FunctionalTrace> {
    if !field.has_rates() {
        return Err(Error::InvalidArgument("N needs a field with stored time derivatives".into()));
    }
    let dtu = |t: f64, r: f64| point_value(field, |t, r| field.rate_at(t, r), t, r);
    let centered = x0.iter().all(|c| *c == 0.0);
    n_functional_with(
        |t, rho| {
            if centered {
                return dtu(t, rho);
            }
            let outside = std::cell::Cell::new(false);
            let m = spherical_mean(
                |x| {
                    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    dtu(t, r).unwrap_or_else(|| {
                        outside.set(true);
                        0.0
                    })
                },
                x0,
                rho,
                quad,
            )
            .ok()?;
            (!outside.get()).then_some(m)
        },
        q,
        r_grid,
    )
}

/// [`n_functional`] for an arbitrary mean `M[∂ₜu(t)](ρ)`; `None` marks
/// points outside the available data.
pub fn n_functional_with(
    mean_dtu: impl Fn(f64, f64) -> Option<f64>,
    q: f64,
    r_grid: &[f64],
) -> Result<FunctionalTrace> {
    if !(q >= 0.0) {
        return Err(Error::InvalidArgument(format!("N needs q ≥ 0, got {q}")));
    }
    let rho = check_grid(r_grid, q)?;
    Ok(accumulate(q, &rho, |p| {
        let m = mean_dtu(p - q, p)?;
        Some(p * m * m)
    }))
}

/// `r* = r₀·exp(4/N(r₀))`.
pub fn blowup_radius_bound(n_r0: f64, r0: f64) -> Result<f64> {
    if !(n_r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("no certificate: N(r0) = {n_r0} is not positive")));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("r0 must be positive, got {r0}")));
    }
    Ok(r0 * (4.0 / n_r0).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    /// `(r, N′(r) − N²/(4r))` at interior samples.
    pub margins: Vec<[f64; 2]>,
    pub min_margin: f64,
    pub r_at_min: f64,
}

/// Centered-difference `N′` minus `N²/(4r)` at interior samples.
pub fn ode_inequality_check(r: &[f64], n: &[f64]) -> Result<MarginReport> {
    if r.len() != n.len() || r.len() < 5 {
        return Err(Error::InsufficientRange(format!("need at least 5 paired samples, got {}", r.len().min(n.len()))));
    }
    let mut margins = Vec::with_capacity(r.len() - 2);
    for k in 1..r.len() - 1 {
        let dn = (n[k + 1] - n[k - 1]) / (r[k + 1] - r[k - 1]);
        margins.push([r[k], dn - n[k] * n[k] / (4.0 * r[k])]);
    }
    let (r_at_min, min_margin) =
        margins
            .iter()
            .map(|m| (m[0], m[1]))
            .fold((f64::NAN, f64::INFINITY), |best, m| if m.1 < best.1 { m } else { best });
    Ok(MarginReport { margins, min_margin, r_at_min })
}

/// Margins of `β′ ≥ β²/(4(R − q)²ρ)`, using the exact integrand for `β′`.
pub fn beta_inequality_check(trace: &FunctionalTrace, support_radius: f64) -> Result<MarginReport> {
    if trace.r.len() < 2 {
        return Err(Error::InsufficientRange("β trace has fewer than 2 samples".into()));
    }
    let k = 4.0 * (support_radius - trace.q).powi(2);
    let margins: Vec<[f64; 2]> =
        trace.r.iter().zip(&trace.value).zip(&trace.integrand).map(|((r, b), db)| [*r, db - b * b / (k * r)]).collect();
    let (r_at_min, min_margin) =
        margins
            .iter()
            .map(|m| (m[0], m[1]))
            .fold((f64::NAN, f64::INFINITY), |best, m| if m.1 < best.1 { m } else { best });
    Ok(MarginReport { margins, min_margin, r_at_min })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupCertificate {
    pub functional: Functional,
    pub sign_condition: Option<SignCondition>,
    pub x0: Point,
    pub q: f64,
    pub r0: f64,
    pub value_at_r0: f64,
    #[serde(serialize_with = "extended_f64")]
    pub r_star: f64,
    /// Minimum of `N′ − N²/(4r)` over samples with `r ≥ r₀`.
    pub ode_inequality_margin: f64,
    pub truncated: bool,
}

/// Builds the `N`-functional certificate from a trace; `r₀` must be a
/// sampled radius.
pub fn n_certificate(
    trace: &FunctionalTrace,
    x0: Point,
    r0: f64,
    sign_condition: Option<SignCondition>,
) -> Result<BlowupCertificate> {
    let value_at_r0 =
        trace.value_at(r0).ok_or_else(|| Error::InsufficientRange(format!("trace does not reach r0 = {r0}")))?;
    let r_star = blowup_radius_bound(value_at_r0, r0)?;
    let start = trace.r.iter().position(|r| *r >= r0).unwrap_or(0).saturating_sub(1);
    let margin = if trace.r.len() - start >= 5 {
        ode_inequality_check(&trace.r[start..], &trace.value[start..])?.min_margin
    } else {
        f64::NAN
    };
    Ok(BlowupCertificate {
        functional: Functional::MeanRateN,
        sign_condition,
        x0,
        q: trace.q,
        r0,
        value_at_r0,
        r_star,
        ode_inequality_margin: margin,
        truncated: trace.truncated,
    })
}

/// [`n_certificate`] at the sampled `r₀ > q` with the smallest `r*`.
pub fn best_n_certificate(
    trace: &FunctionalTrace,
    x0: Point,
    sign_condition: Option<SignCondition>,
) -> Result<BlowupCertificate> {
    let r0 = trace
        .r
        .iter()
        .zip(&trace.value)
        .filter(|(r, n)| **r > trace.q && **n > 0.0)
        .map(|(r, n)| (*r, r * (4.0 / n).exp()))
        .fold(None, |best: Option<(f64, f64)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .map(|(r, _)| r)
        .ok_or_else(|| Error::InvalidArgument("no certificate: N vanishes on every sampled radius".into()))?;
    n_certificate(trace, x0, r0, sign_condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::linspace;
    use crate::radial::RadialGrid;

    fn zero_field() -> SpacetimeField {
        let g = RadialGrid::with_spacing(20.0, 0.1).unwrap();
        let n = g.len();
        SpacetimeField::new(
            g,
            0.0,
            0.1,
            0.1,
            vec![0.0; 101 * n],
            Some(vec![0.0; 101 * n]),
            Represents::VEqualsRTimesU,
            None,
        )
        .unwrap()
    }

    fn scaled_field(lambda: f64) -> SpacetimeField {
        let g = RadialGrid::with_spacing(20.0, 0.1).unwrap();
        let mut v = Vec::new();
        let mut rt = Vec::new();
        for k in 0..101 {
            let t = k as f64 * 0.1;
            for r in g.nodes() {
                v.push(lambda * r * (-(r - t).powi(2)).exp() * (1.0 + 0.1 * t));
                rt.push(lambda * r * (1.0 + (r - t).sin().powi(2)));
            }
        }
        SpacetimeField::new(g, 0.0, 0.1, 0.1, v, Some(rt), Represents::VEqualsRTimesU, None).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_functionals() {
        let f = zero_field();
        let quad = SphereQuadrature::new(8, 16);
        let beta = beta_functional(&f, -1.0, &linspace(1.0, 5.0, 41)).unwrap();
        assert!(beta.value.iter().all(|v| *v == 0.0));
        let n = n_functional(&f, &[0.0; 3], 1.0, &linspace(1.0, 5.0, 41), &quad).unwrap();
        assert!(n.value.iter().all(|v| *v == 0.0));
        let m = ode_inequality_check(&n.r, &n.value).unwrap();
        assert_eq!(m.min_margin, 0.0);
    }

    #[test]
    fn functionals_are_monotone_and_quadratic() {
        let (a, b) = (scaled_field(1.0), scaled_field(3.0));
        let quad = SphereQuadrature::new(8, 16);
        let rho = linspace(2.0, 7.0, 51);
        let ba = beta_functional(&a, -2.0, &rho).unwrap();
        let bb = beta_functional(&b, -2.0, &rho).unwrap();
        assert!(ba.is_nondecreasing() && !ba.truncated);
        let r = linspace(0.5, 9.0, 86);
        let na = n_functional(&a, &[0.0; 3], 0.5, &r, &quad).unwrap();
        let nb = n_functional(&b, &[0.0; 3], 0.5, &r, &quad).unwrap();
        assert!(na.is_nondecreasing());
        for (x, y) in ba.value.iter().zip(&bb.value).chain(na.value.iter().zip(&nb.value)) {
            assert!((y - 9.0 * x).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn characteristic_leaving_the_field_is_flagged() {
        let f = scaled_field(1.0);
        let beta = beta_functional(&f, -1.0, &linspace(1.0, 15.0, 141)).unwrap();
        assert!(beta.truncated);
        assert!(*beta.r.last().unwrap() <= 11.0 + 1e-9);
    }

    #[test]
    fn off_center_mean_of_radial_field() {
        let f = scaled_field(1.0);
        let quad = SphereQuadrature::new(16, 32);
        let r = linspace(1.0, 3.0, 21);
        let off = n_functional(&f, &[0.3, 0.0, 0.0], 1.0, &r, &quad).unwrap();
        let center = n_functional(&f, &[0.0; 3], 1.0, &r, &quad).unwrap();
        assert!(off.value.last().unwrap() > &0.0);
        assert!((off.value.last().unwrap() - center.value.last().unwrap()).abs() < 0.2 * center.value.last().unwrap());
    }

    #[test]
    fn best_certificate_minimizes_the_radius() {
        let a = 1.0;
        let r = linspace(0.0, 0.99, 100);
        let trace = n_functional_with(|t, _| Some(a / (1.0 - a * t)), 0.0, &r).unwrap();
        let best = best_n_certificate(&trace, [0.0; 3], None).unwrap();
        for (ri, ni) in trace.r.iter().zip(&trace.value).skip(1) {
            assert!(best.r_star <= ri * (4.0 / ni).exp() * (1.0 + 1e-12));
        }
        assert!(best.r_star >= 1.0);
        let zero = n_functional_with(|_, _| Some(0.0), 0.0, &r).unwrap();
        assert!(best_n_certificate(&zero, [0.0; 3], None).is_err());
    }

    #[test]
    fn radius_bound_examples() {
        assert!((blowup_radius_bound(4.0, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!((blowup_radius_bound(1e12, 2.0).unwrap() - 2.0).abs() < 1e-10);
        assert!(blowup_radius_bound(0.0, 1.0).is_err());
        assert!(blowup_radius_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn saturating_solution_has_zero_margin() {
        // N = 4/log(r*/r) solves N′ = N²/(4r) with equality
        let r_star = 10.0;
        let r = linspace(1.0, 8.0, 701);
        let n: Vec<f64> = r.iter().map(|x| 4.0 / (r_star / x).ln()).collect();
        let m = ode_inequality_check(&r, &n).unwrap();
        assert!(m.min_margin.abs() < 1e-3, "{m:?}");
        assert!(m.margins.iter().all(|x| x[1].abs() < 1e-3));
        assert!(ode_inequality_check(&r[..4], &n[..4]).is_err());
    }

    #[test]
    fn certificate_is_sound_on_the_ode_model() {
        // u = −ln(1 − a t): the mean along t = ρ − q diverges at ρ = q + 1/a
        for (a, q) in [(1.0, 0.0), (0.5, 1.0), (2.0, 3.0), (0.25, 0.5)] {
            let blow = q + 1.0 / a;
            let r = linspace(q, q + 0.999 / a, 2000);
            let trace = n_functional_with(|t, _| (t < 1.0 / a).then(|| a / (1.0 - a * t)), q, &r).unwrap();
            for r0 in [q + 0.1 / a, q + 0.5 / a, q + 0.9 / a] {
                let k = trace.r.iter().position(|x| *x >= r0).unwrap();
                let cert = n_certificate(&trace, [0.0; 3], trace.r[k], None).unwrap();
                assert!(cert.r_star >= blow, "a={a} q={q} r0={r0}: r*={} < {blow}", cert.r_star);
            }
        }
    }
}
