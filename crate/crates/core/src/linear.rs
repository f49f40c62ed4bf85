//! Homogeneous wave equation: Kirchhoff's formula, the d'Alembert formula
//! for spherical means, and the three-way sign classifier.
//!
//! With `M₀ = M_{x₀}[u₀]` and `M₁ = M_{x₀}[u₁]` the linear solution is
//!
//! ```text
//!     u_lin(t, x₀) = ∂_r(r·M₀)(|t|) + t·M₁(|t|)
//! ```
//!
//! Means are even in the radius, so `r·M(|r|)` is an odd function and the
//! radial derivative is taken by a centered stencil that may straddle 0.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::spherical::{spherical_mean, SphereQuadrature};
use crate::Point;

/// Half-width of the centered stencil for `∂_r(r·M₀)`.
pub const RADIAL_FD_STEP: f64 = 2e-3;
/// Target spacing of the trapezoid rule inside [`dalembert_mean`].
pub const DALEMBERT_STEP: f64 = 5e-3;

/// Linear evolution of a Cauchy pair `(u₀, u₁)`.
pub struct LinearWave<'q, F0, F1> {
    u0: F0,
    u1: F1,
    quad: &'q SphereQuadrature,
}

impl<'q, F0, F1> LinearWave<'q, F0, F1>
where
    F0: Fn(&Point) -> f64 + Sync,
    F1: Fn(&Point) -> f64 + Sync,
{
    pub fn new(u0: F0, u1: F1, quad: &'q SphereQuadrature) -> Self {
        LinearWave { u0, u1, quad }
    }

    fn mean0(&self, x0: &Point, r: f64) -> Result<f64> {
        spherical_mean(&self.u0, x0, r.abs(), self.quad)
    }

    fn mean1(&self, x0: &Point, r: f64) -> Result<f64> {
        spherical_mean(&self.u1, x0, r.abs(), self.quad)
    }

    /// `ρ·M₀(|ρ|)`, the odd extension.
    fn radial_moment0(&self, x0: &Point, rho: f64) -> Result<f64> {
        Ok(rho * self.mean0(x0, rho)?)
    }

    /// `∂_r(r·M₀)(ρ)` by Richardson-extrapolated central differences.
    pub fn radial_flux0(&self, x0: &Point, rho: f64) -> Result<f64> {
        let h = RADIAL_FD_STEP;
        let d = |k: f64| -> Result<f64> {
            Ok((self.radial_moment0(x0, rho + k)? - self.radial_moment0(x0, rho - k)?) / (2.0 * k))
        };
        let coarse = d(h)?;
        let fine = d(0.5 * h)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// `(u_lin(−τ, x₀), u_lin(τ, x₀))` for `τ ≥ 0`, sharing the means.
    pub fn eval_pair(&self, tau: f64, x0: &Point) -> Result<(f64, f64)> {
        let tau = tau.abs();
        let flux = self.radial_flux0(x0, tau)?;
        let vel = tau * self.mean1(x0, tau)?;
        Ok((flux - vel, flux + vel))
    }

    /// Kirchhoff's formula at `(t, x₀)`; negative `t` is handled through
    /// `u₁ → −u₁`.
    pub fn eval(&self, t: f64, x0: &Point) -> Result<f64> {
        let (past, future) = self.eval_pair(t, x0)?;
        Ok(if t < 0.0 { past } else { future })
    }

    /// `M_{x₀}[u_lin(t)](r)` by the d'Alembert formula for means.
    pub fn dalembert_mean(&self, x0: &Point, t: f64, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "d'Alembert mean needs r > 0 (got {r}); use the Kirchhoff value at the center"
            )));
        }
        let boundary = self.radial_moment0(x0, r + t)? + self.radial_moment0(x0, r - t)?;
        let integral = if t == 0.0 {
            0.0
        } else {
            // trapezoid on n and 2n panels, one Richardson step
            let n = ((2.0 * t.abs() / DALEMBERT_STEP).ceil() as usize).max(16);
            let (a, b) = (r - t, r + t);
            let h = (b - a) / (2 * n) as f64;
            let vals = (0..=2 * n)
                .map(|k| {
                    let rho = a + k as f64 * h;
                    Ok(rho * self.mean1(x0, rho)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            let trap = |stride: usize| {
                let hs = h * stride as f64;
                let inner: f64 = vals.iter().step_by(stride).skip(1).take(2 * n / stride - 1).sum();
                hs * (0.5 * (vals[0] + vals[2 * n]) + inner)
            };
            let coarse = trap(2);
            let fine = trap(1);
            (4.0 * fine - coarse) / 3.0
        };
        Ok((boundary + integral) / (2.0 * r))
    }

    /// `M_{x₀}[∂ₜu_lin(t)](r) = (u_lin(r + t, x₀) − u_lin(−(r − t), x₀))/(2r)`.
    pub fn dt_mean_boundary_identity(&self, x0: &Point, t: f64, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("boundary identity needs r > 0, got {r}")));
        }
        Ok((self.eval(r + t, x0)? - self.eval(-(r - t), x0)?) / (2.0 * r))
    }
}

pub fn kirchhoff_eval<F0, F1>(u0: F0, u1: F1, t: f64, x0: &Point, quad: &SphereQuadrature) -> Result<f64>
where
    F0: Fn(&Point) -> f64 + Sync,
    F1: Fn(&Point) -> f64 + Sync,
{
    LinearWave::new(u0, u1, quad).eval(t, x0)
}

pub fn dalembert_mean<F0, F1>(u0: F0, u1: F1, x0: &Point, t: f64, r: f64, quad: &SphereQuadrature) -> Result<f64>
where
    F0: Fn(&Point) -> f64 + Sync,
    F1: Fn(&Point) -> f64 + Sync,
{
    LinearWave::new(u0, u1, quad).dalembert_mean(x0, t, r)
}

pub fn dt_mean_boundary_identity<F0, F1>(
    u0: F0,
    u1: F1,
    x0: &Point,
    t: f64,
    r: f64,
    quad: &SphereQuadrature,
) -> Result<f64>
where
    F0: Fn(&Point) -> f64 + Sync,
    F1: Fn(&Point) -> f64 + Sync,
{
    LinearWave::new(u0, u1, quad).dt_mean_boundary_identity(x0, t, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCondition {
    /// Some mean of `∂ₜu_lin` along an outgoing characteristic stays positive.
    ForwardPositive,
    /// The time-reversed statement: blow-up candidate in negative time.
    BackwardNegative,
    /// `u_lin ≥ 0` on everything that was sampled.
    NonnegativeEverywhere,
    /// The finite search could not certify any of the above.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignWitness {
    pub x0: Point,
    pub q: f64,
    pub r0: f64,
    /// `|u_lin(∓q, x₀)|`; the mean of `∂ₜu_lin` exceeds `margin/(4r)` for `r ≥ r₀`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignSearchMeta {
    pub n_x0: usize,
    pub n_q: usize,
    pub q_max: f64,
    pub n_r: usize,
    pub r_max: f64,
    pub margin_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignConditionReport {
    pub condition: SignCondition,
    pub witness: Option<SignWitness>,
    /// Best margin found for the forward condition, if any.
    pub forward_margin: Option<f64>,
    /// Best margin found for the backward condition, if any.
    pub backward_margin: Option<f64>,
    /// Smallest sampled value of `u_lin`.
    pub min_sampled_value: f64,
    /// Largest of `|∂_r(rM₀)|`, `|r·M₁|` at `r_max` over the candidates.
    pub decay_residual: f64,
    pub decay_verified: bool,
    /// The `r ≥ r₀` quantifier is only checked on the sampled radii up to `r_max`.
    pub note: String,
    pub search: SignSearchMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignSearch {
    pub x0_candidates: Vec<Point>,
    pub q_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub margin_tol: f64,
    /// Relative tolerance for the decay check at `r_max`.
    pub decay_tol: f64,
}

impl Default for SignSearch {
    /// Origin plus the six axis points at distances 1 and 2; 64 values of
    /// `q` in `[0, 4]`; 128 radii up to 16.
    fn default() -> Self {
        let mut x0_candidates = vec![[0.0; 3]];
        for d in [1.0, 2.0] {
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut p = [0.0; 3];
                    p[axis] = sign * d;
                    x0_candidates.push(p);
                }
            }
        }
        SignSearch {
            x0_candidates,
            q_grid: crate::fit::linspace(0.0, 4.0, 64),
            r_grid: crate::fit::linspace(0.0, 16.0, 128),
            margin_tol: 1e-9,
            decay_tol: 1e-2,
        }
    }
}

struct Candidate {
    x0: Point,
    q: f64,
    past: f64,
    future: f64,
}

/// Searches the lattice for a witness of one of the sign conditions.
pub fn classify_sign_condition<F0, F1>(
    u0: F0,
    u1: F1,
    search: &SignSearch,
    quad: &SphereQuadrature,
    exec: Exec,
) -> Result<SignConditionReport>
where
    F0: Fn(&Point) -> f64 + Sync,
    F1: Fn(&Point) -> f64 + Sync,
{
    if search.x0_candidates.is_empty() || search.q_grid.is_empty() || search.r_grid.is_empty() {
        return Err(Error::EmptySearch("need at least one x₀, one q and one radius".into()));
    }
    if search.q_grid.iter().any(|q| *q < 0.0) {
        return Err(Error::InvalidArgument("q grid must be nonnegative".into()));
    }
    let wave = LinearWave::new(&u0, &u1, quad);
    let r_max = search.r_grid.iter().cloned().fold(0.0, f64::max);

    let per_x0 = par::map_range_coarse(exec, search.x0_candidates.len(), |i| -> Result<(Vec<Candidate>, f64)> {
        let x0 = search.x0_candidates[i];
        let mut out = Vec::with_capacity(search.q_grid.len());
        for &q in &search.q_grid {
            let (past, future) = wave.eval_pair(q, &x0)?;
            out.push(Candidate { x0, q, past, future });
        }
        let flux = wave.radial_flux0(&x0, r_max)?.abs();
        let vel = (r_max * spherical_mean(&u1, &x0, r_max, quad)?).abs();
        Ok((out, flux.max(vel)))
    });

    let mut candidates = Vec::new();
    let mut decay_residual: f64 = 0.0;
    for item in per_x0 {
        let (c, d) = item?;
        candidates.extend(c);
        decay_residual = decay_residual.max(d);
    }

    let scale = candidates.iter().map(|c| c.past.abs().max(c.future.abs())).fold(0.0, f64::max);
    let decay_verified = decay_residual <= search.decay_tol * scale.max(f64::MIN_POSITIVE);
    let min_sampled_value = candidates.iter().map(|c| c.past.min(c.future)).fold(f64::INFINITY, f64::min);

    let best = |key: fn(&Candidate) -> f64| {
        candidates.iter().filter(|c| -key(c) > search.margin_tol).max_by(|a, b| (-key(a)).total_cmp(&-key(b)))
    };
    let forward = best(|c| c.past);
    let backward = best(|c| c.future);

    let meta = SignSearchMeta {
        n_x0: search.x0_candidates.len(),
        n_q: search.q_grid.len(),
        q_max: search.q_grid.iter().cloned().fold(0.0, f64::max),
        n_r: search.r_grid.len(),
        r_max,
        margin_tol: search.margin_tol,
    };
    let mut report = SignConditionReport {
        condition: SignCondition::Inconclusive,
        witness: None,
        forward_margin: forward.map(|c| -c.past),
        backward_margin: backward.map(|c| -c.future),
        min_sampled_value,
        decay_residual,
        decay_verified,
        note: "r ≥ r0 verified on sampled radii only".into(),
        search: meta,
    };
    if !decay_verified {
        report.note = "decay premise not verified at r_max".into();
        return Ok(report);
    }

    let (chosen, condition) = match (forward, backward) {
        (Some(c), _) => (Some(c), SignCondition::ForwardPositive),
        (None, Some(c)) => (Some(c), SignCondition::BackwardNegative),
        (None, None) => (None, SignCondition::NonnegativeEverywhere),
    };
    let Some(c) = chosen else {
        report.condition =
            if min_sampled_value >= -search.margin_tol { condition } else { SignCondition::Inconclusive };
        return Ok(report);
    };

    // r₀: smallest sampled radius from which |u_lin(±(2r − q))| < ½|u_lin(∓q)| holds for every larger sample
    let forward_case = condition == SignCondition::ForwardPositive;
    let anchor = if forward_case { c.past } else { c.future };
    let mut radii: Vec<f64> = search.r_grid.iter().cloned().filter(|r| *r >= c.q).collect();
    radii.sort_by(f64::total_cmp);
    let far = par::map_slice(exec, &radii, |&r| {
        let tau = 2.0 * r - c.q;
        wave.eval(if forward_case { tau } else { -tau }, &c.x0)
    });
    let far = far.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut r0 = None;
    for (r, v) in radii.iter().zip(&far).rev() {
        if v.abs() < 0.5 * anchor.abs() {
            r0 = Some(*r);
        } else {
            break;
        }
    }
    match r0 {
        Some(r0) => {
            report.condition = condition;
            report.witness = Some(SignWitness { x0: c.x0, q: c.q, r0, margin: anchor.abs() });
        }
        None => report.note = "no sampled r0 satisfies the half-bound".into(),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::Datum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(x: &Point) -> f64 {
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    fn inverse_sqrt_solution(t: f64, x: &Point) -> f64 {
        let r = norm(x);
        let g = |s: f64| s / (1.0 + s * s).sqrt();
        (g(r + t) + g(r - t)) / (2.0 * r)
    }

    fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Point {
        let d = rng.gen_range(lo..hi);
        let mu: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - mu * mu).sqrt();
        [d * s * phi.cos(), d * s * phi.sin(), d * mu]
    }

    #[test]
    fn zero_data_gives_zero() {
        let q = SphereQuadrature::new(8, 16);
        let wave = LinearWave::new(|_: &Point| 0.0, |_: &Point| 0.0, &q);
        assert_eq!(wave.eval(1.3, &[0.2, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wave.dalembert_mean(&[0.0; 3], 0.7, 1.0).unwrap(), 0.0);
        assert_eq!(wave.dt_mean_boundary_identity(&[0.0; 3], 0.7, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn kirchhoff_matches_inverse_sqrt_closed_form() {
        let q = SphereQuadrature::default();
        let u0 = Datum::InverseSqrt { a: 1.0 };
        let wave = LinearWave::new(|x: &Point| u0.eval_point(x), |_: &Point| 0.0, &q);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_point(&mut rng, 0.2, 3.0);
            let t = rng.gen_range(-4.0..4.0);
            let v = wave.eval(t, &x).unwrap();
            let exact = inverse_sqrt_solution(t, &x);
            assert!((v - exact).abs() < 1e-6, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn kirchhoff_past_values_for_velocity_bump() {
        let q = SphereQuadrature::default();
        let chi = Datum::bump(1.0, 1.0, 0.0);
        let wave = LinearWave::new(|_: &Point| 0.0, |x: &Point| chi.eval_point(x), &q);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_point(&mut rng, 0.0, 1.5);
            let t = rng.gen_range(0.0..2.0);
            let lhs = wave.eval(-t, &x).unwrap();
            let rhs = -t * spherical_mean(|p| chi.eval_point(p), &x, t, &q).unwrap();
            assert!((lhs - rhs).abs() < 1e-6);
        }
    }

    #[test]
    fn dalembert_at_time_zero_is_mean_of_u0() {
        let q = SphereQuadrature::default();
        let u0 = Datum::Gaussian { a: 1.0, s: 1.0 };
        let f = |x: &Point| u0.eval_point(x);
        let x0 = [0.5, 0.0, 0.0];
        let v = dalembert_mean(f, |_: &Point| 0.3, &x0, 0.0, 1.2, &q).unwrap();
        let m = spherical_mean(f, &x0, 1.2, &q).unwrap();
        assert!((v - m).abs() < 1e-12);
        assert!(dalembert_mean(f, f, &x0, 0.4, 0.0, &q).is_err());
    }

    #[test]
    fn dalembert_matches_mean_of_kirchhoff() {
        // two independent formulas for the same quantity
        let q = SphereQuadrature::default();
        let outer = SphereQuadrature::new(16, 32);
        let u0 = Datum::Gaussian { a: 1.0, s: 0.8 };
        let u1 = Datum::bump(0.7, 1.2, 0.0);
        let wave = LinearWave::new(|x: &Point| u0.eval_point(x), |x: &Point| u1.eval_point(x), &q);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x0 = random_point(&mut rng, 0.0, 1.0);
            let t = rng.gen_range(-1.5..1.5);
            let r = rng.gen_range(0.2..1.5);
            let a = wave.dalembert_mean(&x0, t, r).unwrap();
            let b = spherical_mean(|p| wave.eval(t, p).unwrap(), &x0, r, &outer).unwrap();
            assert!((a - b).abs() < 1e-5, "t={t} r={r}: {a} vs {b}");
        }
    }

    #[test]
    fn boundary_identity_matches_time_derivative_of_dalembert() {
        let q = SphereQuadrature::default();
        let u0 = Datum::Gaussian { a: 0.5, s: 1.0 };
        let u1 = Datum::bump(1.0, 1.5, 0.0);
        let wave = LinearWave::new(|x: &Point| u0.eval_point(x), |x: &Point| u1.eval_point(x), &q);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 1e-3;
        for _ in 0..20 {
            let x0 = random_point(&mut rng, 0.0, 1.0);
            let t = rng.gen_range(-1.0..1.0);
            let r = rng.gen_range(0.3..1.5);
            let fd =
                (wave.dalembert_mean(&x0, t + k, r).unwrap() - wave.dalembert_mean(&x0, t - k, r).unwrap()) / (2.0 * k);
            let id = wave.dt_mean_boundary_identity(&x0, t, r).unwrap();
            assert!((fd - id).abs() < 1e-4, "{fd} vs {id}");
        }
    }

    #[test]
    fn velocity_bump_identity_is_positive_along_outgoing_characteristics() {
        let q = SphereQuadrature::default();
        let chi = Datum::bump(1.0, 1.0, 0.0);
        let wave = LinearWave::new(|_: &Point| 0.0, |x: &Point| chi.eval_point(x), &q);
        let qq = 0.4;
        for r in [0.8, 1.0, 1.5, 2.0, 4.0] {
            let v = wave.dt_mean_boundary_identity(&[0.0; 3], r - qq, r).unwrap();
            assert!(v > 0.0, "r={r}: {v}");
        }
    }

    #[test]
    fn strong_huygens() {
        let q = SphereQuadrature::default();
        let d0 = Datum::bump(1.0, 1.0, 0.0);
        let d1 = Datum::bump(-0.5, 1.0, 0.0);
        let wave = LinearWave::new(|x: &Point| d0.eval_point(x), |x: &Point| d1.eval_point(x), &q);
        for x0 in [[0.0; 3], [0.5, 0.0, 0.0], [0.0, -1.0, 1.0]] {
            for extra in [0.05, 0.5, 3.0] {
                let t = 1.0 + norm(&x0) + extra;
                assert!(wave.eval(t, &x0).unwrap().abs() < 1e-8);
                assert!(wave.eval(-t, &x0).unwrap().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kirchhoff_is_linear_in_the_data() {
        let q = SphereQuadrature::new(16, 32);
        let (a0, b0) = (Datum::Gaussian { a: 1.0, s: 1.0 }, Datum::bump(1.0, 1.0, 0.3));
        let (a1, b1) = (Datum::bump(0.5, 2.0, 0.0), Datum::InverseSqrt { a: 1.0 });
        let (la, lb) = (0.7, -1.3);
        let x0 = [0.3, 0.2, -0.1];
        for t in [-1.2, 0.4, 2.0] {
            let combo = kirchhoff_eval(
                |x: &Point| la * a0.eval_point(x) + lb * b0.eval_point(x),
                |x: &Point| la * a1.eval_point(x) + lb * b1.eval_point(x),
                t,
                &x0,
                &q,
            )
            .unwrap();
            let sa = kirchhoff_eval(|x: &Point| a0.eval_point(x), |x: &Point| a1.eval_point(x), t, &x0, &q).unwrap();
            let sb = kirchhoff_eval(|x: &Point| b0.eval_point(x), |x: &Point| b1.eval_point(x), t, &x0, &q).unwrap();
            assert!((combo - (la * sa + lb * sb)).abs() < 1e-12);
        }
    }

    fn classify(u0: &Datum, u1: &Datum) -> SignConditionReport {
        let q = SphereQuadrature::default();
        classify_sign_condition(
            |x: &Point| u0.eval_point(x),
            |x: &Point| u1.eval_point(x),
            &SignSearch::default(),
            &q,
            Exec::default(),
        )
        .unwrap()
    }

    #[test]
    fn classifies_the_three_reference_data() {
        let chi = Datum::bump(1.0, 1.0, 0.0);
        let r1 = classify(&Datum::Zero, &chi);
        assert_eq!(r1.condition, SignCondition::ForwardPositive);
        assert!(r1.backward_margin.is_none());
        let w = r1.witness.unwrap();
        assert!(w.margin > 0.0 && w.r0 >= w.q);

        let r2 = classify(&Datum::Zero, &chi.negated());
        assert_eq!(r2.condition, SignCondition::BackwardNegative);
        assert!(r2.forward_margin.is_none());

        let r3 = classify(&Datum::InverseSqrt { a: 1.0 }, &Datum::Zero);
        assert_eq!(r3.condition, SignCondition::NonnegativeEverywhere);
        assert!(r3.witness.is_none());
        assert!(r3.min_sampled_value > 0.0);
    }

    #[test]
    fn empty_search_is_rejected() {
        let q = SphereQuadrature::new(4, 4);
        let search = SignSearch { x0_candidates: vec![], ..SignSearch::default() };
        let err = classify_sign_condition(|_: &Point| 0.0, |_: &Point| 1.0, &search, &q, Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::EmptySearch(_)));
    }
}
