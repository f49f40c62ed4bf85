//! The approximate solution
//!
//! ```text
//!     u_app(t, r) = ε r⁻¹ η(t) ψ(r/t) U(ε ln t − δ, r − t)
//! ```
//!
//! and its residual `□u_app + (∂ₜu_app)²`, with `□ = −∂ₜ² + Δ`.
//!
//! Everything is computed on `v = r·u`. The residual uses the stencil
//! points `(t ± k, q ∓ k)` and `(t, q ± k)` with `q = r − t` passed to `U`
//! as the same floating-point number, so functions of `q` alone cancel
//! exactly in `v_tt − v_rr`.

use serde::Serialize;

use crate::asymptotic::{AsymptoticData, UEvaluator, DEFAULT_QUAD_STEP};
use crate::error::{Error, Result};
use crate::fit::{geomspace, loglog_slope};
use crate::output::csv_table;
use crate::par::{self, Exec};

/// `6x⁵ − 15x⁴ + 10x³` on `[0, 1]`, clamped outside. C² with vanishing
/// first and second derivatives at both ends.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

/// The cutoffs `η`, `ψ` and the parameters `ε`, `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffSpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl CutoffSpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::InvalidArgument(format!("ε must lie in (0, 0.5], got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {delta}")));
        }
        Ok(CutoffSpec { epsilon, delta })
    }

    /// `t₀ = e^{δ/ε}`; `ε ln t − δ ≥ 0` wherever `η ≠ 0`.
    pub fn t0(&self) -> f64 {
        (self.delta / self.epsilon).exp()
    }

    /// 0 for `t ≤ t₀`, 1 for `t ≥ 2t₀`.
    pub fn eta(&self, t: f64) -> f64 {
        let t0 = self.t0();
        smoothstep((t - t0) / t0)
    }

    /// 1 on `[3/4, 5/4]`, 0 outside `(1/2, 3/2)`.
    pub fn psi(&self, sigma: f64) -> f64 {
        smoothstep(4.0 * (sigma - 0.5)) * smoothstep(4.0 * (1.5 - sigma))
    }

    /// Slow time `ε ln t − δ`, frozen at 0 below `t₀`.
    pub fn slow_time(&self, t: f64) -> f64 {
        (self.epsilon * t.ln() - self.delta).max(0.0)
    }
}

pub struct ApproximateSolution<'a> {
    u: UEvaluator<'a>,
    spec: CutoffSpec,
}

impl<'a> ApproximateSolution<'a> {
    pub fn new(data: &'a AsymptoticData, spec: CutoffSpec) -> Result<Self> {
        Ok(ApproximateSolution { u: UEvaluator::new(data, DEFAULT_QUAD_STEP)?, spec })
    }

    pub fn spec(&self) -> CutoffSpec {
        self.spec
    }

    pub fn data(&self) -> &AsymptoticData {
        self.u.data()
    }

    /// `η(t)ψ(r/t)U(s, q)` in the coordinates `(t, q)`, `r = q + t`.
    fn shape_tq(&self, t: f64, q: f64) -> Result<f64> {
        let r = q + t;
        if t <= 0.0 || r <= 0.0 || q <= self.u.data().lower_limit() {
            return Ok(0.0);
        }
        let cut = self.spec.eta(t) * self.spec.psi(r / t);
        if cut == 0.0 {
            return Ok(0.0);
        }
        Ok(cut * self.u.u(self.spec.slow_time(t), q)?)
    }

    /// `v_app = r·u_app` at `(t, q)`.
    fn v_tq(&self, t: f64, q: f64) -> Result<f64> {
        Ok(self.spec.epsilon * self.shape_tq(t, q)?)
    }

    /// `u_app / ε`, the factor multiplying the amplitude.
    pub fn profile(&self, t: f64, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.shape_tq(t, r - t)? / r)
    }

    pub fn eval(&self, t: f64, r: f64) -> Result<f64> {
        Ok(self.spec.epsilon * self.profile(t, r)?)
    }

    /// `v_app(t, r_j)` on one time level; `U` is accumulated along the nodes.
    pub fn v_level(&self, t: f64, r_nodes: &[f64]) -> Result<Vec<f64>> {
        let eta = self.spec.eta(t);
        if eta == 0.0 || t <= 0.0 {
            return Ok(vec![0.0; r_nodes.len()]);
        }
        let q: Vec<f64> = r_nodes.iter().map(|r| r - t).collect();
        let u = self.u.u_cumulative(self.spec.slow_time(t), &q)?;
        Ok(r_nodes
            .iter()
            .zip(u)
            .map(|(r, uk)| if *r <= 0.0 { 0.0 } else { self.spec.epsilon * eta * self.spec.psi(r / t) * uk })
            .collect())
    }

    /// `□u_app + (∂ₜu_app)²` at `(t, r)` with stencil step `k`, Richardson
    /// extrapolated between `k` and `k/2`.
    pub fn residual(&self, t: f64, r: f64, k: f64) -> Result<ResidualSample> {
        if !(k > 0.0) || t - k <= 0.0 || r - k <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "residual stencil k = {k} does not fit at (t, r) = ({t}, {r})"
            )));
        }
        let q = r - t;
        let raw = |k: f64| -> Result<f64> {
            let fwd = self.v_tq(t + k, q - k)?;
            let bwd = self.v_tq(t - k, q + k)?;
            let out = self.v_tq(t, q + k)?;
            let inn = self.v_tq(t, q - k)?;
            let box_v = (fwd + bwd - out - inn) / (k * k);
            let v_t = (fwd - bwd) / (2.0 * k);
            Ok((-box_v + v_t * v_t / r) / r)
        };
        let coarse = raw(k)?;
        let fine = raw(0.5 * k)?;
        let scale = self.spec.t0().min(0.25 * t);
        Ok(ResidualSample {
            t,
            r,
            step: k,
            value: (4.0 * fine - coarse) / 3.0,
            unextrapolated: fine,
            step_warning: k > 0.05 * scale,
        })
    }

    /// First-order vector fields `∂ₜ`, `∂_r`, `S = t∂ₜ + r∂_r` applied to
    /// `u_app` by centered differences.
    pub fn vector_fields(&self, t: f64, r: f64, k: f64) -> Result<[f64; 3]> {
        let dt = (self.eval(t + k, r)? - self.eval(t - k, r)?) / (2.0 * k);
        let dr = (self.eval(t, r + k)? - self.eval(t, r - k)?) / (2.0 * k);
        Ok([dt, dr, t * dt + r * dr])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualSample {
    pub t: f64,
    pub r: f64,
    pub step: f64,
    pub value: f64,
    pub unextrapolated: f64,
    /// Set when `k` is not small against the cutoff scales `t₀` and `t/4`.
    pub step_warning: bool,
}

pub fn eval_uapp(app: &ApproximateSolution<'_>, t: f64, r: f64) -> Result<f64> {
    app.eval(t, r)
}

pub fn uapp_residual(app: &ApproximateSolution<'_>, t: f64, r: f64, k: f64) -> Result<ResidualSample> {
    app.residual(t, r, k)
}

/// Default residual stencil.
pub const RESIDUAL_STEP: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub quantity: String,
    pub exponent: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_samples: usize,
    pub max_fit_residual: f64,
    /// Sampled `(t, sup |·|)` pairs.
    pub samples: Vec<[f64; 2]>,
}

impl DecayFit {
    fn from_samples(quantity: &str, t: &[f64], y: &[f64]) -> Result<Self> {
        let x: Vec<f64> = t.iter().map(|v| 1.0 + v).collect();
        let fit = loglog_slope(&x, y)?;
        Ok(DecayFit {
            quantity: quantity.into(),
            exponent: fit.slope,
            t_lo: t[0],
            t_hi: t[t.len() - 1],
            n_samples: t.len(),
            max_fit_residual: fit.max_abs_residual(),
            samples: t.iter().zip(y).map(|(a, b)| [*a, *b]).collect(),
        })
    }

    pub fn samples_csv(&self) -> String {
        csv_table(&["t", "value"], self.samples.iter().map(|s| s.to_vec()))
    }
}

/// Probe set: times `t` and offsets `q = r − t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub times: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl Probe {
    /// Doubling times from `t_lo` to at least `t_hi`.
    pub fn doubling(t_lo: f64, t_hi: f64, offsets: Vec<f64>) -> Self {
        let n = ((t_hi / t_lo).log2().ceil() as usize) + 1;
        Probe { times: geomspace(t_lo, t_lo * 2f64.powi(n as i32 - 1), n), offsets }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UappDecayReport {
    pub epsilon: f64,
    pub delta: f64,
    pub residual: DecayFit,
    pub amplitude: DecayFit,
    pub any_step_warning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorFieldReport {
    pub dt: DecayFit,
    pub dr: DecayFit,
    pub scaling: DecayFit,
}

fn sup_over_offsets(probe: &Probe, exec: Exec, f: impl Fn(f64, f64) -> Result<f64> + Sync + Send) -> Result<Vec<f64>> {
    let rows = par::map_range_coarse(exec, probe.times.len(), |i| -> Result<f64> {
        let t = probe.times[i];
        let mut sup: f64 = 0.0;
        for &q in &probe.offsets {
            sup = sup.max(f(t, q)?.abs());
        }
        Ok(sup)
    });
    rows.into_iter().collect()
}

/// Fitted exponents of `sup_q |residual|` and `sup_q |u_app|` against `1 + t`.
pub fn uapp_decay_report(app: &ApproximateSolution<'_>, probe: &Probe, k: f64, exec: Exec) -> Result<UappDecayReport> {
    let warn = std::sync::atomic::AtomicBool::new(false);
    let res = sup_over_offsets(probe, exec, |t, q| {
        let s = app.residual(t, t + q, k)?;
        if s.step_warning {
            warn.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        Ok(s.value)
    })?;
    let amp = sup_over_offsets(probe, exec, |t, q| app.eval(t, t + q))?;
    Ok(UappDecayReport {
        epsilon: app.spec.epsilon,
        delta: app.spec.delta,
        residual: DecayFit::from_samples("residual", &probe.times, &res)?,
        amplitude: DecayFit::from_samples("u_app", &probe.times, &amp)?,
        any_step_warning: warn.into_inner(),
    })
}

/// Decay exponents of `∂ₜu_app`, `∂_r u_app` and `S u_app` over the probe set.
pub fn first_order_vectorfield_check(
    app: &ApproximateSolution<'_>,
    probe: &Probe,
    k: f64,
    exec: Exec,
) -> Result<VectorFieldReport> {
    let field = |which: usize| sup_over_offsets(probe, exec, move |t, q| Ok(app.vector_fields(t, t + q, k)?[which]));
    let (dt, dr, sc) = (field(0)?, field(1)?, field(2)?);
    if dt.iter().chain(&dr).chain(&sc).all(|v| *v == 0.0) {
        let zero = |name: &str| DecayFit {
            quantity: name.into(),
            exponent: 0.0,
            t_lo: probe.times[0],
            t_hi: *probe.times.last().unwrap_or(&0.0),
            n_samples: probe.times.len(),
            max_fit_residual: 0.0,
            samples: probe.times.iter().map(|t| [*t, 0.0]).collect(),
        };
        return Ok(VectorFieldReport { dt: zero("dt"), dr: zero("dr"), scaling: zero("scaling") });
    }
    Ok(VectorFieldReport {
        dt: DecayFit::from_samples("dt", &probe.times, &dt)?,
        dr: DecayFit::from_samples("dr", &probe.times, &dr)?,
        scaling: DecayFit::from_samples("scaling", &probe.times, &sc)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::Datum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump_data() -> AsymptoticData {
        AsymptoticData::from_datum(Datum::bump(1.0, 1.0, 0.0)).unwrap()
    }

    fn spec() -> CutoffSpec {
        CutoffSpec::new(0.1, 0.1).unwrap()
    }

    #[test]
    fn smoothstep_is_c2_switch() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_eq!(smoothstep(0.5), 0.5);
        let k = 1e-4;
        for x in [0.0, 1.0] {
            let d2 = (smoothstep(x + k) - 2.0 * smoothstep(x) + smoothstep(x - k)) / (k * k);
            assert!(d2.abs() < 1e-2);
        }
    }

    #[test]
    fn cutoff_plateaus_and_supports() {
        let c = spec();
        assert!((c.t0() - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(c.eta(c.t0()), 0.0);
        assert_eq!(c.eta(2.0 * c.t0()), 1.0);
        for s in [0.75, 1.0, 1.25] {
            assert_eq!(c.psi(s), 1.0);
        }
        for s in [0.0, 0.5, 1.5, 3.0] {
            assert_eq!(c.psi(s), 0.0);
        }
        assert!(CutoffSpec::new(0.0, 0.1).is_err());
        assert!(CutoffSpec::new(0.6, 0.1).is_err());
        assert!(CutoffSpec::new(0.1, 1.0).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let d = AsymptoticData::from_datum(Datum::Zero).unwrap();
        let app = ApproximateSolution::new(&d, spec()).unwrap();
        assert_eq!(app.eval(50.0, 50.3).unwrap(), 0.0);
        assert_eq!(app.residual(50.0, 50.3, RESIDUAL_STEP).unwrap().value, 0.0);
        let probe = Probe::doubling(100.0, 400.0, vec![0.0, 0.5]);
        let rep = first_order_vectorfield_check(&app, &probe, 1e-3, Exec::Sequential).unwrap();
        assert_eq!(rep.dt.exponent, 0.0);
    }

    #[test]
    fn plateau_value_is_the_bare_profile() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let eval = UEvaluator::new(&data, DEFAULT_QUAD_STEP).unwrap();
        for (t, q) in [(20.0, 0.3), (100.0, -0.7), (1000.0, 5.0)] {
            let r = t + q;
            let s = 0.1 * f64::ln(t) - 0.1;
            let expected = 0.1 / r * eval.u(s, q).unwrap();
            let got = app.eval(t, r).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected.abs(), "{got} vs {expected}");
        }
    }

    #[test]
    fn vanishes_outside_support() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let t0 = spec().t0();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n = 0;
        while n < 1000 {
            let t = rng.gen_range(0.01..200.0);
            let r = rng.gen_range(0.0..400.0);
            let outside = t <= t0 || r / t <= 0.5 || r / t >= 1.5 || r - t <= -1.0;
            if outside {
                assert_eq!(app.eval(t, r).unwrap(), 0.0, "t={t} r={r}");
                n += 1;
            }
        }
        assert!(app.eval(5.0, 4.5).unwrap() > 0.0);
    }

    #[test]
    fn linear_in_epsilon_at_fixed_profile() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        for (t, r) in [(10.0, 10.2), (40.0, 35.0)] {
            assert_eq!(app.eval(t, r).unwrap(), 0.1 * app.profile(t, r).unwrap());
        }
    }

    #[test]
    fn level_matches_pointwise() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let r: Vec<f64> = (0..400).map(|j| j as f64 * 0.05).collect();
        for t in [1.0, 4.0, 9.0] {
            let level = app.v_level(t, &r).unwrap();
            for (rj, v) in r.iter().zip(&level) {
                let p = rj * app.eval(t, *rj).unwrap();
                assert!((p - v).abs() < 1e-13, "t={t} r={rj}: {p} vs {v}");
            }
        }
    }

    #[test]
    fn residual_route_agrees_with_analytic_chain_rule() {
        // independent evaluation on the plateau from the closed forms of U, U_q
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let eval = UEvaluator::new(&data, DEFAULT_QUAD_STEP).unwrap();
        let (eps, t, q) = (0.1, 200.0, 0.4);
        let r = t + q;
        let s = eps * f64::ln(t) - 0.1;
        let h = 1e-4;
        let u = |s: f64| eval.u(s, q).unwrap();
        let uq = |s: f64| eval.uq(s, q).unwrap();
        let u_s = (u(s + h) - u(s - h)) / (2.0 * h);
        let u_ss = (u(s + h) - 2.0 * u(s) + u(s - h)) / (h * h);
        let uq_s = (uq(s + h) - uq(s - h)) / (2.0 * h);
        // v = εU: v_tt − v_rr = ε[(ε/t)²U_ss − (ε/t²)U_s − 2(ε/t)U_sq]
        let box_v = eps * ((eps / t).powi(2) * u_ss - eps / (t * t) * u_s - 2.0 * eps / t * uq_s);
        let v_t = eps * (eps / t * u_s - uq(s));
        let expected = (-box_v + v_t * v_t / r) / r;
        let got = app.residual(t, r, RESIDUAL_STEP).unwrap();
        assert!(!got.step_warning);
        // the leading terms cancel at order 1/t, so the route's O(k⁴) error shows up amplified by t
        assert!((got.value - expected).abs() < 1e-4 * expected.abs(), "{} vs {expected}", got.value);
    }

    #[test]
    fn residual_and_amplitude_decay() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let probe = Probe::doubling(100.0, 1e4, vec![-0.5, 0.0, 0.5]);
        let rep = uapp_decay_report(&app, &probe, RESIDUAL_STEP, Exec::default()).unwrap();
        assert!((-3.3..=-2.6).contains(&rep.residual.exponent), "{:?}", rep.residual);
        assert!((-1.2..=-0.8).contains(&rep.amplitude.exponent), "{:?}", rep.amplitude);
    }

    #[test]
    fn vector_field_exponents() {
        let data = bump_data();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        let probe = Probe::doubling(100.0, 1e4, vec![-0.5, 0.0, 0.5]);
        let rep = first_order_vectorfield_check(&app, &probe, 1e-3, Exec::default()).unwrap();
        assert!(rep.dt.exponent <= -1.0 + 2.0 * 0.1, "{:?}", rep.dt);
        assert!((rep.scaling.exponent - rep.dt.exponent).abs() <= 0.2);
    }

    #[test]
    fn second_differences_stay_bounded_across_cutoffs() {
        let data = AsymptoticData::from_datum(Datum::bump(1.0, 2.0, 0.0)).unwrap();
        let app = ApproximateSolution::new(&data, spec()).unwrap();
        // t = t₀ and t = 2t₀ (η), r/t = 1/2 and 3/4 (ψ)
        let t0 = spec().t0();
        let points = [(t0, t0), (2.0 * t0, 2.0 * t0 - 0.5), (4.0, 2.0), (4.0, 3.0)];
        for (t, r) in points {
            let d2 = |k: f64| {
                let f = |t: f64| app.eval(t, r).unwrap();
                let g = |r: f64| app.eval(t, r).unwrap();
                let a = (f(t + k) - 2.0 * f(t) + f(t - k)) / (k * k);
                let b = (g(r + k) - 2.0 * g(r) + g(r - k)) / (k * k);
                a.abs().max(b.abs())
            };
            let coarse = d2(1e-2);
            let fine = d2(1e-3);
            assert!(fine < 2.0 * coarse + 1e-6, "({t}, {r}): {coarse} → {fine}");
        }
    }
}
