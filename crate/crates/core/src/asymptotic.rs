//! The asymptotic equation `2U_sq + U_q² = 0` with `U → 0` as `q → −∞`.
//!
//! With `A(q) = U_q(0, q)` the solution is explicit:
//!
//! ```text
//!     U_q(s, q) = 2A(q) / (A(q)·s + 2),      U(s, q) = ∫_{−∞}^q U_q(s, ρ) dρ
//! ```
//!
//! Data are radial in the angular variable; `A` is a finite sum of named
//! generators in `q`.

use std::cell::RefCell;

use serde::Serialize;

use crate::datum::Datum;
use crate::error::{Error, Result};
use crate::fit::{geomspace, linspace, loglog_slope, LineFit};
use crate::gauss::GaussLegendre;
use crate::output::{self, extended_f64};
use crate::par::{self, Exec};

/// Denominators `A·s + 2` at or below this count as blow-up.
pub const DENOMINATOR_TOL: f64 = 1e-12;
/// Neglected mass `∫_{−∞}^{q_min}|A|` for non-compact data.
pub const TAIL_TOL: f64 = 1e-10;
/// Gauss–Legendre order per panel.
const GL_ORDER: usize = 8;
/// Panel width (in `q`, or in `asinh q` for non-compact data).
pub const DEFAULT_QUAD_STEP: f64 = 1.0 / 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCertificate {
    Nonnegative,
    MixedSign,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extent {
    /// `A ≡ 0` outside `[lo, hi]`.
    Compact { lo: f64, hi: f64 },
    /// `|A| ≲ ⟨q⟩^{−γ}` (γ may be infinite for Gaussian terms); the integral
    /// starts at `q_min` with neglected mass at most `tail_bound`.
    Decaying {
        #[serde(serialize_with = "extended_f64")]
        gamma: f64,
        q_min: f64,
        tail_bound: f64,
    },
}

/// The scattering datum `A(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticData {
    terms: Vec<Datum>,
    extent: Extent,
    lattice: Vec<f64>,
    sign_certificate: SignCertificate,
    lattice_min: f64,
}

impl AsymptoticData {
    pub fn new(terms: Vec<Datum>) -> Result<Self> {
        let extent = extent_of(&terms)?;
        let lattice = match extent {
            Extent::Compact { lo, hi } if hi > lo => linspace(lo, hi, 4001),
            Extent::Compact { lo, .. } => vec![lo],
            Extent::Decaying { .. } => linspace(-64.0, 64.0, 8193),
        };
        Self::with_lattice(terms, lattice)
    }

    pub fn from_datum(d: Datum) -> Result<Self> {
        Self::new(vec![d])
    }

    /// Uses `lattice` for the sign certificate and the lifespan.
    pub fn with_lattice(terms: Vec<Datum>, lattice: Vec<f64>) -> Result<Self> {
        if lattice.is_empty() {
            return Err(Error::EmptySearch("asymptotic lattice is empty".into()));
        }
        let extent = extent_of(&terms)?;
        let eval = |q: f64| terms.iter().map(|d| d.eval(q)).sum::<f64>();
        let lattice_min = lattice.iter().map(|&q| eval(q)).fold(f64::INFINITY, f64::min);
        if !lattice_min.is_finite() {
            return Err(Error::InvalidArgument("asymptotic datum is not finite on the lattice".into()));
        }
        let sign_certificate =
            if lattice_min >= 0.0 { SignCertificate::Nonnegative } else { SignCertificate::MixedSign };
        Ok(AsymptoticData { terms, extent, lattice, sign_certificate, lattice_min })
    }

    /// Parses `gen(...) + gen(...) + ...`.
    pub fn parse(text: &str) -> Result<Self> {
        let terms = text.split('+').map(Datum::parse).collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn terms(&self) -> &[Datum] {
        &self.terms
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn lattice(&self) -> &[f64] {
        &self.lattice
    }

    pub fn sign_certificate(&self) -> SignCertificate {
        self.sign_certificate
    }

    pub fn lattice_min(&self) -> f64 {
        self.lattice_min
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(Datum::is_zero)
    }

    /// `A(q)`.
    pub fn a(&self, q: f64) -> f64 {
        self.terms.iter().map(|d| d.eval(q)).sum()
    }

    /// Smallest `R` with `A ≡ 0` for `|q| ≥ R`; `None` if not compact.
    pub fn support_radius(&self) -> Option<f64> {
        match self.extent {
            Extent::Compact { lo, hi } => Some(lo.abs().max(hi.abs())),
            Extent::Decaying { .. } => None,
        }
    }

    /// Lower limit of every `q`-integral.
    pub fn lower_limit(&self) -> f64 {
        match self.extent {
            Extent::Compact { lo, .. } => lo,
            Extent::Decaying { q_min, .. } => q_min,
        }
    }

    pub fn lifespan(&self) -> f64 {
        asymptotic_lifespan(self, &self.lattice)
    }

    pub fn summary(&self) -> LifespanSummary {
        LifespanSummary {
            data: self.terms.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" + "),
            sign_certificate: self.sign_certificate,
            lifespan: self.lifespan(),
            lattice_min_a: self.lattice_min,
            lattice_lo: self.lattice.iter().cloned().fold(f64::INFINITY, f64::min),
            lattice_hi: self.lattice.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            lattice_len: self.lattice.len(),
            extent: self.extent,
        }
    }

    /// Integrand `U_q(s, ρ)`, or the blow-up error at `ρ`.
    fn uq_at(&self, s: f64, rho: f64) -> Result<f64> {
        uq_closed_form(self.a(rho), s).map_err(|e| match e {
            Error::BlowupReached { s, a, .. } => Error::BlowupReached { s, q: rho, a },
            other => other,
        })
    }

    /// Number of panels used for every `U` evaluation; fixed per datum so
    /// that `U(s, ·)` is a smooth function of `q`.
    fn panels(&self, step: f64) -> usize {
        let len = match self.extent {
            Extent::Compact { lo, hi } => hi - lo,
            Extent::Decaying { q_min, .. } => 2.0 * q_min.abs().asinh(),
        };
        ((len / step).ceil() as usize).max(1)
    }
}

fn extent_of(terms: &[Datum]) -> Result<Extent> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut gamma = f64::INFINITY;
    let mut q_min: f64 = 0.0;
    let mut tail_bound = 0.0;
    let mut compact = true;
    for d in terms.iter().filter(|d| !d.is_zero()) {
        if let Some((a, b)) = d.support() {
            lo = lo.min(a);
            hi = hi.max(b);
            continue;
        }
        compact = false;
        let (q, tail) = match *d {
            Datum::PowerLaw { a, gamma: g } if g > 1.0 => {
                // ∫_{−∞}^{−L} |a|⟨ρ⟩^{−γ} ≤ |a| L^{1−γ}/(γ − 1)
                let l = (TAIL_TOL * (g - 1.0) / a.abs()).powf(1.0 / (1.0 - g));
                gamma = gamma.min(g);
                (-l, a.abs() * l.powf(1.0 - g) / (g - 1.0))
            }
            Datum::Gaussian { a, s } => {
                // ∫_{−∞}^{−L} |a|e^{−ρ²/s²} ≤ |a|s²e^{−L²/s²}/(2L) for L ≥ s
                let l = s * ((a.abs() * s / TAIL_TOL).max(1.0).ln().sqrt()).max(1.0);
                (-l, a.abs() * s * s * (-(l * l) / (s * s)).exp() / (2.0 * l))
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "asymptotic datum `{d}` must be compact or decay like ⟨q⟩^(−γ) with γ > 1"
                )))
            }
        };
        q_min = q_min.min(q);
        tail_bound += tail;
    }
    if compact {
        if lo > hi {
            return Ok(Extent::Compact { lo: 0.0, hi: 0.0 });
        }
        return Ok(Extent::Compact { lo, hi });
    }
    if lo.is_finite() {
        q_min = q_min.min(lo);
    }
    Ok(Extent::Decaying { gamma, q_min, tail_bound })
}

/// `2a/(a·s + 2)`, the closed form with `a = U_q(0, q)`.
pub fn uq_closed_form(a: f64, s: f64) -> Result<f64> {
    let denom = a * s + 2.0;
    if denom <= DENOMINATOR_TOL {
        return Err(Error::BlowupReached { s, q: f64::NAN, a });
    }
    Ok(2.0 * a / denom)
}

pub fn solve_uq(data: &AsymptoticData, s: f64, q: f64) -> Result<f64> {
    data.uq_at(s, q)
}

/// `+∞` if `A ≥ 0` on the lattice, else `2/|min A|`.
pub fn asymptotic_lifespan(data: &AsymptoticData, lattice: &[f64]) -> f64 {
    let min = lattice.iter().map(|&q| data.a(q)).fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        2.0 / min.abs()
    }
}

fn check_lifespan(data: &AsymptoticData, s: f64) -> Result<()> {
    let life = data.lifespan();
    if s >= life {
        return Err(Error::BlowupReached { s, q: f64::NAN, a: -2.0 / life });
    }
    Ok(())
}

/// `U(s, q)` by composite Gauss–Legendre from the lower limit; `step` is
/// the panel width.
pub fn integrate_u(data: &AsymptoticData, s: f64, q: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("quadrature step must be positive, got {step}")));
    }
    check_lifespan(data, s)?;
    let gl = GaussLegendre::new(GL_ORDER);
    let panels = data.panels(step);
    integrate_u_with(data, &gl, panels, s, q)
}

fn integrate_u_with(data: &AsymptoticData, gl: &GaussLegendre, panels: usize, s: f64, q: f64) -> Result<f64> {
    let failure = RefCell::new(None);
    let f = |rho: f64| match data.uq_at(s, rho) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    // the panel count is fixed per datum; only the width follows q
    let value = match data.extent {
        Extent::Compact { lo, hi } => {
            if q <= lo || hi <= lo {
                return Ok(0.0);
            }
            gl.integrate_composite(lo, q.min(hi), panels, f)
        }
        Extent::Decaying { q_min, .. } => {
            if q <= q_min {
                return Ok(0.0);
            }
            gl.integrate_composite(q_min.asinh(), q.asinh(), panels, |x| f(x.sinh()) * x.cosh())
        }
    };
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Evaluator with a cached quadrature rule for repeated `U` queries.
#[derive(Clone, Debug)]
pub struct UEvaluator<'a> {
    data: &'a AsymptoticData,
    gl: GaussLegendre,
    panels: usize,
    lifespan: f64,
}

impl<'a> UEvaluator<'a> {
    pub fn new(data: &'a AsymptoticData, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("quadrature step must be positive, got {step}")));
        }
        Ok(UEvaluator { data, gl: GaussLegendre::new(GL_ORDER), panels: data.panels(step), lifespan: data.lifespan() })
    }

    pub fn data(&self) -> &AsymptoticData {
        self.data
    }

    pub fn u(&self, s: f64, q: f64) -> Result<f64> {
        if s >= self.lifespan {
            return Err(Error::BlowupReached { s, q, a: -2.0 / self.lifespan });
        }
        integrate_u_with(self.data, &self.gl, self.panels, s, q)
    }

    pub fn uq(&self, s: f64, q: f64) -> Result<f64> {
        self.data.uq_at(s, q)
    }

    /// `U(s, q_k)` for increasing `q_nodes`, accumulated cell by cell.
    pub fn u_cumulative(&self, s: f64, q_nodes: &[f64]) -> Result<Vec<f64>> {
        if q_nodes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("q nodes must be nondecreasing".into()));
        }
        if s >= self.lifespan {
            return Err(Error::BlowupReached { s, q: f64::NAN, a: -2.0 / self.lifespan });
        }
        let mut out = Vec::with_capacity(q_nodes.len());
        let (lo, hi) = match self.data.extent {
            Extent::Compact { lo, hi } => (lo, hi),
            Extent::Decaying { q_min, .. } => (q_min, f64::INFINITY),
        };
        let mut acc = 0.0;
        let mut prev = lo;
        for &q in q_nodes {
            let upper = q.min(hi);
            if upper > prev {
                if prev == lo && matches!(self.data.extent, Extent::Decaying { .. }) {
                    acc += self.u(s, upper)?;
                } else {
                    acc += self.cell(s, prev, upper)?;
                }
                prev = upper;
            }
            out.push(acc);
        }
        Ok(out)
    }

    fn cell(&self, s: f64, a: f64, b: f64) -> Result<f64> {
        let failure = RefCell::new(None);
        let panels = ((b - a) / DEFAULT_QUAD_STEP).ceil().max(1.0) as usize;
        let v = self.gl.integrate_composite(a, b, panels, |rho| match self.data.uq_at(s, rho) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        });
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LifespanSummary {
    pub data: String,
    pub sign_certificate: SignCertificate,
    #[serde(serialize_with = "extended_f64")]
    pub lifespan: f64,
    pub lattice_min_a: f64,
    pub lattice_lo: f64,
    pub lattice_hi: f64,
    pub lattice_len: usize,
    pub extent: Extent,
}

/// `U` and `U_q` sampled on an `s × q` lattice, row-major in `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticProfile {
    pub s_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub uq: Vec<f64>,
    pub lifespan: f64,
}

impl AsymptoticProfile {
    /// Rows with `s ≥ lifespan` are rejected.
    pub fn compute(data: &AsymptoticData, s_grid: &[f64], q_grid: &[f64], step: f64, exec: Exec) -> Result<Self> {
        let eval = UEvaluator::new(data, step)?;
        let mut sorted = q_grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted != q_grid {
            return Err(Error::InvalidArgument("q grid must be increasing".into()));
        }
        let rows = par::map_range_coarse(exec, s_grid.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
            let s = s_grid[i];
            let u = eval.u_cumulative(s, q_grid)?;
            let uq = q_grid.iter().map(|&q| eval.uq(s, q)).collect::<Result<Vec<_>>>()?;
            Ok((u, uq))
        });
        let mut u = Vec::with_capacity(s_grid.len() * q_grid.len());
        let mut uq = Vec::with_capacity(u.capacity());
        for row in rows {
            let (a, b) = row?;
            u.extend(a);
            uq.extend(b);
        }
        Ok(AsymptoticProfile { s_grid: s_grid.to_vec(), q_grid: q_grid.to_vec(), u, uq, lifespan: data.lifespan() })
    }

    pub fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.q_grid.len() + j]
    }

    pub fn uq_at(&self, i: usize, j: usize) -> f64 {
        self.uq[i * self.q_grid.len() + j]
    }

    /// Long-format CSV with columns `s,q,U,U_q`.
    pub fn to_csv(&self) -> String {
        let nq = self.q_grid.len();
        let rows = (0..self.s_grid.len()).flat_map(|i| {
            (0..nq).map(move |j| vec![self.s_grid[i], self.q_grid[j], self.u_at(i, j), self.uq_at(i, j)])
        });
        output::csv_table(&["s", "q", "U", "U_q"], rows)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub q: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub n_samples: usize,
    /// Slope of `log U` against `log(1 + s)`.
    pub exponent: f64,
    /// `−(1 − 1/γ)`, or −1 for compact data.
    pub predicted: f64,
    pub max_fit_residual: f64,
}

/// Fits `log U(s, q)` against `log(1 + s)` over `[s_lo, s_hi]`, which must
/// span at least a decade.
pub fn decay_rate_u(data: &AsymptoticData, q: f64, s_lo: f64, s_hi: f64, n: usize) -> Result<DecayReport> {
    if data.is_zero() {
        return Err(Error::InvalidArgument("decay rate of U is undefined for zero data".into()));
    }
    if !(s_lo >= 0.0) || !((1.0 + s_hi) >= 10.0 * (1.0 + s_lo)) || n < 3 {
        return Err(Error::InsufficientRange(format!(
            "need 1 + s_hi ≥ 10(1 + s_lo) and n ≥ 3, got [{s_lo}, {s_hi}] with n = {n}"
        )));
    }
    let eval = UEvaluator::new(data, DEFAULT_QUAD_STEP)?;
    let s: Vec<f64> = geomspace(1.0 + s_lo, 1.0 + s_hi, n).into_iter().map(|x| x - 1.0).collect();
    let u = s.iter().map(|&si| eval.u(si, q)).collect::<Result<Vec<f64>>>()?;
    let x: Vec<f64> = s.iter().map(|v| 1.0 + v).collect();
    let fit: LineFit = loglog_slope(&x, &u)?;
    let predicted = match data.extent() {
        Extent::Compact { .. } => -1.0,
        Extent::Decaying { gamma, .. } => -(1.0 - 1.0 / gamma),
    };
    Ok(DecayReport {
        q,
        s_lo,
        s_hi,
        n_samples: n,
        exponent: fit.slope,
        predicted,
        max_fit_residual: fit.max_abs_residual(),
    })
}
