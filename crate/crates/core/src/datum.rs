//! Named data generators.
//!
//! Each generator is a function of a single radial-type variable: `|x|` when
//! used as Cauchy data on ℝ³, `q` when used as an asymptotic datum `A(q)`.
//! The textual form `name(key=value, ...)` is what configuration files use.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Datum {
    Zero,
    Constant {
        a: f64,
    },
    /// `a·exp(1 − 1/(1 − x²))` with `x = (ρ − center)/w`, zero for `|x| ≥ 1`.
    /// Peak value `a` at `ρ = center`.
    Bump {
        a: f64,
        w: f64,
        center: f64,
    },
    /// `a·exp(−ρ²/s²)`.
    Gaussian {
        a: f64,
        s: f64,
    },
    /// `a·(1 + ρ²)^{−1/2}`.
    InverseSqrt {
        a: f64,
    },
    /// `a·⟨ρ⟩^{−γ} = a·(1 + ρ²)^{−γ/2}`.
    PowerLaw {
        a: f64,
        gamma: f64,
    },
}

/// Standard C^∞ bump on (−1, 1) with peak value 1 at 0.
pub fn unit_bump(x: f64) -> f64 {
    let y = 1.0 - x * x;
    if y <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / y).exp()
    }
}

/// Derivative of [`unit_bump`].
pub fn unit_bump_derivative(x: f64) -> f64 {
    let y = 1.0 - x * x;
    if y <= 0.0 {
        0.0
    } else {
        unit_bump(x) * (-2.0 * x / (y * y))
    }
}

impl Datum {
    pub fn bump(a: f64, w: f64, center: f64) -> Self {
        Datum::Bump { a, w, center }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            Datum::Zero => 0.0,
            Datum::Constant { a } => a,
            Datum::Bump { a, w, center } => a * unit_bump((rho - center) / w),
            Datum::Gaussian { a, s } => a * (-(rho * rho) / (s * s)).exp(),
            Datum::InverseSqrt { a } => a / (1.0 + rho * rho).sqrt(),
            Datum::PowerLaw { a, gamma } => a * (1.0 + rho * rho).powf(-0.5 * gamma),
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match *self {
            Datum::Zero | Datum::Constant { .. } => 0.0,
            Datum::Bump { a, w, center } => a * unit_bump_derivative((rho - center) / w) / w,
            Datum::Gaussian { a, s } => -2.0 * rho / (s * s) * a * (-(rho * rho) / (s * s)).exp(),
            Datum::InverseSqrt { a } => -a * rho * (1.0 + rho * rho).powf(-1.5),
            Datum::PowerLaw { a, gamma } => -a * gamma * rho * (1.0 + rho * rho).powf(-0.5 * gamma - 1.0),
        }
    }

    /// Evaluation as a radial function on ℝ³.
    pub fn eval_point(&self, x: &Point) -> f64 {
        self.eval((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
    }

    /// The generator multiplied by −1.
    pub fn negated(&self) -> Datum {
        self.scaled(-1.0)
    }

    pub fn scaled(&self, k: f64) -> Datum {
        match *self {
            Datum::Zero => Datum::Zero,
            Datum::Constant { a } => Datum::Constant { a: k * a },
            Datum::Bump { a, w, center } => Datum::Bump { a: k * a, w, center },
            Datum::Gaussian { a, s } => Datum::Gaussian { a: k * a, s },
            Datum::InverseSqrt { a } => Datum::InverseSqrt { a: k * a },
            Datum::PowerLaw { a, gamma } => Datum::PowerLaw { a: k * a, gamma },
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Datum::Zero => true,
            Datum::Constant { a }
            | Datum::Bump { a, .. }
            | Datum::Gaussian { a, .. }
            | Datum::InverseSqrt { a }
            | Datum::PowerLaw { a, .. } => a == 0.0,
        }
    }

    /// Interval `[lo, hi]` outside of which the generator vanishes exactly,
    /// in the generator's own variable. `None` for non-compact generators.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Datum::Zero => Some((0.0, 0.0)),
            Datum::Bump { w, center, .. } => Some((center - w, center + w)),
            _ if self.is_zero() => Some((0.0, 0.0)),
            _ => None,
        }
    }

    /// Decay exponent γ with `|datum| ≲ ⟨ρ⟩^{−γ}`; infinite for compact or
    /// Gaussian data, zero for constants.
    pub fn decay_exponent(&self) -> f64 {
        match *self {
            Datum::Constant { .. } => 0.0,
            Datum::InverseSqrt { .. } => 1.0,
            Datum::PowerLaw { gamma, .. } => gamma,
            _ => f64::INFINITY,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            Datum::Zero => true,
            Datum::Constant { a }
            | Datum::Bump { a, .. }
            | Datum::Gaussian { a, .. }
            | Datum::InverseSqrt { a }
            | Datum::PowerLaw { a, .. } => a >= 0.0,
        }
    }

    /// Parses `name(key=value, ...)`. Unknown names or keys are errors;
    /// missing keys take documented defaults (`a = 1`, `w = 1`,
    /// `center = 0`, `s = 1`, `gamma = 2`).
    pub fn parse(text: &str) -> Result<Datum> {
        let text = text.trim();
        let (name, args) = match text.find('(') {
            Some(open) => {
                if !text.ends_with(')') {
                    return Err(Error::InvalidArgument(format!("unbalanced parentheses in `{text}`")));
                }
                (text[..open].trim(), &text[open + 1..text.len() - 1])
            }
            None => (text, ""),
        };
        let mut pairs = Vec::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{part}`")))?;
            let v: f64 =
                v.trim().parse().map_err(|_| Error::InvalidArgument(format!("`{}` is not a number", v.trim())))?;
            pairs.push((k.trim().to_string(), v));
        }
        let allowed: &[&str] = match name {
            "zero" => &[],
            "constant" => &["a"],
            "bump" => &["a", "w", "center"],
            "gaussian" => &["a", "s"],
            "inverse_sqrt" => &["a"],
            "powerlaw" => &["a", "gamma"],
            other => return Err(Error::InvalidArgument(format!("unknown data generator `{other}`"))),
        };
        for (k, _) in &pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::InvalidArgument(format!("generator `{name}` has no parameter `{k}`")));
            }
        }
        let get = |key: &str, default: f64| pairs.iter().rev().find(|(k, _)| k == key).map(|p| p.1).unwrap_or(default);
        let datum = match name {
            "zero" => Datum::Zero,
            "constant" => Datum::Constant { a: get("a", 1.0) },
            "bump" => Datum::Bump { a: get("a", 1.0), w: get("w", 1.0), center: get("center", 0.0) },
            "gaussian" => Datum::Gaussian { a: get("a", 1.0), s: get("s", 1.0) },
            "inverse_sqrt" => Datum::InverseSqrt { a: get("a", 1.0) },
            _ => Datum::PowerLaw { a: get("a", 1.0), gamma: get("gamma", 2.0) },
        };
        datum.validate()?;
        Ok(datum)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match *self {
            Datum::Bump { a, w, center } if !(w > 0.0) || !a.is_finite() || !center.is_finite() => {
                bad("bump needs w > 0 and finite a, center")
            }
            Datum::Gaussian { s, .. } if !(s > 0.0) => bad("gaussian needs s > 0"),
            Datum::PowerLaw { gamma, .. } if !(gamma > 0.0) => bad("powerlaw needs gamma > 0"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Datum::Zero => write!(f, "zero()"),
            Datum::Constant { a } => write!(f, "constant(a={a})"),
            Datum::Bump { a, w, center } => write!(f, "bump(a={a},w={w},center={center})"),
            Datum::Gaussian { a, s } => write!(f, "gaussian(a={a},s={s})"),
            Datum::InverseSqrt { a } => write!(f, "inverse_sqrt(a={a})"),
            Datum::PowerLaw { a, gamma } => write!(f, "powerlaw(a={a},gamma={gamma})"),
        }
    }
}
