//! Run configuration.
//!
//! ```text
//!     command = forward
//!
//!     [data]
//!     u0 = zero()
//!     u1 = bump(a=1,w=1)
//!
//!     [grid]
//!     h = 0.015625
//!
//!     [solver]
//!     t_max = 4
//!
//!     [output]
//!     dir = out
//! ```
//!
//! `command` is the only key outside a section. Every problem in the text is
//! collected, each with its line number. [`RunConfig::emit`] writes every
//! key with defaults resolved, and parsing the emitted text gives back an
//! equal config.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::asymptotic::AsymptoticData;
use crate::datum::Datum;
use crate::error::{Error, Result};
use crate::solver::{OuterBoundary, SourceMode, DEFAULT_BLOWUP_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    /// 1-based; `None` for problems with the file as a whole.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Profile `U(s, q)` and lifespan of asymptotic data.
    Asymptotic,
    /// Forward Cauchy problem from `(u0, u1)`.
    Forward,
    /// Future-global solution matched to asymptotic data.
    Backward,
    /// Sign classification of the linear evolution of `(u0, u1)`.
    SignCheck,
    /// Forward run plus sign classification and blow-up certificate.
    Diagnose,
    /// Backward runs over every `(ε, T)` pair of the sweep lists.
    Sweep,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Asymptotic,
        Command::Forward,
        Command::Backward,
        Command::SignCheck,
        Command::Diagnose,
        Command::Sweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Asymptotic => "asymptotic",
            Command::Forward => "forward",
            Command::Backward => "backward",
            Command::SignCheck => "sign_check",
            Command::Diagnose => "diagnose",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(text: &str) -> Option<Command> {
        let t = text.replace('-', "_");
        Command::ALL.into_iter().find(|c| c.as_str() == t)
    }

    fn uses_profile(self) -> bool {
        matches!(self, Command::Asymptotic | Command::Backward | Command::Sweep)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataSpec {
    /// Asymptotic data `A(q)` as a sum of generators; required by
    /// `asymptotic`, `backward` and `sweep`.
    pub profile: Vec<Datum>,
    /// Initial value `u(0, ·)`, default `zero()`.
    pub u0: Datum,
    /// Initial velocity `∂ₜu(0, ·)`, default `zero()`.
    pub u1: Datum,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    /// Radial spacing, default `1/64`.
    pub h: f64,
    /// Outer radius; derived from the problem when absent.
    pub r_max: Option<f64>,
    /// Sphere quadrature, default 32 × 64.
    pub n_theta: usize,
    pub n_phi: usize,
    /// `U(s, q)` output lattice, default `s ∈ [0, 4]` with 41 points.
    pub s_max: f64,
    pub n_s: usize,
    /// Default `q ∈ [−R − 1, R + 1]` (or `[−16, 16]` for decaying data), 201 points.
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub n_q: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSpec {
    /// `dt/h ∈ (0, 1]`, default 1.
    pub cfl: f64,
    /// Forward end time, default 10.
    pub t_max: f64,
    /// Cap on `max|∂ₜu|`, default `10⁶`.
    pub blowup_threshold: f64,
    pub source: SourceMode,
    pub boundary: OuterBoundary,
    /// `ε ∈ (0, 0.5]`, default 0.1.
    pub epsilon: f64,
    /// `δ ∈ (0, 1)`, default 0.1.
    pub delta: f64,
    /// Matching time `T > 1`, default 50.
    pub t_match: f64,
    /// Characteristic `q ≥ 0` of the N-functional, default 0.
    pub q: f64,
    /// Certificate radius `r₀ > q`; the witness radius of the sign search
    /// when absent.
    pub r0: Option<f64>,
    pub sweep_epsilon: Vec<f64>,
    pub sweep_t_match: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Store every `decimation`-th time level, default 1.
    pub decimation: usize,
    /// Write the decimated `(t, r)` field CSV, default false.
    pub write_field: bool,
    /// Further decimation of the stored field in the CSV, default 10.
    pub field_every: usize,
    /// Seed for randomized probes, default 0.
    pub seed: u64,
    /// Extra random `x₀` candidates for the sign search, default 0.
    pub random_probes: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub data: DataSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            data: DataSpec { profile: Vec::new(), u0: Datum::Zero, u1: Datum::Zero },
            grid: GridSpec {
                h: 1.0 / 64.0,
                r_max: None,
                n_theta: 32,
                n_phi: 64,
                s_max: 4.0,
                n_s: 41,
                q_min: None,
                q_max: None,
                n_q: 201,
            },
            solver: SolverSpec {
                cfl: 1.0,
                t_max: 10.0,
                blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
                source: SourceMode::Centered,
                boundary: OuterBoundary::Outgoing,
                epsilon: 0.1,
                delta: 0.1,
                t_match: 50.0,
                q: 0.0,
                r0: None,
                sweep_epsilon: Vec::new(),
                sweep_t_match: Vec::new(),
            },
            output: OutputSpec {
                dir: PathBuf::from("out"),
                decimation: 1,
                write_field: false,
                field_every: 10,
                seed: 0,
                random_probes: 0,
                threads: 0,
            },
        }
    }

    pub fn asymptotic_data(&self) -> Result<AsymptoticData> {
        AsymptoticData::new(self.data.profile.clone())
    }

    /// The effective configuration in the input format.
    pub fn emit(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "auto".into());
        let list = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let (d, g, s, o) = (&self.data, &self.grid, &self.solver, &self.output);
        let profile = if d.profile.is_empty() {
            "none".to_string()
        } else {
            d.profile.iter().map(Datum::to_string).collect::<Vec<_>>().join(" + ")
        };
        let mut out = format!("command = {}\n\n[data]\n", self.command);
        out += &format!("profile = {profile}\nu0 = {}\nu1 = {}\n\n[grid]\n", d.u0, d.u1);
        out += &format!("h = {}\nr_max = {}\nn_theta = {}\nn_phi = {}\n", g.h, opt(g.r_max), g.n_theta, g.n_phi);
        out += &format!(
            "s_max = {}\nn_s = {}\nq_min = {}\nq_max = {}\nn_q = {}\n\n[solver]\n",
            g.s_max,
            g.n_s,
            opt(g.q_min),
            opt(g.q_max),
            g.n_q
        );
        out += &format!(
            "cfl = {}\nt_max = {}\nblowup_threshold = {}\nsource = {}\nboundary = {}\n",
            s.cfl,
            s.t_max,
            s.blowup_threshold,
            source_name(s.source),
            boundary_name(s.boundary)
        );
        out += &format!(
            "epsilon = {}\ndelta = {}\nt_match = {}\nq = {}\nr0 = {}\n",
            s.epsilon,
            s.delta,
            s.t_match,
            s.q,
            opt(s.r0)
        );
        out += &format!(
            "sweep_epsilon = {}\nsweep_t_match = {}\n\n[output]\n",
            list(&s.sweep_epsilon),
            list(&s.sweep_t_match)
        );
        out += &format!(
            "dir = {}\ndecimation = {}\nwrite_field = {}\nfield_every = {}\nseed = {}\nrandom_probes = {}\nthreads = {}\n",
            o.dir.display(),
            o.decimation,
            o.write_field,
            o.field_every,
            o.seed,
            o.random_probes,
            o.threads
        );
        out
    }
}

fn source_name(m: SourceMode) -> &'static str {
    match m {
        SourceMode::Centered => "centered",
        SourceMode::Lagged => "lagged",
    }
}

fn boundary_name(b: OuterBoundary) -> &'static str {
    match b {
        OuterBoundary::Outgoing => "outgoing",
        OuterBoundary::Extrapolate => "extrapolate",
    }
}

const SECTIONS: [&str; 4] = ["data", "grid", "solver", "output"];

struct Parser {
    errors: Vec<ConfigError>,
    line: usize,
}

impl Parser {
    fn err(&mut self, message: String) {
        self.errors.push(ConfigError { line: Some(self.line), message });
    }

    fn real(&mut self, key: &str, v: &str) -> Option<f64> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            Ok(_) => {
                self.err(format!("`{key}` must be finite, got `{v}`"));
                None
            }
            Err(_) => {
                self.err(format!("`{key}` expects a number, got `{v}`"));
                None
            }
        }
    }

    fn ranged(&mut self, key: &str, v: &str, ok: impl Fn(f64) -> bool, bound: &str) -> Option<f64> {
        let x = self.real(key, v)?;
        if ok(x) {
            Some(x)
        } else {
            self.err(format!("`{key}` = {x} is out of range: {bound}"));
            None
        }
    }

    fn count(&mut self, key: &str, v: &str, min: usize) -> Option<usize> {
        match v.parse::<usize>() {
            Ok(n) if n >= min => Some(n),
            Ok(n) => {
                self.err(format!("`{key}` = {n} is out of range: must be at least {min}"));
                None
            }
            Err(_) => {
                self.err(format!("`{key}` expects a nonnegative integer, got `{v}`"));
                None
            }
        }
    }

    fn auto(&mut self, key: &str, v: &str, ok: impl Fn(f64) -> bool, bound: &str) -> Option<Option<f64>> {
        if v == "auto" {
            Some(None)
        } else {
            self.ranged(key, v, ok, bound).map(Some)
        }
    }

    fn list(&mut self, key: &str, v: &str) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            out.push(self.real(key, item)?);
        }
        Some(out)
    }

    fn datum(&mut self, key: &str, v: &str) -> Option<Datum> {
        match Datum::parse(v) {
            Ok(d) => Some(d),
            Err(e) => {
                self.err(format!("`{key}`: {e}"));
                None
            }
        }
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let mut p = Parser { errors: Vec::new(), line: 0 };
    let mut cfg = RunConfig::new(Command::Asymptotic);
    let mut command = None;
    let mut section: Option<&str> = None;
    let mut profile_line = None;

    for (idx, raw) in text.lines().enumerate() {
        p.line = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']').map(str::trim) {
                Some(n) if SECTIONS.contains(&n) => section = SECTIONS.iter().copied().find(|s| *s == n),
                _ => {
                    p.err(format!("unknown section `{line}`; expected one of [data] [grid] [solver] [output]"));
                    section = Some("");
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            p.err(format!("expected `key = value`, got `{line}`"));
            continue;
        };
        let (key, v) = (key.trim(), value.trim());
        let (d, g, s, o) = (&mut cfg.data, &mut cfg.grid, &mut cfg.solver, &mut cfg.output);
        match (section, key) {
            (None, "command") => match Command::parse(v) {
                Some(c) => command = Some(c),
                None => {
                    let names: Vec<_> = Command::ALL.iter().map(|c| c.as_str()).collect();
                    p.err(format!("unknown command `{v}`; expected one of {}", names.join(", ")));
                }
            },
            (Some("data"), "profile") => {
                profile_line = Some(p.line);
                if v == "none" {
                    d.profile.clear();
                } else {
                    let mut terms = Vec::new();
                    for part in v.split('+') {
                        if let Some(t) = p.datum(key, part.trim()) {
                            terms.push(t);
                        }
                    }
                    d.profile = terms;
                }
            }
            (Some("data"), "u0") => d.u0 = p.datum(key, v).unwrap_or(d.u0),
            (Some("data"), "u1") => d.u1 = p.datum(key, v).unwrap_or(d.u1),
            (Some("grid"), "h") => g.h = p.ranged(key, v, |x| x > 0.0, "must be positive").unwrap_or(g.h),
            (Some("grid"), "r_max") => g.r_max = p.auto(key, v, |x| x > 0.0, "must be positive").unwrap_or(g.r_max),
            (Some("grid"), "n_theta") => g.n_theta = p.count(key, v, 2).unwrap_or(g.n_theta),
            (Some("grid"), "n_phi") => g.n_phi = p.count(key, v, 2).unwrap_or(g.n_phi),
            (Some("grid"), "s_max") => {
                g.s_max = p.ranged(key, v, |x| x >= 0.0, "must be nonnegative").unwrap_or(g.s_max)
            }
            (Some("grid"), "n_s") => g.n_s = p.count(key, v, 1).unwrap_or(g.n_s),
            (Some("grid"), "q_min") => g.q_min = p.auto(key, v, |_| true, "").unwrap_or(g.q_min),
            (Some("grid"), "q_max") => g.q_max = p.auto(key, v, |_| true, "").unwrap_or(g.q_max),
            (Some("grid"), "n_q") => g.n_q = p.count(key, v, 2).unwrap_or(g.n_q),
            (Some("solver"), "cfl") => {
                s.cfl = p.ranged(key, v, |x| x > 0.0 && x <= 1.0, "the CFL bound requires 0 < cfl ≤ 1").unwrap_or(s.cfl)
            }
            (Some("solver"), "t_max") => s.t_max = p.ranged(key, v, |x| x > 0.0, "must be positive").unwrap_or(s.t_max),
            (Some("solver"), "blowup_threshold") => {
                s.blowup_threshold = p.ranged(key, v, |x| x > 0.0, "must be positive").unwrap_or(s.blowup_threshold)
            }
            (Some("solver"), "source") => match v {
                "centered" => s.source = SourceMode::Centered,
                "lagged" => s.source = SourceMode::Lagged,
                _ => p.err(format!("`source` expects centered or lagged, got `{v}`")),
            },
            (Some("solver"), "boundary") => match v {
                "outgoing" => s.boundary = OuterBoundary::Outgoing,
                "extrapolate" => s.boundary = OuterBoundary::Extrapolate,
                _ => p.err(format!("`boundary` expects outgoing or extrapolate, got `{v}`")),
            },
            (Some("solver"), "epsilon") => {
                s.epsilon = p.ranged(key, v, |x| x > 0.0 && x <= 0.5, "requires 0 < epsilon ≤ 0.5").unwrap_or(s.epsilon)
            }
            (Some("solver"), "delta") => {
                s.delta = p.ranged(key, v, |x| x > 0.0 && x < 1.0, "requires 0 < delta < 1").unwrap_or(s.delta)
            }
            (Some("solver"), "t_match") => {
                s.t_match = p.ranged(key, v, |x| x > 1.0, "requires t_match > 1").unwrap_or(s.t_match)
            }
            (Some("solver"), "q") => s.q = p.ranged(key, v, |x| x >= 0.0, "must be nonnegative").unwrap_or(s.q),
            (Some("solver"), "r0") => s.r0 = p.auto(key, v, |x| x > 0.0, "must be positive").unwrap_or(s.r0),
            (Some("solver"), "sweep_epsilon") => {
                if let Some(xs) = p.list(key, v) {
                    if xs.iter().all(|x| *x > 0.0 && *x <= 0.5) {
                        s.sweep_epsilon = xs;
                    } else {
                        p.err("`sweep_epsilon` is out of range: every value needs 0 < epsilon ≤ 0.5".into());
                    }
                }
            }
            (Some("solver"), "sweep_t_match") => {
                if let Some(xs) = p.list(key, v) {
                    if xs.iter().all(|x| *x > 1.0) {
                        s.sweep_t_match = xs;
                    } else {
                        p.err("`sweep_t_match` is out of range: every value needs t_match > 1".into());
                    }
                }
            }
            (Some("output"), "dir") => o.dir = PathBuf::from(v),
            (Some("output"), "decimation") => o.decimation = p.count(key, v, 1).unwrap_or(o.decimation),
            (Some("output"), "write_field") => match v {
                "true" => o.write_field = true,
                "false" => o.write_field = false,
                _ => p.err(format!("`write_field` expects true or false, got `{v}`")),
            },
            (Some("output"), "field_every") => o.field_every = p.count(key, v, 1).unwrap_or(o.field_every),
            (Some("output"), "seed") => match v.parse() {
                Ok(x) => o.seed = x,
                Err(_) => p.err(format!("`seed` expects an unsigned integer, got `{v}`")),
            },
            (Some("output"), "random_probes") => o.random_probes = p.count(key, v, 0).unwrap_or(o.random_probes),
            (Some("output"), "threads") => o.threads = p.count(key, v, 0).unwrap_or(o.threads),
            (Some(""), _) => {}
            (None, _) => p.err(format!("key `{key}` must appear inside a section")),
            (Some(sec), _) => p.err(format!("unknown key `{key}` in [{sec}]")),
        }
    }

    match command {
        None => p.errors.insert(0, ConfigError { line: None, message: "missing command".into() }),
        Some(c) => {
            cfg.command = c;
            if c.uses_profile() && cfg.data.profile.is_empty() {
                p.errors.push(ConfigError {
                    line: profile_line,
                    message: format!("command `{c}` needs `profile` in [data]"),
                });
            }
            if c == Command::Sweep && (cfg.solver.sweep_epsilon.is_empty() && cfg.solver.sweep_t_match.is_empty()) {
                p.errors.push(ConfigError {
                    line: None,
                    message: "command `sweep` needs `sweep_epsilon` or `sweep_t_match` in [solver]".into(),
                });
            }
        }
    }
    if let (Some(lo), Some(hi)) = (cfg.grid.q_min, cfg.grid.q_max) {
        if lo >= hi {
            p.errors.push(ConfigError { line: None, message: format!("q_min = {lo} must be below q_max = {hi}") });
        }
    }
    if p.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(p.errors)
    }
}

/// [`parse_config`] with the errors wrapped in [`Error::Config`].
pub fn load(text: &str) -> Result<RunConfig> {
    parse_config(text).map_err(Error::Config)
}
