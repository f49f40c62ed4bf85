//! Numerical laboratory for the semilinear wave equation
//!
//! ```text
//!     ∂ₜ²u − Δu = (∂ₜu)²        on ℝ³⁺¹
//! ```
//!
//! The crate covers three groups of experiments:
//!
//! * finite-time blow-up of forward solutions from compactly supported data
//!   ([`solver::solve_forward`] together with the β- and N-functionals in
//!   [`diagnostics`]);
//! * construction of future-global solutions from asymptotic data through
//!   the asymptotic equation `2U_sq + U_q² = 0` ([`asymptotic`],
//!   [`approximate`], [`solver::solve_backward`]);
//! * the three-way sign classification of linear evolutions and the
//!   explicit blow-up radius bound ([`linear`], [`diagnostics`]).
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iterators otherwise.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximate;
pub mod asymptotic;
pub mod config;
pub mod datum;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod gauss;
pub mod linear;
pub mod output;
pub mod par;
pub mod radial;
pub mod run;
pub mod solver;
pub mod spherical;

pub use error::{Error, Result};

/// A point of ℝ³.
pub type Point = [f64; 3];
