//! Spherical means `M_{x₀}[f](r) = (1/4π) ∫_{|ξ|=1} f(x₀ + rξ) dσ(ξ)`.
//!
//! The sphere is discretised by a product rule: Gauss–Legendre in `cos θ`
//! times the uniform (trapezoid) rule in `φ`. The rule integrates every
//! spherical harmonic of degree `< min(2·n_theta, n_phi)` exactly.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gauss::GaussLegendre;
use crate::par::{self, Exec};
use crate::radial::{RadialGrid, RadialProfile};
use crate::Point;

pub const DEFAULT_N_THETA: usize = 32;
pub const DEFAULT_N_PHI: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadrature {
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl Default for SphereQuadrature {
    fn default() -> Self {
        SphereQuadrature::new(DEFAULT_N_THETA, DEFAULT_N_PHI)
    }
}

impl SphereQuadrature {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta >= 1 && n_phi >= 1, "sphere quadrature needs at least one node per direction");
        let gl = GaussLegendre::new(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (mu, w) in gl.nodes.iter().zip(&gl.weights) {
            let sin_theta = (1.0 - mu * mu).max(0.0).sqrt();
            for k in 0..n_phi {
                // half-step offset keeps nodes off the coordinate planes
                let phi = (k as f64 + 0.5) * dphi;
                nodes.push([sin_theta * phi.cos(), sin_theta * phi.sin(), *mu]);
                weights.push(w * dphi);
            }
        }
        SphereQuadrature { n_theta, n_phi, nodes, weights }
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Quadrature value of `M_{x₀}[f](r)`; exactly `f(x₀)` at `r = 0`.
pub fn spherical_mean<F>(f: F, x0: &Point, r: f64, quad: &SphereQuadrature) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("sphere radius must be nonnegative, got {r}")));
    }
    if r == 0.0 {
        let v = f(x0);
        return if v.is_finite() { Ok(v) } else { Err(Error::NonFinite { index: 0, value: v }) };
    }
    let mut sum = 0.0;
    for (xi, w) in quad.nodes.iter().zip(&quad.weights) {
        let p = [x0[0] + r * xi[0], x0[1] + r * xi[1], x0[2] + r * xi[2]];
        sum += w * f(&p);
    }
    if !sum.is_finite() {
        // locate the offending node only on the failure path
        for (index, xi) in quad.nodes.iter().enumerate() {
            let value = f(&[x0[0] + r * xi[0], x0[1] + r * xi[1], x0[2] + r * xi[2]]);
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        return Err(Error::NonFinite { index: quad.len(), value: sum });
    }
    Ok(sum / (4.0 * PI))
}

/// `M_{x₀}[f](r)` at every node of `grid`.
pub fn mean_profile<F>(f: F, x0: &Point, grid: RadialGrid, quad: &SphereQuadrature, exec: Exec) -> Result<RadialProfile>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let values = par::map_range(exec, grid.len(), |j| spherical_mean(&f, x0, grid.r(j), quad));
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    RadialProfile::new(grid, values)
}
