//! Graded radial grid on `[0, R_max]` and quadrature against powers of `V_D`.
//!
//! Nodes are uniform on `[0, 1]` and geometric beyond. Each node owns the
//! dual cell between the neighbouring midpoints, and its weight is the exact
//! volume `ω (hi^d - lo^d)/d` of that spherical shell. Gradients live on the
//! edges between nodes.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::profiles::BarenblattProfile;
use crate::{Error, Result};

/// Surface area of the unit sphere in `ℝ^d`, `2π^{d/2}/Γ(d/2)`.
pub fn sphere_area(d: u32) -> f64 {
    // S(1) = 2, S(2) = 2π, S(d+2) = 2π S(d)/d
    let (mut s, mut k) = if d % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while k < d {
        s *= 2.0 * PI / k as f64;
        k += 2;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    d: u32,
    omega: f64,
    nodes: Vec<f64>,
    cell_weights: Vec<f64>,
    /// Edge `e` joins nodes `e` and `e + 1`.
    edge_mid: Vec<f64>,
    /// `ω r_mid^{d-1} / Δr`.
    edge_conductance: Vec<f64>,
    core_fraction: f64,
}

impl RadialGrid {
    /// `n` intervals (so `n + 1` nodes); the first `core_fraction · n` of them
    /// split `[0, 1]` evenly and the rest grow geometrically up to `r_max`.
    pub fn new(d: u32, r_max: f64, n: usize, core_fraction: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if n < 16 {
            return Err(Error::InvalidGrid(format!("N = {n} < 16")));
        }
        if !(r_max >= 10.0) || !r_max.is_finite() {
            return Err(Error::InvalidGrid(format!("R_max = {r_max} < 10")));
        }
        if !(core_fraction > 0.0 && core_fraction < 1.0) {
            return Err(Error::InvalidGrid(format!("core fraction {core_fraction} not in (0,1)")));
        }
        let n_core = ((core_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let n_geo = n - n_core;
        let mut nodes = Vec::with_capacity(n + 1);
        for i in 0..=n_core {
            nodes.push(i as f64 / n_core as f64);
        }
        let log_r = r_max.ln();
        for j in 1..=n_geo {
            nodes.push((j as f64 * log_r / n_geo as f64).exp());
        }
        nodes[n] = r_max;

        let omega = sphere_area(d);
        let df = d as f64;
        let shell = |lo: f64, hi: f64| -> f64 {
            if lo == 0.0 {
                omega * hi.powi(d as i32) / df
            } else {
                // hi^d (1 - (lo/hi)^d), avoiding cancellation for thin shells
                -omega * hi.powi(d as i32) * (df * (lo / hi).ln()).exp_m1() / df
            }
        };
        let mut cell_weights = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let lo = if i == 0 { 0.0 } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let hi = if i == n { r_max } else { 0.5 * (nodes[i] + nodes[i + 1]) };
            cell_weights.push(shell(lo, hi));
        }
        let mut edge_mid = Vec::with_capacity(n);
        let mut edge_conductance = Vec::with_capacity(n);
        for e in 0..n {
            let mid = 0.5 * (nodes[e] + nodes[e + 1]);
            edge_mid.push(mid);
            edge_conductance.push(omega * mid.powi(d as i32 - 1) / (nodes[e + 1] - nodes[e]));
        }
        if cell_weights.iter().chain(&edge_conductance).any(|w| !w.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "quadrature weights overflow for d = {d}, R_max = {r_max:e}"
            )));
        }
        Ok(Self { d, omega, nodes, cell_weights, edge_mid, edge_conductance, core_fraction })
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    /// Number of intervals; there are `n() + 1` nodes.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
    pub fn core_fraction(&self) -> f64 {
        self.core_fraction
    }
    /// Area of the unit sphere in `ℝ^d`.
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }
    pub fn edge_mid(&self) -> &[f64] {
        &self.edge_mid
    }
    pub fn edge_conductance(&self) -> &[f64] {
        &self.edge_conductance
    }

    /// Volume of the Euclidean ball of radius `R_max`.
    pub fn ball_volume(&self) -> f64 {
        self.omega * self.r_max().powi(self.d as i32) / self.d as f64
    }

    /// Index of the node closest to `r`.
    pub fn nearest(&self, r: f64) -> usize {
        let i = self.nodes.partition_point(|&x| x < r);
        if i == 0 {
            0
        } else if i > self.n() {
            self.n()
        } else if r - self.nodes[i - 1] < self.nodes[i] - r {
            i - 1
        } else {
            i
        }
    }

    /// Per-node values of `W(r_i) · cell_weight_i`.
    pub fn measure(&self, weight: Weight, profile: &BarenblattProfile) -> Vec<f64> {
        let p = weight.exponent(profile.params().m());
        self.nodes
            .iter()
            .zip(&self.cell_weights)
            .map(|(&r, &c)| match p {
                None => c,
                Some(p) => c * profile.pow(r, p),
            })
            .collect()
    }

    /// `Σ f_i W(r_i) cell_i`.
    pub fn integrate(&self, values: &[f64], weight: Weight, profile: &BarenblattProfile) -> f64 {
        let p = weight.exponent(profile.params().m());
        let mut acc = 0.0;
        for ((&f, &r), &c) in values.iter().zip(&self.nodes).zip(&self.cell_weights) {
            if f == 0.0 {
                continue;
            }
            acc += match p {
                None => f * c,
                Some(p) => f * profile.pow(r, p) * c,
            };
        }
        acc
    }

    /// Discrete Dirichlet form `Σ_e |Δf|² V_D(r_mid) ω r_mid^{d-1}/Δr`.
    pub fn gradient_form(&self, values: &[f64], profile: &BarenblattProfile) -> f64 {
        let mut acc = 0.0;
        for e in 0..self.n() {
            let df = values[e + 1] - values[e];
            if df != 0.0 {
                acc += df * df * profile.eval(self.edge_mid[e]) * self.edge_conductance[e];
            }
        }
        acc
    }

    /// Upper bound on `∫_{|y| > R_max} sup|f| W dy`.
    ///
    /// Uses `(D + r²)^{-q} ≤ r^{-2q}`; `None` when the weight is not integrable
    /// at infinity (including the Lebesgue case).
    pub fn tail_bound(&self, weight: Weight, profile: &BarenblattProfile, f_sup: f64) -> Option<f64> {
        let q = profile.params().k() * weight.exponent(profile.params().m())?;
        let excess = 2.0 * q - self.d as f64;
        if excess <= 0.0 {
            return None;
        }
        Some(f_sup.abs() * self.omega * self.r_max().powf(-excess) / excess)
    }
}

/// Measure against which a radial function is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Lebesgue,
    /// `V^m`, the weight of the linearized entropy.
    ProfileM,
    /// `V^{2-m}`, the invariant measure of the linearized flow.
    ProfileTwoMinusM,
    /// `V`, the weight of the linearized Fisher information.
    Profile,
    /// `V^{4-3m}`, the weight of the Fisher comparison remainder.
    ProfileFourMinusThreeM,
    /// `V^p` for an arbitrary power.
    ProfilePower(f64),
}

impl Weight {
    /// Power of `V` carried by this weight, `None` for Lebesgue measure.
    pub fn exponent(&self, m: f64) -> Option<f64> {
        match *self {
            Weight::Lebesgue => None,
            Weight::ProfileM => Some(m),
            Weight::ProfileTwoMinusM => Some(2.0 - m),
            Weight::Profile => Some(1.0),
            Weight::ProfileFourMinusThreeM => Some(4.0 - 3.0 * m),
            Weight::ProfilePower(p) => Some(p),
        }
    }
}

/// A radial function sampled at the nodes of a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.nodes.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at r = {}", grid.nodes[i])));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<RadialGrid>, c: f64) -> Result<Self> {
        let n = grid.nodes.len();
        Self::new(grid, vec![c; n])
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `∫ f W dy` by nodal quadrature.
    pub fn weighted_integral(&self, weight: Weight, profile: &BarenblattProfile) -> f64 {
        self.grid.integrate(&self.values, weight, profile)
    }

    /// The Dirichlet form `∫ |∇f|² V_D dy` with the midpoint edge rule.
    pub fn weighted_gradient_form(&self, profile: &BarenblattProfile) -> f64 {
        self.grid.gradient_form(&self.values, profile)
    }
}
