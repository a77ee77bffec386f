//! Geometry of `ℝ^d` with the conformal metric `g = (1 + |x|²)^{-1} I`:
//! Ricci tensor, scalar curvature, distances, ball volumes and the
//! two-dimensional cigar profile curve.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::quad;
use crate::radial_grid::sphere_area;
use crate::{Error, Result};

fn check_d(d: u32) -> Result<()> {
    if !(3..=64).contains(&d) {
        return Err(Error::InvalidParams(format!("dimension {d} outside 3..=64")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub d: u32,
    /// `|x|`.
    pub radius: f64,
    pub ricci: DMatrix<f64>,
    /// Ascending, from the numerical eigensolver.
    pub eigenvalues: Vec<f64>,
    pub scalar: f64,
    /// `|R - g^{ij} R_ij|`.
    pub trace_residual: f64,
}

/// `R_ij = [((d-2)|x|² + 2(d-1)) δ_ij - (d-2) x_i x_j] / (1 + |x|²)²` at an arbitrary point.
pub fn ricci_matrix(x: &[f64]) -> Result<DMatrix<f64>> {
    let d = x.len() as u32;
    check_d(d)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let den = (1.0 + r2).powi(2);
    let dd = d as f64;
    let diag = ((dd - 2.0) * r2 + 2.0 * (dd - 1.0)) / den;
    Ok(DMatrix::from_fn(d as usize, d as usize, |i, j| {
        let delta = if i == j { diag } else { 0.0 };
        delta - (dd - 2.0) * x[i] * x[j] / den
    }))
}

/// `R = (d-1)(2d + (d-2)|x|²)/(1 + |x|²)`.
pub fn scalar_curvature(d: u32, radius: f64) -> f64 {
    let dd = d as f64;
    let r2 = radius * radius;
    (dd - 1.0) * (2.0 * dd + (dd - 2.0) * r2) / (1.0 + r2)
}

/// Radial eigenvalue `2(d-1)/(1+X²)²`.
pub fn radial_eigenvalue(d: u32, radius: f64) -> f64 {
    2.0 * (d as f64 - 1.0) / (1.0 + radius * radius).powi(2)
}

/// Transversal eigenvalue `((d-2)X² + 2(d-1))/(1+X²)²`, multiplicity `d-1`.
pub fn transversal_eigenvalue(d: u32, radius: f64) -> f64 {
    let dd = d as f64;
    let r2 = radius * radius;
    ((dd - 2.0) * r2 + 2.0 * (dd - 1.0)) / (1.0 + r2).powi(2)
}

/// Curvature at `(X, 0, …, 0)`; by rotational symmetry this is every point of radius `X`.
pub fn ricci(d: u32, radius: f64) -> Result<CurvatureReport> {
    check_d(d)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("radius {radius}")));
    }
    let mut x = vec![0.0; d as usize];
    x[0] = radius;
    let ricci = ricci_matrix(&x)?;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(ricci.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let scalar = scalar_curvature(d, radius);
    let trace_residual = (scalar - (1.0 + radius * radius) * ricci.trace()).abs();
    Ok(CurvatureReport { d, radius, ricci, eigenvalues, scalar, trace_residual })
}

pub fn trace_identity_check(d: u32, radius: f64) -> Result<f64> {
    Ok(ricci(d, radius)?.trace_residual)
}

/// Euclidean breakpoints `0, 1, 2, 4, …, r` for integrands with `1/r` tails.
fn geometric_pieces(r: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut x = 1.0;
    while x < r {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(r);
    pts
}

fn piecewise(f: impl Fn(f64) -> f64 + Copy, r: f64) -> f64 {
    geometric_pieces(r).windows(2).map(|w| quad::integrate(f, w[0], w[1], 1e-14)).sum()
}

/// `d(0, x) = ∫_0^{|x|} (1 + t²)^{-1/2} dt`.
pub fn geodesic_distance(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    piecewise(|t| 1.0 / (1.0 + t * t).sqrt(), r)
}

/// Volume of the geodesic ball of radius `big_r` about the tip; its Euclidean
/// radius is `sinh(big_r)`.
pub fn ball_volume(d: u32, big_r: f64) -> Result<f64> {
    check_d(d)?;
    if !(big_r >= 0.0) {
        return Err(Error::InvalidParams(format!("radius {big_r}")));
    }
    let dd = d as f64;
    let r_e = big_r.sinh();
    Ok(sphere_area(d) * piecewise(|r| r.powf(dd - 1.0) * (1.0 + r * r).powf(-0.5 * dd), r_e))
}

/// The profile curve `(Φ, Ψ)` of the cigar surface at parameter `ϱ`.
pub fn cigar_embedding(rho: f64) -> Result<(f64, f64)> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParams(format!("rho {rho}")));
    }
    let phi = rho / (1.0 + rho * rho).sqrt();
    let psi = if rho == 0.0 { 0.0 } else { piecewise(psi_prime, rho) };
    Ok((phi, psi))
}

pub fn phi_prime(rho: f64) -> f64 {
    (1.0 + rho * rho).powf(-1.5)
}

pub fn psi_prime(rho: f64) -> f64 {
    rho * (2.0 + rho * rho).sqrt() / (1.0 + rho * rho).powf(1.5)
}

/// `|Φ'² + Ψ'² - 1/(1+ϱ²)|`, relative to `1/(1+ϱ²)`.
pub fn embedding_isometry_residual(rho: f64) -> f64 {
    let target = 1.0 / (1.0 + rho * rho);
    ((phi_prime(rho).powi(2) + psi_prime(rho).powi(2)) - target).abs() / target
}
