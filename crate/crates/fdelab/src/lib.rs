//! Numerical laboratory for the rescaled fast diffusion equation
//!
//! ```text
//! u_t = Δ(u^m)/m,   m < m_c = (d-2)/d
//! ```
//!
//! near its extinction time, written in Fokker–Planck variables where the
//! Barenblatt profiles `V_D(y) = (D + |y|²)^{-1/(1-m)}` are stationary.
//! The special exponent `m* = (d-4)/(d-2)` is where the linearized generator
//! loses its spectral gap and convergence to `V_D` slows from exponential to
//! `s^{-1/2}`.
//!
//! Everything is radial. The modules build on each other roughly in this order:
//!
//! - [`profiles`]: parameters, Barenblatt profiles, the rescaling maps.
//! - [`radial_grid`]: graded grid on `[0, R_max]`, weighted quadrature.
//! - [`fp_solver`]: implicit well-balanced solver for the nonlinear flow.
//! - [`entropy_functionals`]: entropies, Fisher informations, comparison checks.
//! - [`linear_flow`]: the linearized operator, heat kernel probes, spectrum.
//! - [`cigar_geometry`]: curvature and embedding of the conformal metric.
//! - [`inequality_lab`]: Gagliardo–Nirenberg, Hardy and log-Sobolev experiments.
//! - [`rate_analysis`]: decay fits, model selection, good-times diagnostic.
//!
//! The guide under `book/` walks through each piece; its snippets are compiled
//! and run as doctests of this crate.

pub mod cigar_geometry;
pub mod entropy_functionals;
mod error;
pub mod fp_solver;
pub mod inequality_lab;
pub mod linear_flow;
pub mod profiles;
mod quad;
pub mod radial_grid;
pub mod rate_analysis;
mod tridiag;

pub use error::{Error, Result};
pub use profiles::{BarenblattProfile, DiffusionParams, SandwichBounds};
pub use radial_grid::{RadialField, RadialGrid};

// Book chapters are compiled as doctests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/nonlinear.md")]
    mod nonlinear {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/linear.md")]
    mod linear {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/inequalities.md")]
    mod inequalities {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
}
