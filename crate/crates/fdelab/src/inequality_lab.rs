//! Functional inequalities on `L²(dμ*)`, `dμ* = V^{2-m*} dy` with `D = 1`,
//! and the Dirichlet form `I[v] = ∫ |∇v|² V dy`: empirical
//! Gagliardo–Nirenberg constants, the failure of Hardy inequalities,
//! the log-corrected Hardy inequality and log-Sobolev calibration.
//!
//! Everything runs on seeded trial families so reports are reproducible.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linear_flow::OperatorDiscretization;
use crate::profiles::DiffusionParams;
use crate::radial_grid::RadialGrid;
use crate::{Error, Result};

/// The critical-exponent weighted space on a truncated grid.
#[derive(Debug, Clone)]
pub struct WeightedSpace {
    op: OperatorDiscretization,
}

impl WeightedSpace {
    pub fn new(d: u32, r_max: f64, n: usize, core_fraction: f64) -> Result<Self> {
        let grid = Arc::new(RadialGrid::new(d, r_max, n, core_fraction)?);
        Ok(Self { op: OperatorDiscretization::assemble(grid, DiffusionParams::critical(d)?, 1.0)? })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.op.grid()
    }
    pub fn operator(&self) -> &OperatorDiscretization {
        &self.op
    }
    pub fn l1(&self, v: &[f64]) -> f64 {
        self.op.mass_matrix().iter().zip(v).map(|(b, x)| b * x.abs()).sum()
    }
    pub fn l2_sq(&self, v: &[f64]) -> f64 {
        self.op.norm_sq(v)
    }
    pub fn fisher(&self, v: &[f64]) -> f64 {
        self.op.energy(v)
    }
    /// `∫ v² log(|v|/‖v‖₂) dμ*`.
    pub fn entropy(&self, v: &[f64]) -> f64 {
        let norm = self.l2_sq(v).sqrt();
        self.op
            .mass_matrix()
            .iter()
            .zip(v)
            .map(|(b, &x)| if x == 0.0 { 0.0 } else { b * x * x * (x.abs() / norm).ln() })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// Non-negative `cos²` bumps with random centre and width.
    Bumps { max_center: f64, min_width: f64, max_width: f64 },
    /// `(1 - (r/ℓ)²)²₊` at log-uniform scales `ℓ`: approximate deltas at the tip.
    Concentrated { min_scale: f64, max_scale: f64 },
    /// 1 up to geodesic radius `L`, then linear in geodesic distance down to 0
    /// at `L · ratio`, `ratio ∈ [1.5, 3]`.
    Plateaus { min_radius: f64, max_radius: f64 },
    /// `p(r) V^a` cut off smoothly at a random radius, `p` a random
    /// polynomial of degree `≤ max_degree` with coefficients in `[-1, 1]`.
    Modulated { max_degree: u32, max_cutoff: f64 },
}

/// A seeded, reproducible list of trial functions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFamily {
    pub seed: u64,
    pub kind: FamilyKind,
    pub count: usize,
}

impl TrialFamily {
    pub fn new(seed: u64, kind: FamilyKind, count: usize) -> Self {
        Self { seed, kind, count }
    }

    /// Samples on the nodes of `grid`; zero trials are dropped.
    pub fn generate(&self, grid: &RadialGrid) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let nodes = grid.nodes();
        let r_max = grid.r_max();
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let v: Vec<f64> = match self.kind {
                FamilyKind::Bumps { max_center, min_width, max_width } => {
                    let c = rng.random::<f64>() * max_center;
                    let w = log_uniform(&mut rng, min_width, max_width);
                    let a = 0.1 + rng.random::<f64>();
                    nodes.iter().map(|&r| a * cos2((r - c) / w)).collect()
                }
                FamilyKind::Concentrated { min_scale, max_scale } => {
                    let l = log_uniform(&mut rng, min_scale, max_scale);
                    nodes.iter().map(|&r| (1.0 - (r / l).powi(2)).max(0.0).powi(2)).collect()
                }
                FamilyKind::Plateaus { min_radius, max_radius } => {
                    let l1 = log_uniform(&mut rng, min_radius, max_radius);
                    let l2 = l1 * rng.random_range(1.5..3.0);
                    nodes.iter().map(|&r| plateau(r.asinh(), l1, l2)).collect()
                }
                FamilyKind::Modulated { max_degree, max_cutoff } => {
                    let deg = rng.random_range(0..=max_degree);
                    let coef: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let a = rng.random::<f64>();
                    let cut = log_uniform(&mut rng, 1.0, max_cutoff);
                    let d = grid.d() as f64;
                    nodes
                        .iter()
                        .map(|&r| {
                            let p = coef.iter().rev().fold(0.0, |acc, c| acc * r / cut + c);
                            p * (1.0 + r * r).powf(-0.5 * a * (d - 2.0)) * (1.0 - (r / cut).powi(2)).max(0.0).powi(2)
                        })
                        .collect()
                }
            };
            if v.iter().any(|&x| x != 0.0) && v.iter().all(|x| x.is_finite()) && nodes.last().map_or(true, |&r| r <= r_max) {
                out.push(v);
            }
        }
        out
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn cos2(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    }
}

/// 1 on `[0, a]`, linear down to 0 on `[a, b]`, 0 after.
fn plateau(s: f64, a: f64, b: f64) -> f64 {
    if s <= a {
        1.0
    } else if s >= b {
        0.0
    } else {
        (b - s) / (b - a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnReport {
    pub c0: f64,
    /// Trials with `0 < I/‖v‖₁² ≤ c0`.
    pub admissible: usize,
    /// Largest `‖v‖₂² / (I^{1/3} ‖v‖₁^{4/3})` over admissible trials.
    pub k_emp: f64,
    pub ratios: Vec<f64>,
}

/// `‖v‖₂² / (I^{1/3} ‖v‖₁^{4/3})`, or `None` when `I = 0`.
pub fn gn_ratio(space: &WeightedSpace, v: &[f64]) -> Option<(f64, f64)> {
    let i = space.fisher(v);
    let l1 = space.l1(v);
    if !(i > 0.0 && l1 > 0.0) {
        return None;
    }
    Some((space.l2_sq(v) / (i.cbrt() * l1.powf(4.0 / 3.0)), i / (l1 * l1)))
}

pub fn gn_check(space: &WeightedSpace, trials: &[Vec<f64>], c0: f64) -> Result<GnReport> {
    let ratios: Vec<f64> = trials
        .iter()
        .filter_map(|v| gn_ratio(space, v))
        .filter(|&(_, q)| q <= c0)
        .map(|(r, _)| r)
        .collect();
    if ratios.is_empty() {
        return Err(Error::NoAdmissibleTrials { c0 });
    }
    let k_emp = ratios.iter().cloned().fold(0.0, f64::max);
    if !k_emp.is_finite() {
        return Err(Error::NonFinite(format!("GN ratio at c0 = {c0}")));
    }
    Ok(GnReport { c0, admissible: ratios.len(), k_emp, ratios })
}

/// `K(c0) ≈ a c0^{2/3} + b c0^{-1/3}`, least squares on the swept `K_emp`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnSweep {
    pub reports: Vec<GnReport>,
    pub a: f64,
    pub b: f64,
    pub rms_residual: f64,
}

pub fn gn_sweep(space: &WeightedSpace, trials: &[Vec<f64>], c0_list: &[f64]) -> Result<GnSweep> {
    let reports = c0_list.iter().map(|&c| gn_check(space, trials, c)).collect::<Result<Vec<_>>>()?;
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &reports {
        let (x1, x2) = (r.c0.powf(2.0 / 3.0), r.c0.powf(-1.0 / 3.0));
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        t1 += x1 * r.k_emp;
        t2 += x2 * r.k_emp;
    }
    let det = s11 * s22 - s12 * s12;
    let (a, b) = if reports.len() >= 2 && det.abs() > 1e-300 {
        ((t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det)
    } else {
        (f64::NAN, f64::NAN)
    };
    let rms = (reports
        .iter()
        .map(|r| (r.k_emp - a * r.c0.powf(2.0 / 3.0) - b * r.c0.powf(-1.0 / 3.0)).powi(2))
        .sum::<f64>()
        / reports.len() as f64)
        .sqrt();
    Ok(GnSweep { reports, a, b, rms_residual: rms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyRow {
    pub n: f64,
    /// `∫ v_n² h dμ*`.
    pub numerator: f64,
    /// `I[v_n]`.
    pub fisher: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyReport {
    pub rows: Vec<HardyRow>,
    pub strictly_increasing: bool,
    /// Slope of `log I[v_n]` against `log n`.
    pub fisher_slope: f64,
}

/// Cut-offs `v_n` equal to 1 up to `r = e^n` and linear in geodesic distance
/// down to 0 at `r = e^{2n}`, tested against the fixed weight
/// `h = V^{2-m*}/∫V^{2(2-m*)}`.
pub fn hardy_failure_demo(space: &WeightedSpace, n_list: &[f64]) -> Result<HardyReport> {
    let grid = space.grid();
    let nmax = n_list.iter().cloned().fold(0.0, f64::max);
    if grid.r_max() < (2.0 * nmax).exp() {
        return Err(Error::InvalidGrid(format!(
            "R_max = {} is below e^(2n) = {} for n = {nmax}",
            grid.r_max(),
            (2.0 * nmax).exp()
        )));
    }
    let op = space.operator();
    let m = op.profile().params().m();
    let h: Vec<f64> = grid.nodes().iter().map(|&r| op.profile().pow(r, 2.0 - m)).collect();
    let z: f64 = op.mass_matrix().iter().zip(&h).map(|(b, x)| b * x).sum();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (a, b) = (n.exp().asinh(), (2.0 * n).exp().asinh());
        let v: Vec<f64> = grid.nodes().iter().map(|&r| plateau(r.asinh(), a, b)).collect();
        let numerator: f64 =
            op.mass_matrix().iter().zip(&v).zip(&h).map(|((bm, x), w)| bm * x * x * w).sum::<f64>() / z;
        let fisher = op.energy(&v);
        rows.push(HardyRow { n, numerator, fisher, rho: numerator / fisher });
    }
    let strictly_increasing = rows.windows(2).all(|w| w[1].rho > w[0].rho);
    let x: Vec<f64> = rows.iter().map(|r| r.n.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.fisher.ln()).collect();
    Ok(HardyReport { rows, strictly_increasing, fisher_slope: slope(&x, &y) })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `H = 2(d-2) / (α (d-2-2α) min{2α, d-2-2α})` for `0 < α < (d-2)/2`.
pub fn log_hardy_constant(d: u32, alpha: f64) -> Result<f64> {
    if d < 3 {
        return Err(Error::InvalidParams(format!("dimension {d} < 3")));
    }
    let dd = d as f64;
    if !(alpha > 0.0 && alpha <= 0.5 * dd - 1.0) {
        return Err(Error::InvalidParams(format!("alpha = {alpha} outside (0, d/2 - 1]")));
    }
    let gap = dd - 2.0 - 2.0 * alpha;
    if gap == 0.0 {
        return Err(Error::DegenerateConstant(format!("alpha = (d-2)/2 = {alpha} makes the constant infinite")));
    }
    Ok(2.0 * (dd - 2.0) / (alpha * gap * (2.0 * alpha).min(gap)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHardyReport {
    pub d: u32,
    pub alpha: f64,
    pub constant: f64,
    /// `(H ∫|∇g|² dν_α - ∫ g² dμ_α) / (H ∫|∇g|² dν_α)` per trial, 0 for `g ≡ 0`.
    pub slack: Vec<f64>,
    pub min_slack: f64,
}

/// Checks `∫ g² dμ_α ≤ H ∫ |∇g|² dν_α` with
/// `dμ_α = (1+r²)^{-d/2} [1 + log(1+r²)]^{α-1} dy` and
/// `dν_α = (1+r²)^{1-d/2} [1 + log(1+r²)]^{α+1} dy` (Lebesgue `dy`).
pub fn log_hardy_check(grid: &RadialGrid, trials: &[Vec<f64>], alpha: f64) -> Result<LogHardyReport> {
    let d = grid.d();
    let constant = log_hardy_constant(d, alpha)?;
    let dd = d as f64;
    let mu: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(grid.cell_weights())
        .map(|(&r, c)| {
            let l = (r * r).ln_1p();
            c * (-0.5 * dd * l).exp() * (1.0 + l).powf(alpha - 1.0)
        })
        .collect();
    let nu: Vec<f64> = grid
        .edge_mid()
        .iter()
        .zip(grid.edge_conductance())
        .map(|(&r, k)| {
            let l = (r * r).ln_1p();
            k * ((1.0 - 0.5 * dd) * l).exp() * (1.0 + l).powf(alpha + 1.0)
        })
        .collect();
    let mut slack = Vec::with_capacity(trials.len());
    for g in trials {
        let lhs: f64 = mu.iter().zip(g).map(|(w, x)| w * x * x).sum();
        let rhs: f64 = constant * nu.iter().enumerate().map(|(e, w)| w * (g[e + 1] - g[e]).powi(2)).sum::<f64>();
        slack.push(if rhs > 0.0 {
            (rhs - lhs) / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        });
    }
    let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LogHardyReport { d, alpha, constant, slack, min_slack })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogSobolevReport {
    pub eps: Vec<f64>,
    /// Smallest `β` with `Ent ≤ ε I + β ‖v‖₂²` on every trial.
    pub beta: Vec<f64>,
    /// `β(ε) + (d/4) log ε` for `ε < 1`, `β(ε) + (1/4) log ε` otherwise.
    pub c: Vec<f64>,
    /// Slope of `β` against `log ε` over the `ε < 1` values (NaN if fewer than two).
    pub slope_small: f64,
    /// Same over `ε ≥ 1`.
    pub slope_large: f64,
}

pub fn log_sobolev_calibrate(space: &WeightedSpace, trials: &[Vec<f64>], eps_list: &[f64]) -> Result<LogSobolevReport> {
    let stats: Vec<(f64, f64, f64)> = trials
        .iter()
        .map(|v| (space.entropy(v), space.fisher(v), space.l2_sq(v)))
        .filter(|&(_, _, n)| n > 0.0)
        .collect();
    if stats.is_empty() {
        return Err(Error::InvalidParams("log-Sobolev calibration needs a nonzero trial".into()));
    }
    let d = space.grid().d() as f64;
    let mut beta = Vec::with_capacity(eps_list.len());
    let mut c = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        if !(e > 0.0) {
            return Err(Error::InvalidParams(format!("eps = {e}")));
        }
        let b = stats.iter().map(|&(ent, i, n)| (ent - e * i) / n).fold(f64::NEG_INFINITY, f64::max);
        beta.push(b);
        c.push(b + if e < 1.0 { 0.25 * d } else { 0.25 } * e.ln());
    }
    let branch = |small: bool| {
        let (x, y): (Vec<f64>, Vec<f64>) = eps_list
            .iter()
            .zip(&beta)
            .filter(|(e, _)| (**e < 1.0) == small)
            .map(|(e, b)| (e.ln(), *b))
            .unzip();
        if x.len() < 2 {
            f64::NAN
        } else {
            slope(&x, &y)
        }
    };
    Ok(LogSobolevReport { eps: eps_list.to_vec(), slope_small: branch(true), slope_large: branch(false), beta, c })
}
