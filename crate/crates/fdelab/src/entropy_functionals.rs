//! Relative entropies and Fisher informations, and checks of the inequalities
//! that tie the nonlinear pair to the linearized one.
//!
//! Nonlinear (written in `w = v/V`, `h = w - 1`):
//!
//! ```text
//! 𝓕[w] = ∫ ψ(w) V^m,          ψ(w) = [(w-1) - (w^m - 1)/m]/(1-m)
//! 𝓘[w] = ∫ v |∇Ω|²,          Ω = V^{m-1} ((w^{m-1} - 1)/(m-1))
//! ```
//!
//! Linearized (with `g = (w-1) V^{m-1}`):
//!
//! ```text
//! F[w] = ∫ (w-1)² V^m,        I[g] = ∫ |∇g|² V
//! ```
//!
//! Along the flow `d𝓕/ds = -𝓘`. The discrete `𝓘` uses the same harmonic edge
//! average as the solver flux, so the identity holds up to time stepping.

use std::sync::Arc;

use crate::fp_solver::FlowSnapshot;
use crate::profiles::SandwichBounds;
use crate::radial_grid::{RadialGrid, Weight};
use crate::rate_analysis::FlowTimeSeries;
use crate::{Error, Result};

const SERIES_CUTOFF: f64 = 1e-3;

/// `ψ(1 + h)`, the entropy integrand. Non-negative and `~ h²/2` near zero.
pub fn entropy_integrand(h: f64, m: f64) -> f64 {
    if h.abs() < SERIES_CUTOFF {
        let c3 = (m - 2.0) / 6.0;
        let c4 = c3 * (m - 3.0) / 4.0;
        let c5 = c4 * (m - 4.0) / 5.0;
        let c6 = c5 * (m - 5.0) / 6.0;
        return h * h * (0.5 + h * (c3 + h * (c4 + h * (c5 + h * c6))));
    }
    let lw = h.ln_1p();
    if m == 0.0 {
        h - lw
    } else {
        (h - (m * lw).exp_m1() / m) / (1.0 - m)
    }
}

/// `a(w) = (w^{m-1} - 1)/(m-1)`, so that `Ω = V^{m-1} a(w)`.
pub fn omega_factor(h: f64, m: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    ((m - 1.0) * h.ln_1p()).exp_m1() / (m - 1.0)
}

/// `a'(w) = w^{m-2}`.
pub fn omega_factor_derivative(h: f64, m: f64) -> f64 {
    ((m - 2.0) * h.ln_1p()).exp()
}

/// `A'(w)` where `A(w) = a(w)/(w-1)`; equals `(m-2)/2` at `w = 1`.
pub fn a_quotient_derivative(h: f64, m: f64) -> f64 {
    if h.abs() < SERIES_CUTOFF {
        let c1 = (m - 2.0) / 2.0;
        let c2 = (m - 2.0) * (m - 3.0) / 3.0;
        let c3 = (m - 2.0) * (m - 3.0) * (m - 4.0) / 8.0;
        let c4 = (m - 2.0) * (m - 3.0) * (m - 4.0) * (m - 5.0) / 30.0;
        return c1 + h * (c2 + h * (c3 + h * c4));
    }
    let a = omega_factor(h, m) / h;
    (omega_factor_derivative(h, m) - a) / h
}

/// Everything recorded at one cadence point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FunctionalBundle {
    pub s: f64,
    /// Nonlinear relative entropy `𝓕[w]`.
    pub f_nl: f64,
    /// Nonlinear Fisher information `𝓘[w]`.
    pub i_nl: f64,
    /// `F[w] = ∫(w-1)² V^m`.
    pub f_lin: f64,
    /// `I[g] = ∫|∇g|² V`.
    pub i_lin: f64,
    pub sup_w: f64,
    pub inf_w: f64,
    /// `sup |g|`.
    pub n_g: f64,
    /// `∫(v - V_{D*})`.
    pub rel_mass: f64,
    /// `∫ g⁴ V^{4-3m}`, the remainder in the Fisher comparison.
    pub remainder: f64,
    /// `‖v - V‖₂`.
    pub l2_dev: f64,
    /// `‖ |y|^{d/2} (v - V) ‖₂`.
    pub l2_dev_weighted: f64,
    /// `sup |w - 1|`.
    pub sup_rel_err: f64,
}

impl FunctionalBundle {
    /// All entries finite and the four functionals non-negative.
    pub fn is_valid(&self) -> bool {
        let all = [
            self.s, self.f_nl, self.i_nl, self.f_lin, self.i_lin, self.sup_w, self.inf_w, self.n_g,
            self.rel_mass, self.remainder, self.l2_dev, self.l2_dev_weighted, self.sup_rel_err,
        ];
        all.iter().all(|x| x.is_finite())
            && self.f_nl >= 0.0
            && self.i_nl >= 0.0
            && self.f_lin >= 0.0
            && self.i_lin >= 0.0
    }
}

/// Caches the node and edge weights used by every functional of one run.
#[derive(Debug, Clone)]
pub struct FunctionalEvaluator {
    grid: Arc<RadialGrid>,
    bounds: SandwichBounds,
    v_star: Vec<f64>,
    v_m1: Vec<f64>,
    w_m: Vec<f64>,
    w_mass: Vec<f64>,
    w_rem: Vec<f64>,
    w_l2: Vec<f64>,
    w_l2_weighted: Vec<f64>,
    /// `V(r_mid) ω r_mid^{d-1}/Δr` for the linearized Fisher information.
    edge_lin: Vec<f64>,
}

impl FunctionalEvaluator {
    pub fn new(grid: Arc<RadialGrid>, bounds: SandwichBounds) -> Self {
        let star = bounds.star();
        let m = bounds.params().m();
        let d = grid.d() as i32;
        let nodes = grid.nodes();
        let cells = grid.cell_weights();
        let v_star: Vec<f64> = nodes.iter().map(|&r| star.eval(r)).collect();
        let scaled = |w: Weight| grid.measure(w, &star);
        let w_l2: Vec<f64> = cells.iter().zip(&v_star).map(|(c, v)| c * v * v).collect();
        let w_l2_weighted = w_l2.iter().zip(nodes).map(|(w, &r)| w * r.powi(d)).collect();
        let edge_lin = grid
            .edge_mid()
            .iter()
            .zip(grid.edge_conductance())
            .map(|(&r, &k)| star.eval(r) * k)
            .collect();
        Self {
            v_m1: nodes.iter().map(|&r| star.pow(r, m - 1.0)).collect(),
            w_m: scaled(Weight::ProfileM),
            w_mass: scaled(Weight::Profile),
            w_rem: scaled(Weight::ProfileFourMinusThreeM),
            w_l2,
            w_l2_weighted,
            edge_lin,
            v_star,
            grid,
            bounds,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn evaluate(&self, snap: &FlowSnapshot) -> FunctionalBundle {
        self.evaluate_deviation(snap.s(), snap.h().values())
    }

    /// Bundle for a bare `h = w - 1` vector on this evaluator's grid.
    pub fn evaluate_deviation(&self, s: f64, h: &[f64]) -> FunctionalBundle {
        let m = self.bounds.params().m();
        let mut b = FunctionalBundle {
            s,
            sup_w: f64::NEG_INFINITY,
            inf_w: f64::INFINITY,
            ..Default::default()
        };
        let mut l2 = 0.0;
        let mut l2w = 0.0;
        let n = h.len();
        let mut omega = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let hi = h[i];
            b.f_nl += self.w_m[i] * entropy_integrand(hi, m);
            b.f_lin += self.w_m[i] * hi * hi;
            b.rel_mass += self.w_mass[i] * hi;
            let gi = hi * self.v_m1[i];
            b.remainder += self.w_rem[i] * (gi * gi) * (gi * gi);
            l2 += self.w_l2[i] * hi * hi;
            l2w += self.w_l2_weighted[i] * hi * hi;
            b.sup_w = b.sup_w.max(1.0 + hi);
            b.inf_w = b.inf_w.min(1.0 + hi);
            b.n_g = b.n_g.max(gi.abs());
            b.sup_rel_err = b.sup_rel_err.max(hi.abs());
            omega.push(self.v_m1[i] * omega_factor(hi, m));
            g.push(gi);
        }
        let cond = self.grid.edge_conductance();
        for e in 0..n - 1 {
            let va = self.v_star[e] * (1.0 + h[e]);
            let vb = self.v_star[e + 1] * (1.0 + h[e + 1]);
            let dom = omega[e + 1] - omega[e];
            b.i_nl += cond[e] * (2.0 * va * vb / (va + vb)) * dom * dom;
            let dg = g[e + 1] - g[e];
            b.i_lin += self.edge_lin[e] * dg * dg;
        }
        b.l2_dev = l2.sqrt();
        b.l2_dev_weighted = l2w.sqrt();
        b
    }
}

/// One-off evaluation; prefer [`FunctionalEvaluator`] inside loops.
pub fn evaluate_bundle(snap: &FlowSnapshot) -> FunctionalBundle {
    FunctionalEvaluator::new(snap.grid().clone(), *snap.bounds()).evaluate(snap)
}

/// Slack in `F/(2 sup_w^{2-m}) ≤ 𝓕 ≤ F/(2 inf_w^{2-m})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichMargins {
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// `𝓕 - lower_bound`
    pub lower_slack: f64,
    /// `upper_bound - 𝓕`
    pub upper_slack: f64,
}

impl SandwichMargins {
    /// Both slacks above `-tol · max(F, tiny)`.
    pub fn holds(&self, tol: f64) -> bool {
        let scale = self.upper_bound.abs().max(f64::MIN_POSITIVE);
        self.lower_slack >= -tol * scale && self.upper_slack >= -tol * scale
    }
}

/// Compares the nonlinear and linearized entropies of one bundle.
///
/// The realized range of `w` is widened to contain 1, which is what the
/// Taylor argument behind the bound needs.
pub fn check_entropy_sandwich(bundle: &FunctionalBundle, m: f64) -> SandwichMargins {
    let hi = bundle.sup_w.max(1.0);
    let lo = bundle.inf_w.min(1.0);
    let lower_bound = bundle.f_lin / (2.0 * hi.powf(2.0 - m));
    let upper_bound = bundle.f_lin / (2.0 * lo.powf(2.0 - m));
    SandwichMargins {
        lower_bound,
        upper_bound,
        lower_slack: bundle.f_nl - lower_bound,
        upper_slack: upper_bound - bundle.f_nl,
    }
}

/// `sup |A'(w)|` over `[w_lo, w_hi]` by dense sampling.
pub fn a_quotient_derivative_bound(w_lo: f64, w_hi: f64, m: f64) -> f64 {
    let (lo, hi) = (w_lo.min(1.0) - 1.0, w_hi.max(1.0) - 1.0);
    let samples = 2000;
    let mut best = a_quotient_derivative(0.0, m).abs();
    for k in 0..=samples {
        let h = lo + (hi - lo) * k as f64 / samples as f64;
        best = best.max(a_quotient_derivative(h, m).abs());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherComparison {
    /// `2 sup_w^{3-2m}` from the snapshot's own range.
    pub k1: f64,
    /// `8 sup_w^{4-2m} sup|A'|²`, following the proof chain.
    pub k2: f64,
    /// Same constants from the a-priori `W0, W1`.
    pub k1_apriori: f64,
    pub k2_apriori: f64,
    /// `4 W1^{2(1-m)} sup|A'|`, the shorter constant; reported, not asserted.
    pub k2_short: f64,
    pub remainder: f64,
    /// `k1 𝓘 + k2 R - I`; non-negative when the inequality holds.
    pub margin: f64,
    pub margin_apriori: f64,
    pub margin_short: f64,
    /// `2/[d + 2 + m/(1-m)]`.
    pub sigma: f64,
    /// `R / 𝓕^{1+σ}` (NaN when `𝓕 = 0`).
    pub remainder_ratio: f64,
}

/// `σ = 2/[d + 2 + m/(1-m)]`; equals `4/(3d)` at `m*`.
pub fn fisher_sigma(params: &crate::DiffusionParams) -> f64 {
    let m = params.m();
    2.0 / (params.d() as f64 + 2.0 + m / (1.0 - m))
}

/// Checks `I ≤ k1 𝓘 + k2 ∫g⁴V^{4-3m}`.
///
/// The chain of estimates `|a+b|² ≥ |a|²/2 - |b|²`, `w^{2m-3} ≥ W1^{2m-3}`,
/// `|∇V^{1-m}|² V ≤ 4 V^{4-3m}`, `w ≤ W1` gives `k2 = 8 W1^{4-2m} k0²` with
/// `k0 = sup|A'|`. That is what the margin uses. The shorter
/// `4 W1^{2(1-m)} k0` is kept in `k2_short` for comparison.
pub fn check_fisher_comparison(bundle: &FunctionalBundle, bounds: &SandwichBounds) -> FisherComparison {
    let params = bounds.params();
    let m = params.m();
    let sup_w = bundle.sup_w.max(1.0);
    let inf_w = bundle.inf_w.min(1.0);
    let k0 = a_quotient_derivative_bound(inf_w, sup_w, m);
    let k1 = 2.0 * sup_w.powf(3.0 - 2.0 * m);
    let k2 = 8.0 * sup_w.powf(4.0 - 2.0 * m) * k0 * k0;
    let k0_ap = a_quotient_derivative_bound(bounds.w0(), bounds.w1(), m);
    let w1 = bounds.w1();
    let k1_apriori = 2.0 * w1.powf(3.0 - 2.0 * m);
    let k2_apriori = 8.0 * w1.powf(4.0 - 2.0 * m) * k0_ap * k0_ap;
    let k2_short = 4.0 * w1.powf(2.0 * (1.0 - m)) * k0_ap;
    let r = bundle.remainder;
    let sigma = fisher_sigma(params);
    FisherComparison {
        k1,
        k2,
        k1_apriori,
        k2_apriori,
        k2_short,
        remainder: r,
        margin: k1 * bundle.i_nl + k2 * r - bundle.i_lin,
        margin_apriori: k1_apriori * bundle.i_nl + k2_apriori * r - bundle.i_lin,
        margin_short: k1_apriori * bundle.i_nl + k2_short * r - bundle.i_lin,
        sigma,
        remainder_ratio: if bundle.f_nl > 0.0 { r / bundle.f_nl.powf(1.0 + sigma) } else { f64::NAN },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpEntropyBound {
    /// `2 + m/(1-m)`; `d/2` at `m*`.
    pub p: f64,
    /// `‖w - 1‖_p^p` in Lebesgue measure.
    pub lhs: f64,
    /// `(D0-D*)(D*-D1)/(1-m)² (1 + D*/D1)^{(2-m)/(1-m)}`.
    pub dbar: f64,
    /// `((D0-D1)/(1-m))^{m/(1-m)} (1 + D*/D1)^{m(2-m)/(1-m)²}`; an alternative
    /// constant, only meaningful for `m ≥ 0`.
    pub dbar_power: f64,
    pub f_lin: f64,
    /// `dbar F - lhs`
    pub margin: f64,
    pub margin_power: f64,
    pub power_form_applies: bool,
}

/// `p = 2 + m/(1-m)`.
pub fn lp_index(params: &crate::DiffusionParams) -> f64 {
    let m = params.m();
    2.0 + m / (1.0 - m)
}

/// Checks `‖w - 1‖_p^p ≤ D̄ F[w]` on a snapshot.
pub fn check_lp_entropy_bound(snap: &FlowSnapshot) -> Result<LpEntropyBound> {
    let bounds = snap.bounds();
    let params = bounds.params();
    let m = params.m();
    let p = lp_index(params);
    if !(p > 0.0) {
        return Err(Error::InvalidParams(format!("norm index p = {p} is not positive")));
    }
    let grid = snap.grid();
    let abs_p: Vec<f64> = snap.h().values().iter().map(|h| h.abs().powf(p)).collect();
    let star = bounds.star();
    let lhs = grid.integrate(&abs_p, Weight::Lebesgue, &star);
    let sq: Vec<f64> = snap.h().values().iter().map(|h| h * h).collect();
    let f_lin = grid.integrate(&sq, Weight::ProfileM, &star);
    let om = 1.0 - m;
    let (d0, ds, d1) = (bounds.d0(), bounds.d_star(), bounds.d1());
    let dbar = (d0 - ds) * (ds - d1) / (om * om) * (1.0 + ds / d1).powf((2.0 - m) / om);
    let dbar_power = ((d0 - d1) / om).powf(m / om) * (1.0 + ds / d1).powf(m * (2.0 - m) / (om * om));
    Ok(LpEntropyBound {
        p,
        lhs,
        dbar,
        dbar_power,
        f_lin,
        margin: dbar * f_lin - lhs,
        margin_power: dbar_power * f_lin - lhs,
        power_form_applies: m >= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    /// `(s, d𝓕/ds + 𝓘)` at each interior cadence point considered.
    pub residuals: Vec<(f64, f64)>,
    /// `max |d𝓕/ds + 𝓘| / max(𝓘, floor)` over the same points.
    pub max_relative: f64,
    /// `|𝓕(a) - 𝓕(end) - ∫_a^end 𝓘 ds| / (𝓕(a) - 𝓕(end))` with the trapezoid
    /// rule, `a` the first cadence time `≥ s_from`.
    pub integrated_relative: f64,
}

/// Central-difference check of `d𝓕/ds = -𝓘` on the interior points with
/// `s ≥ s_from`. Points where `𝓘 ≤ floor` are compared against `floor`.
///
/// Backward Euler makes the residual first order in the step, so it halves
/// when the step cap is halved.
pub fn dissipation_residual(series: &FlowTimeSeries, s_from: f64, floor: f64) -> DissipationReport {
    let rows = series.rows();
    let mut residuals = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 1..rows.len().saturating_sub(1) {
        if rows[i].s < s_from {
            continue;
        }
        let dfds = (rows[i + 1].f_nl - rows[i - 1].f_nl) / (rows[i + 1].s - rows[i - 1].s);
        let res = dfds + rows[i].i_nl;
        residuals.push((rows[i].s, res));
        let scale = rows[i].i_nl.max(floor);
        if res != 0.0 {
            worst = worst.max(res.abs() / scale);
        }
    }
    let tail: Vec<&FunctionalBundle> = rows.iter().filter(|r| r.s >= s_from).collect();
    let mut integral = 0.0;
    for w in tail.windows(2) {
        integral += 0.5 * (w[0].i_nl + w[1].i_nl) * (w[1].s - w[0].s);
    }
    let drop = tail.first().map_or(0.0, |r| r.f_nl) - tail.last().map_or(0.0, |r| r.f_nl);
    DissipationReport {
        residuals,
        max_relative: worst,
        integrated_relative: if drop > 0.0 { (drop - integral).abs() / drop } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherEvolution {
    pub peak: f64,
    /// `sup_{s ≥ s0} 𝓘`.
    pub sup_after_s0: f64,
    /// `max_{s ∈ [s_end/2, s_end]} 𝓘 / peak`.
    pub tail_fraction: f64,
    /// Least-squares fit of `d𝓘/ds ≈ κ1 𝓘 - κ2 𝓘²` on `s ≥ s0`.
    pub kappa1_lsq: f64,
    pub kappa2_lsq: f64,
    /// Smallest `κ1` making the differential inequality hold at every sample
    /// with `κ2 = max(κ2_lsq, 0)`.
    pub kappa1_envelope: f64,
    /// `max 𝓘(s)/Z(s)` for the Bernoulli comparison solution started at `s0`.
    pub max_ratio_to_bernoulli: f64,
}

/// Solution of `Z' = κ1 Z - κ2 Z²`, `Z(0) = z0`, at elapsed time `t`.
pub fn bernoulli_solution(kappa1: f64, kappa2: f64, z0: f64, t: f64) -> f64 {
    let growth = (kappa1 * t).exp();
    let integral = if kappa1.abs() < 1e-14 { t } else { (kappa1 * t).exp_m1() / kappa1 };
    growth / (1.0 / z0 + kappa2 * integral)
}

/// Qualitative behaviour of `𝓘(s)`: bounded after `s0`, decaying, and
/// dominated by the Bernoulli envelope built from fitted constants.
pub fn fisher_evolution_check(series: &FlowTimeSeries, s0: f64) -> Result<FisherEvolution> {
    let rows = series.rows();
    if rows.len() < 5 {
        return Err(Error::InvalidParams("series too short for Fisher evolution check".into()));
    }
    let s_end = rows[rows.len() - 1].s;
    let peak = rows.iter().fold(0.0f64, |a, r| a.max(r.i_nl));
    let sup_after_s0 = rows.iter().filter(|r| r.s >= s0).fold(0.0f64, |a, r| a.max(r.i_nl));
    let tail = rows.iter().filter(|r| r.s >= 0.5 * s_end).fold(0.0f64, |a, r| a.max(r.i_nl));
    let tail_fraction = if peak > 0.0 { tail / peak } else { 0.0 };

    let mut samples = Vec::new();
    for i in 1..rows.len() - 1 {
        if rows[i].s < s0 || rows[i].i_nl <= 0.0 {
            continue;
        }
        let di = (rows[i + 1].i_nl - rows[i - 1].i_nl) / (rows[i + 1].s - rows[i - 1].s);
        samples.push((rows[i].s, rows[i].i_nl, di));
    }
    if samples.len() < 3 {
        return Ok(FisherEvolution {
            peak,
            sup_after_s0,
            tail_fraction,
            kappa1_lsq: 0.0,
            kappa2_lsq: 0.0,
            kappa1_envelope: 0.0,
            max_ratio_to_bernoulli: 0.0,
        });
    }
    // normal equations for y = κ1 x - κ2 x², columns scaled by their maxima
    let xmax = samples.iter().fold(0.0f64, |a, s| a.max(s.1));
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(_, x, y) in &samples {
        let u = x / xmax;
        let q = -(x / xmax) * (x / xmax);
        a11 += u * u;
        a12 += u * q;
        a22 += q * q;
        b1 += u * y;
        b2 += q * y;
    }
    let det = a11 * a22 - a12 * a12;
    let (c1, c2) = if det.abs() > 1e-300 {
        ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
    } else {
        (b1 / a11, 0.0)
    };
    let kappa1_lsq = c1 / xmax;
    let kappa2_lsq = c2 / (xmax * xmax);
    let kappa2 = kappa2_lsq.max(0.0);
    let kappa1_envelope = samples
        .iter()
        .map(|&(_, x, y)| (y + kappa2 * x * x) / x)
        .fold(f64::NEG_INFINITY, f64::max);

    let (s1, z0, _) = samples[0];
    let mut max_ratio: f64 = 0.0;
    for r in rows.iter().filter(|r| r.s >= s1) {
        let z = bernoulli_solution(kappa1_envelope, kappa2, z0, r.s - s1);
        max_ratio = max_ratio.max(r.i_nl / z);
    }
    Ok(FisherEvolution {
        peak,
        sup_after_s0,
        tail_fraction,
        kappa1_lsq,
        kappa2_lsq,
        kappa1_envelope,
        max_ratio_to_bernoulli: max_ratio,
    })
}
