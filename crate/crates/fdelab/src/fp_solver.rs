//! Implicit well-balanced solver for the rescaled nonlinear flow
//!
//! ```text
//! ∂_s v = ∇·[ v ∇Ω ],   Ω = (v^{m-1} - V_{D*}^{m-1})/(m-1)
//! ```
//!
//! The unknown is the relative deviation `h = w - 1 = v/V_{D*} - 1`, which keeps
//! full precision in the far field where `v` itself is tiny. The flux across an
//! edge is `K_e · hm(v) · ΔΩ` with the harmonic mean of `v` at the endpoints,
//! so `h ≡ 0` is an exact discrete steady state. Each step is backward Euler
//! solved by damped Newton on a tridiagonal Jacobian.

use std::sync::Arc;

use crate::entropy_functionals::{omega_factor, omega_factor_derivative, FunctionalEvaluator};
use crate::profiles::{BarenblattProfile, SandwichBounds};
use crate::radial_grid::{RadialField, RadialGrid, Weight};
use crate::rate_analysis::{FlowTimeSeries, RunMetadata};
use crate::{tridiag, Error, Result};

/// What happens at `r = R_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OuterBoundary {
    /// `w = 1` at the last node. Leaks a little mass once the perturbation
    /// reaches the boundary; the leak is measured, not hidden.
    #[default]
    Dirichlet,
    /// No flux through `R_max`. Conserves mass exactly but the truncated
    /// domain then carries an extra constant mode.
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// `±ε cos²(π(r - c)/(2 width))` on `|r - c| < width`, applied to `w - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub sign: Sign,
}

impl Bump {
    pub fn positive(center: f64, width: f64, amplitude: f64) -> Self {
        Self { center, width, amplitude, sign: Sign::Positive }
    }

    pub fn negative(center: f64, width: f64, amplitude: f64) -> Self {
        Self { center, width, amplitude, sign: Sign::Negative }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let x = (r - self.center) / self.width;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let c = (0.5 * std::f64::consts::PI * x).cos();
        self.sign.factor() * self.amplitude * c * c
    }

    fn outer_radius(&self) -> f64 {
        self.center + self.width
    }
}

/// Initial datum `v0 = V_{D*} (1 + Σ bumps)`, trapped between `V_{D0}` and `V_{D1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataSpec {
    pub bounds: SandwichBounds,
    pub bumps: Vec<Bump>,
    /// Rescale the negative bumps so that `∫(v0 - V_{D*}) = 0`.
    ///
    /// Away from `m*` the mass of the perturbation selects which profile the
    /// flow converges to; zero mass keeps that profile equal to `V_{D*}`.
    pub balance_mass: bool,
}

impl InitialDataSpec {
    pub fn stationary(bounds: SandwichBounds) -> Self {
        Self { bounds, bumps: Vec::new(), balance_mass: false }
    }

    pub fn single_bump(bounds: SandwichBounds, bump: Bump) -> Self {
        Self { bounds, bumps: vec![bump], balance_mass: false }
    }

    /// Largest radius touched by the perturbation.
    pub fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .filter(|b| b.amplitude != 0.0)
            .map(Bump::outer_radius)
            .fold(0.0, f64::max)
    }
}

/// What [`make_initial_data`] had to do to the requested datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDataReport {
    pub clamped_nodes: usize,
    pub relative_mass: f64,
    pub negative_scale: f64,
}

/// The state at one rescaled time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSnapshot {
    s: f64,
    bounds: SandwichBounds,
    h: RadialField,
    v: RadialField,
    w: RadialField,
    g: RadialField,
}

impl FlowSnapshot {
    /// Builds the snapshot from `h = w - 1`.
    pub fn from_deviation(s: f64, bounds: SandwichBounds, h: RadialField) -> Result<Self> {
        let grid = h.grid().clone();
        let star = bounds.star();
        let m = bounds.params().m();
        let (mut v, mut w, mut g) = (Vec::new(), Vec::new(), Vec::new());
        for (&r, &hi) in grid.nodes().iter().zip(h.values()) {
            let vs = star.eval(r);
            v.push(vs * (1.0 + hi));
            w.push(1.0 + hi);
            g.push(hi * star.pow(r, m - 1.0));
        }
        Ok(Self {
            s,
            bounds,
            v: RadialField::new(grid.clone(), v)?,
            w: RadialField::new(grid.clone(), w)?,
            g: RadialField::new(grid, g)?,
            h,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn bounds(&self) -> &SandwichBounds {
        &self.bounds
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.h.grid()
    }
    /// `w - 1`, kept separately because `w` rounds to 1 in the far field.
    pub fn h(&self) -> &RadialField {
        &self.h
    }
    pub fn v(&self) -> &RadialField {
        &self.v
    }
    pub fn w(&self) -> &RadialField {
        &self.w
    }
    /// `(w - 1) V_{D*}^{m-1}`.
    pub fn g(&self) -> &RadialField {
        &self.g
    }

    /// `∫(v - V_{D*}) dy`.
    pub fn relative_mass(&self) -> f64 {
        let star = self.bounds.star();
        self.h.weighted_integral(Weight::Profile, &star)
    }

    /// Largest excursion outside `[V_{D0}, V_{D1}]`, measured on `w`; zero if inside.
    pub fn sandwich_excess(&self) -> (f64, f64) {
        let mut worst = (0.0, 0.0);
        for (&r, &hi) in self.grid().nodes().iter().zip(self.h.values()) {
            let (lo, up) = self.bounds.h_range(r);
            let excess = (lo - hi).max(hi - up);
            if excess > worst.0 {
                worst = (excess, r);
            }
        }
        worst
    }
}

/// Builds `v0`, clamping into the sandwich if the bumps are too tall.
pub fn make_initial_data(
    spec: &InitialDataSpec,
    grid: Arc<RadialGrid>,
) -> Result<(FlowSnapshot, InitialDataReport)> {
    for b in &spec.bumps {
        if !(b.width > 0.0 && b.amplitude >= 0.0 && b.center >= 0.0)
            || !(b.center.is_finite() && b.width.is_finite() && b.amplitude.is_finite())
        {
            return Err(Error::InvalidParams(format!("bad bump {b:?}")));
        }
    }
    if spec.support_radius() >= grid.r_max() {
        return Err(Error::InvalidParams(format!(
            "perturbation support {} reaches R_max = {}",
            spec.support_radius(),
            grid.r_max()
        )));
    }
    let star = spec.bounds.star();
    let nodes = grid.nodes();
    let part = |sign: Sign| -> Vec<f64> {
        nodes
            .iter()
            .map(|&r| spec.bumps.iter().filter(|b| b.sign == sign).map(|b| b.eval(r)).sum())
            .collect()
    };
    let pos = part(Sign::Positive);
    let neg = part(Sign::Negative);
    let mut negative_scale = 1.0;
    if spec.balance_mass {
        let mp = grid.integrate(&pos, Weight::Profile, &star);
        let mn = grid.integrate(&neg, Weight::Profile, &star);
        if mn == 0.0 || mp == 0.0 {
            return Err(Error::InvalidParams(
                "mass balancing needs both positive and negative bumps".into(),
            ));
        }
        negative_scale = -mp / mn;
    }
    let mut clamped = 0;
    let mut h = Vec::with_capacity(nodes.len());
    for (i, &r) in nodes.iter().enumerate() {
        let raw = pos[i] + negative_scale * neg[i];
        let (lo, up) = spec.bounds.h_range(r);
        let c = raw.clamp(lo, up);
        if c != raw {
            clamped += 1;
        }
        h.push(c);
    }
    let h = RadialField::new(grid, h)?;
    let snap = FlowSnapshot::from_deviation(0.0, spec.bounds, h)?;
    let relative_mass = snap.relative_mass();
    Ok((snap, InitialDataReport { clamped_nodes: clamped, relative_mass, negative_scale }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub ds_initial: f64,
    pub ds_max: f64,
    pub growth: f64,
    /// Newton counts as fast below this many iterations and `ds` may grow.
    pub fast_iterations: u32,
    pub max_iterations: u32,
    /// Relative tolerance on the Newton update, measured in `g` units.
    pub newton_tol: f64,
    pub max_halvings: u32,
    /// Allowed excursion of `w` outside the sandwich.
    pub sandwich_tol: f64,
    pub boundary: OuterBoundary,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            ds_initial: 1e-3,
            ds_max: 0.1,
            growth: 1.2,
            fast_iterations: 4,
            max_iterations: 30,
            newton_tol: 1e-11,
            max_halvings: 30,
            sandwich_tol: 1e-10,
            boundary: OuterBoundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub steps: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    pub min_ds: f64,
    pub max_ds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: FlowTimeSeries,
    pub snapshots: Vec<FlowSnapshot>,
    pub stats: RunStats,
    pub initial: InitialDataReport,
}

/// Backward-Euler stepper for one grid and one set of bounds.
#[derive(Debug, Clone)]
pub struct FpSolver {
    grid: Arc<RadialGrid>,
    bounds: SandwichBounds,
    settings: SolverSettings,
    /// `V_{D*}` at the nodes.
    v_star: Vec<f64>,
    /// `V_{D*}^{m-1}` at the nodes.
    v_m1: Vec<f64>,
    /// `cell_i · V_{D*,i}`: converts `dh/ds` into a mass rate.
    mass: Vec<f64>,
    h_lo: Vec<f64>,
    h_up: Vec<f64>,
}

struct StepOutcome {
    h: Vec<f64>,
    iterations: u32,
}

impl FpSolver {
    pub fn new(grid: Arc<RadialGrid>, bounds: SandwichBounds, settings: SolverSettings) -> Result<Self> {
        if !(settings.ds_initial > 0.0 && settings.ds_max >= settings.ds_initial) {
            return Err(Error::InvalidParams("need 0 < ds_initial <= ds_max".into()));
        }
        if grid.d() != bounds.params().d() {
            return Err(Error::InvalidParams("grid and parameters disagree on dimension".into()));
        }
        let star = bounds.star();
        let m = bounds.params().m();
        let nodes = grid.nodes();
        let v_star: Vec<f64> = nodes.iter().map(|&r| star.eval(r)).collect();
        let v_m1 = nodes.iter().map(|&r| star.pow(r, m - 1.0)).collect();
        let mass = v_star.iter().zip(grid.cell_weights()).map(|(v, c)| v * c).collect();
        let (h_lo, h_up) = nodes.iter().map(|&r| bounds.h_range(r)).unzip();
        Ok(Self { grid, bounds, settings, v_star, v_m1, mass, h_lo, h_up })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn bounds(&self) -> &SandwichBounds {
        &self.bounds
    }
    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }
    pub fn profile(&self) -> BarenblattProfile {
        self.bounds.star()
    }

    /// Number of unknowns: the Dirichlet node is pinned.
    fn n_unknowns(&self) -> usize {
        match self.settings.boundary {
            OuterBoundary::Dirichlet => self.grid.n(),
            OuterBoundary::ZeroFlux => self.grid.n() + 1,
        }
    }

    /// One Newton solve for the backward-Euler update over `ds`.
    fn newton(&self, h_old: &[f64], ds: f64) -> std::result::Result<StepOutcome, f64> {
        let m = self.bounds.params().m();
        let n_nodes = h_old.len();
        let nu = self.n_unknowns();
        let cond = self.grid.edge_conductance();
        let n_edges = match self.settings.boundary {
            OuterBoundary::Dirichlet => nu,
            OuterBoundary::ZeroFlux => nu - 1,
        };

        let mut h = h_old.to_vec();
        let g_scale = h_old
            .iter()
            .zip(&self.v_m1)
            .fold(0.0f64, |a, (h, s)| a.max((h * s).abs()))
            .max(f64::MIN_POSITIVE);

        let mut omega = vec![0.0; n_nodes];
        let mut d_omega = vec![0.0; n_nodes];
        let mut resid = vec![0.0; nu];
        let mut diag = vec![0.0; nu];
        let mut sub = vec![0.0; nu.saturating_sub(1)];
        let mut sup = vec![0.0; nu.saturating_sub(1)];
        let mut last_update = f64::INFINITY;

        for it in 1..=self.settings.max_iterations {
            for i in 0..n_nodes {
                omega[i] = self.v_m1[i] * omega_factor(h[i], m);
                d_omega[i] = self.v_m1[i] * omega_factor_derivative(h[i], m);
            }
            for i in 0..nu {
                resid[i] = self.mass[i] * (h[i] - h_old[i]) / ds;
                diag[i] = self.mass[i] / ds;
            }
            sub.iter_mut().for_each(|x| *x = 0.0);
            sup.iter_mut().for_each(|x| *x = 0.0);
            for e in 0..n_edges {
                let (a, b) = (e, e + 1);
                let va = self.v_star[a] * (1.0 + h[a]);
                let vb = self.v_star[b] * (1.0 + h[b]);
                let sum = va + vb;
                let hm = 2.0 * va * vb / sum;
                let dhm_a = 2.0 * vb * vb / (sum * sum) * self.v_star[a];
                let dhm_b = 2.0 * va * va / (sum * sum) * self.v_star[b];
                let dom = omega[b] - omega[a];
                let flux = cond[e] * hm * dom;
                let df_da = cond[e] * (dhm_a * dom - hm * d_omega[a]);
                let df_db = cond[e] * (dhm_b * dom + hm * d_omega[b]);
                // node a loses the flux, node b gains it
                resid[a] -= flux;
                diag[a] -= df_da;
                if b < nu {
                    resid[b] += flux;
                    diag[b] += df_db;
                    sup[a] = -df_db;
                    sub[a] = df_da;
                }
            }
            if resid.iter().all(|&x| x == 0.0) {
                return Ok(StepOutcome { h, iterations: it });
            }
            let mut delta: Vec<f64> = resid.iter().map(|x| -x).collect();
            if tridiag::solve(&sub, &diag, &sup, &mut delta).is_err() {
                return Err(last_update);
            }
            // damping: never let w reach zero
            let mut lambda = 1.0;
            while (0..nu).any(|i| 1.0 + h[i] + lambda * delta[i] <= 0.0) {
                lambda *= 0.5;
                if lambda < 1e-8 {
                    return Err(last_update);
                }
            }
            let mut update = 0.0f64;
            for i in 0..nu {
                h[i] += lambda * delta[i];
                update = update.max((delta[i] * self.v_m1[i]).abs());
            }
            if !update.is_finite() {
                return Err(last_update);
            }
            last_update = update / g_scale;
            if lambda == 1.0 && update <= self.settings.newton_tol * g_scale {
                return Ok(StepOutcome { h, iterations: it });
            }
        }
        Err(last_update)
    }

    fn check_sandwich(&self, s: f64, h: &[f64]) -> Result<()> {
        let tol = self.settings.sandwich_tol;
        for (i, &hi) in h.iter().enumerate() {
            let excess = (self.h_lo[i] - hi).max(hi - self.h_up[i]);
            if excess > tol {
                return Err(Error::SandwichViolation { s, r: self.grid.nodes()[i], excess });
            }
        }
        Ok(())
    }

    fn snapshot(&self, s: f64, h: Vec<f64>) -> Result<FlowSnapshot> {
        FlowSnapshot::from_deviation(s, self.bounds, RadialField::new(self.grid.clone(), h)?)
    }

    /// Advances `snap` by exactly `ds`.
    ///
    /// If Newton fails the interval is split in halves, up to the configured
    /// number of halvings.
    pub fn step(&self, snap: &FlowSnapshot, ds: f64) -> Result<FlowSnapshot> {
        if !(ds > 0.0 && ds <= self.settings.ds_max) {
            return Err(Error::InvalidParams(format!(
                "step ds = {ds} outside (0, {}]",
                self.settings.ds_max
            )));
        }
        let h = self.advance_exact(snap.h().values(), snap.s(), ds, 0)?;
        self.check_sandwich(snap.s() + ds, &h)?;
        self.snapshot(snap.s() + ds, h)
    }

    fn advance_exact(&self, h: &[f64], s: f64, ds: f64, depth: u32) -> Result<Vec<f64>> {
        match self.newton(h, ds) {
            Ok(out) => Ok(out.h),
            Err(update) => {
                if depth >= self.settings.max_halvings {
                    return Err(Error::NewtonFailed { s, ds, retries: depth, update });
                }
                let half = 0.5 * ds;
                let mid = self.advance_exact(h, s, half, depth + 1)?;
                self.advance_exact(&mid, s + half, half, depth + 1)
            }
        }
    }

    /// Marches to `s_end`, evaluating the functionals every `cadence`.
    ///
    /// Steps are shortened to land on every cadence point. With
    /// `retain_snapshots` the state at each cadence point is kept as well.
    pub fn run(
        &self,
        initial: &FlowSnapshot,
        s_end: f64,
        cadence: f64,
        retain_snapshots: bool,
    ) -> Result<(FlowTimeSeries, Vec<FlowSnapshot>, RunStats)> {
        let mut snapshots = Vec::new();
        let (series, stats) = self.run_observed(initial, s_end, cadence, &mut |snap| {
            if retain_snapshots {
                snapshots.push(snap.clone());
            }
            Ok(())
        })?;
        Ok((series, snapshots, stats))
    }

    /// Like [`FpSolver::run`], handing each cadence state (the initial one
    /// included) to `observer` instead of keeping it. An observer error stops the run.
    pub fn run_observed(
        &self,
        initial: &FlowSnapshot,
        s_end: f64,
        cadence: f64,
        observer: &mut dyn FnMut(&FlowSnapshot) -> Result<()>,
    ) -> Result<(FlowTimeSeries, RunStats)> {
        if !(s_end > 0.0) || !(cadence > 0.0) {
            return Err(Error::InvalidParams("need s_end > 0 and cadence > 0".into()));
        }
        let eval = FunctionalEvaluator::new(self.grid.clone(), self.bounds);
        let mut rows = vec![eval.evaluate(initial)];
        observer(initial)?;
        let mut stats = RunStats { min_ds: f64::INFINITY, ..Default::default() };
        let mut h = initial.h().values().to_vec();
        let mut s = initial.s();
        let mut ds = self.settings.ds_initial.min(cadence);
        let ds_cap = self.settings.ds_max.min(cadence);
        let n_out = (((s_end - s) / cadence) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..=n_out {
            let target = if k == n_out { s_end } else { initial.s() + k as f64 * cadence };
            while s < target {
                let remaining = target - s;
                let last = ds >= remaining * (1.0 - 1e-12);
                let trial = if last { remaining } else { ds };
                let mut halvings = 0;
                let mut try_ds = trial;
                let outcome = loop {
                    match self.newton(&h, try_ds) {
                        Ok(out) => break out,
                        Err(update) => {
                            stats.rejected += 1;
                            halvings += 1;
                            if halvings > self.settings.max_halvings {
                                return Err(Error::NewtonFailed { s, ds: try_ds, retries: halvings, update });
                            }
                            try_ds *= 0.5;
                        }
                    }
                };
                stats.steps += 1;
                stats.newton_iterations += outcome.iterations as usize;
                stats.min_ds = stats.min_ds.min(try_ds);
                stats.max_ds = stats.max_ds.max(try_ds);
                s = if last && halvings == 0 { target } else { s + try_ds };
                h = outcome.h;
                self.check_sandwich(s, &h)?;
                if halvings > 0 {
                    ds = try_ds;
                } else if outcome.iterations < self.settings.fast_iterations && !last {
                    ds = (ds * self.settings.growth).min(ds_cap);
                }
            }
            let snap = self.snapshot(target, h.clone())?;
            rows.push(eval.evaluate(&snap));
            observer(&snap)?;
        }
        let meta = RunMetadata::new(self.bounds, &self.grid, initial, self.settings.boundary);
        Ok((FlowTimeSeries::new(rows, meta)?, stats))
    }

    /// Builds the initial datum and runs it.
    pub fn run_spec(
        &self,
        spec: &InitialDataSpec,
        s_end: f64,
        cadence: f64,
        retain_snapshots: bool,
    ) -> Result<RunOutput> {
        let (init, report) = make_initial_data(spec, self.grid.clone())?;
        let (series, snapshots, stats) = self.run(&init, s_end, cadence, retain_snapshots)?;
        Ok(RunOutput { series, snapshots, stats, initial: report })
    }
}

/// Constant of the pointwise bound `∂_s v ≤ κ1 v` valid for `s ≥ s0`.
pub fn benilan_crandall_kappa1(params: &crate::DiffusionParams, s0: f64) -> f64 {
    let d = params.d() as f64;
    let om = 1.0 - params.m();
    let c = d * om - 2.0;
    let e = (s0 * om * c / 2.0).exp_m1();
    2.0 / (c * om) * (d / c + 1.0 / (om * e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenilanCrandallReport {
    pub kappa1: f64,
    /// Largest `(∂_s v - κ1 v)/(κ1 v)` over the nodes; `≤ 0` means no violation.
    pub max_violation: f64,
    /// Radius where the worst value occurs.
    pub at_radius: f64,
}

/// Checks the finite-difference form of `∂_s v ≤ κ1 v` between two snapshots.
pub fn benilan_crandall_check(prev: &FlowSnapshot, next: &FlowSnapshot, s0: f64) -> Result<BenilanCrandallReport> {
    let ds = next.s() - prev.s();
    if !(prev.s() >= s0 && s0 > 0.0 && ds > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need s >= s0 > 0 and increasing times, got s = {}, s0 = {s0}, ds = {ds}",
            prev.s()
        )));
    }
    let kappa1 = benilan_crandall_kappa1(prev.bounds().params(), s0);
    let nodes = prev.grid().nodes();
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for i in 0..nodes.len() {
        let v = prev.v().values()[i];
        // (v⁺ - v)/ds with the difference formed on h for far-field precision
        let vs = v / prev.w().values()[i];
        let dv = vs * (next.h().values()[i] - prev.h().values()[i]) / ds;
        let rel = (dv - kappa1 * v) / (kappa1 * v);
        if rel > worst.0 {
            worst = (rel, nodes[i]);
        }
    }
    Ok(BenilanCrandallReport { kappa1, max_violation: worst.0, at_radius: worst.1 })
}
