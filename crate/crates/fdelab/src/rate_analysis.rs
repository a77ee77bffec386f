//! Decay-rate fitting on time series: power laws, exponentials, model
//! selection across exponents, and the good-times diagnostic.

use crate::entropy_functionals::{check_fisher_comparison, FunctionalBundle};
use crate::fp_solver::{Bump, FlowSnapshot, FpSolver, InitialDataSpec, OuterBoundary, SolverSettings};
use crate::profiles::{DiffusionParams, SandwichBounds};
use crate::radial_grid::RadialGrid;
use crate::{Error, Result};

/// Grid and data provenance of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub params: DiffusionParams,
    pub bounds: SandwichBounds,
    pub r_max: f64,
    pub n: usize,
    pub core_fraction: f64,
    pub boundary: OuterBoundary,
    /// FNV-1a over the bits of the initial `w - 1`.
    pub initial_hash: u64,
}

impl RunMetadata {
    pub fn new(bounds: SandwichBounds, grid: &RadialGrid, initial: &FlowSnapshot, boundary: OuterBoundary) -> Self {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in initial.h().values() {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        Self {
            params: *bounds.params(),
            bounds,
            r_max: grid.r_max(),
            n: grid.n(),
            core_fraction: grid.core_fraction(),
            boundary,
            initial_hash: hash,
        }
    }
}

/// Functionals recorded along one run, in increasing `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTimeSeries {
    rows: Vec<FunctionalBundle>,
    meta: RunMetadata,
}

impl FlowTimeSeries {
    pub fn new(rows: Vec<FunctionalBundle>, meta: RunMetadata) -> Result<Self> {
        if rows.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::InvalidParams("series times must be strictly increasing".into()));
        }
        Ok(Self { rows, meta })
    }

    pub fn rows(&self) -> &[FunctionalBundle] {
        &self.rows
    }
    pub fn meta(&self) -> &RunMetadata {
        &self.meta
    }
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.s).collect()
    }
    pub fn column(&self, c: Column) -> Vec<f64> {
        self.rows.iter().map(|r| c.of(r)).collect()
    }
    pub fn s_end(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.s)
    }

    /// Last half of the run without the final 5%.
    pub fn default_window(&self) -> Window {
        let s_end = self.s_end();
        Window::new(0.5 * s_end, 0.95 * s_end)
    }
}

/// A named column of [`FunctionalBundle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    EntropyNonlinear,
    FisherNonlinear,
    EntropyLinear,
    FisherLinear,
    L2Deviation,
    L2DeviationWeighted,
    SupRelativeError,
    SupG,
    Remainder,
    RelativeMass,
}

impl Column {
    pub const ALL: [Column; 10] = [
        Column::EntropyNonlinear,
        Column::FisherNonlinear,
        Column::EntropyLinear,
        Column::FisherLinear,
        Column::L2Deviation,
        Column::L2DeviationWeighted,
        Column::SupRelativeError,
        Column::SupG,
        Column::Remainder,
        Column::RelativeMass,
    ];

    pub fn of(self, b: &FunctionalBundle) -> f64 {
        match self {
            Column::EntropyNonlinear => b.f_nl,
            Column::FisherNonlinear => b.i_nl,
            Column::EntropyLinear => b.f_lin,
            Column::FisherLinear => b.i_lin,
            Column::L2Deviation => b.l2_dev,
            Column::L2DeviationWeighted => b.l2_dev_weighted,
            Column::SupRelativeError => b.sup_rel_err,
            Column::SupG => b.n_g,
            Column::Remainder => b.remainder,
            Column::RelativeMass => b.rel_mass,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::EntropyNonlinear => "entropy_nl",
            Column::FisherNonlinear => "fisher_nl",
            Column::EntropyLinear => "entropy_lin",
            Column::FisherLinear => "fisher_lin",
            Column::L2Deviation => "l2_dev",
            Column::L2DeviationWeighted => "l2_dev_weighted",
            Column::SupRelativeError => "sup_rel_err",
            Column::SupG => "sup_g",
            Column::Remainder => "remainder",
            Column::RelativeMass => "rel_mass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    fn contains(&self, s: f64) -> bool {
        s >= self.start && s <= self.end
    }

    /// Both ends multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { start: self.start * factor, end: self.end * factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Power,
    Exponential,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Power => "power",
            Model::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: Model,
    /// Power: the exponent `p` in `C s^p`. Exponential: the rate `k` in `C e^{-k s}`.
    pub exponent_or_rate: f64,
    /// `log C`.
    pub intercept: f64,
    /// The window as requested.
    pub window: Window,
    pub rms_residual: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl RateFit {
    pub fn predict(&self, s: f64) -> f64 {
        match self.model {
            Model::Power => (self.intercept + self.exponent_or_rate * s.ln()).exp(),
            Model::Exponential => (self.intercept - self.exponent_or_rate * s).exp(),
        }
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (a, b) in x.iter().zip(y) {
        let e = b - (intercept + slope * a);
        ss_res += e * e;
    }
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, (ss_res / n).sqrt(), r2)
}

/// Fits `model` to the samples with `t` inside `window`.
pub fn fit_samples(t: &[f64], y: &[f64], window: Window, model: Model) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if !window.contains(ti) {
            continue;
        }
        if !(yi > 0.0) || !yi.is_finite() {
            return Err(Error::Fit {
                model: model.name(),
                reason: format!("value {yi} at s = {ti} is not positive; try the other model or trim the noise floor"),
            });
        }
        if model == Model::Power && !(ti > 0.0) {
            return Err(Error::Fit { model: model.name(), reason: "power fit needs s > 0".into() });
        }
        xs.push(match model {
            Model::Power => ti.ln(),
            Model::Exponential => ti,
        });
        ys.push(yi.ln());
    }
    if xs.len() < 3 {
        return Err(Error::Fit {
            model: model.name(),
            reason: format!("only {} samples in [{}, {}]", xs.len(), window.start, window.end),
        });
    }
    let (slope, intercept, rms, r2) = least_squares(&xs, &ys);
    Ok(RateFit {
        model,
        exponent_or_rate: match model {
            Model::Power => slope,
            Model::Exponential => -slope,
        },
        intercept,
        window,
        rms_residual: rms,
        r_squared: r2,
        points: xs.len(),
    })
}

pub fn fit_power(series: &FlowTimeSeries, column: Column, window: Window) -> Result<RateFit> {
    fit_samples(&series.times(), &series.column(column), window, Model::Power)
}

pub fn fit_exponential(series: &FlowTimeSeries, column: Column, window: Window) -> Result<RateFit> {
    fit_samples(&series.times(), &series.column(column), window, Model::Exponential)
}

/// Largest change of the fitted power exponent when the window is scaled by
/// `1 ± shift`, ends clipped to the series.
pub fn window_shift_sensitivity(
    series: &FlowTimeSeries,
    column: Column,
    window: Window,
    shift: f64,
) -> Result<f64> {
    let base = fit_power(series, column, window)?.exponent_or_rate;
    let s_end = series.s_end();
    let mut worst: f64 = 0.0;
    for f in [1.0 - shift, 1.0 + shift] {
        let w = window.scaled(f);
        let w = Window::new(w.start, w.end.min(s_end));
        worst = worst.max((fit_power(series, column, w)?.exponent_or_rate - base).abs());
    }
    Ok(worst)
}

/// Shrinks `window` so it ends before `column` first drops below
/// `floor · max(column)`. Values under the floor are roundoff, not decay.
pub fn resolved_window(series: &FlowTimeSeries, column: Column, window: Window, floor: f64) -> Window {
    let vals = series.column(column);
    let peak = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut end = window.end;
    for (r, v) in series.rows().iter().zip(&vals) {
        if r.s >= window.start && *v <= floor * peak {
            end = end.min(r.s);
            break;
        }
    }
    Window::new(window.start, end)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelChoice {
    pub power: RateFit,
    pub exponential: RateFit,
    /// `None` when neither r² wins by the margin.
    pub winner: Option<Model>,
}

pub fn select_model(series: &FlowTimeSeries, column: Column, window: Window, margin: f64) -> Result<ModelChoice> {
    let power = fit_power(series, column, window)?;
    let exponential = fit_exponential(series, column, window)?;
    let winner = if exponential.r_squared - power.r_squared >= margin {
        Some(Model::Exponential)
    } else if power.r_squared - exponential.r_squared >= margin {
        Some(Model::Power)
    } else {
        None
    };
    Ok(ModelChoice { power, exponential, winner })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCoverage {
    pub start: f64,
    pub end: f64,
    /// Longest good stretch inside the window.
    pub longest: f64,
    pub has_good_half: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodTimes {
    pub k: f64,
    /// `Some(good)` per cadence time; `None` where `N = I = 0`.
    pub classification: Vec<(f64, Option<bool>)>,
    /// Maximal runs of consecutive good cadence times.
    pub intervals: Vec<(f64, f64)>,
    /// Fraction of classified times that are good.
    pub coverage: f64,
    pub windows: Vec<WindowCoverage>,
    /// Fraction of windows `[2k, 2k+2]` inside the late half that contain a
    /// good stretch of length at least 1/2.
    pub late_window_fraction: f64,
}

/// Marks times with `N⁴ K ≤ I[g]` and looks for good stretches of length
/// `≥ 1/2` inside every window `[2k, 2k+2]`.
pub fn good_times_report(series: &FlowTimeSeries, k: f64) -> GoodTimes {
    let rows = series.rows();
    let classification: Vec<(f64, Option<bool>)> = rows
        .iter()
        .map(|r| {
            let n4 = r.n_g.powi(4);
            if n4 == 0.0 && r.i_lin == 0.0 {
                (r.s, None)
            } else {
                (r.s, Some(n4 * k <= r.i_lin))
            }
        })
        .collect();
    let mut intervals = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for &(s, c) in &classification {
        match (c == Some(true), open) {
            (true, None) => open = Some((s, s)),
            (true, Some((a, _))) => open = Some((a, s)),
            (false, Some(iv)) => {
                intervals.push(iv);
                open = None;
            }
            (false, None) => {}
        }
    }
    if let Some(iv) = open {
        intervals.push(iv);
    }
    let classified = classification.iter().filter(|c| c.1.is_some()).count();
    let good = classification.iter().filter(|c| c.1 == Some(true)).count();
    let coverage = if classified > 0 { good as f64 / classified as f64 } else { 0.0 };

    let s_end = series.s_end();
    let mut windows = Vec::new();
    let mut kk = 0;
    while 2.0 * (kk as f64) + 2.0 <= s_end + 1e-9 {
        let (a, b) = (2.0 * kk as f64, 2.0 * kk as f64 + 2.0);
        let longest = intervals
            .iter()
            .map(|&(x, y)| (y.min(b) - x.max(a)).max(0.0))
            .fold(0.0, f64::max);
        windows.push(WindowCoverage { start: a, end: b, longest, has_good_half: longest >= 0.5 - 1e-9 });
        kk += 1;
    }
    let late: Vec<&WindowCoverage> = windows.iter().filter(|w| w.start >= 0.5 * s_end - 1e-9).collect();
    let late_window_fraction = if late.is_empty() {
        0.0
    } else {
        late.iter().filter(|w| w.has_good_half).count() as f64 / late.len() as f64
    };
    GoodTimes { k, classification, intervals, coverage, windows, late_window_fraction }
}

/// `K = 2 k2 R/N⁴` at the first cadence time `≥ s0`, with `k2` from the
/// Fisher comparison at that time.
///
/// With this `K`, a good time has `k2 R ≤ I/2` whenever the shape ratio
/// `R/N⁴` has not grown since `s0`.
pub fn calibrate_good_times_k(series: &FlowTimeSeries, s0: f64) -> Result<f64> {
    let row = series
        .rows()
        .iter()
        .find(|r| r.s >= s0 && r.n_g > 0.0)
        .ok_or_else(|| Error::InvalidParams(format!("no non-trivial row at s >= {s0}")))?;
    let cmp = check_fisher_comparison(row, &series.meta().bounds);
    Ok(2.0 * cmp.k2 * row.remainder / row.n_g.powi(4))
}

/// Shared setup for comparing runs at several exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub d: u32,
    pub r_max: f64,
    pub n: usize,
    pub core_fraction: f64,
    pub d0: f64,
    pub d_star: f64,
    pub d1: f64,
    /// Perturbation at `m*`.
    pub critical_bumps: Vec<Bump>,
    /// Perturbation elsewhere, balanced to zero relative mass.
    pub other_bumps: Vec<Bump>,
    pub s_end: f64,
    pub cadence: f64,
    /// Fit window as fractions of `s_end`.
    pub window: (f64, f64),
    pub margin: f64,
    /// Values below this fraction of the peak are treated as roundoff.
    pub floor: f64,
    pub settings: SolverSettings,
}

impl ComparisonConfig {
    /// The contrast configuration used throughout the guide: a far-reaching
    /// grid so that the fit window sees the infinite-domain behaviour.
    pub fn reference(d: u32) -> Self {
        Self {
            d,
            r_max: 1e36,
            n: 2000,
            core_fraction: 0.25,
            d0: 2.0,
            d_star: 1.0,
            d1: 0.5,
            critical_bumps: vec![Bump::positive(1.0, 1.0, 0.1)],
            other_bumps: vec![Bump::positive(1.0, 1.0, 0.1), Bump::negative(3.0, 1.0, 0.1)],
            s_end: 200.0,
            cadence: 0.1,
            window: (0.05, 0.95),
            margin: 0.01,
            floor: 1e-24,
            settings: SolverSettings::default(),
        }
    }
}

/// How an exponent is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentChoice {
    Critical,
    Value(f64),
}

impl ExponentChoice {
    pub fn params(self, d: u32) -> Result<DiffusionParams> {
        match self {
            ExponentChoice::Critical => DiffusionParams::critical(d),
            ExponentChoice::Value(m) => DiffusionParams::new(d, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub params: DiffusionParams,
    pub choice: ModelChoice,
    pub window: Window,
    pub series: FlowTimeSeries,
}

/// Runs one exponent of a comparison.
pub fn comparison_row(m: ExponentChoice, cfg: &ComparisonConfig) -> Result<ComparisonRow> {
    let params = m.params(cfg.d)?;
    let bounds = SandwichBounds::new(params, cfg.d0, cfg.d_star, cfg.d1)?;
    let grid = std::sync::Arc::new(RadialGrid::new(cfg.d, cfg.r_max, cfg.n, cfg.core_fraction)?);
    let spec = if params.is_critical() {
        InitialDataSpec { bounds, bumps: cfg.critical_bumps.clone(), balance_mass: false }
    } else {
        InitialDataSpec { bounds, bumps: cfg.other_bumps.clone(), balance_mass: true }
    };
    let solver = FpSolver::new(grid, bounds, cfg.settings)?;
    let out = solver.run_spec(&spec, cfg.s_end, cfg.cadence, false)?;
    let window = resolved_window(
        &out.series,
        Column::EntropyNonlinear,
        Window::new(cfg.window.0 * cfg.s_end, cfg.window.1 * cfg.s_end),
        cfg.floor,
    );
    let choice = select_model(&out.series, Column::EntropyNonlinear, window, cfg.margin)?;
    Ok(ComparisonRow { params, choice, window, series: out.series })
}

/// One row per exponent; a failing row does not stop the others.
pub fn mode_comparison(m_list: &[ExponentChoice], cfg: &ComparisonConfig) -> Vec<Result<ComparisonRow>> {
    m_list.iter().map(|&m| comparison_row(m, cfg)).collect()
}
