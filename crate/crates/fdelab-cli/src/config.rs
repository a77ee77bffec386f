//! Experiment configuration: a TOML file of `[section]`s with `key = value`
//! lines, then `section.key=value` overrides from the command line.

use fdelab::fp_solver::{Bump, OuterBoundary, Sign, SolverSettings};
use fdelab::rate_analysis::ExponentChoice;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ExponentSpec {
    Value(f64),
    Named(String),
}

impl ExponentSpec {
    pub fn choice(&self) -> Result<ExponentChoice, CliError> {
        match self {
            ExponentSpec::Value(m) => Ok(ExponentChoice::Value(*m)),
            ExponentSpec::Named(s) if s == "critical" => Ok(ExponentChoice::Critical),
            ExponentSpec::Named(s) => Err(CliError::Config(format!("m = {s:?}: expected a number or \"critical\""))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ExponentSpec::Value(m) => format!("{m}"),
            ExponentSpec::Named(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SignSpec {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    #[serde(default = "positive")]
    pub sign: SignSpec,
}

fn positive() -> SignSpec {
    SignSpec::Positive
}

impl BumpSpec {
    fn new(center: f64, width: f64, amplitude: f64, sign: SignSpec) -> Self {
        Self { center, width, amplitude, sign }
    }

    pub fn bump(&self) -> Bump {
        let sign = match self.sign {
            SignSpec::Positive => Sign::Positive,
            SignSpec::Negative => Sign::Negative,
        };
        Bump { center: self.center, width: self.width, amplitude: self.amplitude, sign }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    Dirichlet,
    ZeroFlux,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    pub d: u32,
    /// A number, or `"critical"` for `m* = (d-4)/(d-2)`.
    pub m: ExponentSpec,
    pub d0: f64,
    pub d_star: f64,
    pub d1: f64,
    pub bumps: Vec<BumpSpec>,
    pub balance_mass: bool,
    pub boundary: BoundarySpec,
}

impl Default for Problem {
    fn default() -> Self {
        Self {
            d: 5,
            m: ExponentSpec::Named("critical".into()),
            d0: 2.0,
            d_star: 1.0,
            d1: 0.5,
            bumps: vec![BumpSpec::new(1.0, 1.0, 0.1, SignSpec::Positive)],
            balance_mass: false,
            boundary: BoundarySpec::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub r_max: f64,
    pub n: usize,
    pub core_fraction: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { r_max: 1e36, n: 2000, core_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Time {
    pub s_end: f64,
    pub cadence: f64,
    pub ds_initial: f64,
    pub ds_max: f64,
    pub growth: f64,
    pub newton_tol: f64,
    pub max_iterations: u32,
}

impl Default for Time {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            s_end: 200.0,
            cadence: 0.1,
            ds_initial: s.ds_initial,
            ds_max: s.ds_max,
            growth: s.growth,
            newton_tol: s.newton_tol,
            max_iterations: s.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Fit {
    /// Fit window as fractions of `s_end`.
    pub window: [f64; 2],
    pub shift: f64,
    pub margin: f64,
    /// Samples below this value end the window early.
    pub floor: f64,
    pub columns: Vec<String>,
    /// Dissipation residuals are measured from here on.
    pub dissipation_from: f64,
}

impl Default for Fit {
    fn default() -> Self {
        Self {
            window: [0.5, 0.95],
            shift: 0.2,
            margin: 0.01,
            floor: 1e-24,
            columns: vec!["entropy_nl".into(), "fisher_nl".into(), "l2_dev_weighted".into(), "l2_dev".into()],
            dissipation_from: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Linear {
    pub t_end: f64,
    pub dt0: f64,
    pub ratio: f64,
    pub dt_max: f64,
    /// Radius of the delta probe; snapped to the nearest node.
    pub probe_radius: f64,
    /// Late fit window, absolute times.
    pub window: [f64; 2],
    pub short_window: [f64; 2],
}

impl Default for Linear {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt0: 1e-6,
            ratio: 1.02,
            dt_max: 0.05,
            probe_radius: 0.0,
            window: [10.0, 100.0],
            short_window: [1e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Spectrum {
    pub r_list: Vec<f64>,
    pub k: usize,
}

impl Default for Spectrum {
    fn default() -> Self {
        Self { r_list: vec![50.0, 100.0, 200.0, 400.0], k: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub d_list: Vec<u32>,
    pub x_list: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub ball_radii: Vec<f64>,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            d_list: (3..=8).collect(),
            x_list: vec![0.0, 0.5, 1.0, 2.0, 10.0, 100.0, 1000.0],
            rho_list: vec![0.0, 0.5, 1.0, 10.0, 100.0, 1e3, 1e4],
            ball_radii: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Inequalities {
    pub d: u32,
    pub r_max: f64,
    pub n: usize,
    pub core_fraction: f64,
    pub trials_per_family: usize,
    pub c0_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub log_hardy_d: Vec<u32>,
    pub log_hardy_r_max: f64,
    pub log_hardy_trials: usize,
    pub alpha_step: f64,
    pub hardy_n: Vec<f64>,
    pub hardy_r_max: f64,
}

impl Default for Inequalities {
    fn default() -> Self {
        Self {
            d: 5,
            r_max: 1e12,
            n: 3000,
            core_fraction: 0.3,
            trials_per_family: 200,
            c0_list: vec![1.0, 10.0, 100.0],
            eps_list: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 1.0, 3.0, 10.0, 30.0, 100.0],
            log_hardy_d: (3..=8).collect(),
            log_hardy_r_max: 1e8,
            log_hardy_trials: 50,
            alpha_step: 0.25,
            hardy_n: vec![1.0, 2.0, 3.0, 4.0],
            hardy_r_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Compare {
    pub m_list: Vec<ExponentSpec>,
    /// Perturbation away from `m*`, balanced to zero relative mass.
    pub other_bumps: Vec<BumpSpec>,
    /// Fit window as fractions of `s_end`.
    pub window: [f64; 2],
}

impl Default for Compare {
    fn default() -> Self {
        Self {
            m_list: vec![ExponentSpec::Named("critical".into()), ExponentSpec::Value(0.45)],
            other_bumps: vec![
                BumpSpec::new(1.0, 1.0, 0.1, SignSpec::Positive),
                BumpSpec::new(3.0, 1.0, 0.1, SignSpec::Negative),
            ],
            window: [0.05, 0.95],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GoodTimes {
    /// Omitted: calibrated as `2 k2 R/N⁴` at `s0`.
    pub k: Option<f64>,
    pub s0: f64,
}

impl Default for GoodTimes {
    fn default() -> Self {
        Self { k: None, s0: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// Omitted: `$FDELAB_OUT/<subcommand>`, else `fdelab-out/<subcommand>`.
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Run {
    pub seed: u64,
    /// Parallel rows in sweeps; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for Run {
    fn default() -> Self {
        Self { seed: 1, workers: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub grid: Grid,
    pub time: Time,
    pub fit: Fit,
    pub linear: Linear,
    pub spectrum: Spectrum,
    pub geometry: Geometry,
    pub inequalities: Inequalities,
    pub compare: Compare,
    pub goodtimes: GoodTimes,
    pub output: Output,
    pub run: Run,
}

/// Parses the right-hand side of an override as a TOML value; bare words
/// that are not valid TOML become strings.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad key {key:?}")));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// File contents (if any), then overrides in order.
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| CliError::Config(format!("config file: {e}")))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved configuration, as written to `config.echo`.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let p = &self.problem;
        if p.d < 3 {
            return bad(format!("problem.d = {} must be at least 3", p.d));
        }
        p.m.choice()?;
        for m in &self.compare.m_list {
            m.choice()?;
        }
        if !(p.d0 > p.d_star && p.d_star > p.d1 && p.d1 > 0.0) {
            return bad(format!("need d0 > d_star > d1 > 0, got {} {} {}", p.d0, p.d_star, p.d1));
        }
        for b in p.bumps.iter().chain(&self.compare.other_bumps) {
            if !(b.width > 0.0 && b.center >= 0.0 && b.amplitude >= 0.0 && b.amplitude.is_finite()) {
                return bad(format!("bump {b:?}: need width > 0, center >= 0, amplitude >= 0"));
            }
        }
        let g = &self.grid;
        if !(g.r_max > 0.0 && g.r_max.is_finite() && g.n >= 4 && g.core_fraction > 0.0 && g.core_fraction <= 1.0) {
            return bad(format!("grid {g:?}"));
        }
        let t = &self.time;
        if !(t.s_end > 0.0 && t.cadence > 0.0 && t.cadence <= t.s_end) {
            return bad(format!("need 0 < cadence <= s_end, got {} and {}", t.cadence, t.s_end));
        }
        if !(t.ds_initial > 0.0 && t.ds_max >= t.ds_initial && t.growth >= 1.0 && t.newton_tol > 0.0) {
            return bad("time: need 0 < ds_initial <= ds_max, growth >= 1, newton_tol > 0".into());
        }
        let windows = [("fit.window", self.fit.window), ("compare.window", self.compare.window)];
        for (name, w) in windows {
            if !(0.0 <= w[0] && w[0] < w[1] && w[1] <= 1.0) {
                return bad(format!("{name} = {w:?}: need 0 <= start < end <= 1"));
            }
        }
        for name in &self.fit.columns {
            crate::experiments::column_by_name(name)?;
        }
        let l = &self.linear;
        if !(l.t_end > 0.0 && l.dt0 > 0.0 && l.ratio >= 1.0 && l.dt_max >= l.dt0 && l.probe_radius >= 0.0) {
            return bad(format!("linear {l:?}"));
        }
        if self.spectrum.k == 0 || self.spectrum.k > 20 || self.spectrum.r_list.iter().any(|r| !(*r > 0.0)) {
            return bad("spectrum: need 1 <= k <= 20 and positive radii".into());
        }
        if self.geometry.d_list.iter().any(|d| !(3..=64).contains(d)) {
            return bad("geometry.d_list entries must lie in 3..=64".into());
        }
        let q = &self.inequalities;
        if q.d < 3 || q.log_hardy_d.iter().any(|d| *d < 3) || !(q.alpha_step > 0.0) || q.trials_per_family == 0 {
            return bad("inequalities: need dimensions >= 3, alpha_step > 0, trials_per_family > 0".into());
        }
        if let Some(k) = self.goodtimes.k {
            if !(k > 0.0) {
                return bad(format!("goodtimes.k = {k} must be positive"));
            }
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let t = &self.time;
        SolverSettings {
            ds_initial: t.ds_initial,
            ds_max: t.ds_max.min(t.cadence),
            growth: t.growth,
            newton_tol: t.newton_tol,
            max_iterations: t.max_iterations,
            boundary: match self.problem.boundary {
                BoundarySpec::Dirichlet => OuterBoundary::Dirichlet,
                BoundarySpec::ZeroFlux => OuterBoundary::ZeroFlux,
            },
            ..SolverSettings::default()
        }
    }
}
