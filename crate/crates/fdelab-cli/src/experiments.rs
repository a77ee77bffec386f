//! One function per subcommand. Each returns the tables and report lines;
//! `main` writes them out.

use std::sync::Arc;

use fdelab::cigar_geometry::{
    ball_volume, cigar_embedding, embedding_isometry_residual, geodesic_distance, radial_eigenvalue, ricci,
    transversal_eigenvalue,
};
use fdelab::entropy_functionals::{
    check_entropy_sandwich, check_fisher_comparison, check_lp_entropy_bound, dissipation_residual,
    fisher_evolution_check, FunctionalEvaluator,
};
use fdelab::fp_solver::{
    benilan_crandall_check, make_initial_data, FlowSnapshot, FpSolver, InitialDataReport, InitialDataSpec, RunStats,
};
use fdelab::inequality_lab::{
    gn_sweep, hardy_failure_demo, log_hardy_check, log_hardy_constant, log_sobolev_calibrate, FamilyKind,
    TrialFamily, WeightedSpace,
};
use fdelab::linear_flow::{
    heat_kernel_probe, linear_entropy_decay, sign_split_check, spectrum, OperatorDiscretization, SpectralSweep,
    Stepping,
};
use fdelab::radial_grid::sphere_area;
use fdelab::rate_analysis::{
    calibrate_good_times_k, comparison_row, fit_samples, good_times_report, resolved_window, select_model,
    window_shift_sensitivity, Column, ComparisonConfig, FlowTimeSeries, Model, Window,
};
use fdelab::{DiffusionParams, RadialGrid, SandwichBounds};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{num, Artifacts, Plot, Table};
use crate::CliError;

pub fn column_by_name(name: &str) -> Result<Column, CliError> {
    Column::ALL
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| CliError::Config(format!("unknown column {name:?}")))
}

fn describe(c: Column) -> &'static str {
    match c {
        Column::EntropyNonlinear => "nonlinear relative entropy of w = v/V_D* (slow s^-1/2 decay at m*, exponential otherwise)",
        Column::FisherNonlinear => "nonlinear Fisher information, the dissipation rate of entropy_nl",
        Column::EntropyLinear => "linearized entropy: integral of (w-1)^2 V^m",
        Column::FisherLinear => "linearized Fisher information: integral of |grad g|^2 V, g = (w-1) V^(m-1)",
        Column::L2Deviation => "||v - V_D*||_2",
        Column::L2DeviationWeighted => "|| |y|^(d/2) (v - V_D*) ||_2 (slow s^-1/4 decay at m*)",
        Column::SupRelativeError => "sup |w - 1|",
        Column::SupG => "sup |g|",
        Column::Remainder => "integral of g^4 V^(4-3m), remainder term of the Fisher comparison",
        Column::RelativeMass => "integral of (v - V_D*), conserved by the flow",
    }
}

fn params_of(cfg: &ExperimentConfig) -> Result<DiffusionParams, CliError> {
    Ok(cfg.problem.m.choice()?.params(cfg.problem.d)?)
}

fn bounds_of(cfg: &ExperimentConfig) -> Result<SandwichBounds, CliError> {
    let p = &cfg.problem;
    Ok(SandwichBounds::new(params_of(cfg)?, p.d0, p.d_star, p.d1)?)
}

fn grid_of(cfg: &ExperimentConfig) -> Result<Arc<RadialGrid>, CliError> {
    let g = &cfg.grid;
    Ok(Arc::new(RadialGrid::new(cfg.problem.d, g.r_max, g.n, g.core_fraction)?))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("run.workers = {workers}: {e}")))
}

fn header(cfg: &ExperimentConfig, kind: &str, params: &DiffusionParams) -> Vec<String> {
    let crit = if params.is_critical() { " (critical exponent m* = (d-4)/(d-2))" } else { "" };
    vec![
        format!("fdelab {kind}"),
        format!(
            "d = {}, m = {}{crit}, beta = {}, m_c = {}, m* = {}",
            params.d(),
            params.m(),
            params.beta(),
            params.m_c(),
            params.m_star()
        ),
        format!("grid: R_max = {:e}, N = {}, core fraction {}", cfg.grid.r_max, cfg.grid.n, cfg.grid.core_fraction),
    ]
}

struct Worst {
    sandwich: f64,
    fisher: f64,
    lp: f64,
    excess: f64,
    bc: f64,
    bc_points: usize,
    points: usize,
}

pub struct FlowRun {
    pub series: FlowTimeSeries,
    stats: RunStats,
    initial: InitialDataReport,
    worst: Worst,
    stationary: bool,
}

/// The nonlinear run shared by `simulate` and `goodtimes`, with the
/// comparison checks evaluated at every cadence point.
pub fn run_flow(cfg: &ExperimentConfig) -> Result<FlowRun, CliError> {
    let bounds = bounds_of(cfg)?;
    let grid = grid_of(cfg)?;
    let spec = InitialDataSpec {
        bounds,
        bumps: cfg.problem.bumps.iter().map(|b| b.bump()).collect(),
        balance_mass: cfg.problem.balance_mass,
    };
    let stationary = spec.support_radius() == 0.0;
    let (init, initial) = make_initial_data(&spec, grid.clone())?;
    let solver = FpSolver::new(grid.clone(), bounds, cfg.solver_settings())?;
    let eval = FunctionalEvaluator::new(grid, bounds);
    let m = bounds.params().m();
    let s0 = cfg.goodtimes.s0;
    let mut w = Worst {
        sandwich: f64::INFINITY,
        fisher: f64::INFINITY,
        lp: f64::INFINITY,
        excess: 0.0,
        bc: f64::NEG_INFINITY,
        bc_points: 0,
        points: 0,
    };
    let mut prev: Option<FlowSnapshot> = None;
    let (series, stats) = solver.run_observed(&init, cfg.time.s_end, cfg.time.cadence, &mut |snap: &FlowSnapshot| {
        let b = eval.evaluate(snap);
        let sm = check_entropy_sandwich(&b, m);
        let scale = sm.upper_bound.abs().max(f64::MIN_POSITIVE);
        w.sandwich = w.sandwich.min(sm.lower_slack.min(sm.upper_slack) / scale);
        w.fisher = w.fisher.min(check_fisher_comparison(&b, &bounds).margin);
        w.lp = w.lp.min(check_lp_entropy_bound(snap)?.margin);
        w.excess = w.excess.max(snap.sandwich_excess().0);
        if let Some(p) = &prev {
            if p.s() >= s0 && s0 > 0.0 {
                w.bc = w.bc.max(benilan_crandall_check(p, snap, s0)?.max_violation);
                w.bc_points += 1;
            }
        }
        prev = Some(snap.clone());
        w.points += 1;
        Ok(())
    })?;
    Ok(FlowRun { series, stats, initial, worst: w, stationary })
}

fn series_table(series: &FlowTimeSeries) -> Table {
    let mut t = Table::new("per-cadence functionals of the nonlinear flow in self-similar variables")
        .column("s", "rescaled time");
    for c in Column::ALL {
        t = t.column(c.name(), describe(c));
    }
    t = t.column("sup_w", "sup w").column("inf_w", "inf w");
    for r in series.rows() {
        let mut cells = vec![num(r.s)];
        cells.extend(Column::ALL.iter().map(|c| num(c.of(r))));
        cells.push(num(r.sup_w));
        cells.push(num(r.inf_w));
        t.row(cells);
    }
    t
}

fn fits_table(title: &str) -> Table {
    Table::new(title)
        .column("quantity", "fitted series")
        .column("model", "power: C s^p; exponential: C exp(-k s)")
        .column("exponent_or_rate", "p for power, k for exponential")
        .column("intercept", "log C")
        .column("window_start", "first time in the fit window")
        .column("window_end", "last time in the fit window")
        .column("points", "samples used")
        .column("r_squared", "coefficient of determination in log space")
        .column("rms_residual", "root-mean-square residual in log space")
}

fn fit_row(t: &mut Table, quantity: &str, f: &fdelab::rate_analysis::RateFit) {
    t.row(vec![
        quantity.into(),
        f.model.name().into(),
        num(f.exponent_or_rate),
        num(f.intercept),
        num(f.window.start),
        num(f.window.end),
        f.points.to_string(),
        num(f.r_squared),
        num(f.rms_residual),
    ]);
}

fn flow_report(cfg: &ExperimentConfig, run: &FlowRun, lines: &mut Vec<String>) -> Result<(), CliError> {
    let b = &run.series.meta().bounds;
    lines.push(format!(
        "sandwich profiles: D0 = {}, D* = {}, D1 = {}; W0 = {:.6}, W1 = {:.6}",
        b.d0(),
        b.d_star(),
        b.d1(),
        b.w0(),
        b.w1()
    ));
    lines.push(format!(
        "initial data: {} clamped nodes, relative mass {:.6e}, negative-bump scale {:.6}, hash {:016x}",
        run.initial.clamped_nodes,
        run.initial.relative_mass,
        run.initial.negative_scale,
        run.series.meta().initial_hash
    ));
    lines.push(format!(
        "run: s_end = {}, cadence {}, {} steps ({} rejected), {} Newton iterations, ds in [{:.3e}, {:.3e}]",
        cfg.time.s_end,
        cfg.time.cadence,
        run.stats.steps,
        run.stats.rejected,
        run.stats.newton_iterations,
        run.stats.min_ds,
        run.stats.max_ds
    ));
    if run.stationary {
        lines.push("stationary run: the initial datum is V_D* itself, so every deviation column is zero".into());
    }
    let w = &run.worst;
    lines.push(String::new());
    lines.push(format!("checks at all {} cadence points:", w.points));
    lines.push(format!(
        "  [entropy sandwich F_lin/(2 sup w^(2-m)) <= entropy_nl <= F_lin/(2 inf w^(2-m))] min relative slack {:.3e}",
        w.sandwich
    ));
    lines.push(format!("  [Fisher comparison I_lin <= k1 fisher_nl + k2 remainder] min margin {:.3e}", w.fisher));
    lines.push(format!("  [L^p deviation bounded by the linearized entropy] min margin {:.3e}", w.lp));
    lines.push(format!("  [sandwich V_D0 <= v <= V_D1] max excess {:.3e}", w.excess));
    if w.bc_points > 0 {
        lines.push(format!(
            "  [pointwise bound d_s v <= kappa1 v for s >= {}] worst relative value {:.3e} over {} intervals (<= 0 holds)",
            cfg.goodtimes.s0, w.bc, w.bc_points
        ));
    }
    let rows = run.series.rows();
    let (m0, m1) = (rows[0].rel_mass, rows[rows.len() - 1].rel_mass);
    lines.push(format!("  [mass conservation] relative mass {m0:.6e} -> {m1:.6e}"));
    if !run.stationary {
        let diss = dissipation_residual(&run.series, cfg.fit.dissipation_from, 0.0);
        lines.push(format!(
            "  [dissipation identity d(entropy_nl)/ds = -fisher_nl] max relative residual {:.3e} for s >= {}, \
             integrated {:.3e}",
            diss.max_relative, cfg.fit.dissipation_from, diss.integrated_relative
        ));
        if let Ok(fe) = fisher_evolution_check(&run.series, cfg.goodtimes.s0) {
            lines.push(format!(
                "  [Fisher information bounded and decaying] sup after s0 {:.3e}, tail/peak {:.3e}, \
                 kappa1 envelope {:.3e}",
                fe.sup_after_s0, fe.tail_fraction, fe.kappa1_envelope
            ));
        }
    }
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let params = params_of(cfg)?;
    let run = run_flow(cfg)?;
    let mut report = header(cfg, "simulate", &params);
    flow_report(cfg, &run, &mut report)?;
    let mut fits = fits_table("decay fits of the nonlinear flow");
    report.push(String::new());
    report.push("decay fits:".into());
    let s_end = run.series.s_end();
    let base = Window::new(cfg.fit.window[0] * s_end, cfg.fit.window[1] * s_end);
    for name in &cfg.fit.columns {
        let col = column_by_name(name)?;
        let window = resolved_window(&run.series, col, base, cfg.fit.floor);
        match select_model(&run.series, col, window, cfg.fit.margin) {
            Ok(choice) => {
                fit_row(&mut fits, name, &choice.power);
                fit_row(&mut fits, name, &choice.exponential);
                let winner = choice.winner.map_or("inconclusive", |m| m.name());
                let shift = window_shift_sensitivity(&run.series, col, window, cfg.fit.shift)
                    .map_or_else(|e| format!("n/a ({e})"), |x| format!("{x:.3e}"));
                report.push(format!(
                    "  [{}] power exponent {:.4} (r² {:.4}), exponential rate {:.4} (r² {:.4}) on [{}, {}]; \
                     preferred: {winner}; power exponent change under a {}% window shift: {shift}",
                    describe(col),
                    choice.power.exponent_or_rate,
                    choice.power.r_squared,
                    choice.exponential.exponent_or_rate,
                    choice.exponential.r_squared,
                    window.start,
                    window.end,
                    100.0 * cfg.fit.shift
                ));
            }
            Err(e) => report.push(format!("  [{}] not fitted: {e}", describe(col))),
        }
    }
    let logcol = |c: Column| 2 + Column::ALL.iter().position(|x| *x == c).unwrap();
    let plots = vec![Plot {
        name: "entropy".into(),
        title: "relative entropy and Fisher information along the flow".into(),
        data: "series.csv",
        logx: true,
        logy: true,
        xlabel: "s".into(),
        curves: vec![
            (1, logcol(Column::EntropyNonlinear), "entropy_nl".into()),
            (1, logcol(Column::FisherNonlinear), "fisher_nl".into()),
            (1, logcol(Column::L2DeviationWeighted), "l2_dev_weighted".into()),
        ],
    }];
    Ok(Artifacts { series: series_table(&run.series), fits, report, plots })
}

pub fn goodtimes(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let params = params_of(cfg)?;
    let run = run_flow(cfg)?;
    let (k, how) = match cfg.goodtimes.k {
        Some(k) => (k, "from the config".to_string()),
        None => (
            calibrate_good_times_k(&run.series, cfg.goodtimes.s0)?,
            format!("calibrated as 2 k2 R/N^4 at s = {}", cfg.goodtimes.s0),
        ),
    };
    let gt = good_times_report(&run.series, k);
    let mut series = Table::new("good-times classification N^4 K <= I_lin per cadence time")
        .column("s", "rescaled time")
        .column("sup_g", "N = sup |g|")
        .column("fisher_lin", "I_lin = integral of |grad g|^2 V")
        .column("n4k", "N^4 K")
        .column("good", "1 if N^4 K <= I_lin, 0 if not, empty where N = I_lin = 0");
    for (r, (_, c)) in run.series.rows().iter().zip(&gt.classification) {
        let good = match c {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        series.row(vec![num(r.s), num(r.n_g), num(r.i_lin), num(r.n_g.powi(4) * k), good.into()]);
    }
    let mut fits = Table::new("good stretches inside the windows [2k, 2k+2]")
        .column("window_start", "2k")
        .column("window_end", "2k+2")
        .column("longest", "longest good stretch inside the window")
        .column("has_good_half", "1 if a good stretch of length >= 1/2 exists");
    for w in &gt.windows {
        fits.row(vec![num(w.start), num(w.end), num(w.longest), (w.has_good_half as u8).to_string()]);
    }
    let mut report = header(cfg, "goodtimes", &params);
    flow_report(cfg, &run, &mut report)?;
    report.push(String::new());
    report.push(format!("[good times N^4 K <= I_lin] K = {k:.6e} ({how})"));
    report.push(format!("  classified times good: {:.4} of the non-vacuous cadence times", gt.coverage));
    report.push(format!("  maximal good intervals: {}", gt.intervals.len()));
    report.push(format!(
        "  late-half windows [2k, 2k+2] containing a good stretch of length >= 1/2: {:.4}",
        gt.late_window_fraction
    ));
    let plots = vec![Plot {
        name: "goodtimes".into(),
        title: "N^4 K against I_lin".into(),
        data: "series.csv",
        logx: false,
        logy: true,
        xlabel: "s".into(),
        curves: vec![(1, 3, "I_lin".into()), (1, 4, "N^4 K".into())],
    }];
    Ok(Artifacts { series, fits, report, plots })
}

pub fn linear(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let params = params_of(cfg)?;
    let bounds = bounds_of(cfg)?;
    let grid = grid_of(cfg)?;
    let op = OperatorDiscretization::assemble(grid.clone(), params, cfg.problem.d_star)?;
    let l = &cfg.linear;
    let stepping = Stepping::Geometric { dt0: l.dt0, ratio: l.ratio, dt_max: l.dt_max };
    let x0 = grid.nearest(l.probe_radius);
    let late = Window::new(l.window[0], l.window[1]);
    let short = Window::new(l.short_window[0], l.short_window[1]);
    let probe = heat_kernel_probe(&op, x0, l.t_end, stepping)?;

    let spec = InitialDataSpec {
        bounds,
        bumps: cfg.problem.bumps.iter().map(|b| b.bump()).collect(),
        balance_mass: cfg.problem.balance_mass,
    };
    let (init, _) = make_initial_data(&spec, grid.clone())?;
    let g0 = init.g().clone();
    let entropy = if g0.sup_abs() > 0.0 { Some(linear_entropy_decay(&op, &g0, l.t_end, stepping, late)?) } else { None };

    let mut series = Table::new("linearized flow: delta probe and evolved perturbation")
        .column("t", "time")
        .column("probe_sup", "sup |g| of the delta probe (heat-kernel on-diagonal decay)")
        .column("probe_at_x0", "probe value at its starting node")
        .column("probe_mass", "integral of g V^(2-m), conserved")
        .column("probe_norm_sq", "||g||^2 in L^2(V^(2-m))")
        .column("probe_energy", "integral of |grad g|^2 V, non-increasing")
        .column("pert_norm_sq", "||g||^2 of the evolved perturbation (linear entropy)")
        .column("pert_energy", "integral of |grad g|^2 V of the evolved perturbation");
    for i in 0..probe.times.len() {
        let (pn, pe) = match &entropy {
            Some(e) => (num(e.trajectory.norm_sq[i]), num(e.trajectory.energy[i])),
            None => (num(0.0), num(0.0)),
        };
        series.row(vec![
            num(probe.times[i]),
            num(probe.sup[i]),
            num(probe.probe[i]),
            num(probe.mass[i]),
            num(probe.norm_sq[i]),
            num(probe.energy[i]),
            pn,
            pe,
        ]);
    }
    let mut fits = fits_table("decay fits of the linearized flow");
    let mut report = header(cfg, "linear", &params);
    report.push(format!("probe at r = {:.6e} (node {x0}), t_end = {}", grid.nodes()[x0], l.t_end));
    let mut fit = |name: &str, y: &[f64], w: Window, what: &str, report: &mut Vec<String>| {
        match fit_samples(&probe.times, y, w, Model::Power) {
            Ok(f) => {
                fit_row(&mut fits, name, &f);
                report.push(format!("[{what}] exponent {:.4} on [{}, {}] (r² {:.4})", f.exponent_or_rate, w.start, w.end, f.r_squared));
            }
            Err(e) => report.push(format!("[{what}] not fitted: {e}")),
        }
    };
    fit("probe_sup", &probe.sup, late, "late heat-kernel sup-norm decay, expected t^-1/2 on a long domain", &mut report);
    fit("probe_sup", &probe.sup, short, "short-time on-diagonal decay, expected t^-d/2", &mut report);
    fit("probe_norm_sq", &probe.norm_sq, short, "short-time ||g||^2 decay of the probe", &mut report);
    match &entropy {
        Some(e) => {
            fit_row(&mut fits, "pert_norm_sq", &e.fit);
            report.push(format!(
                "[linear entropy decay of the perturbation, expected t^-1/2 at m*] exponent {:.4} (r² {:.4}); \
                 F' <= -c F^3 holds on the window with c = {:.3e}",
                e.fit.exponent_or_rate, e.fit.r_squared, e.c_fit
            ));
            let (full, plus, minus) = sign_split_check(&op, &g0, l.t_end, stepping)?;
            report.push(format!(
                "[sign split] F(g) = {full:.6e}, F(g+) = {plus:.6e}, F(g-) = {minus:.6e} at t = {}",
                l.t_end
            ));
        }
        None => report.push("zero perturbation: no linear entropy fit".into()),
    }
    let drift = probe.mass.iter().map(|m| (m - probe.mass[0]).abs()).fold(0.0, f64::max) / probe.mass[0].abs();
    let e0 = probe.energy.iter().cloned().fold(0.0, f64::max);
    let monotone = probe.energy.windows(2).all(|p| p[1] <= p[0] + 1e-12 * e0);
    report.push(format!("[mass conservation] max relative mass drift of the probe {drift:.3e}"));
    report.push(format!("[energy dissipation] probe energy non-increasing: {monotone}"));
    let plots = vec![Plot {
        name: "probe".into(),
        title: "heat-kernel probe".into(),
        data: "series.csv",
        logx: true,
        logy: true,
        xlabel: "t".into(),
        curves: vec![(1, 2, "sup".into()), (1, 5, "norm_sq".into()), (1, 7, "perturbation norm_sq".into())],
    }];
    Ok(Artifacts { series, fits, report, plots })
}

pub fn spectrum_sweep(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let params = params_of(cfg)?;
    let k = cfg.spectrum.k;
    let g = &cfg.grid;
    let d_star = cfg.problem.d_star;
    let results: Vec<Result<fdelab::linear_flow::Spectrum, fdelab::Error>> = pool(cfg.run.workers)?.install(|| {
        cfg.spectrum
            .r_list
            .par_iter()
            .map(|&r| {
                let grid = Arc::new(RadialGrid::new(params.d(), r, g.n, g.core_fraction)?);
                spectrum(&OperatorDiscretization::assemble(grid, params, d_star)?, k)
            })
            .collect()
    });
    let spectra = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sweep = SpectralSweep { r_max: cfg.spectrum.r_list.clone(), spectra };
    let mut series = Table::new("lowest eigenvalues of the linearized operator against the truncation radius")
        .column("r_max", "truncation radius");
    let names: Vec<String> = (1..=k).map(|i| format!("lambda_{i}")).collect();
    for (i, n) in names.iter().enumerate() {
        series = series.column(n, if i == 0 { "lowest eigenvalue (constants, 0)" } else { "eigenvalue, ascending" });
    }
    for (r, s) in sweep.r_max.iter().zip(&sweep.spectra) {
        let mut cells = vec![num(*r)];
        cells.extend(s.eigenvalues.iter().map(|x| num(*x)));
        series.row(cells);
    }
    let l2 = sweep.lambda2();
    let mut fits = Table::new("second eigenvalue across the sweep")
        .column("quantity", "derived from lambda_2(R_max)")
        .column("value", "value");
    let mut report = header(cfg, "spectrum", &params);
    if k >= 2 && !l2.is_empty() {
        let ratio = l2[l2.len() - 1] / l2[0];
        let decreasing = l2.windows(2).all(|p| p[1] < p[0]);
        fits.row(vec!["lambda2_last_over_first".into(), num(ratio)]);
        fits.row(vec!["lambda2_relative_spread".into(), num(sweep.relative_spread())]);
        fits.row(vec!["lambda2_extrapolated_log_fit".into(), num(sweep.extrapolated())]);
        report.push(format!("[second eigenvalue] {:?}", l2.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>()));
        report.push(format!(
            "  decreasing in R_max: {decreasing}; last/first {ratio:.4}; relative spread {:.4}",
            sweep.relative_spread()
        ));
        report.push(format!(
            "  limit from lambda_2(R) = lambda_inf + c/(log R)^2: {:.4} (near 0 means no spectral gap)",
            sweep.extrapolated()
        ));
    }
    let plots = vec![Plot {
        name: "spectrum".into(),
        title: "second eigenvalue against R_max".into(),
        data: "series.csv",
        logx: true,
        logy: false,
        xlabel: "R_max".into(),
        curves: (2..=k.min(4)).map(|i| (1, i + 1, format!("lambda_{i}"))).collect(),
    }];
    Ok(Artifacts { series, fits, report, plots })
}

pub fn geometry(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let gc = &cfg.geometry;
    let mut series = Table::new("Ricci curvature of the metric (1+|x|^2)^-1 |dx|^2 at radius X")
        .column("d", "dimension")
        .column("x", "Euclidean radius X")
        .column("radial", "closed-form radial eigenvalue 2(d-1)/(1+X^2)^2")
        .column("transversal", "closed-form transversal eigenvalue ((d-2)X^2+2(d-1))/(1+X^2)^2")
        .column("numeric_min", "smallest eigenvalue of the assembled Ricci matrix")
        .column("numeric_max", "largest eigenvalue of the assembled Ricci matrix")
        .column("scalar", "scalar curvature")
        .column("trace_residual", "|R - g^ij R_ij|")
        .column("eigen_error", "max distance of numeric eigenvalues from the closed forms");
    let mut worst_trace: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    for &d in &gc.d_list {
        for &x in &gc.x_list {
            let r = ricci(d, x)?;
            let (lr, lt) = (radial_eigenvalue(d, x), transversal_eigenvalue(d, x));
            let mut expected = vec![lt; d as usize];
            expected[0] = lr;
            expected.sort_by(|a, b| a.total_cmp(b));
            let err = r.eigenvalues.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_trace = worst_trace.max(r.trace_residual);
            worst_eig = worst_eig.max(err);
            series.row(vec![
                d.to_string(),
                num(x),
                num(lr),
                num(lt),
                num(r.eigenvalues[0]),
                num(r.eigenvalues[r.eigenvalues.len() - 1]),
                num(r.scalar),
                num(r.trace_residual),
                num(err),
            ]);
        }
    }
    let mut fits = fits_table("large-radius behaviour of curvature and embedding");
    let xs: Vec<f64> = (0..=20).map(|i| 10f64.powf(1.0 + 0.1 * i as f64)).collect();
    let far = Window::new(10.0, 1000.0);
    let mut report = vec!["fdelab geometry".to_string()];
    if let Ok(r) = ricci(3, 1.0) {
        report.push(format!(
            "[Ricci eigenvalues at d = 3, X = 1] {:?} (closed forms 1, 1.25, 1.25)",
            r.eigenvalues.iter().map(|x| format!("{x:.15}")).collect::<Vec<_>>()
        ));
    }
    report.push(format!("[trace identity] max residual {worst_trace:.3e}"));
    report.push(format!("[eigenvalues against closed forms] max error {worst_eig:.3e}"));
    for &d in &gc.d_list {
        let rad: Vec<f64> = xs.iter().map(|&x| radial_eigenvalue(d, x)).collect();
        let tr: Vec<f64> = xs.iter().map(|&x| transversal_eigenvalue(d, x)).collect();
        let fr = fit_samples(&xs, &rad, far, Model::Power)?;
        let ft = fit_samples(&xs, &tr, far, Model::Power)?;
        fit_row(&mut fits, &format!("radial_eigenvalue_d{d}"), &fr);
        fit_row(&mut fits, &format!("transversal_eigenvalue_d{d}"), &ft);
        report.push(format!(
            "[curvature decay, d = {d}] radial slope {:.4} (X^-4), transversal slope {:.4} (X^-2)",
            fr.exponent_or_rate, ft.exponent_or_rate
        ));
    }
    let mut iso: f64 = 0.0;
    for &rho in &gc.rho_list {
        iso = iso.max(embedding_isometry_residual(rho));
        let (phi, psi) = cigar_embedding(rho)?;
        report.push(format!(
            "  embedding rho = {rho:e}: Phi = {phi:.12}, Psi = {psi:.12}, geodesic distance {:.12}",
            geodesic_distance(rho)
        ));
    }
    report.push(format!("[cigar embedding is an isometry] max relative residual {iso:.3e}"));
    let rhos = [1e2, 1e3, 1e4];
    let psis = rhos.iter().map(|&r| cigar_embedding(r).map(|p| p.1)).collect::<Result<Vec<_>, _>>()?;
    let slope = (psis[2] - psis[0]) / (rhos[2].ln() - rhos[0].ln());
    report.push(format!("[Psi grows like log rho] slope over [1e2, 1e4]: {slope:.6}"));
    for &d in &gc.d_list {
        let vols = gc.ball_radii.iter().map(|&r| ball_volume(d, r)).collect::<Result<Vec<_>, _>>()?;
        let n = vols.len();
        if n >= 2 {
            let incr = (vols[n - 1] - vols[n - 2]) / (gc.ball_radii[n - 1] - gc.ball_radii[n - 2]);
            report.push(format!(
                "[ball volume grows linearly, d = {d}] Vol(R) at R = {:?}: {:?}; last increment per unit R {:.6} \
                 vs unit sphere area {:.6}",
                gc.ball_radii,
                vols.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
                incr,
                sphere_area(d)
            ));
        }
    }
    let plots = vec![Plot {
        name: "curvature".into(),
        title: "Ricci eigenvalues against X".into(),
        data: "series.csv",
        logx: true,
        logy: true,
        xlabel: "X".into(),
        curves: vec![(2, 3, "radial".into()), (2, 4, "transversal".into())],
    }];
    Ok(Artifacts { series, fits, report, plots })
}

fn families() -> [FamilyKind; 4] {
    [
        FamilyKind::Bumps { max_center: 50.0, min_width: 0.05, max_width: 50.0 },
        FamilyKind::Concentrated { min_scale: 0.01, max_scale: 100.0 },
        FamilyKind::Plateaus { min_radius: 0.2, max_radius: 8.0 },
        FamilyKind::Modulated { max_degree: 4, max_cutoff: 1e3 },
    ]
}

fn trials(seed: u64, count: usize, grid: &RadialGrid) -> Vec<Vec<f64>> {
    families()
        .iter()
        .enumerate()
        .flat_map(|(i, k)| TrialFamily::new(seed.wrapping_mul(16).wrapping_add(i as u64), *k, count).generate(grid))
        .collect()
}

pub fn inequalities(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let q = &cfg.inequalities;
    let seed = cfg.run.seed;
    let space = WeightedSpace::new(q.d, q.r_max, q.n, q.core_fraction)?;
    let tr = trials(seed, q.trials_per_family, space.grid());
    let gn = gn_sweep(&space, &tr, &q.c0_list)?;
    let ls = log_sobolev_calibrate(&space, &tr, &q.eps_list)?;
    let hardy = hardy_failure_demo(&WeightedSpace::new(q.d, q.hardy_r_max, q.n.min(2000), q.core_fraction)?, &q.hardy_n)?;
    let lh: Vec<Result<Vec<fdelab::inequality_lab::LogHardyReport>, fdelab::Error>> = pool(cfg.run.workers)?.install(|| {
        q.log_hardy_d
            .par_iter()
            .map(|&d| {
                let grid = RadialGrid::new(d, q.log_hardy_r_max, q.n.min(2000), q.core_fraction)?;
                let t = trials(seed.wrapping_add(1), q.log_hardy_trials, &grid);
                let mut out = Vec::new();
                let mut a = q.alpha_step;
                while a < 0.5 * (d as f64 - 2.0) - 1e-12 {
                    out.push(log_hardy_check(&grid, &t, a)?);
                    a += q.alpha_step;
                }
                Ok(out)
            })
            .collect()
    });
    let lh: Vec<_> = lh.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();

    let mut series = Table::new("functional-inequality experiments on the critical weighted space")
        .column("inequality", "gn | log_hardy | hardy | log_sobolev")
        .column("d", "dimension")
        .column("parameter", "c0 | alpha | n | eps")
        .column("value", "gn: K_emp; log_hardy: min relative slack; hardy: rho_n; log_sobolev: beta(eps)")
        .column("secondary", "gn: admissible trials; log_hardy: constant H; hardy: I[v_n]; log_sobolev: c(eps)");
    for r in &gn.reports {
        series.row(vec!["gn".into(), q.d.to_string(), num(r.c0), num(r.k_emp), r.admissible.to_string()]);
    }
    for r in &lh {
        series.row(vec!["log_hardy".into(), r.d.to_string(), num(r.alpha), num(r.min_slack), num(r.constant)]);
    }
    for r in &hardy.rows {
        series.row(vec!["hardy".into(), q.d.to_string(), num(r.n), num(r.rho), num(r.fisher)]);
    }
    for i in 0..ls.eps.len() {
        series.row(vec!["log_sobolev".into(), q.d.to_string(), num(ls.eps[i]), num(ls.beta[i]), num(ls.c[i])]);
    }
    let mut fits = Table::new("fitted constants and slopes")
        .column("quantity", "what was fitted")
        .column("value", "fitted value")
        .column("reference", "value it is compared with (empty if none)");
    fits.row(vec!["gn_a (K ~ a c0^(2/3) + b c0^(-1/3))".into(), num(gn.a), String::new()]);
    fits.row(vec!["gn_b".into(), num(gn.b), String::new()]);
    fits.row(vec!["gn_rms_residual".into(), num(gn.rms_residual), String::new()]);
    fits.row(vec!["hardy_fisher_slope_in_n".into(), num(hardy.fisher_slope), num(-1.0)]);
    fits.row(vec!["log_sobolev_slope_small_eps".into(), num(ls.slope_small), num(-(q.d as f64) / 4.0)]);
    fits.row(vec!["log_sobolev_slope_large_eps".into(), num(ls.slope_large), num(-0.25)]);

    let mut report = vec![
        "fdelab inequalities".to_string(),
        format!(
            "space: d = {}, R_max = {:e}, N = {}, {} trials from seed {seed}",
            q.d,
            q.r_max,
            q.n,
            tr.len()
        ),
    ];
    let ks: Vec<f64> = gn.reports.iter().map(|r| r.k_emp).collect();
    report.push(format!(
        "[Gagliardo-Nirenberg under the ratio constraint I/||v||_1^2 <= c0] K_emp at c0 = {:?}: {:?}; increasing {}",
        q.c0_list,
        ks.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
        ks.windows(2).all(|p| p[1] > p[0])
    ));
    let lh_min = lh.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min);
    report.push(format!(
        "[log-corrected Hardy] min relative slack {lh_min:.4} over {} (d, alpha) pairs; H(5,1) = {}, H(6,1) = {}",
        lh.len(),
        log_hardy_constant(5, 1.0)?,
        log_hardy_constant(6, 1.0)?
    ));
    report.push(format!(
        "[failure of the plain Hardy inequality] rho_n {:?} strictly increasing {}; slope of log I[v_n] in log n {:.4}",
        hardy.rows.iter().map(|r| format!("{:.4}", r.rho)).collect::<Vec<_>>(),
        hardy.strictly_increasing,
        hardy.fisher_slope
    ));
    report.push(format!(
        "[log-Sobolev calibration] slope of beta in log eps: {:.4} for eps < 1 (-d/4 = {}), {:.4} for eps >= 1 (-1/4)",
        ls.slope_small,
        -(q.d as f64) / 4.0,
        ls.slope_large
    ));
    let plots = vec![Plot {
        name: "log_sobolev".into(),
        title: "log-Sobolev beta(eps)".into(),
        data: "series.csv",
        logx: true,
        logy: false,
        xlabel: "eps".into(),
        curves: vec![(3, 4, "beta (log_sobolev rows)".into())],
    }];
    Ok(Artifacts { series, fits, report, plots })
}

pub fn compare(cfg: &ExperimentConfig) -> Result<(Artifacts, bool), CliError> {
    let p = &cfg.problem;
    let ccfg = ComparisonConfig {
        d: p.d,
        r_max: cfg.grid.r_max,
        n: cfg.grid.n,
        core_fraction: cfg.grid.core_fraction,
        d0: p.d0,
        d_star: p.d_star,
        d1: p.d1,
        critical_bumps: p.bumps.iter().map(|b| b.bump()).collect(),
        other_bumps: cfg.compare.other_bumps.iter().map(|b| b.bump()).collect(),
        s_end: cfg.time.s_end,
        cadence: cfg.time.cadence,
        window: (cfg.compare.window[0], cfg.compare.window[1]),
        margin: cfg.fit.margin,
        floor: cfg.fit.floor,
        settings: cfg.solver_settings(),
    };
    let choices = cfg.compare.m_list.iter().map(|m| m.choice()).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<_> =
        pool(cfg.run.workers)?.install(|| choices.par_iter().map(|&m| comparison_row(m, &ccfg)).collect());
    let mut series = Table::new("relative entropy against time for each exponent")
        .column("m", "diffusion exponent")
        .column("s", "rescaled time")
        .column("entropy_nl", describe(Column::EntropyNonlinear))
        .column("fisher_nl", describe(Column::FisherNonlinear));
    let mut fits = fits_table("power and exponential fits of the relative entropy per exponent").column(
        "m",
        "diffusion exponent",
    );
    let mut report = vec![
        "fdelab compare".to_string(),
        format!(
            "d = {}, grid R_max = {:e}, N = {}, s_end = {}, fit window {:?} of s_end",
            p.d, cfg.grid.r_max, cfg.grid.n, cfg.time.s_end, cfg.compare.window
        ),
        format!("{:<22} {:>12} {:>10} {:>10} {:>10} {:>10}  {}", "m", "preferred", "power p", "r² pow", "exp rate", "r² exp", "window"),
    ];
    let mut all_ok = true;
    for (spec, row) in cfg.compare.m_list.iter().zip(&rows) {
        match row {
            Ok(r) => {
                let m = r.params.m();
                for b in r.series.rows() {
                    series.row(vec![num(m), num(b.s), num(b.f_nl), num(b.i_nl)]);
                }
                for f in [&r.choice.power, &r.choice.exponential] {
                    let mut cells = vec![
                        "entropy_nl".into(),
                        f.model.name().into(),
                        num(f.exponent_or_rate),
                        num(f.intercept),
                        num(f.window.start),
                        num(f.window.end),
                        f.points.to_string(),
                        num(f.r_squared),
                        num(f.rms_residual),
                    ];
                    cells.push(num(m));
                    fits.row(cells);
                }
                let label = if r.params.is_critical() { format!("{m:.6} (m*)") } else { format!("{m:.6}") };
                report.push(format!(
                    "{label:<22} {:>12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  [{:.1}, {:.1}]",
                    r.choice.winner.map_or("inconclusive", |w| w.name()),
                    r.choice.power.exponent_or_rate,
                    r.choice.power.r_squared,
                    r.choice.exponential.exponent_or_rate,
                    r.choice.exponential.r_squared,
                    r.window.start,
                    r.window.end
                ));
            }
            Err(e) => {
                all_ok = false;
                report.push(format!("{:<22} failed: {e}", spec.label()));
            }
        }
    }
    if rows.len() >= 2 {
        report.push(
            "[slow versus fast convergence] expected: power law near s^-1/2 at m*, exponential elsewhere".into(),
        );
    }
    let plots = vec![Plot {
        name: "compare".into(),
        title: "relative entropy per exponent (rows grouped by m)".into(),
        data: "series.csv",
        logx: false,
        logy: true,
        xlabel: "s".into(),
        curves: vec![(2, 3, "entropy_nl".into())],
    }];
    Ok((Artifacts { series, fits, report, plots }, all_ok))
}
