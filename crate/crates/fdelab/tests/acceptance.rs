//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed. The
//! exit status is zero unless `ACCEPTANCE_STRICT=1` is set and some criterion
//! fails; the summary line always states the count.

use std::sync::Arc;
use std::time::Instant;

use fdelab::cigar_geometry::{
    cigar_embedding, embedding_isometry_residual, radial_eigenvalue, ricci, transversal_eigenvalue,
};
use fdelab::entropy_functionals::{
    check_entropy_sandwich, check_fisher_comparison, check_lp_entropy_bound, dissipation_residual,
};
use fdelab::fp_solver::{make_initial_data, Bump, FlowSnapshot, FpSolver, InitialDataSpec, SolverSettings};
use fdelab::inequality_lab::{
    gn_sweep, hardy_failure_demo, log_hardy_check, log_hardy_constant, FamilyKind, TrialFamily, WeightedSpace,
};
use fdelab::linear_flow::{
    heat_kernel_probe, linear_entropy_decay, spectral_sweep, spectrum, OperatorDiscretization, Stepping,
};
use fdelab::rate_analysis::{
    calibrate_good_times_k, fit_samples, good_times_report, resolved_window, select_model,
    window_shift_sensitivity, Column, FlowTimeSeries, Model, Window,
};
use fdelab::{DiffusionParams, RadialField, RadialGrid, Result, SandwichBounds};

struct Tally {
    passed: usize,
    failed: Vec<u32>,
}

impl Tally {
    fn report(&mut self, id: u32, ok: bool, what: &str, detail: String) {
        println!("{} [{id:>2}] {what}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id);
        }
    }
}

fn note(text: String) {
    println!("     note: {text}");
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

/// Everything criterion 7 asks of one run, gathered while it runs.
#[derive(Default)]
struct RunChecks {
    worst_sandwich_slack: f64,
    worst_fisher_margin: f64,
    worst_lp_margin: f64,
    worst_state_excess: f64,
    points: usize,
}

struct Reference {
    series: FlowTimeSeries,
    checks: RunChecks,
    seconds: f64,
}

fn reference_grid() -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(5, 1e36, 2000, 0.25).unwrap())
}

fn run_reference(params: DiffusionParams, bumps: Vec<Bump>, balance: bool, cadence: f64) -> Result<Reference> {
    let t0 = Instant::now();
    let bounds = SandwichBounds::new(params, 2.0, 1.0, 0.5)?;
    let grid = reference_grid();
    let spec = InitialDataSpec { bounds, bumps, balance_mass: balance };
    let (init, _) = make_initial_data(&spec, grid.clone())?;
    let solver = FpSolver::new(grid, bounds, SolverSettings::default())?;
    let mut c = RunChecks {
        worst_sandwich_slack: f64::INFINITY,
        worst_fisher_margin: f64::INFINITY,
        worst_lp_margin: f64::INFINITY,
        ..Default::default()
    };
    let eval = fdelab::entropy_functionals::FunctionalEvaluator::new(solver.grid().clone(), bounds);
    let m = params.m();
    let (series, _) = solver.run_observed(&init, 200.0, cadence, &mut |snap: &FlowSnapshot| {
        let b = eval.evaluate(snap);
        let sm = check_entropy_sandwich(&b, m);
        let scale = sm.upper_bound.abs().max(f64::MIN_POSITIVE);
        c.worst_sandwich_slack = c.worst_sandwich_slack.min(sm.lower_slack.min(sm.upper_slack) / scale);
        c.worst_fisher_margin = c.worst_fisher_margin.min(check_fisher_comparison(&b, &bounds).margin);
        c.worst_lp_margin = c.worst_lp_margin.min(check_lp_entropy_bound(snap)?.margin);
        c.worst_state_excess = c.worst_state_excess.max(snap.sandwich_excess().0);
        c.points += 1;
        Ok(())
    })?;
    Ok(Reference { series, checks: c, seconds: t0.elapsed().as_secs_f64() })
}

fn critical_op(r_max: f64, n: usize) -> OperatorDiscretization {
    let grid = Arc::new(RadialGrid::new(5, r_max, n, 0.25).unwrap());
    OperatorDiscretization::assemble(grid, DiffusionParams::critical(5).unwrap(), 1.0).unwrap()
}

fn probe_stepping() -> Stepping {
    Stepping::Geometric { dt0: 1e-6, ratio: 1.02, dt_max: 0.05 }
}

fn compact_bump(op: &OperatorDiscretization) -> RadialField {
    RadialField::from_fn(op.grid().clone(), |r| if r < 2.0 { (1.0 - 0.5 * r).powi(2) } else { 0.0 }).unwrap()
}

fn main() {
    let start = Instant::now();
    let mut t = Tally { passed: 0, failed: vec![] };
    let late = Window::new(10.0, 100.0);
    let short = Window::new(1e-3, 1e-2);

    // 1. heat kernel sup-norm decay
    let op400 = critical_op(400.0, 1200);
    let t1 = Instant::now();
    let probe = heat_kernel_probe(&op400, 0, 100.0, probe_stepping()).unwrap();
    let sup_fit = fit_samples(&probe.times, &probe.sup, late, Model::Power).unwrap();
    let secs1 = t1.elapsed().as_secs_f64();
    t.report(
        1,
        in_band(sup_fit.exponent_or_rate, -0.6, -0.4) && secs1 < 60.0,
        "linear heat-kernel sup-norm decay, d=5, m=m*, R_max=400, N=1200, t in [10,100]",
        format!("exponent {:.4} (target -0.5 ± 0.1), {secs1:.2} s", sup_fit.exponent_or_rate),
    );
    let op_far = critical_op(1e12, 2000);
    let probe_far = heat_kernel_probe(&op_far, 0, 100.0, probe_stepping()).unwrap();
    let far_sup = fit_samples(&probe_far.times, &probe_far.sup, late, Model::Power).unwrap();
    note(format!(
        "R_max=400 is about 6.7 geodesic units; the kernel has flattened to 1/volume before t=10. \
         Same probe at R_max=1e12, N=2000: exponent {:.4}",
        far_sup.exponent_or_rate
    ));

    // 2. linear entropy decay and short-time on-diagonal behaviour
    let ent = linear_entropy_decay(&op400, &compact_bump(&op400), 100.0, probe_stepping(), late).unwrap();
    let short_fit = fit_samples(&probe.times, &probe.norm_sq, short, Model::Power).unwrap();
    let short_sup = fit_samples(&probe.times, &probe.sup, short, Model::Power).unwrap();
    t.report(
        2,
        in_band(ent.fit.exponent_or_rate, -0.6, -0.4) && in_band(short_fit.exponent_or_rate, -2.8, -2.2),
        "linear entropy ||g(t)||^2 decay (R_max=400) and short-time probe at x0=0",
        format!(
            "entropy exponent {:.4} (target -0.5 ± 0.1); short-time exponent {:.4} (target -2.5 ± 0.3)",
            ent.fit.exponent_or_rate, short_fit.exponent_or_rate
        ),
    );
    let ent_far = linear_entropy_decay(&op_far, &compact_bump(&op_far), 100.0, probe_stepping(), late).unwrap();
    note(format!(
        "at R_max=1e12: entropy exponent {:.4}, F' <= -c F^3 with c = {:.3e}; short-time sup-norm exponent {:.4}",
        ent_far.fit.exponent_or_rate, ent_far.c_fit, short_sup.exponent_or_rate
    ));

    // 3. nonlinear slow rate at m*
    let crit = DiffusionParams::critical(5).unwrap();
    let star = run_reference(crit, vec![Bump::positive(1.0, 1.0, 0.1)], false, 0.1).unwrap();
    let w = star.series.default_window();
    let f_fit = fit_samples(&star.series.times(), &star.series.column(Column::EntropyNonlinear), w, Model::Power).unwrap();
    let shift = window_shift_sensitivity(&star.series, Column::EntropyNonlinear, w, 0.2).unwrap();
    let l2_fit =
        fit_samples(&star.series.times(), &star.series.column(Column::L2DeviationWeighted), w, Model::Power).unwrap();
    t.report(
        3,
        in_band(f_fit.exponent_or_rate, -0.65, -0.35)
            && shift < 0.05
            && in_band(l2_fit.exponent_or_rate, -0.35, -0.15)
            && star.seconds < 600.0,
        "nonlinear relative entropy decay, d=5, m=m*=1/3, s in [100,190]",
        format!(
            "entropy exponent {:.4} (target [-0.65,-0.35]), window-shift change {:.2e} (< 0.05), \
             || |y|^(d/2) (v-V) ||_2 exponent {:.4} (target [-0.35,-0.15]), {:.1} s",
            f_fit.exponent_or_rate, shift, l2_fit.exponent_or_rate, star.seconds
        ),
    );
    let plain = fit_samples(&star.series.times(), &star.series.column(Column::L2Deviation), w, Model::Power).unwrap();
    note(format!("unweighted ||v-V||_2 exponent {:.4}", plain.exponent_or_rate));

    // 4. exponential contrast at m = 0.45
    let p45 = DiffusionParams::new(5, 0.45).unwrap();
    let dipole = vec![Bump::positive(1.0, 1.0, 0.1), Bump::negative(3.0, 1.0, 0.1)];
    let r45 = run_reference(p45, dipole.clone(), true, 0.1).unwrap();
    let w45 = resolved_window(&r45.series, Column::EntropyNonlinear, Window::new(10.0, 190.0), 1e-24);
    let choice = select_model(&r45.series, Column::EntropyNonlinear, w45, 0.01).unwrap();
    let op45 = OperatorDiscretization::assemble(reference_grid(), p45, 1.0).unwrap();
    let lambda2 = spectrum(&op45, 2).unwrap().eigenvalues[1];
    // reference linear run from the linearization of the same datum
    let bounds45 = SandwichBounds::new(p45, 2.0, 1.0, 0.5).unwrap();
    let (init45, _) = make_initial_data(
        &InitialDataSpec { bounds: bounds45, bumps: dipole, balance_mass: true },
        reference_grid(),
    )
    .unwrap();
    let lin45 = fdelab::linear_flow::evolve(&op45, init45.g(), 200.0, Stepping::Fixed { dt: 0.05 }).unwrap();
    let lin_rate = fit_samples(&lin45.times, &lin45.norm_sq, w45, Model::Exponential).unwrap().exponent_or_rate;
    let multiple = lin_rate / lambda2;
    let predicted = multiple * lambda2;
    let rel = (choice.exponential.exponent_or_rate - predicted).abs() / predicted;
    t.report(
        4,
        choice.exponential.r_squared - choice.power.r_squared >= 0.01 && rel <= 0.25,
        "exponential contrast at m=0.45, d=5",
        format!(
            "r² exponential {:.4} vs power {:.4} (margin >= 0.01); entropy rate {:.4} vs {:.3}·λ₂ = {:.4} \
             (λ₂ = {:.5}, multiple from the linear run), relative difference {:.3} (<= 0.25)",
            choice.exponential.r_squared,
            choice.power.r_squared,
            choice.exponential.exponent_or_rate,
            multiple,
            predicted,
            lambda2,
            rel
        ),
    );
    note(format!(
        "rate against the bare quadratic multiple 2λ₂ = {:.4}: relative difference {:.3}",
        2.0 * lambda2,
        (choice.exponential.exponent_or_rate - 2.0 * lambda2).abs() / (2.0 * lambda2)
    ));

    // 5. spectral gap sweep
    let radii = [50.0, 100.0, 200.0, 400.0];
    let sweep_c = spectral_sweep(crit, 1.0, &radii, 1200, 0.25, 2).unwrap();
    let sweep_0 = spectral_sweep(DiffusionParams::new(5, 0.0).unwrap(), 1.0, &radii, 1200, 0.25, 2).unwrap();
    let lc = sweep_c.lambda2();
    let l0 = sweep_0.lambda2();
    let decreasing = lc.windows(2).all(|p| p[1] < p[0]);
    let halved = lc[3] < 0.5 * lc[0];
    let spread0 = sweep_0.relative_spread();
    t.report(
        5,
        decreasing && halved && spread0 < 0.10,
        "second eigenvalue against R_max in {50,100,200,400}",
        format!(
            "m=m*: {:?} decreasing {decreasing}, λ₂(400)/λ₂(50) = {:.3} (< 0.5); m=0: {:?} spread {:.3} (< 0.10)",
            lc.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            lc[3] / lc[0],
            l0.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            spread0
        ),
    );
    note(format!(
        "fit λ₂(R) = λ∞ + c/(log R)²: λ∞ ≈ {:.4} at m=0 and {:.4} at m=m*",
        sweep_0.extrapolated(),
        sweep_c.extrapolated()
    ));

    // 6. conservation
    let lin_drift = probe
        .mass
        .iter()
        .zip(&probe.times)
        .map(|(m, &tt)| (m - probe.mass[0]).abs() / probe.mass[0] / tt.max(1.0))
        .fold(0.0, f64::max);
    let rows = star.series.rows();
    let (m0, m1) = (rows[0].rel_mass, rows[rows.len() - 1].rel_mass);
    let nl_drift = (m1 - m0).abs() / m0.abs() * 100.0 / star.series.s_end();
    let bounds_c = SandwichBounds::new(crit, 2.0, 1.0, 0.5).unwrap();
    let solver = FpSolver::new(reference_grid(), bounds_c, SolverSettings::default()).unwrap();
    let (mut snap, _) = make_initial_data(&InitialDataSpec::stationary(bounds_c), reference_grid()).unwrap();
    let mut stable = 0usize;
    for _ in 0..10_000 {
        snap = solver.step(&snap, 0.1).unwrap();
        if snap.h().values().iter().any(|&h| h != 0.0) {
            break;
        }
        stable += 1;
    }
    let excess = star.checks.worst_state_excess.max(r45.checks.worst_state_excess);
    t.report(
        6,
        lin_drift <= 1e-8 && nl_drift <= 1e-4 && stable >= 10_000 && excess <= 1e-10,
        "conservation and invariance",
        format!(
            "linear mass drift {lin_drift:.2e}/time (<= 1e-8); nonlinear relative-mass drift {nl_drift:.2e} per 100 \
             (<= 1e-4); stationary state bit-identical for {stable} steps (>= 10000); sandwich excess {excess:.2e} (<= 1e-10)"
        ),
    );

    // 7. comparison lemmas and dissipation identity at every cadence point
    let star_fine = run_reference(crit, vec![Bump::positive(1.0, 1.0, 0.1)], false, 0.05).unwrap();
    let d_star = dissipation_residual(&star.series, 1.0, 0.0);
    let d_45 = dissipation_residual(&r45.series, 1.0, 0.0);
    let late_max = |series: &FlowTimeSeries| dissipation_residual(series, 10.0, 0.0).max_relative;
    let halving = late_max(&star_fine.series) / late_max(&star.series);
    let mut ok7 = true;
    let mut parts = Vec::new();
    for (name, r) in [("m*", &star), ("m=0.45", &r45)] {
        let c = &r.checks;
        ok7 &= c.worst_sandwich_slack >= -1e-12 && c.worst_fisher_margin >= 0.0 && c.worst_lp_margin >= 0.0;
        parts.push(format!(
            "{name}: {} points, min relative slack entropy sandwich {:.2e}, Fisher comparison {:.2e}, L^(d/2) bound {:.2e}",
            c.points, c.worst_sandwich_slack, c.worst_fisher_margin, c.worst_lp_margin
        ));
    }
    ok7 &= d_star.max_relative <= 0.05 && d_45.max_relative <= 0.05 && in_band(halving, 0.4, 0.6);
    parts.push(format!(
        "dissipation residual for s >= 1: {:.3} (m*), {:.3} (m=0.45) (<= 0.05); cadence 0.1 -> 0.05 ratio {:.3} \
         over s >= 10 (halving: [0.4, 0.6])",
        d_star.max_relative, d_45.max_relative, halving
    ));
    t.report(7, ok7, "entropy sandwich, Fisher comparison, L^(d/2) bound, dissipation identity", parts.join("; "));

    // 8. geometry
    let mut trace: f64 = 0.0;
    let mut eig: f64 = 0.0;
    let mut min_ok = true;
    for d in 3..=8u32 {
        for x in [0.0, 0.5, 1.0, 2.0, 10.0, 100.0] {
            let r = ricci(d, x).unwrap();
            trace = trace.max(r.trace_residual);
            let (lr, lt) = (radial_eigenvalue(d, x), transversal_eigenvalue(d, x));
            let mut expected = vec![lt; d as usize];
            expected[0] = lr;
            expected.sort_by(|a, b| a.total_cmp(b));
            for (e, f) in r.eigenvalues.iter().zip(&expected) {
                eig = eig.max((e - f).abs());
            }
            min_ok &= r.eigenvalues[0] >= lr * (1.0 - 1e-12);
        }
    }
    let at1 = ricci(3, 1.0).unwrap().eigenvalues;
    let at1_ok = at1.iter().zip([1.0, 1.25, 1.25]).all(|(a, b)| (a - b).abs() <= 1e-12);
    let xs: Vec<f64> = (0..=20).map(|i| 10f64.powf(1.0 + 0.1 * i as f64)).collect();
    let slope_of = |f: &dyn Fn(f64) -> f64| {
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        fit_samples(&xs, &ys, Window::new(10.0, 1000.0), Model::Power).unwrap().exponent_or_rate
    };
    let s_rad = slope_of(&|x| ricci(5, x).unwrap().eigenvalues[0]);
    let s_tr = slope_of(&|x| ricci(5, x).unwrap().eigenvalues[4]);
    let iso = [0.0, 0.3, 1.0, 5.0, 50.0, 1e3, 1e5].iter().map(|&r| embedding_isometry_residual(r)).fold(0.0, f64::max);
    let phi_inf = cigar_embedding(100.0).unwrap().0;
    let rhos = [1e2, 1e3, 1e4];
    let psis: Vec<f64> = rhos.iter().map(|&r| cigar_embedding(r).unwrap().1).collect();
    let lr: Vec<f64> = rhos.iter().map(|r| r.ln()).collect();
    let psi_slope = (psis[2] - psis[0]) / (lr[2] - lr[0]);
    t.report(
        8,
        trace <= 1e-12
            && eig <= 1e-12
            && at1_ok
            && min_ok
            && (s_rad + 4.0).abs() <= 0.1
            && (s_tr + 2.0).abs() <= 0.1
            && iso <= 1e-12
            && phi_inf > 0.9999
            && (psi_slope - 1.0).abs() <= 0.02,
        "curvature of the conformal metric and the cigar profile",
        format!(
            "trace residual {trace:.1e}, eigenvalue error {eig:.1e} (<= 1e-12), (d=3,X=1) {:?}; decay slopes radial \
             {s_rad:.4} transversal {s_tr:.4} (-4, -2 ± 0.1); isometry residual {iso:.1e}; Φ(100) = {phi_inf:.6}; \
             slope of Ψ against log ϱ {psi_slope:.4} (1 ± 0.02)",
            at1.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>()
        ),
    );

    // 9. inequalities
    let kinds = [
        FamilyKind::Bumps { max_center: 50.0, min_width: 0.05, max_width: 50.0 },
        FamilyKind::Concentrated { min_scale: 0.01, max_scale: 100.0 },
        FamilyKind::Plateaus { min_radius: 0.2, max_radius: 8.0 },
        FamilyKind::Modulated { max_degree: 4, max_cutoff: 1e3 },
    ];
    let space = WeightedSpace::new(5, 1e12, 3000, 0.3).unwrap();
    let trials: Vec<Vec<f64>> = kinds
        .iter()
        .enumerate()
        .flat_map(|(i, k)| TrialFamily::new(100 + i as u64, *k, 200).generate(space.grid()))
        .collect();
    let gn = gn_sweep(&space, &trials, &[1.0, 10.0, 100.0]).unwrap();
    let ks: Vec<f64> = gn.reports.iter().map(|r| r.k_emp).collect();
    let gn_ok = ks.windows(2).all(|p| p[1] > p[0]) && ks.iter().all(|k| k.is_finite() && *k > 0.0);
    let mut lh_min = f64::INFINITY;
    for d in 3..=8u32 {
        let grid = RadialGrid::new(d, 1e8, 2000, 0.3).unwrap();
        let tr: Vec<Vec<f64>> = kinds
            .iter()
            .enumerate()
            .flat_map(|(i, k)| TrialFamily::new(7 + i as u64, *k, 50).generate(&grid))
            .collect();
        let mut a = 0.25;
        while a < 0.5 * (d as f64 - 2.0) - 1e-12 {
            lh_min = lh_min.min(log_hardy_check(&grid, &tr, a).unwrap().min_slack);
            a += 0.25;
        }
    }
    let (h51, h61) = (log_hardy_constant(5, 1.0).unwrap(), log_hardy_constant(6, 1.0).unwrap());
    let hardy = hardy_failure_demo(&WeightedSpace::new(5, 1e4, 2000, 0.25).unwrap(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
    t.report(
        9,
        gn_ok && lh_min >= -1e-10 && h51 == 6.0 && h61 == 2.0 && hardy.strictly_increasing && (hardy.fisher_slope + 1.0).abs() <= 0.2,
        "Gagliardo–Nirenberg, log-corrected Hardy, failure of Hardy",
        format!(
            "GN K_emp at c0=1,10,100: {:?} (increasing); log-Hardy min slack {lh_min:.3} (>= -1e-10), H(5,1)={h51}, \
             H(6,1)={h61}; ρ_n {:?} strictly increasing {}, slope of I[v_n] in n {:.3} (-1 ± 0.2)",
            ks.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            hardy.rows.iter().map(|r| format!("{:.4}", r.rho)).collect::<Vec<_>>(),
            hardy.strictly_increasing,
            hardy.fisher_slope
        ),
    );

    // 10. good times
    let k = calibrate_good_times_k(&star.series, 1.0).unwrap();
    let gt = good_times_report(&star.series, k);
    let late_windows = gt.windows.iter().filter(|w| w.start >= 0.5 * star.series.s_end() - 1e-9).count();
    t.report(
        10,
        gt.late_window_fraction >= 0.8,
        "good times N^4 K <= I on the m* reference run",
        format!(
            "K = {k:.4} (2 k2 R/N^4 at s=1); {:.0}% of the {late_windows} late windows [2k,2k+2] contain a good stretch \
             of length >= 1/2 (>= 80%); overall coverage {:.3}",
            100.0 * gt.late_window_fraction,
            gt.coverage
        ),
    );

    println!(
        "acceptance: {} passed, {} failed {:?}, {:.1} s",
        t.passed,
        t.failed.len(),
        t.failed,
        start.elapsed().as_secs_f64()
    );
    if !t.failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
