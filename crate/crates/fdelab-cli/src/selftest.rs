//! A fast pass over the invariants every module promises, on small grids.

use std::sync::Arc;

use fdelab::cigar_geometry::ricci;
use fdelab::entropy_functionals::{check_entropy_sandwich, check_fisher_comparison, check_lp_entropy_bound, FunctionalEvaluator};
use fdelab::fp_solver::{make_initial_data, Bump, FlowSnapshot, FpSolver, InitialDataSpec, SolverSettings};
use fdelab::inequality_lab::{gn_ratio, log_hardy_constant, WeightedSpace};
use fdelab::linear_flow::{evolve, semigroup_identity, spectrum, OperatorDiscretization, Stepping};
use fdelab::rate_analysis::{fit_samples, good_times_report, Model, Window};
use fdelab::{DiffusionParams, RadialField, RadialGrid, SandwichBounds};

use crate::output::{num, Artifacts, Table};
use crate::CliError;

struct Check {
    name: &'static str,
    value: f64,
    bound: f64,
    passed: bool,
}

fn check(name: &'static str, value: f64, bound: f64, passed: bool) -> Check {
    Check { name, value, bound, passed }
}

fn checks() -> Result<Vec<Check>, fdelab::Error> {
    let mut out = Vec::new();
    let crit = DiffusionParams::critical(5)?;
    out.push(check(
        "critical exponent m* = 1/3 and beta = 3/4 at d = 5",
        (crit.m() - 1.0 / 3.0).abs().max((crit.beta() - 0.75).abs()),
        1e-15,
        crit.m() == 1.0 / 3.0 && (crit.beta() - 0.75).abs() <= 1e-15,
    ));

    let bounds = SandwichBounds::new(crit, 2.0, 1.0, 0.5)?;
    let grid = Arc::new(RadialGrid::new(5, 1e6, 128, 0.25)?);
    let solver = FpSolver::new(grid.clone(), bounds, SolverSettings::default())?;
    let (mut snap, _) = make_initial_data(&InitialDataSpec::stationary(bounds), grid)?;
    let v0 = snap.v().values().to_vec();
    let mut stable = 0;
    for _ in 0..500 {
        snap = solver.step(&snap, 0.1)?;
        if snap.v().values() != &v0[..] {
            break;
        }
        stable += 1;
    }
    out.push(check("stationary profile bit-identical over 500 steps", stable as f64, 500.0, stable == 500));

    let grid = Arc::new(RadialGrid::new(5, 1e12, 400, 0.25)?);
    let solver = FpSolver::new(grid.clone(), bounds, SolverSettings::default())?;
    let (init, _) = make_initial_data(&InitialDataSpec::single_bump(bounds, Bump::positive(1.0, 1.0, 0.1)), grid.clone())?;
    let eval = FunctionalEvaluator::new(grid.clone(), bounds);
    let (mut sandwich, mut fisher, mut lp, mut excess) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0f64);
    let (series, _) = solver.run_observed(&init, 10.0, 0.1, &mut |s: &FlowSnapshot| {
        let b = eval.evaluate(s);
        let sm = check_entropy_sandwich(&b, crit.m());
        sandwich = sandwich.min(sm.lower_slack.min(sm.upper_slack) / sm.upper_bound.abs().max(f64::MIN_POSITIVE));
        fisher = fisher.min(check_fisher_comparison(&b, &bounds).margin);
        lp = lp.min(check_lp_entropy_bound(s)?.margin);
        excess = excess.max(s.sandwich_excess().0);
        Ok(())
    })?;
    out.push(check("entropy sandwich, min relative slack", sandwich, -1e-12, sandwich >= -1e-12));
    out.push(check("Fisher comparison, min margin", fisher, 0.0, fisher >= 0.0));
    out.push(check("L^p bound by the linearized entropy, min margin", lp, 0.0, lp >= 0.0));
    out.push(check("sandwich V_D0 <= v <= V_D1, max excess", excess, 1e-10, excess <= 1e-10));
    let rows = series.rows();
    let rise = rows.windows(2).map(|w| w[1].f_nl - w[0].f_nl).fold(f64::NEG_INFINITY, f64::max);
    out.push(check("relative entropy non-increasing, max rise", rise, 0.0, rise <= 0.0));
    let gt_small = good_times_report(&series, 1e-3).coverage;
    let gt_large = good_times_report(&series, 1e3).coverage;
    out.push(check("good-times coverage non-increasing in K", gt_small - gt_large, 0.0, gt_small >= gt_large));

    let op = OperatorDiscretization::assemble(Arc::new(RadialGrid::new(5, 100.0, 200, 0.25)?), crit, 1.0)?;
    let (a, b) = semigroup_identity(&op, 0, 0.5, 50)?;
    let rel = (a - b).abs() / b.abs();
    out.push(check("linear semigroup: ||g(t)||^2 = g(2t)(x0)", rel, 1e-10, rel <= 1e-10));
    let bump = RadialField::from_fn(op.grid().clone(), |r| if r < 2.0 { (1.0 - 0.5 * r).powi(2) } else { 0.0 })?;
    let tr = evolve(&op, &bump, 5.0, Stepping::Fixed { dt: 0.05 })?;
    let drift = tr.mass.iter().map(|m| (m - tr.mass[0]).abs()).fold(0.0, f64::max) / tr.mass[0];
    out.push(check("linear mass conservation, relative drift", drift, 1e-12, drift <= 1e-12));
    let energy_rise = tr.energy.windows(2).map(|w| w[1] - w[0] * (1.0 + 1e-12)).fold(f64::NEG_INFINITY, f64::max);
    out.push(check("linear energy non-increasing, max rise", energy_rise, 0.0, energy_rise <= 0.0));
    let sp = spectrum(&op, 3)?;
    let l2 = sp.eigenvalues[1];
    out.push(check("lowest eigenvalue is the constant mode", sp.eigenvalues[0].abs(), 1e-10, sp.eigenvalues[0].abs() <= 1e-10));
    let count = op.count_below(0.5 * l2);
    out.push(check("one eigenvalue below lambda_2/2", count as f64, 1.0, count == 1));

    let r = ricci(3, 1.0)?;
    let err = r.eigenvalues.iter().zip([1.0, 1.25, 1.25]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check("Ricci eigenvalues at d = 3, X = 1 are 1, 1.25, 1.25", err, 1e-12, err <= 1e-12));
    out.push(check("trace identity at d = 3, X = 1", r.trace_residual, 1e-12, r.trace_residual <= 1e-12));

    let (h51, h61) = (log_hardy_constant(5, 1.0)?, log_hardy_constant(6, 1.0)?);
    out.push(check("log-Hardy constant H(5,1) = 6", h51, 6.0, h51 == 6.0));
    out.push(check("log-Hardy constant H(6,1) = 2", h61, 2.0, h61 == 2.0));

    let space = WeightedSpace::new(5, 1e6, 400, 0.3)?;
    let v: Vec<f64> = space.grid().nodes().iter().map(|r| (-r * r).exp()).collect();
    let v3: Vec<f64> = v.iter().map(|x| 3.0 * x).collect();
    let (r1, r3) = (gn_ratio(&space, &v).unwrap().0, gn_ratio(&space, &v3).unwrap().0);
    let rel = (r1 - r3).abs() / r1;
    out.push(check("Gagliardo-Nirenberg quotient is scale invariant", rel, 1e-12, rel <= 1e-12));

    let s: Vec<f64> = (1..=50).map(|i| i as f64).collect();
    let y: Vec<f64> = s.iter().map(|x| 3.0 / x.sqrt()).collect();
    let f = fit_samples(&s, &y, Window::new(1.0, 50.0), Model::Power)?;
    let err = (f.exponent_or_rate + 0.5).abs().max((f.intercept - 3f64.ln()).abs());
    out.push(check("power fit recovers 3 s^-1/2", err, 1e-10, err <= 1e-10));
    let y: Vec<f64> = s.iter().map(|x| (-2.0 * x).exp()).collect();
    let f = fit_samples(&s, &y, Window::new(1.0, 50.0), Model::Exponential)?;
    let err = (f.exponent_or_rate - 2.0).abs();
    out.push(check("exponential fit recovers exp(-2 s)", err, 1e-10, err <= 1e-10));
    Ok(out)
}

/// Returns the artifacts and whether every check passed.
pub fn selftest() -> Result<(Artifacts, bool), CliError> {
    let results = checks()?;
    let mut series = Table::new("self-test of the invariant suite")
        .column("check", "property checked")
        .column("passed", "1 if the property holds")
        .column("value", "measured value")
        .column("bound", "threshold or expected value");
    let mut report = vec!["fdelab selftest".to_string()];
    for c in &results {
        series.row(vec![c.name.into(), (c.passed as u8).to_string(), num(c.value), num(c.bound)]);
        report.push(format!("{} {}: {:.3e} (bound {:.3e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound));
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    report.push(format!("{} checks, {failed} failed", results.len()));
    let fits = Table::new("no fits for the self-test").column("quantity", "unused").column("value", "unused");
    Ok((Artifacts { series, fits, report, plots: Vec::new() }, failed == 0))
}
