use std::sync::Arc;

use fdelab::cigar_geometry::{embedding_isometry_residual, radial_eigenvalue, ricci, ricci_matrix};
use fdelab::entropy_functionals::{check_entropy_sandwich, check_fisher_comparison, FunctionalEvaluator};
use fdelab::inequality_lab::{gn_ratio, log_hardy_check, WeightedSpace};
use fdelab::profiles::RescaleMaps;
use fdelab::radial_grid::Weight;
use fdelab::rate_analysis::{fit_samples, Model, Window};
use fdelab::{BarenblattProfile, DiffusionParams, RadialField, RadialGrid, SandwichBounds};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn small_grid(d: u32) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(d, 1e4, 200, 0.25).unwrap())
}

fn bump(r: f64, c: f64, w: f64) -> f64 {
    let x = (r - c) / w;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_are_ordered_in_d(d in 3u32..=10, dm in 0.0f64..1.0, a in 0.1f64..10.0, b in 0.1f64..10.0, r in 0.0f64..1e6) {
        let params = DiffusionParams::new(d, (d as f64 - 4.0) / (d as f64 - 2.0) * (1.0 - dm) - dm).unwrap();
        let (lo, hi) = if a > b { (b, a) } else { (a, b) };
        prop_assume!(hi > lo);
        let v_hi = BarenblattProfile::new(params, hi).unwrap().eval(r);
        let v_lo = BarenblattProfile::new(params, lo).unwrap().eval(r);
        prop_assert!(v_hi <= v_lo);
    }

    #[test]
    fn rescaling_round_trip(d in 3u32..=8, t_frac in 0.0f64..0.999, big_t in 0.1f64..100.0, x in -50.0f64..50.0) {
        let maps = RescaleMaps::new(DiffusionParams::critical(d).unwrap(), big_t).unwrap();
        let t = t_frac * big_t;
        let (s, y) = maps.to_rescaled(t, &[x, 0.5 * x]).unwrap();
        let (t2, x2) = maps.to_original(s, &y).unwrap();
        prop_assert!((t2 - t).abs() <= 1e-12 * big_t);
        prop_assert!((x2[0] - x).abs() <= 1e-12 * x.abs().max(1.0));
        prop_assert!((x2[1] - 0.5 * x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn integral_is_linear_and_monotone(
        f in prop::collection::vec(-1.0f64..1.0, 201),
        g in prop::collection::vec(0.0f64..1.0, 201),
        a in -3.0f64..3.0,
    ) {
        let grid = small_grid(5);
        let prof = BarenblattProfile::new(DiffusionParams::critical(5).unwrap(), 1.0).unwrap();
        let w = Weight::ProfileTwoMinusM;
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
        let lhs = grid.integrate(&combo, w, &prof);
        let rhs = a * grid.integrate(&f, w, &prof) + grid.integrate(&g, w, &prof);
        let scale = grid.integrate(&vec![4.0; 201], w, &prof);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        let larger: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + y).collect();
        prop_assert!(grid.integrate(&larger, w, &prof) >= grid.integrate(&f, w, &prof) - 1e-14 * scale);
    }

    #[test]
    fn gradient_form_is_nonnegative(f in prop::collection::vec(-1.0f64..1.0, 201), c in -5.0f64..5.0) {
        let grid = small_grid(4);
        let prof = BarenblattProfile::new(DiffusionParams::new(4, 0.0).unwrap(), 1.0).unwrap();
        let q = grid.gradient_form(&f, &prof);
        prop_assert!(q >= 0.0);
        let shifted: Vec<f64> = f.iter().map(|x| x + c).collect();
        let q2 = grid.gradient_form(&shifted, &prof);
        prop_assert!((q - q2).abs() <= 1e-9 * q.max(1e-300));
        prop_assert_eq!(grid.gradient_form(&vec![c; 201], &prof), 0.0);
    }

    #[test]
    fn functionals_nonnegative_inside_the_sandwich(
        center in 0.0f64..20.0,
        width in 0.3f64..10.0,
        amp in -1.0f64..1.0,
        d in 3u32..=7,
    ) {
        let params = DiffusionParams::critical(d).unwrap();
        let bounds = SandwichBounds::new(params, 2.0, 1.0, 0.5).unwrap();
        let grid = small_grid(d);
        let h: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| {
                let (lo, up) = bounds.h_range(r);
                let raw = amp * bump(r, center, width);
                raw.clamp(lo, up)
            })
            .collect();
        let eval = FunctionalEvaluator::new(grid.clone(), bounds);
        let b = eval.evaluate_deviation(0.0, &h);
        prop_assert!(b.is_valid());
        let zero = h.iter().all(|&x| x == 0.0);
        prop_assert_eq!(b.f_nl == 0.0, zero);
        prop_assert_eq!(b.f_lin == 0.0, zero);
        let margins = check_entropy_sandwich(&b, params.m());
        let scale = margins.upper_bound.abs().max(f64::MIN_POSITIVE);
        prop_assert!(margins.lower_slack / scale >= -1e-10);
        prop_assert!(margins.upper_slack / scale >= -1e-10);
        let cmp = check_fisher_comparison(&b, &bounds);
        prop_assert!(cmp.margin >= -1e-10 * b.i_lin.max(b.i_nl).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn positive_definite_curvature(x in prop::collection::vec(-20.0f64..20.0, 3..=8)) {
        let d = x.len() as u32;
        let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ric = ricci_matrix(&x).unwrap();
        let ev = SymmetricEigen::new(ric.clone()).eigenvalues;
        let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= radial_eigenvalue(d, radius) * (1.0 - 1e-10) - 1e-14);
        prop_assert!(min > 0.0);
        // Entrywise comparison in the frame where x lies on the first axis.
        let tip = ricci(d, 0.0).unwrap().ricci;
        let here = ricci(d, radius).unwrap().ricci;
        for i in 0..d as usize {
            for j in 0..d as usize {
                prop_assert!(here[(i, j)] <= tip[(i, j)] + 1e-12);
            }
        }
    }

    #[test]
    fn embedding_is_isometric(rho in 0.0f64..1e4) {
        prop_assert!(embedding_isometry_residual(rho) <= 1e-12);
    }

    #[test]
    fn power_and_exponential_fits_recover_the_law(
        log_c in -5.0f64..5.0,
        p in -3.0f64..-0.1,
        k in 0.01f64..2.0,
    ) {
        let t: Vec<f64> = (1..=200).map(|i| i as f64 * 0.5).collect();
        let window = Window::new(5.0, 95.0);
        let y: Vec<f64> = t.iter().map(|s| (log_c + p * s.ln()).exp()).collect();
        let fit = fit_samples(&t, &y, window, Model::Power).unwrap();
        prop_assert!((fit.exponent_or_rate - p).abs() <= 1e-9);
        prop_assert!((fit.intercept - log_c).abs() <= 1e-8);
        let y: Vec<f64> = t.iter().map(|s| (log_c - k * s).exp()).collect();
        let fit = fit_samples(&t, &y, window, Model::Exponential).unwrap();
        prop_assert!((fit.exponent_or_rate - k).abs() <= 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gn_ratio_is_scale_invariant(center in 0.0f64..30.0, width in 0.5f64..20.0, t in 1e-3f64..1e3) {
        let space = WeightedSpace::new(5, 1e6, 400, 0.3).unwrap();
        let v: Vec<f64> = space.grid().nodes().iter().map(|&r| bump(r, center, width)).collect();
        prop_assume!(v.iter().any(|&x| x > 0.0));
        let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
        let (a, qa) = gn_ratio(&space, &v).unwrap();
        let (b, qb) = gn_ratio(&space, &tv).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
        prop_assert!((qa - qb).abs() <= 1e-10 * qa);
    }

    #[test]
    fn log_hardy_holds_and_ignores_scale(
        d in 5u32..=8,
        center in 0.0f64..100.0,
        width in 0.5f64..200.0,
        alpha_frac in 0.05f64..0.95,
        t in 1e-3f64..1e3,
    ) {
        let grid = RadialGrid::new(d, 1e6, 1500, 0.3).unwrap();
        let alpha = alpha_frac * (0.5 * d as f64 - 1.0);
        let v: Vec<f64> = grid.nodes().iter().map(|&r| bump(r, center, width)).collect();
        prop_assume!(v.iter().any(|&x| x > 0.0));
        let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
        let rep = log_hardy_check(&grid, &[v, tv], alpha).unwrap();
        prop_assert!(rep.min_slack >= -1e-10);
        prop_assert!((rep.slack[0] - rep.slack[1]).abs() <= 1e-10);
    }
}

#[test]
fn critical_exponent_has_unit_q() {
    for d in 3..=10 {
        let p = DiffusionParams::critical(d).unwrap();
        assert_eq!(p.q_m(), 1.0, "d = {d}");
        let prof = BarenblattProfile::new(p, 1.0).unwrap();
        let r: f64 = 1e6;
        let tail = prof.eval(r) * r.powi(d as i32 - 2);
        assert!((tail - 1.0).abs() < 1e-9, "d = {d}: {tail}");
    }
}

#[test]
fn quadrature_error_halves_under_refinement() {
    // ∫ (1+r²)^{-3/2} 4πr² dr over [0, 100] against its antiderivative.
    let exact = 4.0 * std::f64::consts::PI * (100f64.asinh() - 100.0 / (1.0 + 1e4f64).sqrt());
    let prof = BarenblattProfile::new(DiffusionParams::critical(3).unwrap(), 1.0).unwrap();
    let err = |n: usize| {
        let grid = RadialGrid::new(3, 100.0, n, 0.25).unwrap();
        let f = RadialField::constant(Arc::new(grid), 1.0).unwrap();
        (f.weighted_integral(Weight::ProfileTwoMinusM, &prof) - exact).abs()
    };
    let mut prev = err(50);
    for n in [100, 200, 400] {
        let e = err(n);
        assert!(e <= 0.5 * prev, "n = {n}: {e} vs {prev}");
        prev = e;
    }
}
