//! The linearized flow `∂_s g = V^{m-2} ∇·(V ∇g)` as a symmetric pencil
//! `B ġ = -A g`, with `A` the stiffness matrix of `∫|∇g|² V` and `B` the
//! lumped mass of `dμ = V^{2-m} dy`. Natural boundary at `R_max`, so
//! constants span the kernel of `A` and mass `Σ B g` is conserved exactly.

use std::sync::Arc;

use crate::profiles::{BarenblattProfile, DiffusionParams};
use crate::radial_grid::{RadialField, RadialGrid, Weight};
use crate::rate_analysis::{fit_samples, Model, RateFit, Window};
use crate::tridiag;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct OperatorDiscretization {
    grid: Arc<RadialGrid>,
    profile: BarenblattProfile,
    a_diag: Vec<f64>,
    /// Off-diagonal `A[e][e+1]`, negative.
    a_off: Vec<f64>,
    b: Vec<f64>,
}

impl OperatorDiscretization {
    pub fn assemble(grid: Arc<RadialGrid>, params: DiffusionParams, d_param: f64) -> Result<Self> {
        let profile = BarenblattProfile::new(params, d_param)?;
        let n = grid.n();
        let mut a_diag = vec![0.0; n + 1];
        let mut a_off = Vec::with_capacity(n);
        for e in 0..n {
            let k = profile.eval(grid.edge_mid()[e]) * grid.edge_conductance()[e];
            a_off.push(-k);
            a_diag[e] += k;
            a_diag[e + 1] += k;
        }
        let b = grid.measure(Weight::ProfileTwoMinusM, &profile);
        if b.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || a_off.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("operator entries under- or overflow on this grid".into()));
        }
        Ok(Self { grid, profile, a_diag, a_off, b })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn profile(&self) -> &BarenblattProfile {
        &self.profile
    }
    pub fn a_diag(&self) -> &[f64] {
        &self.a_diag
    }
    pub fn a_off(&self) -> &[f64] {
        &self.a_off
    }
    pub fn mass_matrix(&self) -> &[f64] {
        &self.b
    }

    pub fn apply_a(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        let mut out: Vec<f64> = self.a_diag.iter().zip(g).map(|(a, x)| a * x).collect();
        for e in 0..n - 1 {
            out[e] += self.a_off[e] * g[e + 1];
            out[e + 1] += self.a_off[e] * g[e];
        }
        out
    }

    /// `gᵀ A g`, summed edge by edge so that constants give exactly zero.
    pub fn energy(&self, g: &[f64]) -> f64 {
        self.a_off.iter().enumerate().map(|(e, &k)| -k * (g[e + 1] - g[e]).powi(2)).sum()
    }

    /// `∫ g dμ`.
    pub fn mass(&self, g: &[f64]) -> f64 {
        self.b.iter().zip(g).map(|(b, x)| b * x).sum()
    }

    /// `‖g‖²` in `L²(dμ)`.
    pub fn norm_sq(&self, g: &[f64]) -> f64 {
        self.b.iter().zip(g).map(|(b, x)| b * x * x).sum()
    }

    /// One backward Euler step `(B + dt A) g⁺ = B g`.
    pub fn step(&self, g: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = g.len();
        let diag: Vec<f64> = (0..n).map(|i| self.b[i] + dt * self.a_diag[i]).collect();
        let off: Vec<f64> = self.a_off.iter().map(|k| dt * k).collect();
        let mut rhs: Vec<f64> = self.b.iter().zip(g).map(|(b, x)| b * x).collect();
        tridiag::solve(&off, &diag, &off, &mut rhs)?;
        Ok(rhs)
    }

    /// Discrete delta at node `i` with unit mass.
    pub fn delta(&self, i: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.b.len()];
        g[i] = 1.0 / self.b[i];
        g
    }

    /// Number of generalized eigenvalues below `sigma` (inertia of `A - σB`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut piv = 0.0;
        for i in 0..self.b.len() {
            let mut d = self.a_diag[i] - sigma * self.b[i];
            if i > 0 {
                let off = self.a_off[i - 1];
                let prev = if piv == 0.0 { f64::MIN_POSITIVE } else { piv };
                d -= off * off / prev;
            }
            if d < 0.0 {
                count += 1;
            }
            piv = d;
        }
        count
    }
}

/// Time step policy for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    Fixed { dt: f64 },
    /// `dt` starts at `dt0` and grows by `ratio` up to `dt_max`.
    Geometric { dt0: f64, ratio: f64, dt_max: f64 },
}

impl Stepping {
    fn times(&self, t_end: f64) -> Result<Vec<f64>> {
        let mut ts = Vec::new();
        let mut t = 0.0;
        match *self {
            Stepping::Fixed { dt } => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidParams(format!("dt = {dt}")));
                }
                let n = (t_end / dt).round().max(1.0) as usize;
                ts.extend((1..=n).map(|k| k as f64 * dt));
            }
            Stepping::Geometric { dt0, ratio, dt_max } => {
                if !(dt0 > 0.0 && ratio >= 1.0 && dt_max >= dt0) {
                    return Err(Error::InvalidParams("bad geometric stepping".into()));
                }
                let mut dt = dt0;
                while t < t_end * (1.0 - 1e-12) {
                    t = (t + dt).min(t_end);
                    ts.push(t);
                    dt = (dt * ratio).min(dt_max);
                }
            }
        }
        Ok(ts)
    }
}

/// Per-step diagnostics of a linear run (index 0 is the initial datum).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sup: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mass: Vec<f64>,
    pub norm_sq: Vec<f64>,
    pub energy: Vec<f64>,
    /// Value at the probe node, if any.
    pub probe: Vec<f64>,
    pub last: Vec<f64>,
}

fn record(op: &OperatorDiscretization, tr: &mut Trajectory, t: f64, g: &[f64], probe: Option<usize>) {
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    tr.times.push(t);
    tr.min.push(lo);
    tr.max.push(hi);
    tr.sup.push(lo.abs().max(hi.abs()));
    tr.mass.push(op.mass(g));
    tr.norm_sq.push(op.norm_sq(g));
    tr.energy.push(op.energy(g));
    if let Some(i) = probe {
        tr.probe.push(g[i]);
    }
}

fn evolve_vec(op: &OperatorDiscretization, g0: Vec<f64>, t_end: f64, stepping: Stepping, probe: Option<usize>) -> Result<Trajectory> {
    if g0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial datum".into()));
    }
    let mut tr = Trajectory {
        times: vec![],
        sup: vec![],
        min: vec![],
        max: vec![],
        mass: vec![],
        norm_sq: vec![],
        energy: vec![],
        probe: vec![],
        last: vec![],
    };
    record(op, &mut tr, 0.0, &g0, probe);
    let mut g = g0;
    let mut t = 0.0;
    for tn in stepping.times(t_end)? {
        g = op.step(&g, tn - t)?;
        t = tn;
        record(op, &mut tr, t, &g, probe);
    }
    tr.last = g;
    Ok(tr)
}

pub fn evolve(op: &OperatorDiscretization, g0: &RadialField, t_end: f64, stepping: Stepping) -> Result<Trajectory> {
    evolve_vec(op, g0.values().to_vec(), t_end, stepping, None)
}

/// Evolution of the unit-mass delta at node `x0`. `norm_sq` is then the
/// discrete on-diagonal kernel at twice the time, `probe` the kernel itself.
pub fn heat_kernel_probe(op: &OperatorDiscretization, x0: usize, t_end: f64, stepping: Stepping) -> Result<Trajectory> {
    if x0 >= op.b.len() {
        return Err(Error::InvalidParams(format!("probe node {x0} outside the grid")));
    }
    evolve_vec(op, op.delta(x0), t_end, stepping, Some(x0))
}

/// `‖g(t)‖²` and `g(2t)[x0]` from the same delta with `n` and `2n` equal steps.
/// The two agree up to roundoff because every step is a function of the same
/// self-adjoint operator.
pub fn semigroup_identity(op: &OperatorDiscretization, x0: usize, t: f64, n: usize) -> Result<(f64, f64)> {
    let dt = t / n as f64;
    let mut g = op.delta(x0);
    for _ in 0..n {
        g = op.step(&g, dt)?;
    }
    let lhs = op.norm_sq(&g);
    for _ in 0..n {
        g = op.step(&g, dt)?;
    }
    Ok((lhs, g[x0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEntropyReport {
    pub trajectory: Trajectory,
    pub fit: RateFit,
    /// Smallest `-F'/F³` over the window, from centred differences. Positive
    /// means `F' ≤ -c F³` holds there with `c = c_fit`.
    pub c_fit: f64,
}

pub fn linear_entropy_decay(
    op: &OperatorDiscretization,
    g0: &RadialField,
    t_end: f64,
    stepping: Stepping,
    window: Window,
) -> Result<LinearEntropyReport> {
    let tr = evolve(op, g0, t_end, stepping)?;
    let fit = fit_samples(&tr.times, &tr.norm_sq, window, Model::Power)?;
    let mut c_fit = f64::INFINITY;
    for i in 1..tr.times.len() - 1 {
        let t = tr.times[i];
        if t < window.start || t > window.end {
            continue;
        }
        let df = (tr.norm_sq[i + 1] - tr.norm_sq[i - 1]) / (tr.times[i + 1] - tr.times[i - 1]);
        c_fit = c_fit.min(-df / tr.norm_sq[i].powi(3));
    }
    Ok(LinearEntropyReport { trajectory: tr, fit, c_fit })
}

/// `F` of the signed solution and of its positive and negative parts evolved
/// separately, at the final time.
pub fn sign_split_check(op: &OperatorDiscretization, g0: &RadialField, t_end: f64, stepping: Stepping) -> Result<(f64, f64, f64)> {
    let plus: Vec<f64> = g0.values().iter().map(|x| x.max(0.0)).collect();
    let minus: Vec<f64> = g0.values().iter().map(|x| (-x).max(0.0)).collect();
    let full = evolve_vec(op, g0.values().to_vec(), t_end, stepping, None)?;
    let p = evolve_vec(op, plus, t_end, stepping, None)?;
    let q = evolve_vec(op, minus, t_end, stepping, None)?;
    Ok((full.norm_sq[full.norm_sq.len() - 1], p.norm_sq[p.norm_sq.len() - 1], q.norm_sq[q.norm_sq.len() - 1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Ascending; the first entry is the Rayleigh quotient of the constants.
    pub eigenvalues: Vec<f64>,
    /// Inverse-iteration sweeps used per eigenvalue.
    pub iterations: Vec<usize>,
}

/// The `k` smallest eigenvalues of `A g = λ B g`.
///
/// The zero mode is the constant vector. Higher eigenvalues are bracketed by
/// Sturm counts on `A - σB`, then polished by shift-invert iteration with the
/// constants projected out in the `B` inner product.
pub fn spectrum(op: &OperatorDiscretization, k: usize) -> Result<Spectrum> {
    if k == 0 || k > 20 {
        return Err(Error::InvalidParams(format!("k = {k} must be in 1..=20")));
    }
    let n = op.b.len();
    let ones = vec![1.0; n];
    let mut eigenvalues = vec![op.energy(&ones) / op.norm_sq(&ones)];
    let mut iterations = vec![0];
    let upper = (0..n)
        .map(|i| {
            let left = if i > 0 { op.a_off[i - 1].abs() } else { 0.0 };
            let right = if i < n - 1 { op.a_off[i].abs() } else { 0.0 };
            (op.a_diag[i] + left + right) / op.b[i]
        })
        .fold(0.0, f64::max);
    let total_mass = op.mass(&ones);
    for j in 2..=k {
        // smallest σ with count_below(σ) ≥ j
        let (mut lo, mut hi) = (0.0, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if op.count_below(mid) >= j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let shift = 0.5 * (lo + hi);
        // shift-invert polish
        let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662).sin()).collect();
        let mut lambda = shift;
        let mut iters = 0;
        let mut converged = false;
        let bump = shift * 1e-10 + f64::MIN_POSITIVE;
        let sigma = shift - bump;
        while iters < 50 {
            iters += 1;
            let c = op.mass(&x) / total_mass;
            x.iter_mut().for_each(|v| *v -= c);
            let diag: Vec<f64> = (0..n).map(|i| op.a_diag[i] - sigma * op.b[i]).collect();
            let mut rhs: Vec<f64> = op.b.iter().zip(&x).map(|(b, v)| b * v).collect();
            if tridiag::solve(&op.a_off, &diag, &op.a_off, &mut rhs).is_err() {
                break;
            }
            let c = op.mass(&rhs) / total_mass;
            rhs.iter_mut().for_each(|v| *v -= c);
            let norm = op.norm_sq(&rhs).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                break;
            }
            rhs.iter_mut().for_each(|v| *v /= norm);
            let next = op.energy(&rhs);
            let done = (next - lambda).abs() <= 1e-12 * next.abs();
            lambda = next;
            x = rhs;
            if done && iters > 1 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Eigen { index: j, iterations: iters, reason: format!("Rayleigh quotient still moving near {lambda}") });
        }
        if (lambda - shift).abs() > 1e-6 * shift {
            return Err(Error::Eigen {
                index: j,
                iterations: iters,
                reason: format!("iteration converged to {lambda}, bracket says {shift}"),
            });
        }
        eigenvalues.push(lambda);
        iterations.push(iters);
    }
    Ok(Spectrum { eigenvalues, iterations })
}

/// `λ₂` at several truncation radii.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSweep {
    pub r_max: Vec<f64>,
    pub spectra: Vec<Spectrum>,
}

impl SpectralSweep {
    pub fn lambda2(&self) -> Vec<f64> {
        self.spectra.iter().map(|s| s.eigenvalues.get(1).copied().unwrap_or(f64::NAN)).collect()
    }

    /// Largest relative spread `(max - min)/max` of `λ₂` across the sweep.
    pub fn relative_spread(&self) -> f64 {
        let l = self.lambda2();
        let hi = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = l.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    }

    /// Limit guess from a least-squares fit of `λ₂(R) = λ∞ + c/(log R)²`.
    ///
    /// Truncation adds a standing wave of length `~log R` in geodesic distance,
    /// hence the `1/(log R)²` correction.
    pub fn extrapolated(&self) -> f64 {
        let l = self.lambda2();
        if l.len() < 2 {
            return l.first().copied().unwrap_or(f64::NAN);
        }
        let x: Vec<f64> = self.r_max.iter().map(|r| r.ln().powi(-2)).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = l.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(&l).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        my - sxy / sxx * mx
    }
}

/// One spectrum per radius, each on its own grid with the shared `n` and core fraction.
pub fn spectral_sweep(
    params: DiffusionParams,
    d_param: f64,
    r_list: &[f64],
    n: usize,
    core_fraction: f64,
    k: usize,
) -> Result<SpectralSweep> {
    let mut spectra = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let grid = Arc::new(RadialGrid::new(params.d(), r, n, core_fraction)?);
        spectra.push(spectrum(&OperatorDiscretization::assemble(grid, params, d_param)?, k)?);
    }
    Ok(SpectralSweep { r_max: r_list.to_vec(), spectra })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn op(d: u32, m: Option<f64>, r: f64, n: usize) -> OperatorDiscretization {
        let p = match m {
            None => DiffusionParams::critical(d).unwrap(),
            Some(m) => DiffusionParams::new(d, m).unwrap(),
        };
        OperatorDiscretization::assemble(Arc::new(RadialGrid::new(d, r, n, 0.25).unwrap()), p, 1.0).unwrap()
    }

    #[test]
    fn constants_are_the_kernel() {
        let o = op(5, None, 100.0, 200);
        let ones = vec![1.0; 201];
        assert!(o.apply_a(&ones).iter().all(|&x| x.abs() <= 1e-13 * o.a_diag.iter().cloned().fold(0.0, f64::max)));
        assert_eq!(o.energy(&ones), 0.0);
        let tr = evolve(&o, &RadialField::constant(o.grid().clone(), 2.5).unwrap(), 1.0, Stepping::Fixed { dt: 0.1 }).unwrap();
        assert!(tr.last.iter().all(|&x| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn energy_matches_gradient_form() {
        let o = op(5, None, 100.0, 200);
        let g: Vec<f64> = o.grid().nodes().iter().map(|r| (r * 0.3).sin() / (1.0 + r)).collect();
        let direct = o.grid().gradient_form(&g, o.profile());
        assert_relative_eq!(o.energy(&g), direct, max_relative = 1e-12);
        let ag = o.apply_a(&g);
        let quad: f64 = ag.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert_relative_eq!(quad, direct, max_relative = 1e-10);
    }

    #[test]
    fn semigroup_identity_is_exact() {
        let o = op(5, None, 100.0, 300);
        let (lhs, rhs) = semigroup_identity(&o, 10, 0.5, 50).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
    }

    #[test]
    fn lowest_eigenvalue_is_zero() {
        let o = op(5, Some(0.0), 50.0, 300);
        let s = spectrum(&o, 3).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        assert!(s.eigenvalues[1] > 0.0 && s.eigenvalues[2] > s.eigenvalues[1]);
        assert_eq!(o.count_below(0.5 * (s.eigenvalues[1] + s.eigenvalues[2])), 2);
    }

    #[test]
    fn spectrum_matches_dense_solver() {
        // oracle: nalgebra's symmetric eigensolver on B^{-1/2} A B^{-1/2}
        let o = op(4, Some(0.1), 20.0, 60);
        let n = 61;
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        let s: Vec<f64> = o.b.iter().map(|b| 1.0 / b.sqrt()).collect();
        for i in 0..n {
            m[(i, i)] = o.a_diag[i] * s[i] * s[i];
            if i + 1 < n {
                m[(i, i + 1)] = o.a_off[i] * s[i] * s[i + 1];
                m[(i + 1, i)] = m[(i, i + 1)];
            }
        }
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ours = spectrum(&o, 5).unwrap();
        assert!(ev[0].abs() < 1e-10);
        for j in 1..5 {
            assert_relative_eq!(ours.eigenvalues[j], ev[j], max_relative = 1e-9);
        }
    }
}
