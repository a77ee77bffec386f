//! Diffusion parameters, Barenblatt profiles and the Fokker–Planck rescaling.

use num_rational::Ratio;

use crate::{Error, Result};

/// Dimension, exponent and every constant derived from them.
///
/// Built once and passed around by value; nothing downstream recomputes
/// `beta` or `gamma` on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    d: u32,
    m: f64,
    /// Set when `m` was given exactly, e.g. through [`DiffusionParams::critical`].
    m_exact: Option<Ratio<i64>>,
    beta: f64,
    m_c: f64,
    m_star: f64,
    q_m: f64,
    a: f64,
    gamma: f64,
    /// `1/(1-m)`, the profile exponent.
    k: f64,
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl DiffusionParams {
    /// Parameters for a floating-point exponent.
    pub fn new(d: u32, m: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidParams(format!("m = {m} is not finite")));
        }
        Self::check_dimension(d)?;
        let df = d as f64;
        let m_c = (df - 2.0) / df;
        if m >= m_c {
            return Err(Error::InvalidParams(format!(
                "m = {m} >= m_c = {m_c}: not in extinction regime"
            )));
        }
        let beta = 1.0 / (df * (1.0 - m) - 2.0);
        let gamma = (1.0 - m) * beta / 2.0;
        Ok(Self {
            d,
            m,
            m_exact: None,
            beta,
            m_c,
            m_star: ratio_f64(Self::m_star_exact(d)),
            q_m: df * (1.0 - m) / (2.0 * (2.0 - m)),
            a: gamma.sqrt(),
            gamma,
            k: 1.0 / (1.0 - m),
        })
    }

    /// Parameters for an exactly known rational exponent.
    ///
    /// Derived constants are evaluated in rational arithmetic and rounded once.
    pub fn from_ratio(d: u32, m: Ratio<i64>) -> Result<Self> {
        Self::check_dimension(d)?;
        let di = d as i64;
        let one = Ratio::from_integer(1);
        let two = Ratio::from_integer(2);
        let dr = Ratio::from_integer(di);
        let m_c = Ratio::new(di - 2, di);
        if m >= m_c {
            return Err(Error::InvalidParams(format!(
                "m = {m} >= m_c = {m_c}: not in extinction regime"
            )));
        }
        let beta = one / (dr * (one - m) - two);
        let gamma = (one - m) * beta / two;
        Ok(Self {
            d,
            m: ratio_f64(m),
            m_exact: Some(m),
            beta: ratio_f64(beta),
            m_c: ratio_f64(m_c),
            m_star: ratio_f64(Self::m_star_exact(d)),
            q_m: ratio_f64(dr * (one - m) / (two * (two - m))),
            a: ratio_f64(gamma).sqrt(),
            gamma: ratio_f64(gamma),
            k: ratio_f64(one / (one - m)),
        })
    }

    /// The critical exponent `m* = (d-4)/(d-2)`, held exactly.
    pub fn critical(d: u32) -> Result<Self> {
        Self::check_dimension(d)?;
        Self::from_ratio(d, Self::m_star_exact(d))
    }

    fn check_dimension(d: u32) -> Result<()> {
        if d < 3 {
            return Err(Error::InvalidParams(format!("dimension d = {d} < 3")));
        }
        if d > 64 {
            return Err(Error::InvalidParams(format!("dimension d = {d} is unreasonably large")));
        }
        Ok(())
    }

    fn m_star_exact(d: u32) -> Ratio<i64> {
        Ratio::new(d as i64 - 4, d as i64 - 2)
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn m_exact(&self) -> Option<Ratio<i64>> {
        self.m_exact
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn m_c(&self) -> f64 {
        self.m_c
    }
    pub fn m_star(&self) -> f64 {
        self.m_star
    }
    pub fn q_m(&self) -> f64 {
        self.q_m
    }
    /// Spatial rescaling constant, `a² = γ`.
    pub fn a(&self) -> f64 {
        self.a
    }
    /// Time rescaling constant `(1-m)β/2`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Profile exponent `1/(1-m)`.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Whether `m = m*`.
    ///
    /// Exact when `m` was given as a rational. A float exponent only counts
    /// as critical if it is bit-identical to the rounded `m*`.
    pub fn is_critical(&self) -> bool {
        match self.m_exact {
            Some(m) => m == Self::m_star_exact(self.d),
            None => self.m == self.m_star,
        }
    }

    /// Whether `m = 0`, where powers of `w` turn into logarithms.
    pub fn is_logarithmic(&self) -> bool {
        match self.m_exact {
            Some(m) => m == Ratio::from_integer(0),
            None => self.m == 0.0,
        }
    }
}

/// `V_D(y) = (D + |y|²)^{-1/(1-m)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarenblattProfile {
    d_param: f64,
    params: DiffusionParams,
}

impl BarenblattProfile {
    pub fn new(params: DiffusionParams, d_param: f64) -> Result<Self> {
        if !(d_param > 0.0 && d_param.is_finite()) {
            return Err(Error::InvalidParams(format!("profile parameter D = {d_param} must be positive")));
        }
        Ok(Self { d_param, params })
    }

    pub fn d_param(&self) -> f64 {
        self.d_param
    }

    pub fn params(&self) -> &DiffusionParams {
        &self.params
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.d_param + r * r).powf(-self.params.k)
    }

    /// `V_D(r)^p`.
    pub fn pow(&self, r: f64, p: f64) -> f64 {
        (self.d_param + r * r).powf(-self.params.k * p)
    }

    /// `|∇ V_D^{1-m}|` at radius `r`; the power `1-m` turns the profile into
    /// `1/(D + r²)`.
    pub fn grad_pow_one_minus_m(&self, r: f64) -> f64 {
        let b = self.d_param + r * r;
        2.0 * r / (b * b)
    }
}

/// Three ordered profiles `V_{D0} ≤ V_{D*} ≤ V_{D1}` used to trap the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichBounds {
    d0: f64,
    d_star: f64,
    d1: f64,
    w0: f64,
    w1: f64,
    params: DiffusionParams,
}

impl SandwichBounds {
    pub fn new(params: DiffusionParams, d0: f64, d_star: f64, d1: f64) -> Result<Self> {
        if !(d0 > d_star && d_star > d1 && d1 > 0.0) || !d0.is_finite() {
            return Err(Error::InvalidParams(format!(
                "need D0 > D* > D1 > 0, got {d0}, {d_star}, {d1}"
            )));
        }
        let k = params.k();
        Ok(Self {
            d0,
            d_star,
            d1,
            w0: (d_star / d0).powf(k),
            w1: (d_star / d1).powf(k),
            params,
        })
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }
    pub fn d_star(&self) -> f64 {
        self.d_star
    }
    pub fn d1(&self) -> f64 {
        self.d1
    }
    /// `(D*/D0)^{1/(1-m)} < 1`.
    pub fn w0(&self) -> f64 {
        self.w0
    }
    /// `(D*/D1)^{1/(1-m)} > 1`.
    pub fn w1(&self) -> f64 {
        self.w1
    }
    pub fn params(&self) -> &DiffusionParams {
        &self.params
    }

    pub fn lower(&self) -> BarenblattProfile {
        BarenblattProfile { d_param: self.d0, params: self.params }
    }
    pub fn star(&self) -> BarenblattProfile {
        BarenblattProfile { d_param: self.d_star, params: self.params }
    }
    pub fn upper(&self) -> BarenblattProfile {
        BarenblattProfile { d_param: self.d1, params: self.params }
    }

    /// Pointwise admissible range of `w = v/V_{D*}` at radius `r`.
    ///
    /// Tends to `[W0, W1]` at the origin and to `[1, 1]` at infinity.
    pub fn w_range(&self, r: f64) -> (f64, f64) {
        let k = self.params.k();
        let b = self.d_star + r * r;
        (
            (b / (self.d0 + r * r)).powf(k),
            (b / (self.d1 + r * r)).powf(k),
        )
    }

    /// The same range shifted to `h = w - 1`, accurate where both ends are
    /// within rounding of 1.
    pub fn h_range(&self, r: f64) -> (f64, f64) {
        let k = self.params.k();
        let dev = |d: f64| (k * ((self.d_star - d) / (d + r * r)).ln_1p()).exp_m1();
        (dev(self.d0), dev(self.d1))
    }
}

/// The change of variables between `(t, x, u)` and `(s, y, v)`.
///
/// ```text
/// y = a x (T-t)^β,   s = γ log(T/(T-t)),   v = (T-t)^{-dβ} u
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleMaps {
    params: DiffusionParams,
    t_ext: f64,
}

impl RescaleMaps {
    pub fn new(params: DiffusionParams, t_ext: f64) -> Result<Self> {
        if !(t_ext > 0.0 && t_ext.is_finite()) {
            return Err(Error::InvalidParams(format!("extinction time T = {t_ext} must be positive")));
        }
        Ok(Self { params, t_ext })
    }

    pub fn extinction_time(&self) -> f64 {
        self.t_ext
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t < self.t_ext) || t < 0.0 {
            return Err(Error::PastExtinction { t, big_t: self.t_ext });
        }
        Ok(())
    }

    /// `s(t)`, increasing from 0 and diverging as `t → T`.
    pub fn rescaled_time(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        // log(T/(T-t)) = -log1p(-t/T), accurate for small t.
        Ok(-self.params.gamma() * (-t / self.t_ext).ln_1p())
    }

    /// Remaining time `T - t` for a rescaled time `s`.
    fn remaining(&self, s: f64) -> f64 {
        self.t_ext * (-s / self.params.gamma()).exp()
    }

    pub fn to_rescaled(&self, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.rescaled_time(t)?;
        let scale = self.params.a() * (self.t_ext - t).powf(self.params.beta());
        Ok((s, x.iter().map(|xi| xi * scale).collect()))
    }

    pub fn to_original(&self, s: f64, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParams(format!("rescaled time s = {s} must be finite and >= 0")));
        }
        let rem = self.remaining(s);
        // t = T (1 - e^{-s/γ}) written to keep relative accuracy as s → 0.
        let t = -self.t_ext * (-s / self.params.gamma()).exp_m1();
        let scale = self.params.a() * rem.powf(self.params.beta());
        Ok((t, y.iter().map(|yi| yi / scale).collect()))
    }

    /// Factor `(T-t)^{-dβ}` with `v = factor · u`.
    pub fn amplitude(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok((self.t_ext - t).powf(-(self.params.d() as f64) * self.params.beta()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn critical_constants_are_exact() {
        for d in 3..=10 {
            let p = DiffusionParams::critical(d).unwrap();
            assert_eq!(p.q_m(), 1.0, "d={d}");
            assert_eq!(p.k(), (d as f64 - 2.0) / 2.0);
            assert_eq!(p.beta(), (d as f64 - 2.0) / 4.0);
            assert!(p.is_critical());
        }
    }

    #[test]
    fn named_parameter_sets() {
        let p = DiffusionParams::new(3, -1.0).unwrap();
        assert_eq!(p.m_star(), -1.0);
        assert_eq!(p.beta(), 0.25);
        assert_eq!(p.q_m(), 1.0);

        let p = DiffusionParams::new(4, 0.0).unwrap();
        assert_eq!(p.m_star(), 0.0);
        assert_eq!(p.beta(), 0.5);
        assert!(p.is_logarithmic());

        let p = DiffusionParams::critical(5).unwrap();
        assert_relative_eq!(p.m(), 1.0 / 3.0);
        assert_eq!(p.k(), 1.5);
    }

    #[test]
    fn rejects_outside_extinction_regime() {
        assert!(DiffusionParams::new(3, 1.0 / 3.0).is_err());
        assert!(DiffusionParams::new(5, 0.7).is_err());
        assert!(DiffusionParams::new(2, -1.0).is_err());
        assert!(DiffusionParams::from_ratio(5, Ratio::new(3, 5)).is_err());
    }

    #[test]
    fn float_exponent_is_not_silently_critical() {
        let p = DiffusionParams::new(5, 0.3333).unwrap();
        assert!(!p.is_critical());
        let p = DiffusionParams::new(5, 0.45).unwrap();
        assert!(!p.is_critical());
    }

    #[test]
    fn profile_values() {
        let p = DiffusionParams::new(3, -1.0).unwrap();
        let v = BarenblattProfile::new(p, 1.0).unwrap();
        assert_eq!(v.eval(0.0), 1.0);
        assert_relative_eq!(v.eval(3f64.sqrt()), 0.5, max_relative = 1e-15);

        let p = DiffusionParams::critical(5).unwrap();
        let v = BarenblattProfile::new(p, 1.0).unwrap();
        assert_relative_eq!(v.eval(1.0), 2f64.powf(-1.5), max_relative = 1e-15);
    }

    #[test]
    fn critical_profile_matches_fundamental_solution_decay() {
        for d in 3..=8 {
            let p = DiffusionParams::critical(d).unwrap();
            let v = BarenblattProfile::new(p, 1.0).unwrap();
            let r: f64 = 1e6;
            assert_relative_eq!(v.eval(r) * r.powi(d as i32 - 2), 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn sandwich_constants() {
        let p = DiffusionParams::critical(5).unwrap();
        let b = SandwichBounds::new(p, 2.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(b.w0(), 0.5f64.powf(1.5));
        assert_relative_eq!(b.w1(), 2f64.powf(1.5));
        assert!(SandwichBounds::new(p, 1.0, 1.0, 0.5).is_err());
        let (lo, hi) = b.w_range(0.0);
        assert_relative_eq!(lo, b.w0());
        assert_relative_eq!(hi, b.w1());
    }

    #[test]
    fn rescaling_endpoints() {
        let p = DiffusionParams::critical(3).unwrap();
        let maps = RescaleMaps::new(p, 2.0).unwrap();
        assert_eq!(maps.rescaled_time(0.0).unwrap(), 0.0);
        assert!(maps.rescaled_time(2.0 - 1e-12).unwrap() > 5.0);
        assert!(maps.rescaled_time(2.0).is_err());
        assert!(maps.rescaled_time(3.0).is_err());
    }

    #[test]
    fn rescaling_round_trip() {
        let p = DiffusionParams::critical(3).unwrap();
        let maps = RescaleMaps::new(p, 1.0).unwrap();
        let (s, y) = maps.to_rescaled(0.5, &[1.0, 0.0, 0.0]).unwrap();
        let (t, x) = maps.to_original(s, &y).unwrap();
        assert_relative_eq!(t, 0.5, max_relative = 1e-12);
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-12);
        assert_eq!(x[1], 0.0);
    }
}
