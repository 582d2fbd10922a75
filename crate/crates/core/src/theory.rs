//! Closed-form limits: the variance series, the limiting distribution of a
//! coordinate, the covariance kernels and the moments of `w`.
//!
//! Everything here uses the exact fraction `f` and the limit
//! `sigma_* = f sigma_I + (1 - f) sigma_E`. The exceptions are [`w_mean`],
//! whose leading order depends on the block sizes only through
//! `fn_count / n` and vanishes exactly at `c_I = c_E` with those weights.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::io::{Cell, CsvWriter};
use crate::params::{amplitude_a, InitialCondition, ModelParams, NoiseKind, NoiseLaw};
use crate::special::{bessel_i0, bessel_i0_minus_one, gauss_legendre, normal_cdf};
use crate::stats::Cdf;

pub const SERIES_TOL: f64 = 1e-14;
pub const SERIES_MAX_TERMS: usize = 300;

/// `sum_{m>=1} x^m / (m!)^2`, stopped once the next term falls below
/// `tol` times the partial sum.
pub fn normalized_series(x: f64, tol: f64, max_terms: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid("x", "series argument must be nonnegative"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut term = x;
    let mut sum = x;
    for m in 2..=max_terms {
        term *= x / (m * m) as f64;
        if !sum.is_finite() {
            return Err(Error::Overflow { what: "variance series" });
        }
        if term < tol * sum {
            return Ok(sum);
        }
        sum += term;
    }
    Err(Error::SeriesNotConverged { terms: max_terms })
}

/// The limiting coordinate variance growth `A sigma_*^{-1} sum sigma_*^m t^{2m} / (m!)^2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VarianceSeries {
    pub a: f64,
    pub sigma_star: f64,
    pub truncation_tol: f64,
    pub max_terms: usize,
}

impl VarianceSeries {
    pub fn new(a: f64, sigma_star: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(invalid("A", "must be nonnegative"));
        }
        if !(sigma_star > 0.0 && sigma_star.is_finite()) {
            return Err(invalid("sigma_star", "must be positive"));
        }
        Ok(Self {
            a,
            sigma_star,
            truncation_tol: SERIES_TOL,
            max_terms: SERIES_MAX_TERMS,
        })
    }

    pub fn for_model(p: &ModelParams, ic: &InitialCondition) -> Result<Self> {
        Self::new(amplitude_a(p, ic), p.limit_sigma_star())
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(invalid("t", "must be nonnegative"));
        }
        let s = normalized_series(self.sigma_star * t * t, self.truncation_tol, self.max_terms)?;
        let v = self.a / self.sigma_star * s;
        if !v.is_finite() {
            return Err(Error::Overflow { what: "variance series" });
        }
        Ok(v)
    }

    /// Same quantity through `I0(2 sqrt(sigma_*) t) - 1`.
    pub fn bessel_value(&self, t: f64) -> f64 {
        self.a / self.sigma_star * bessel_i0_minus_one(2.0 * self.sigma_star.sqrt() * t)
    }
}

pub fn sigma_tilde(a: f64, sigma_star: f64, t: f64) -> Result<f64> {
    VarianceSeries::new(a, sigma_star)?.value(t)
}

/// `A (1 + sum_{m>=1} sigma_*^m t^m s^m / (m!)^2)`.
pub fn r0_kernel(a: f64, sigma_star: f64, t: f64, s: f64) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(invalid("t", "times must be nonnegative"));
    }
    if !(sigma_star > 0.0) {
        return Err(invalid("sigma_star", "must be positive"));
    }
    Ok(a * (1.0 + normalized_series(sigma_star * (t * s), SERIES_TOL, SERIES_MAX_TERMS)?))
}

/// `A I0(2 sqrt(sigma_* t s))`.
pub fn r0_kernel_bessel(a: f64, sigma_star: f64, t: f64, s: f64) -> f64 {
    a * bessel_i0(2.0 * (sigma_star * t * s).sqrt())
}

/// Limiting `(E x_1(t) x_1(s), E x_n(t) x_n(s))`, one coordinate per block.
pub fn r12_kernel(p: &ModelParams, ic: &InitialCondition, t: f64, s: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(invalid("t", "times must be nonnegative"));
    }
    let sig = p.limit_sigma_star();
    let a = amplitude_a(p, ic);
    let growth = a / sig * normalized_series(sig * (t * s), SERIES_TOL, SERIES_MAX_TERMS)?;
    Ok((
        ic.c_i * ic.c_i + ic.noise_i.variance + growth,
        ic.c_e * ic.c_e + ic.noise_e.variance + growth,
    ))
}

/// `int_0^t int_0^t R0` by tensor Gauss-Legendre quadrature.
pub fn r0_double_integral(a: f64, sigma_star: f64, t: f64, order: usize) -> Result<f64> {
    let (x, w) = gauss_legendre(order);
    let half = 0.5 * t;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (xj, wj) in x.iter().zip(&w) {
            let (u, v) = (half * (1.0 + xi), half * (1.0 + xj));
            acc += wi * wj * r0_kernel(a, sigma_star, u, v)?;
        }
    }
    Ok(acc * half * half)
}

/// CDF at `lambda` of `c + xi + sqrt(v) Z` with `xi ~ noise`, `Z ~ N(0,1)`.
/// `left` requests the left limit (only differs at atoms).
fn component_cdf(noise: &NoiseLaw, c: f64, v: f64, lambda: f64, left: bool) -> f64 {
    let x = lambda - c;
    let step = |y: f64| -> f64 {
        if left {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        } else if y >= 0.0 {
            1.0
        } else {
            0.0
        }
    };
    match noise.kind {
        NoiseKind::PointMass => {
            if v == 0.0 {
                step(x)
            } else {
                normal_cdf(x / v.sqrt())
            }
        }
        NoiseKind::Gaussian => {
            let total = v + noise.variance;
            if total == 0.0 {
                step(x)
            } else {
                normal_cdf(x / total.sqrt())
            }
        }
        NoiseKind::Rademacher => {
            let s = noise.variance.sqrt();
            if v == 0.0 {
                0.5 * (step(x - s) + step(x + s))
            } else {
                let sd = v.sqrt();
                0.5 * (normal_cdf((x - s) / sd) + normal_cdf((x + s) / sd))
            }
        }
        NoiseKind::Uniform => {
            let b = (3.0 * noise.variance).sqrt();
            if b == 0.0 {
                return if v == 0.0 { step(x) } else { normal_cdf(x / v.sqrt()) };
            }
            if v == 0.0 {
                return ((x + b) / (2.0 * b)).clamp(0.0, 1.0);
            }
            let sd = v.sqrt();
            if sd < 0.25 * b {
                // (2b)^{-1} int_{-b}^{b} Phi((x - y)/sd) dy = sd/(2b) [G(z+) - G(z-)],
                // G(z) = z Phi(z) + phi(z)
                let g = |z: f64| z * normal_cdf(z) + (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                (sd / (2.0 * b) * (g((x + b) / sd) - g((x - b) / sd))).clamp(0.0, 1.0)
            } else {
                let (nodes, weights) = gauss_legendre(64);
                let acc: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(y, w)| w * normal_cdf((x - b * y) / sd))
                    .sum();
                0.5 * acc
            }
        }
    }
}

/// The limiting distribution of a coordinate at a fixed time: a two-block
/// mixture of the initial noise convolved with `N(c, sigma_tilde(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCdf {
    pub f: f64,
    pub c_i: f64,
    pub c_e: f64,
    pub noise_i: NoiseLaw,
    pub noise_e: NoiseLaw,
    /// `sigma_tilde(t)`.
    pub spread: f64,
}

impl LimitCdf {
    pub fn new(p: &ModelParams, ic: &InitialCondition, t: f64) -> Result<Self> {
        let spread = VarianceSeries::for_model(p, ic)?.value(t)?;
        Ok(Self {
            f: p.f,
            c_i: ic.c_i,
            c_e: ic.c_e,
            noise_i: ic.noise_i,
            noise_e: ic.noise_e,
            spread,
        })
    }

    fn eval(&self, lambda: f64, left: bool) -> f64 {
        self.f * component_cdf(&self.noise_i, self.c_i, self.spread, lambda, left)
            + (1.0 - self.f) * component_cdf(&self.noise_e, self.c_e, self.spread, lambda, left)
    }
}

impl Cdf for LimitCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.eval(x, false)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.eval(x, true)
    }
}

pub fn limit_cdf(p: &ModelParams, ic: &InitialCondition, t: f64, lambda: f64) -> Result<f64> {
    Ok(LimitCdf::new(p, ic, t)?.cdf(lambda))
}

/// Leading order of `E w(t)`: `sqrt(n) t (f c_I mu_I + (1 - f) c_E mu_E)`
/// with `f` taken as `fn_count / n`.
pub fn w_mean(p: &ModelParams, ic: &InitialCondition, t: f64) -> f64 {
    let (mu_i, mu_e) = p.mu();
    let n = p.n as f64;
    let fd = p.fn_count() as f64 / n;
    n.sqrt() * t * (fd * ic.c_i * mu_i + (1.0 - fd) * ic.c_e * mu_e)
}

/// Weights on the initial noise variances in [`w_variance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseWeights {
    /// `(1 - f) sigma0_I + f sigma0_E`, from `f mu_I^2 = 1 - f`.
    #[default]
    Swapped,
    /// `f sigma0_I + (1 - f) sigma0_E`.
    Mixture,
}

impl std::str::FromStr for NoiseWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "swapped" => Ok(Self::Swapped),
            "mixture" | "alternate" => Ok(Self::Mixture),
            other => Err(invalid("weights", format!("unknown weights `{other}`"))),
        }
    }
}

fn noise_term(p: &ModelParams, ic: &InitialCondition, weights: NoiseWeights) -> f64 {
    let f = p.f;
    match weights {
        NoiseWeights::Swapped => (1.0 - f) * ic.noise_i.variance + f * ic.noise_e.variance,
        NoiseWeights::Mixture => f * ic.noise_i.variance + (1.0 - f) * ic.noise_e.variance,
    }
}

fn require_equal_offsets(ic: &InitialCondition) -> Result<()> {
    if !ic.equal_offsets() {
        return Err(Error::BranchMismatch("the Gaussian limit of w needs c_I = c_E"));
    }
    Ok(())
}

/// Limiting variance of `w(t)` in the balanced case `c_I = c_E`:
/// noise term plus `sigma_tilde(t)`.
pub fn w_variance(p: &ModelParams, ic: &InitialCondition, t: f64, weights: NoiseWeights) -> Result<f64> {
    require_equal_offsets(ic)?;
    Ok(noise_term(p, ic, weights) + VarianceSeries::for_model(p, ic)?.value(t)?)
}

/// Variance of `int_0^t (x(s), m) ds` obtained by integrating the limiting
/// covariance of `(x(s), m)`, `C(t, s) = noise + A sigma_*^{-1} sum sigma_*^k (ts)^k / (k!)^2`,
/// over `[0, t]^2`:
/// `noise t^2 + A sigma_*^{-1} sum_{k>=1} sigma_*^k t^{2k+2} / ((k+1)!)^2`.
///
/// [`w_variance`] is `C(t, t)`.
pub fn w_integral_variance(p: &ModelParams, ic: &InitialCondition, t: f64, weights: NoiseWeights) -> Result<f64> {
    require_equal_offsets(ic)?;
    let series = VarianceSeries::for_model(p, ic)?;
    let sig = series.sigma_star;
    let x = sig * t * t;
    // sum_{k>=1} x^k / ((k+1)!)^2 = (S(x) - x) / x with S the normalized series
    let tail = if x == 0.0 {
        0.0
    } else if x < 1e-3 {
        let mut term = x / 4.0;
        let mut acc = term;
        for k in 2..12 {
            term *= x / ((k + 1) * (k + 1)) as f64;
            acc += term;
        }
        acc
    } else {
        (normalized_series(x, SERIES_TOL, SERIES_MAX_TERMS)? - x) / x
    };
    Ok(noise_term(p, ic, weights) * t * t + series.a / sig * t * t * tail)
}

/// Growth of `e^{-2 kappa t} sigma_tilde(t)` on a grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport {
    pub kappa: f64,
    pub sigma_star: f64,
    pub t_max: f64,
    pub times: Vec<f64>,
    /// `ln(e^{-2 kappa t} sigma_tilde(t) / A)`; `-inf` at `t = 0`.
    pub log_decay: Vec<f64>,
    pub eventually_decreasing: bool,
    /// The `kappa` at which the decay factor stops growing at `t_max`.
    pub critical_kappa: f64,
    pub threshold_sigma_star: f64,
    pub threshold_sqrt_sigma_star: f64,
    /// Which candidate is closer to `critical_kappa`.
    pub closer_to_sqrt: bool,
}

pub fn stability_report(p: &ModelParams, t_max: f64, points: usize) -> Result<StabilityReport> {
    if !(t_max > 0.0) || points < 3 {
        return Err(invalid("t_max", "need t_max > 0 and at least 3 points"));
    }
    let sig = p.limit_sigma_star();
    let series = VarianceSeries::new(1.0, sig)?;
    let dt = t_max / (points - 1) as f64;
    let times: Vec<f64> = (0..points).map(|k| k as f64 * dt).collect();
    let mut log_decay = Vec::with_capacity(points);
    for &t in &times {
        let v = series.value(t)?;
        log_decay.push(v.ln() - 2.0 * p.kappa * t);
    }
    let k = points - 1;
    let growth = (series.value(times[k])? / series.value(times[k - 1])?).ln();
    let critical_kappa = growth / (2.0 * dt);
    let eventually_decreasing = log_decay[k] < log_decay[k - 1];
    let (t1, t2) = (sig, sig.sqrt());
    Ok(StabilityReport {
        kappa: p.kappa,
        sigma_star: sig,
        t_max,
        times,
        log_decay,
        eventually_decreasing,
        critical_kappa,
        threshold_sigma_star: t1,
        threshold_sqrt_sigma_star: t2,
        closer_to_sqrt: (critical_kappa - t2).abs() < (critical_kappa - t1).abs(),
    })
}

/// Oracle table `t, sigma_tilde, R0(t,t), w_mean, w_var`; `w_var` is NaN
/// when `c_I != c_E`.
pub fn write_oracle_csv<W: Write>(
    out: W,
    p: &ModelParams,
    ic: &InitialCondition,
    times: &[f64],
    weights: NoiseWeights,
) -> Result<W> {
    let series = VarianceSeries::for_model(p, ic)?;
    let io = |e: std::io::Error| invalid("output", e.to_string());
    let mut csv = CsvWriter::new(out, &["t", "sigma_tilde", "r0", "w_mean", "w_var"]).map_err(io)?;
    for &t in times {
        let wv = if ic.equal_offsets() {
            w_variance(p, ic, t, weights)?
        } else {
            f64::NAN
        };
        csv.row(&[
            Cell::F(t),
            Cell::F(series.value(t)?),
            Cell::F(r0_kernel(series.a, series.sigma_star, t, t)?),
            Cell::F(w_mean(p, ic, t)),
            Cell::F(wv),
        ])
        .map_err(io)?;
    }
    csv.finish().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const I0_OF_2: f64 = 2.279_585_302_336_067_3;

    fn model(f: f64, si: f64, se: f64) -> ModelParams {
        ModelParams::new(1000, f, si, se, 1.0, 0.0).unwrap()
    }

    fn gaussian(ci: f64, ce: f64, v: f64) -> InitialCondition {
        InitialCondition::homogeneous(ci, ce, NoiseLaw::gaussian(v).unwrap()).unwrap()
    }

    #[test]
    fn sigma_tilde_examples() {
        assert_eq!(sigma_tilde(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((sigma_tilde(1.0, 1.0, 1.0).unwrap() - (I0_OF_2 - 1.0)).abs() < 1e-15);
        for (a, s, t) in [(0.7, 2.5, 1.3), (2.0, 0.1, 4.0), (1.0, 4.0, 0.2)] {
            let lhs = sigma_tilde(a, s, t).unwrap();
            let rhs = a / s * sigma_tilde(1.0, 1.0, s.sqrt() * t).unwrap();
            assert!((lhs - rhs).abs() <= 1e-13 * lhs);
        }
        assert!(sigma_tilde(1.0, 0.0, 1.0).is_err());
        assert!(matches!(sigma_tilde(1.0, 1.0, 1e4), Err(Error::Overflow { .. })));
        assert!(matches!(normalized_series(1e3, 1e-14, 20), Err(Error::SeriesNotConverged { terms: 20 })));
    }

    #[test]
    fn series_matches_bessel_closed_form() {
        for &s in &[0.1, 0.5, 1.0, 2.0, 4.0] {
            let series = VarianceSeries::new(1.3, s).unwrap();
            for k in 1..=50 {
                let t = k as f64 * 0.2;
                let (a, b) = (series.value(t).unwrap(), series.bessel_value(t));
                assert!(((a - b) / b).abs() < 1e-12, "s={s} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn r0_examples() {
        assert_eq!(r0_kernel(1.7, 2.0, 0.0, 3.0).unwrap(), 1.7);
        assert_eq!(r0_kernel(1.7, 2.0, 3.0, 0.0).unwrap(), 1.7);
        assert!((r0_kernel(1.0, 1.0, 1.0, 1.0).unwrap() - I0_OF_2).abs() < 1e-14);
        assert!((r0_kernel_bessel(1.0, 1.0, 1.0, 1.0) - I0_OF_2).abs() < 1e-14);
    }

    #[test]
    fn double_integral_of_r0_reproduces_sigma_tilde() {
        // the m = 0 term of R0 integrates to A t^2, which is the first term
        // of the series
        for t in [0.5, 1.0, 2.0, 3.0] {
            let di = r0_double_integral(0.8, 1.6, t, 32).unwrap();
            let st = sigma_tilde(0.8, 1.6, t).unwrap();
            assert!(((di - st) / st).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn r12_examples() {
        let p = model(0.3, 2.0, 0.5);
        let ic = InitialCondition::new(1.5, -0.5, NoiseLaw::gaussian(0.2).unwrap(), NoiseLaw::gaussian(0.7).unwrap()).unwrap();
        let (r1, r2) = r12_kernel(&p, &ic, 0.0, 0.0).unwrap();
        assert!((r1 - 2.45).abs() < 1e-15 && (r2 - 0.95).abs() < 1e-15);
        let hom = model(0.3, 1.0, 1.0);
        let (a, b) = r12_kernel(&hom, &gaussian(0.4, 0.4, 0.3), 1.2, 0.7).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn kernel_consistency(
            f in 0.05f64..0.95, si in 0.1f64..4.0, se in 0.1f64..4.0,
            ci in -2.0f64..2.0, ce in -2.0f64..2.0, v0i in 0.0f64..2.0, v0e in 0.0f64..2.0,
            t in 0.0f64..3.0, s in 0.0f64..3.0,
        ) {
            let p = ModelParams::new(100, f, si, se, 1.0, 0.0).unwrap();
            let ic = InitialCondition::new(ci, ce, NoiseLaw::gaussian(v0i).unwrap(), NoiseLaw::gaussian(v0e).unwrap()).unwrap();
            let sig = p.limit_sigma_star();
            let (r1, r2) = r12_kernel(&p, &ic, t, s).unwrap();
            let mean = si * f * ci + se * (1.0 - f) * ce;
            let lhs = si * f * r1 + se * (1.0 - f) * r2 - mean * mean / sig;
            let r0 = r0_kernel(amplitude_a(&p, &ic), sig, t, s).unwrap();
            prop_assert!((lhs - r0).abs() <= 1e-12 * r0.abs().max(1.0));
            prop_assert_eq!(r0_kernel(1.0, sig, t, s).unwrap(), r0_kernel(1.0, sig, s, t).unwrap());
        }

        #[test]
        fn series_is_increasing(s in 0.1f64..4.0, t in 0.0f64..5.0, dt in 1e-3f64..1.0) {
            prop_assert!(sigma_tilde(1.0, s, t + dt).unwrap() > sigma_tilde(1.0, s, t).unwrap());
        }
    }

    #[test]
    fn limit_cdf_at_time_zero() {
        let p = model(0.4, 2.0, 1.0);
        let pm = InitialCondition::homogeneous(0.3, 0.3, NoiseLaw::point_mass()).unwrap();
        let c = LimitCdf::new(&p, &pm, 0.0).unwrap();
        assert_eq!(c.cdf(0.3 - 1e-12), 0.0);
        assert_eq!(c.cdf(0.3), 1.0);
        assert_eq!(c.cdf_left(0.3), 0.0);

        let ic = gaussian(1.0, -0.5, 0.25);
        let c = LimitCdf::new(&p, &ic, 0.0).unwrap();
        for lam in [-2.0, -0.5, 0.0, 0.7, 1.0, 3.0] {
            let want = 0.4 * normal_cdf((lam - 1.0) / 0.5) + 0.6 * normal_cdf((lam + 0.5) / 0.5);
            assert!((c.cdf(lam) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_cdf_symmetric_median() {
        let p = model(0.5, 2.0, 1.0);
        for kind in [NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Rademacher] {
            let ic = InitialCondition::homogeneous(0.8, -0.8, NoiseLaw::new(kind, 0.3).unwrap()).unwrap();
            for t in [0.0, 0.5, 1.0, 2.0] {
                assert!((limit_cdf(&p, &ic, t, 0.0).unwrap() - 0.5).abs() < 1e-12, "{kind} t={t}");
            }
        }
    }

    #[test]
    fn limit_cdf_is_monotone_with_unit_mass() {
        let p = model(0.3, 1.5, 0.5);
        for kind in [NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Rademacher, NoiseKind::PointMass] {
            let v = if kind == NoiseKind::PointMass { 0.0 } else { 0.6 };
            let ic = InitialCondition::homogeneous(-1.0, 2.0, NoiseLaw::new(kind, v).unwrap()).unwrap();
            for t in [0.0, 0.05, 1.0] {
                let c = LimitCdf::new(&p, &ic, t).unwrap();
                let mut prev = 0.0;
                for k in 0..1000 {
                    let lam = -8.0 + 16.0 * k as f64 / 999.0;
                    let v = c.cdf(lam);
                    assert!(v >= prev - 1e-15, "{kind} t={t} lam={lam}");
                    prev = v;
                }
                assert!((c.cdf(1e6) - 1.0).abs() <= 1e-8);
                assert!(c.cdf(-1e6) <= 1e-8);
            }
        }
    }

    #[test]
    fn uniform_convolution_routes_agree() {
        // the closed form and the quadrature overlap near the switch point
        let law = NoiseLaw::new(NoiseKind::Uniform, 1.0).unwrap();
        let b = 3f64.sqrt();
        for sd in [0.2 * b, 0.3 * b] {
            for x in [-2.5, -1.0, 0.0, 0.4, 1.7] {
                let (nodes, weights) = gauss_legendre(64);
                let quad: f64 = 0.5
                    * nodes
                        .iter()
                        .zip(&weights)
                        .map(|(y, w)| w * normal_cdf((x - b * y) / sd))
                        .sum::<f64>();
                assert!((component_cdf(&law, 0.0, sd * sd, x, false) - quad).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn w_mean_examples() {
        let p = ModelParams::new(100, 0.5, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((w_mean(&p, &gaussian(0.0, 1.0, 0.0), 2.0) - 10.0).abs() < 1e-13);
        let q = ModelParams::new(97, 0.3, 1.0, 2.0, 1.0, 0.0).unwrap();
        assert!(w_mean(&q, &gaussian(0.7, 0.7, 0.1), 3.0).abs() < 1e-13);
        let a = w_mean(&q, &gaussian(0.0, 1.0, 0.0), 1.0);
        assert!((w_mean(&q, &gaussian(0.0, 1.0, 0.0), 2.5) - 2.5 * a).abs() < 1e-12);
        assert!((w_mean(&q, &gaussian(0.0, 3.0, 0.0), 1.0) - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn w_variance_examples() {
        let p = model(0.5, 1.0, 1.0);
        assert!((w_variance(&p, &gaussian(0.2, 0.2, 0.6), 0.0, NoiseWeights::Swapped).unwrap() - 0.6).abs() < 1e-15);
        let q = model(0.25, 1.0, 1.0);
        let ic = InitialCondition::new(0.0, 0.0, NoiseLaw::gaussian(1.0).unwrap(), NoiseLaw::point_mass()).unwrap();
        assert_eq!(w_variance(&q, &ic, 0.0, NoiseWeights::Swapped).unwrap(), 0.75);
        assert_eq!(w_variance(&q, &ic, 0.0, NoiseWeights::Mixture).unwrap(), 0.25);
        let st = VarianceSeries::for_model(&q, &ic).unwrap().value(1.3).unwrap();
        assert!((w_variance(&q, &ic, 1.3, NoiseWeights::Swapped).unwrap() - 0.75 - st).abs() < 1e-15);
        assert!(matches!(
            w_variance(&q, &gaussian(0.0, 1.0, 0.5), 1.0, NoiseWeights::Swapped),
            Err(Error::BranchMismatch(_))
        ));
    }

    #[test]
    fn integral_variance_matches_quadrature() {
        let p = model(0.25, 2.0, 1.0);
        let ic = InitialCondition::new(0.3, 0.3, NoiseLaw::gaussian(0.5).unwrap(), NoiseLaw::gaussian(0.1).unwrap()).unwrap();
        let series = VarianceSeries::for_model(&p, &ic).unwrap();
        let noise = 0.75 * 0.5 + 0.25 * 0.1;
        for t in [0.01, 0.5, 1.0, 2.0] {
            let got = w_integral_variance(&p, &ic, t, NoiseWeights::Swapped).unwrap();
            // int int (noise + (R0(t', s') - A) / sigma_*) over the square
            let di = r0_double_integral(series.a, series.sigma_star, t, 32).unwrap();
            let want = noise * t * t + (di - series.a * t * t) / series.sigma_star;
            assert!(((got - want) / want).abs() < 1e-10, "t={t}: {got} vs {want}");
        }
        assert_eq!(w_integral_variance(&p, &ic, 0.0, NoiseWeights::Swapped).unwrap(), 0.0);
    }

    #[test]
    fn stability_examples() {
        let p = ModelParams::new(100, 0.5, 1.0, 1.0, 1.0, 0.0).unwrap();
        let r = stability_report(&p, 10.0, 201).unwrap();
        assert!(!r.eventually_decreasing);
        let r = stability_report(&p.with_coupling(1.0, 2.0).unwrap(), 10.0, 201).unwrap();
        assert!(r.eventually_decreasing);
        assert_eq!((r.threshold_sigma_star, r.threshold_sqrt_sigma_star), (1.0, 1.0));

        // sigma_* = 4: ln I0(4t) grows like 4t - ln(t)/2, so the flip point
        // sits just below 2
        let q = ModelParams::new(100, 0.5, 4.0, 4.0, 1.0, 0.0).unwrap();
        let r = stability_report(&q, 50.0, 5001).unwrap();
        assert!((r.critical_kappa - 2.0).abs() < 0.01, "{}", r.critical_kappa);
        assert!(r.closer_to_sqrt);
        assert!(r.critical_kappa < 2.0);
    }

    #[test]
    fn oracle_csv_layout() {
        let p = model(0.5, 1.0, 1.0);
        let out = write_oracle_csv(Vec::new(), &p, &gaussian(0.0, 1.0, 0.1), &[0.0, 1.0], NoiseWeights::Swapped).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,sigma_tilde,r0,w_mean,w_var");
        assert!(lines[1].ends_with(",NaN"));
    }
}
