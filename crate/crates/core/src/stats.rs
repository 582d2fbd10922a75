//! Empirical estimators for single runs and ensembles.
//!
//! Reductions over trials go through [`pairwise_sum`] on slices in trial
//! order, so results do not depend on how trials were scheduled.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::{estimate_operator_norm, index_in, DenseOperator, Trajectory};
use crate::error::{Error, Result};
use crate::matrix::{ConstrainedMatrix, RankOnePart};
use crate::params::{InitialCondition, ModelParams};
use crate::special::normal_cdf;
use crate::theory::{w_integral_variance, w_mean, w_variance, NoiseWeights};

/// A distribution function with access to left limits at atoms.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCdf {
    pub mean: f64,
    pub sd: f64,
}

impl Cdf for GaussianCdf {
    fn cdf(&self, x: f64) -> f64 {
        if self.sd == 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mean) / self.sd)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.sd == 0.0 {
            return if x > self.mean { 1.0 } else { 0.0 };
        }
        self.cdf(x)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Sum with pairwise splitting below 32 elements.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() as f64 - 1.0)
}

/// `n^{-1} #{i : x_i <= lambda}`.
pub fn counting_measure(x: &[f64], lambda: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(x.iter().filter(|&&v| v <= lambda).count() as f64 / x.len() as f64)
}

/// `n^{-1} sum 1 / (x_i - z)`.
pub fn stieltjes(x: &[f64], z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::RealSpectralArgument);
    }
    if x.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let (re, im): (Vec<f64>, Vec<f64>) = x
        .iter()
        .map(|&v| {
            let g = (Complex64::new(v, 0.0) - z).inv();
            (g.re, g.im)
        })
        .unzip();
    let n = x.len() as f64;
    Ok(Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n))
}

/// Supremum distance between the empirical distribution of `sample` and
/// `oracle`, evaluated at the sample points. Ties are grouped and the
/// oracle's left limits are used below each atom.
pub fn ks_distance<C: Cdf + ?Sized>(sample: &[f64], oracle: &C) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        d = d
            .max((j as f64 / n - oracle.cdf(v)).abs())
            .max((i as f64 / n - oracle.cdf_left(v)).abs());
        i = j;
    }
    Ok(d)
}

/// Largest gap between the fitted-Gaussian probabilities of the order
/// statistics and their plotting positions `(i - 1/2)/n` (a P-P plot).
pub fn qq_deviation(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: sample.len(),
        });
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let fit = GaussianCdf {
        mean: mean(&xs),
        sd: variance(&xs).sqrt(),
    };
    if fit.sd == 0.0 {
        return Ok(0.0);
    }
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (fit.cdf(x) - (i as f64 + 0.5) / n).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Least squares of `ln y` on `ln x`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: xs.len(),
        });
    }
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::DegenerateVariance);
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = (rss / (lx.len() as f64 - 2.0) / sxx).sqrt();
    Ok(LogLogFit {
        slope,
        intercept,
        slope_se,
    })
}

/// `E |g - E g|^2` over trials.
pub fn complex_variance(values: &[Complex64]) -> f64 {
    let re: Vec<f64> = values.iter().map(|g| g.re).collect();
    let im: Vec<f64> = values.iter().map(|g| g.im).collect();
    variance(&re) + variance(&im)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DecayFit {
    pub sizes: Vec<usize>,
    pub variances: Vec<f64>,
    pub fit: LogLogFit,
}

/// Fits `ln Var_trials g_n` against `ln n`.
pub fn self_averaging_decay(sizes: &[usize], samples: &[Vec<Complex64>]) -> Result<DecayFit> {
    if sizes.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            found: samples.len(),
        });
    }
    if sizes.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            got: sizes.len(),
        });
    }
    if let Some(short) = samples.iter().find(|s| s.len() < 100) {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: short.len(),
        });
    }
    if samples.iter().any(|s| s.iter().all(|&g| g == s[0])) {
        return Err(Error::DegenerateVariance);
    }
    let variances: Vec<f64> = samples.iter().map(|s| complex_variance(s)).collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let fit = log_log_fit(&xs, &variances)?;
    Ok(DecayFit {
        sizes: sizes.to_vec(),
        variances,
        fit,
    })
}

/// `n^{-1} sum_j sigma_j x_j(t) x_j(s)` for one trajectory.
pub fn empirical_r(traj: &Trajectory, p: &ModelParams, t: f64, s: f64) -> Result<f64> {
    let (kt, ks) = (index_in(&traj.times, t)?, index_in(&traj.times, s)?);
    let (xt, xs) = (&traj.states[kt], &traj.states[ks]);
    if xt.len() != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: xt.len(),
        });
    }
    let terms: Vec<f64> = (0..p.n).map(|j| p.column_variance(j) * xt[j] * xs[j]).collect();
    Ok(pairwise_sum(&terms) / p.n as f64)
}

/// Sample variances of the coordinates inside each block.
pub fn block_variances(x: &[f64], p: &ModelParams) -> (f64, f64) {
    let k = p.fn_count();
    (variance(&x[..k]), variance(&x[k..]))
}

/// Empirical distribution evaluated on a grid.
pub fn empirical_cdf_grid(x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(grid
        .iter()
        .map(|&l| xs.partition_point(|&v| v <= l) as f64 / n)
        .collect())
}

pub const MIN_W_TRIALS: usize = 200;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WnMeanReport {
    pub n: usize,
    pub t: f64,
    pub sample_mean: f64,
    pub standard_error: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WnGaussianReport {
    pub n: usize,
    pub t: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    /// `(1 - f) sigma0_I + f sigma0_E + sigma_tilde(t)`.
    pub variance_swapped: f64,
    /// `f sigma0_I + (1 - f) sigma0_E + sigma_tilde(t)`.
    pub variance_mixture: f64,
    /// Variance of the time integral, see [`w_integral_variance`].
    pub integral_swapped: f64,
    pub integral_mixture: f64,
    pub qq_deviation: f64,
}

impl WnGaussianReport {
    pub fn relative_error(&self, weights: NoiseWeights) -> f64 {
        let want = match weights {
            NoiseWeights::Swapped => self.variance_swapped,
            NoiseWeights::Mixture => self.variance_mixture,
        };
        (self.sample_variance - want).abs() / want
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "branch", rename_all = "kebab-case")]
pub enum WnReport {
    Divergent(WnMeanReport),
    Gaussian(WnGaussianReport),
}

fn check_trials(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_W_TRIALS {
        return Err(Error::InsufficientSamples {
            needed: MIN_W_TRIALS,
            got: samples.len(),
        });
    }
    Ok(())
}

/// Compares the sample mean of `w(t)` with its `sqrt(n)` leading order.
pub fn wn_mean_test(samples: &[f64], p: &ModelParams, ic: &InitialCondition, t: f64) -> Result<WnMeanReport> {
    if ic.equal_offsets() {
        return Err(Error::BranchMismatch("the mean test needs c_I != c_E"));
    }
    check_trials(samples)?;
    let sample_mean = mean(samples);
    let predicted = w_mean(p, ic, t);
    Ok(WnMeanReport {
        n: p.n,
        t,
        sample_mean,
        standard_error: (variance(samples) / samples.len() as f64).sqrt(),
        predicted,
        ratio: sample_mean / predicted,
    })
}

/// Variance and normality diagnostics of `w(t)` in the balanced case.
pub fn wn_gaussian_test(samples: &[f64], p: &ModelParams, ic: &InitialCondition, t: f64) -> Result<WnGaussianReport> {
    check_trials(samples)?;
    let variance_swapped = w_variance(p, ic, t, NoiseWeights::Swapped)?;
    Ok(WnGaussianReport {
        n: p.n,
        t,
        sample_mean: mean(samples),
        sample_variance: variance(samples),
        variance_swapped,
        variance_mixture: w_variance(p, ic, t, NoiseWeights::Mixture)?,
        integral_swapped: w_integral_variance(p, ic, t, NoiseWeights::Swapped)?,
        integral_mixture: w_integral_variance(p, ic, t, NoiseWeights::Mixture)?,
        qq_deviation: qq_deviation(samples)?,
    })
}

pub fn wn_tests(samples: &[f64], p: &ModelParams, ic: &InitialCondition, t: f64) -> Result<WnReport> {
    if ic.equal_offsets() {
        wn_gaussian_test(samples, p, ic, t).map(WnReport::Gaussian)
    } else {
        wn_mean_test(samples, p, ic, t).map(WnReport::Divergent)
    }
}

pub const SPECTRUM_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Eigenvalues of `J`.
    pub coupling: Vec<Complex64>,
    /// Eigenvalues of `J + aM`.
    pub shifted: Vec<Complex64>,
    /// Eigenvalues of `n^{-1/2} V + aM` for the unprojected draw `V`.
    pub unconstrained: Option<Vec<Complex64>>,
    pub spectral_radius: f64,
    pub unconstrained_radius: Option<f64>,
    pub norm_estimate: f64,
    /// Largest distance in a greedy nearest matching of the two spectra.
    pub shift_mismatch: f64,
}

fn eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let ev = m.complex_eigenvalues();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure { n });
    }
    Ok(ev.iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

fn radius(ev: &[Complex64]) -> f64 {
    ev.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Greedy nearest-neighbour matching; returns the largest matched distance.
pub fn spectrum_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for za in a {
        let mut best = (f64::INFINITY, usize::MAX);
        for (k, zb) in b.iter().enumerate() {
            if !used[k] {
                let d = (za - zb).norm();
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        if best.1 == usize::MAX {
            return f64::INFINITY;
        }
        used[best.1] = true;
        worst = worst.max(best.0);
    }
    worst
}

fn with_rank_one(j: &DMatrix<f64>, rank_one: &RankOnePart) -> DMatrix<f64> {
    let u = DVector::from_element(j.nrows(), 1.0);
    let m = DVector::from_column_slice(rank_one.m());
    j + u * m.transpose() * rank_one.a()
}

pub fn spectrum_diag(
    w: &ConstrainedMatrix,
    rank_one: &RankOnePart,
    unconstrained: Option<&ConstrainedMatrix>,
) -> Result<SpectrumReport> {
    let n = w.n();
    if n > SPECTRUM_LIMIT {
        return Err(Error::DimensionTooLarge {
            limit: SPECTRUM_LIMIT,
            found: n,
        });
    }
    if rank_one.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rank_one.n(),
        });
    }
    let op = DenseOperator::coupling(w);
    let norm_estimate = estimate_operator_norm(&op, 30);
    let j = op.matrix();
    let coupling = eigenvalues(j.clone())?;
    let shifted = eigenvalues(with_rank_one(j, rank_one))?;
    let unconstrained = match unconstrained {
        Some(v) => Some(eigenvalues(with_rank_one(&v.coupling(), rank_one))?),
        None => None,
    };
    Ok(SpectrumReport {
        spectral_radius: radius(&coupling),
        unconstrained_radius: unconstrained.as_deref().map(radius),
        shift_mismatch: spectrum_mismatch(&shifted, &coupling),
        coupling,
        shifted,
        unconstrained,
        norm_estimate,
    })
}

/// Per-trial results of an ensemble, indexed by trial.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub n_trials: usize,
    pub times: Vec<f64>,
    /// `block_variance[k][trial] = (var_I, var_E)` at `times[k]`.
    pub block_variance: Vec<Vec<(f64, f64)>>,
    /// `(x_1, x_n)` per time and trial.
    pub edge_values: Vec<Vec<(f64, f64)>>,
    /// `g_n(z, t_max)` per trial as `(re, im)`.
    pub stieltjes: Vec<(f64, f64)>,
    /// `w(t_max)` per trial.
    pub w_samples: Vec<f64>,
    /// `(x(t_max), m)` per trial.
    pub m_projection: Vec<f64>,
    pub spectral_radii: Vec<f64>,
    pub norm_estimates: Vec<f64>,
}

impl EnsembleSummary {
    /// Trial average of the block variances at `times[k]`.
    pub fn mean_block_variance(&self, k: usize) -> (f64, f64) {
        let vi: Vec<f64> = self.block_variance[k].iter().map(|v| v.0).collect();
        let ve: Vec<f64> = self.block_variance[k].iter().map(|v| v.1).collect();
        (mean(&vi), mean(&ve))
    }

    /// `((mean, se) of x_1, (mean, se) of x_n)` at `times[k]`.
    pub fn edge_means(&self, k: usize) -> ((f64, f64), (f64, f64)) {
        let first: Vec<f64> = self.edge_values[k].iter().map(|v| v.0).collect();
        let last: Vec<f64> = self.edge_values[k].iter().map(|v| v.1).collect();
        let n = first.len() as f64;
        (
            (mean(&first), (variance(&first) / n).sqrt()),
            (mean(&last), (variance(&last) / n).sqrt()),
        )
    }

    pub fn stieltjes_variance(&self) -> f64 {
        let g: Vec<Complex64> = self.stieltjes.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        complex_variance(&g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::IntegratorDiagnostics;
    use crate::matrix::{assemble_rank_one, sample_projection, sample_unconstrained};
    use crate::params::NoiseLaw;
    use crate::rng::{stream, TrialSeed};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn counting_measure_examples() {
        let x = [0.1, 0.5, 0.9];
        assert!((counting_measure(&x, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(counting_measure(&x, -1e300).unwrap(), 0.0);
        assert_eq!(counting_measure(&x, 1e300).unwrap(), 1.0);
        assert!(counting_measure(&[], 0.0).is_err());
        assert_eq!(empirical_cdf_grid(&x, &[0.0, 0.5, 2.0]).unwrap(), vec![0.0, 2.0 / 3.0, 1.0]);
    }

    proptest! {
        #[test]
        fn counting_measure_is_permutation_invariant(mut xs in proptest::collection::vec(-5.0f64..5.0, 1..50), lam in -5.0f64..5.0) {
            let before = counting_measure(&xs, lam).unwrap();
            xs.reverse();
            prop_assert_eq!(before, counting_measure(&xs, lam).unwrap());
        }

        #[test]
        fn stieltjes_is_bounded(xs in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            prop_assert!(stieltjes(&xs, Complex64::i()).unwrap().norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn stieltjes_examples() {
        assert_eq!(stieltjes(&[0.0], Complex64::i()).unwrap(), Complex64::i());
        let z = Complex64::new(0.3, -2.0);
        let g = stieltjes(&[1.5; 7], z).unwrap();
        assert!((g - (Complex64::new(1.5, 0.0) - z).inv()).norm() < 1e-15);
        assert!(matches!(stieltjes(&[1.0], Complex64::new(1.0, 0.0)), Err(Error::RealSpectralArgument)));
    }

    #[test]
    fn ks_examples() {
        let atom = GaussianCdf { mean: 0.0, sd: 0.0 };
        assert_eq!(ks_distance(&[0.0; 10], &atom).unwrap(), 0.0);
        let half = ks_distance(&[0.0; 100], &GaussianCdf { mean: 0.0, sd: 1.0 }).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        assert!(ks_distance(&[], &atom).is_err());
        // two-point sample against a uniform law
        let u = |x: f64| x.clamp(0.0, 1.0);
        assert!((ks_distance(&[0.25, 0.75], &u).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_quantile_for_normal_samples() {
        // KS 95% quantile at n = 1000 is about 1.36 / sqrt(1000) = 0.043
        let phi = GaussianCdf { mean: 0.0, sd: 1.0 };
        let mut pass = 0;
        for seed in 0..40 {
            let mut rng = stream(seed, 0, 0);
            let xs: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
            if ks_distance(&xs, &phi).unwrap() <= 0.05 {
                pass += 1;
            }
        }
        assert!(pass >= 38, "{pass}/40");
    }

    #[test]
    fn qq_deviation_examples() {
        let mut rng = stream(4, 0, 0);
        let xs: Vec<f64> = (0..500).map(|_| 2.0 + 3.0 * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
        assert!(qq_deviation(&xs).unwrap() < 0.06);
        let skewed: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        assert!(qq_deviation(&skewed).unwrap() > 0.1);
        assert_eq!(qq_deviation(&[1.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn log_log_fit_recovers_power_law() {
        let xs = [100.0, 200.0, 400.0, 800.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        let fit = log_log_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-10);
        assert!(matches!(log_log_fit(&xs, &[1.0, 0.0, 1.0, 1.0]), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn degenerate_decay_is_flagged() {
        let same = vec![vec![Complex64::new(0.1, 0.2); 100]; 4];
        assert!(matches!(
            self_averaging_decay(&[100, 200, 400, 800], &same),
            Err(Error::DegenerateVariance)
        ));
        assert!(self_averaging_decay(&[100, 200, 400], &same[..3]).is_err());
        let short = vec![vec![Complex64::new(0.0, 1.0); 50]; 4];
        assert!(self_averaging_decay(&[1, 2, 3, 4], &short).is_err());
    }

    #[test]
    fn empirical_r_at_time_zero() {
        let p = ModelParams::new(10, 0.3, 2.0, 0.5, 0.0, 0.0).unwrap();
        let ic = InitialCondition::homogeneous(1.5, -1.0, NoiseLaw::point_mass()).unwrap();
        let tr = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![ic.offsets(&p), ic.offsets(&p)],
            w_values: None,
            full_states: None,
            diagnostics: IntegratorDiagnostics::default(),
        };
        let want = 2.0 * 0.3 * 2.25 + 0.5 * 0.7 * 1.0;
        assert!((empirical_r(&tr, &p, 0.0, 0.0).unwrap() - want).abs() < 1e-14);
        assert!(matches!(empirical_r(&tr, &p, 0.5, 0.0), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn wn_branch_checks() {
        let p = ModelParams::new(100, 0.5, 1.0, 1.0, 0.0, 0.0).unwrap();
        let balanced = InitialCondition::homogeneous(0.5, 0.5, NoiseLaw::gaussian(0.3).unwrap()).unwrap();
        let zeros = vec![0.0; 200];
        let r = wn_gaussian_test(&zeros, &p, &balanced, 0.0).unwrap();
        assert_eq!(r.sample_variance, 0.0);
        assert!(matches!(wn_mean_test(&zeros, &p, &balanced, 1.0), Err(Error::BranchMismatch(_))));
        let split = InitialCondition::homogeneous(0.0, 1.0, NoiseLaw::gaussian(0.3).unwrap()).unwrap();
        assert!(matches!(wn_gaussian_test(&zeros, &p, &split, 1.0), Err(Error::BranchMismatch(_))));
        assert!(matches!(wn_tests(&zeros[..10], &p, &split, 1.0), Err(Error::InsufficientSamples { .. })));
        let ones = vec![10.0; 200];
        match wn_tests(&ones, &p, &split, 2.0).unwrap() {
            WnReport::Divergent(r) => assert!((r.ratio - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shifted_spectrum_equals_coupling_spectrum() {
        let p = ModelParams::new(60, 0.4, 2.0, 1.0, 1.5, 0.0).unwrap();
        let seed = TrialSeed::new(21, 0);
        let w = sample_projection(&p, seed);
        let v = sample_unconstrained(&p, seed);
        let rep = spectrum_diag(&w, &assemble_rank_one(&p), Some(&v)).unwrap();
        assert_eq!(rep.coupling.len(), 60);
        assert!(rep.shift_mismatch < 1e-8, "{}", rep.shift_mismatch);
        assert!(rep.spectral_radius <= rep.norm_estimate * (1.0 + 1e-9));
        assert!(rep.unconstrained_radius.is_some());
    }

    #[test]
    fn spectrum_mismatch_examples() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let b = [Complex64::new(0.0, 1.0), Complex64::new(1.0, 1e-9)];
        assert!((spectrum_mismatch(&a, &b) - 1e-9).abs() < 1e-15);
        assert_eq!(spectrum_mismatch(&a, &b[..1]), f64::INFINITY);
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs: Vec<f64> = (0..10_000).map(|i| 0.1 + (i % 7) as f64).collect();
        let want: f64 = 10_000.0 * 0.1 + (0..10_000).map(|i| (i % 7) as f64).sum::<f64>();
        assert!((pairwise_sum(&xs) - want).abs() < 1e-9);
        assert_eq!(variance(&[1.0, -1.0]), 2.0);
    }
}
