//! Sampling of the constrained Gaussian coupling matrix.
//!
//! `W` has independent rows; inside a row the entries are Gaussian with
//! column variances `sigma_j`, conditioned on the row summing to zero. Two
//! samplers produce the same law:
//!
//! * [`sample_projection`] draws an unconstrained row `V` and removes the
//!   `sigma`-weighted share of its sum, `W_ij = V_ij - sigma_j S_i / (n sigma_*)`.
//!   This is an exact linear conditioning, so
//!   `E W_ij W_il = delta_jl sigma_j - sigma_j sigma_l / (n sigma_*)` holds
//!   exactly and every row sums to zero up to rounding.
//! * [`sample_via_basis`] draws independent entries in the rotated basis with
//!   the block variances `(0, sigma_I sigma_E / sigma_*, sigma_I, ..., sigma_E, ...)`
//!   and rotates back with `W = U W~ U^T`.
//!
//! The rank-one mean part `aM`, `Mx = (m, x) u`, is never formed densely;
//! [`RankOnePart`] keeps it as the pair `(m, a)`.

use std::io::Write;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::OrthonormalBasis;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::TrialSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingRoute {
    Projection,
    Basis,
    /// Raw draw without the row constraint (diagnostics only).
    Unconstrained,
}

impl std::str::FromStr for SamplingRoute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "projection" => Ok(Self::Projection),
            "basis" => Ok(Self::Basis),
            "unconstrained" => Ok(Self::Unconstrained),
            other => Err(crate::error::invalid("route", format!("unknown route `{other}`"))),
        }
    }
}

/// One realization of `W` (so `J = n^{-1/2} W`).
#[derive(Debug, Clone)]
pub struct ConstrainedMatrix {
    entries: DMatrix<f64>,
    params: ModelParams,
    route: SamplingRoute,
}

impl ConstrainedMatrix {
    /// Wraps an explicit matrix. The row constraint is not checked here; see
    /// [`ConstrainedMatrix::max_row_sum`].
    pub fn from_entries(entries: DMatrix<f64>, params: ModelParams, route: SamplingRoute) -> Result<Self> {
        if entries.nrows() != params.n || entries.ncols() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                found: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(Self {
            entries,
            params,
            route,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn route(&self) -> SamplingRoute {
        self.route
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    /// `J = n^{-1/2} W`.
    pub fn coupling(&self) -> DMatrix<f64> {
        &self.entries / (self.params.n as f64).sqrt()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Row-major CSV dump, 17 significant digits, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.entries.row_iter() {
            let line: Vec<String> = row.iter().map(|v| crate::io::fmt_f64(*v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Draws row `row` of the projection sampler into `out`.
pub fn sample_projection_row(p: &ModelParams, seed: TrialSeed, row: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), p.n);
    let mut rng = seed.row(row);
    let (sd_i, sd_e) = (p.sigma_i.sqrt(), p.sigma_e.sqrt());
    let k = p.fn_count();
    let mut sum = 0.0;
    for (j, v) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * if j < k { sd_i } else { sd_e };
        sum += *v;
    }
    let shift = sum / (p.n as f64 * p.sigma_star());
    for (j, v) in out.iter_mut().enumerate() {
        *v -= p.column_variance(j) * shift;
    }
}

/// Same streams as [`sample_projection_row`] without the projection step.
pub fn sample_unconstrained_row(p: &ModelParams, seed: TrialSeed, row: usize, out: &mut [f64]) {
    let mut rng = seed.row(row);
    let (sd_i, sd_e) = (p.sigma_i.sqrt(), p.sigma_e.sqrt());
    let k = p.fn_count();
    for (j, v) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * if j < k { sd_i } else { sd_e };
    }
}

fn fill_rows(
    p: &ModelParams,
    seed: TrialSeed,
    row_sampler: fn(&ModelParams, TrialSeed, usize, &mut [f64]),
) -> DMatrix<f64> {
    let n = p.n;
    let mut m = DMatrix::zeros(n, n);
    let mut buf = vec![0.0; n];
    for i in 0..n {
        row_sampler(p, seed, i, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

pub fn sample_projection(p: &ModelParams, seed: TrialSeed) -> ConstrainedMatrix {
    ConstrainedMatrix {
        entries: fill_rows(p, seed, sample_projection_row),
        params: *p,
        route: SamplingRoute::Projection,
    }
}

/// The raw draw behind [`sample_projection`] for the same seed, before the
/// rows are projected onto the constraint.
pub fn sample_unconstrained(p: &ModelParams, seed: TrialSeed) -> ConstrainedMatrix {
    ConstrainedMatrix {
        entries: fill_rows(p, seed, sample_unconstrained_row),
        params: *p,
        route: SamplingRoute::Unconstrained,
    }
}

/// Variances of the columns of `W~ = U^T W U`.
pub fn rotated_column_variances(p: &ModelParams) -> Vec<f64> {
    let s = p.sigma_star();
    (0..p.n)
        .map(|j| match j {
            0 => 0.0,
            1 => p.sigma_i * p.sigma_e / s,
            j if j <= p.fn_count() => p.sigma_i,
            _ => p.sigma_e,
        })
        .collect()
}

/// Draws the rotated matrix `W~` with independent entries.
pub fn sample_rotated(p: &ModelParams, seed: TrialSeed) -> DMatrix<f64> {
    let n = p.n;
    let sds: Vec<f64> = rotated_column_variances(p).into_iter().map(f64::sqrt).collect();
    let mut wt = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut rng = seed.row(i);
        for (j, sd) in sds.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            wt[(i, j)] = z * sd;
        }
    }
    wt
}

pub fn sample_via_basis(p: &ModelParams, basis: &OrthonormalBasis, seed: TrialSeed) -> Result<ConstrainedMatrix> {
    if basis.n() != p.n || basis.fn_count() != p.fn_count() {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: basis.n(),
        });
    }
    let wt = sample_rotated(p, seed);
    let u = basis.columns();
    let entries = u * wt * u.transpose();
    Ok(ConstrainedMatrix {
        entries,
        params: *p,
        route: SamplingRoute::Basis,
    })
}

/// The mean part `aM` in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOnePart {
    m: Vec<f64>,
    a: f64,
}

impl RankOnePart {
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    /// `(m, x)`.
    pub fn project(&self, x: &[f64]) -> f64 {
        self.m.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `M x = (m, x) u` (without the factor `a`).
    pub fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        vec![self.project(x); self.m.len()]
    }

    /// Adds `a M x` to `out`.
    pub fn add_scaled_apply(&self, x: &[f64], out: &mut [f64]) {
        let s = self.a * self.project(x);
        for v in out.iter_mut() {
            *v += s;
        }
    }
}

pub fn assemble_rank_one(p: &ModelParams) -> RankOnePart {
    let (mu_i, mu_e) = p.mu();
    let inv = 1.0 / (p.n as f64).sqrt();
    let m = (0..p.n)
        .map(|i| inv * if i < p.fn_count() { mu_i } else { mu_e })
        .collect();
    RankOnePart { m, a: p.a }
}

/// Unbiased covariance of components `j` and `l` over a set of sample
/// vectors (rows pooled across trials).
pub fn empirical_covariance(samples: &[Vec<f64>], j: usize, l: usize) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let (mut sj, mut sl) = (0.0, 0.0);
    for s in samples {
        sj += s[j];
        sl += s[l];
    }
    let (mj, ml) = (sj / n, sl / n);
    let c: f64 = samples.iter().map(|s| (s[j] - mj) * (s[l] - ml)).sum();
    Ok(c / (n - 1.0))
}

/// Target covariance `delta_jl sigma_j - sigma_j sigma_l / (n sigma_*)`.
pub fn row_covariance(p: &ModelParams, j: usize, l: usize) -> f64 {
    let (sj, sl) = (p.column_variance(j), p.column_variance(l));
    let diag = if j == l { sj } else { 0.0 };
    diag - sj * sl / (p.n as f64 * p.sigma_star())
}
