//! Verification suites built from the samplers, the integrator and the
//! oracles. Each suite returns a report with the raw numbers and a
//! `passed` verdict against the pinned thresholds below.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::basis::{build_basis, conjugate_matrix};
use crate::dynamics::{
    check_rank_one_identities, full_solution, propagate_free, DenseOperator, IntegratorOptions, RankOneReport,
    TimeGrid, Trajectory,
};
use crate::ensemble::Harness;
use crate::error::{Error, Result};
use crate::matrix::{
    assemble_rank_one, row_covariance, rotated_column_variances, sample_projection, sample_projection_row,
    sample_unconstrained, sample_via_basis, ConstrainedMatrix,
};
use crate::params::{InitialCondition, ModelParams};
use crate::rng::{sweep_trial_id, TrialSeed};
use crate::stats::{
    block_variances, ks_distance, self_averaging_decay, spectrum_diag, stieltjes, Cdf, DecayFit, EnsembleSummary,
    SpectrumReport,
};
use crate::theory::{r0_double_integral, w_mean, LimitCdf, VarianceSeries};

pub const Z_LIMIT: f64 = 5.0;
pub const KS_LIMIT: f64 = 0.06;
pub const BLOCK_VARIANCE_REL: f64 = 0.10;
pub const SLOPE_RANGE: (f64, f64) = (-1.4, -0.6);
pub const MEAN_RATIO_RANGE: (f64, f64) = (0.9, 1.1);
pub const W_VARIANCE_REL: f64 = 0.15;
pub const QQ_LIMIT: f64 = 0.08;
pub const NORM_MARGIN: f64 = 0.5;
pub const NORM_TAIL_FRACTION: f64 = 0.01;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const SPECTRUM_MATCH_TOL: f64 = 1e-6;
pub const RADIUS_FACTOR: f64 = 1.15;
pub const SERIES_BESSEL_REL: f64 = 1e-12;
pub const DOUBLE_INTEGRAL_TOL: f64 = 1e-6;

/// Trials folded sequentially per work unit.
const CHUNK: u64 = 512;

/// Running sums of a vector of per-sample statistics.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            count: 0.0,
            sum: vec![0.0; k],
            sum_sq: vec![0.0; k],
        }
    }

    fn add(&mut self, v: &[f64]) {
        self.count += 1.0;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(v) {
            *s += x;
            *q += x * x;
        }
    }

    fn merge(&mut self, other: Moments) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count
    }

    /// Standard error of [`Moments::mean`].
    fn se(&self, i: usize) -> f64 {
        let m = self.mean(i);
        let var = (self.sum_sq[i] / self.count - m * m).max(0.0) * self.count / (self.count - 1.0);
        (var / self.count).sqrt()
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// One z-scored comparison.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ZCheck {
    pub statistic: &'static str,
    pub j: usize,
    pub l: usize,
    pub observed: f64,
    pub expected: f64,
    pub standard_error: f64,
    pub z: f64,
}

impl ZCheck {
    pub fn passed(&self) -> bool {
        self.z.abs() <= Z_LIMIT
    }
}

fn max_abs_z(checks: &[ZCheck]) -> f64 {
    checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CovarianceReport {
    pub samples: u64,
    pub checks: Vec<ZCheck>,
}

impl CovarianceReport {
    pub fn max_abs_z(&self) -> f64 {
        max_abs_z(&self.checks)
    }

    pub fn first_failure(&self) -> Option<&ZCheck> {
        self.checks.iter().find(|c| !c.passed())
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }
}

/// Within-row covariance of the projection sampler against
/// `delta_jl sigma_j - sigma_j sigma_l / (n sigma_*)`, one row per trial.
pub fn row_covariance_suite(p: &ModelParams, rows: u64, master_seed: u64, harness: &Harness) -> Result<CovarianceReport> {
    let n = p.n;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |l| (j, l))).collect();
    let k = n + pairs.len();
    let acc = harness.fold_chunks(
        rows,
        CHUNK,
        || (Moments::new(k), vec![0.0; n], vec![0.0; k]),
        |(m, row, stats), t| {
            sample_projection_row(p, TrialSeed::new(master_seed, t), 0, row);
            stats[..n].copy_from_slice(row);
            for (s, &(j, l)) in stats[n..].iter_mut().zip(&pairs) {
                *s = row[j] * row[l];
            }
            m.add(stats);
            Ok(())
        },
        |a, b| a.0.merge(b.0),
    )?;
    let m = acc.0;
    let bessel = m.count / (m.count - 1.0);
    let checks = pairs
        .iter()
        .enumerate()
        .map(|(idx, &(j, l))| {
            let observed = bessel * (m.mean(n + idx) - m.mean(j) * m.mean(l));
            let expected = row_covariance(p, j, l);
            let se = m.se(n + idx);
            ZCheck {
                statistic: "row_covariance",
                j,
                l,
                observed,
                expected,
                standard_error: se,
                z: z_score(observed - expected, se),
            }
        })
        .collect();
    Ok(CovarianceReport { samples: rows, checks })
}

/// Statistics compared between the two sampling routes, per trial:
/// entries, squared entries, within-row products pooled over rows, and
/// products across rows 0 and 1.
fn route_statistics(w: &DMatrix<f64>, out: &mut Vec<f64>) {
    let n = w.nrows();
    out.clear();
    out.extend(w.iter());
    out.extend(w.iter().map(|x| x * x));
    let g = w.tr_mul(w) / n as f64;
    for j in 0..n {
        for l in j + 1..n {
            out.push(g[(j, l)]);
        }
    }
    for j in 0..n {
        for l in 0..n {
            out.push(w[(0, j)] * w[(1, l)]);
        }
    }
}

fn route_labels(n: usize) -> Vec<(&'static str, usize, usize)> {
    let mut labels = Vec::new();
    for j in 0..n {
        for i in 0..n {
            labels.push(("entry_mean", i, j));
        }
    }
    for j in 0..n {
        for i in 0..n {
            labels.push(("entry_second_moment", i, j));
        }
    }
    for j in 0..n {
        for l in j + 1..n {
            labels.push(("row_product", j, l));
        }
    }
    for j in 0..n {
        for l in 0..n {
            labels.push(("cross_row_product", j, l));
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RouteReport {
    pub trials: u64,
    /// Two-sample z-scores, projection against basis.
    pub checks: Vec<ZCheck>,
    /// Cross-row products of the projection route against zero.
    pub independence: Vec<ZCheck>,
    pub max_row_sum: f64,
}

impl RouteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().chain(&self.independence).all(ZCheck::passed)
    }

    pub fn max_abs_z(&self) -> f64 {
        max_abs_z(&self.checks).max(max_abs_z(&self.independence))
    }
}

pub fn route_equivalence(p: &ModelParams, trials: u64, master_seed: u64, harness: &Harness) -> Result<RouteReport> {
    let n = p.n;
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let basis = build_basis(p)?;
    let labels = route_labels(n);
    let k = labels.len();
    let fold = |basis_route: bool| {
        harness.fold_chunks(
            trials,
            CHUNK,
            || (Moments::new(k), Vec::with_capacity(k), 0.0f64),
            |(m, buf, worst), t| {
                let w = if basis_route {
                    sample_via_basis(p, &basis, TrialSeed::new(master_seed, sweep_trial_id(1, t as u32)))?
                } else {
                    sample_projection(p, TrialSeed::new(master_seed, t))
                };
                *worst = worst.max(w.max_row_sum());
                route_statistics(w.entries(), buf);
                m.add(buf);
                Ok(())
            },
            |a, b| {
                a.0.merge(b.0);
                a.2 = a.2.max(b.2);
            },
        )
    };
    let (proj, proj_worst) = {
        let r = fold(false)?;
        (r.0, r.2)
    };
    let (basis_m, basis_worst) = {
        let r = fold(true)?;
        (r.0, r.2)
    };
    let mut checks = Vec::with_capacity(k);
    let mut independence = Vec::new();
    for (idx, &(statistic, j, l)) in labels.iter().enumerate() {
        let (a, b) = (proj.mean(idx), basis_m.mean(idx));
        let se = proj.se(idx).hypot(basis_m.se(idx));
        checks.push(ZCheck {
            statistic,
            j,
            l,
            observed: a,
            expected: b,
            standard_error: se,
            z: z_score(a - b, se),
        });
        if statistic == "cross_row_product" {
            independence.push(ZCheck {
                statistic: "cross_row_independence",
                j,
                l,
                observed: a,
                expected: 0.0,
                standard_error: proj.se(idx),
                z: z_score(a, proj.se(idx)),
            });
        }
    }
    Ok(RouteReport {
        trials,
        checks,
        independence,
        max_row_sum: proj_worst.max(basis_worst),
    })
}

/// Which of the four variance cases a rotated column falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotatedColumn {
    Ones,
    Mean,
    Inhibitory,
    Excitatory,
}

pub fn rotated_column_kind(p: &ModelParams, j: usize) -> RotatedColumn {
    match j {
        0 => RotatedColumn::Ones,
        1 => RotatedColumn::Mean,
        j if j <= p.fn_count() => RotatedColumn::Inhibitory,
        _ => RotatedColumn::Excitatory,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RotatedReport {
    pub trials: u64,
    /// Pooled column variances of `U^T W U` against the predicted profile.
    pub columns: Vec<(RotatedColumn, ZCheck)>,
    /// Products of horizontally and vertically adjacent entries against 0.
    pub cross: Vec<ZCheck>,
    /// Largest `|W~_{i1}|` seen; zero up to rounding.
    pub first_column_max: f64,
}

impl RotatedReport {
    pub fn passed(&self) -> bool {
        self.first_column_max <= 1e-10 && self.columns.iter().map(|c| &c.1).chain(&self.cross).all(ZCheck::passed)
    }

    pub fn case_means(&self) -> Vec<(RotatedColumn, f64, f64)> {
        let mut out: Vec<(RotatedColumn, f64, f64)> = Vec::new();
        for kind in [
            RotatedColumn::Ones,
            RotatedColumn::Mean,
            RotatedColumn::Inhibitory,
            RotatedColumn::Excitatory,
        ] {
            let cols: Vec<&ZCheck> = self.columns.iter().filter(|c| c.0 == kind).map(|c| &c.1).collect();
            if cols.is_empty() {
                continue;
            }
            let obs = cols.iter().map(|c| c.observed).sum::<f64>() / cols.len() as f64;
            out.push((kind, obs, cols[0].expected));
        }
        out
    }
}

/// Conjugates projection-sampled matrices into the block basis and checks
/// the independent-entry variance profile.
pub fn rotated_variance_suite(p: &ModelParams, trials: u64, master_seed: u64, harness: &Harness) -> Result<RotatedReport> {
    let n = p.n;
    let basis = build_basis(p)?;
    let k = n + (n - 1) + n;
    let acc = harness.fold_chunks(
        trials,
        CHUNK,
        || (Moments::new(k), vec![0.0; k], 0.0f64),
        |(m, stats, worst), t| {
            let w = sample_projection(p, TrialSeed::new(master_seed, t));
            let wt = conjugate_matrix(&basis, &w)?;
            let inv = 1.0 / n as f64;
            for j in 0..n {
                stats[j] = wt.column(j).iter().map(|x| x * x).sum::<f64>() * inv;
            }
            for j in 0..n - 1 {
                stats[n + j] = wt.column(j).dot(&wt.column(j + 1)) * inv;
            }
            for j in 0..n {
                let c = wt.column(j);
                stats[2 * n - 1 + j] = (0..n - 1).map(|i| c[i] * c[i + 1]).sum::<f64>() / (n - 1) as f64;
            }
            *worst = worst.max(wt.column(0).amax());
            m.add(stats);
            Ok(())
        },
        |a, b| {
            a.0.merge(b.0);
            a.2 = a.2.max(b.2);
        },
    )?;
    let (m, first_column_max) = (acc.0, acc.2);
    let profile = rotated_column_variances(p);
    let columns = (0..n)
        .map(|j| {
            let (obs, se) = (m.mean(j), m.se(j));
            (
                rotated_column_kind(p, j),
                ZCheck {
                    statistic: "rotated_column_variance",
                    j,
                    l: j,
                    observed: obs,
                    expected: profile[j],
                    standard_error: se,
                    z: if j == 0 { 0.0 } else { z_score(obs - profile[j], se) },
                },
            )
        })
        .collect();
    let mut cross = Vec::new();
    for j in 0..n - 1 {
        let idx = n + j;
        cross.push(ZCheck {
            statistic: "rotated_row_neighbours",
            j,
            l: j + 1,
            observed: m.mean(idx),
            expected: 0.0,
            standard_error: m.se(idx),
            z: if j == 0 { 0.0 } else { z_score(m.mean(idx), m.se(idx)) },
        });
    }
    for j in 1..n {
        let idx = 2 * n - 1 + j;
        cross.push(ZCheck {
            statistic: "rotated_column_neighbours",
            j,
            l: j,
            observed: m.mean(idx),
            expected: 0.0,
            standard_error: m.se(idx),
            z: z_score(m.mean(idx), m.se(idx)),
        });
    }
    Ok(RotatedReport {
        trials,
        columns,
        cross,
        first_column_max,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RankOneCase {
    pub n: usize,
    pub t: f64,
    pub report: RankOneReport,
}

/// Rank-one identities for each size and time.
pub fn rank_one_suite(template: &ModelParams, sizes: &[usize], times: &[f64], master_seed: u64) -> Result<Vec<RankOneCase>> {
    let mut out = Vec::new();
    for (si, &n) in sizes.iter().enumerate() {
        let p = template.with_n(n)?;
        let seed = TrialSeed::new(master_seed, sweep_trial_id(si as u32, 0));
        let w = sample_projection(&p, seed);
        let r = assemble_rank_one(&p);
        for &t in times {
            out.push(RankOneCase {
                n,
                t,
                report: check_rank_one_identities(&w, &r, t, seed)?,
            });
        }
    }
    Ok(out)
}

/// Samples `W` and `x(0)` for one trial and integrates the free flow with
/// `w` accumulated.
pub fn simulate_trial(
    p: &ModelParams,
    ic: &InitialCondition,
    grid: &TimeGrid,
    seed: TrialSeed,
    opts: &IntegratorOptions,
) -> Result<(ConstrainedMatrix, Trajectory)> {
    let w = sample_projection(p, seed);
    let x0 = ic.realize(p, &mut seed.initial());
    let op = DenseOperator::coupling(&w);
    let m = assemble_rank_one(p);
    let traj = propagate_free(&op, &x0, grid, Some(m.m()), opts)?;
    Ok((w, traj))
}

/// Grid `0, t_1, ..., t_k` from positive output times.
pub fn grid_with_zero(times: &[f64]) -> Result<TimeGrid> {
    let mut pts = vec![0.0];
    pts.extend(times.iter().copied().filter(|&t| t != 0.0));
    TimeGrid::new(pts)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CdfRow {
    pub t: f64,
    pub lambda: f64,
    pub empirical: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SnapshotComparison {
    pub t: f64,
    pub ks: f64,
    /// `sigma_tilde(t)`.
    pub spread: f64,
    pub var_i: f64,
    pub var_e: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CdfReport {
    pub n: usize,
    pub snapshots: Vec<SnapshotComparison>,
    pub cdf_rows: Vec<CdfRow>,
}

impl CdfReport {
    pub fn max_ks(&self) -> f64 {
        self.snapshots.iter().map(|s| s.ks).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_ks() <= KS_LIMIT
    }
}

/// One realization compared with the limiting mixture at each time.
pub fn single_realization_cdf(
    p: &ModelParams,
    ic: &InitialCondition,
    times: &[f64],
    seed: TrialSeed,
    opts: &IntegratorOptions,
    lambda_points: usize,
) -> Result<CdfReport> {
    let grid = grid_with_zero(times)?;
    let (_, traj) = simulate_trial(p, ic, &grid, seed, opts)?;
    let mut snapshots = Vec::new();
    let mut cdf_rows = Vec::new();
    for &t in times {
        let x = traj.state_at(t)?;
        let oracle = LimitCdf::new(p, ic, t)?;
        let (var_i, var_e) = block_variances(x, p);
        snapshots.push(SnapshotComparison {
            t,
            ks: ks_distance(x, &oracle)?,
            spread: oracle.spread,
            var_i,
            var_e,
        });
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1.0);
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        for k in 0..lambda_points {
            let lambda = lo - pad + (hi - lo + 2.0 * pad) * k as f64 / (lambda_points.max(2) - 1) as f64;
            cdf_rows.push(CdfRow {
                t,
                lambda,
                empirical: sorted.partition_point(|&v| v <= lambda) as f64 / sorted.len() as f64,
                oracle: oracle.cdf(lambda),
            });
        }
    }
    Ok(CdfReport {
        n: p.n,
        snapshots,
        cdf_rows,
    })
}

/// Runs `trials` independent trials and records the per-trial statistics
/// of [`EnsembleSummary`]. `g_n` is taken at the last grid time.
pub fn run_ensemble(
    p: &ModelParams,
    ic: &InitialCondition,
    grid: &TimeGrid,
    trials: u64,
    seed_of: impl Fn(u64) -> TrialSeed + Sync + Send,
    z: Complex64,
    opts: &IntegratorOptions,
    harness: &Harness,
) -> Result<EnsembleSummary> {
    let m = assemble_rank_one(p);
    let per_trial = harness.map(0..trials, |t| {
        let (_, traj) = simulate_trial(p, ic, grid, seed_of(t), opts)?;
        let last = traj.states.last().expect("grid has points");
        let g = stieltjes(last, z)?;
        let bv: Vec<(f64, f64)> = traj.states.iter().map(|x| block_variances(x, p)).collect();
        let edges: Vec<(f64, f64)> = traj.states.iter().map(|x| (x[0], x[p.n - 1])).collect();
        let w = *traj.w_values.as_ref().and_then(|w| w.last()).ok_or(Error::MissingW)?;
        Ok((bv, edges, (g.re, g.im), w, m.project(last), traj.diagnostics.norm_estimate))
    })?;
    let k = grid.len();
    let mut s = EnsembleSummary {
        n: p.n,
        n_trials: trials as usize,
        times: grid.times().to_vec(),
        block_variance: vec![Vec::with_capacity(trials as usize); k],
        edge_values: vec![Vec::with_capacity(trials as usize); k],
        ..Default::default()
    };
    for (bv, edges, g, w, proj, nrm) in per_trial {
        for i in 0..k {
            s.block_variance[i].push(bv[i]);
            s.edge_values[i].push(edges[i]);
        }
        s.stieltjes.push(g);
        s.w_samples.push(w);
        s.m_projection.push(proj);
        s.norm_estimates.push(nrm);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarianceRow {
    pub t: f64,
    pub spread: f64,
    /// Trial-averaged block variance minus the initial noise variance.
    pub excess_i: f64,
    pub excess_e: f64,
    pub mean_first: f64,
    pub se_first: f64,
    pub mean_last: f64,
    pub se_last: f64,
}

impl VarianceRow {
    /// Relative gaps to `sigma_tilde(t)`; absolute gaps when it vanishes.
    pub fn relative_errors(&self) -> (f64, f64) {
        let scale = if self.spread > 0.0 { self.spread } else { 1.0 };
        (
            (self.excess_i - self.spread).abs() / scale,
            (self.excess_e - self.spread).abs() / scale,
        )
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarianceReport {
    pub n: usize,
    pub trials: usize,
    pub c_i: f64,
    pub c_e: f64,
    pub rows: Vec<VarianceRow>,
}

impl VarianceReport {
    pub fn max_relative_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let (a, b) = r.relative_errors();
                a.max(b)
            })
            .fold(0.0, f64::max)
    }

    pub fn variance_passed(&self) -> bool {
        self.max_relative_error() <= BLOCK_VARIANCE_REL
    }

    /// Ensemble means of the first and last coordinates stay at their
    /// block offsets within [`Z_LIMIT`] standard errors.
    pub fn means_passed(&self) -> bool {
        self.rows.iter().all(|r| {
            z_score(r.mean_first - self.c_i, r.se_first).abs() <= Z_LIMIT
                && z_score(r.mean_last - self.c_e, r.se_last).abs() <= Z_LIMIT
        })
    }
}

pub fn variance_report(summary: &EnsembleSummary, p: &ModelParams, ic: &InitialCondition) -> Result<VarianceReport> {
    let series = VarianceSeries::for_model(p, ic)?;
    let mut rows = Vec::new();
    for (k, &t) in summary.times.iter().enumerate().skip(1) {
        let (vi, ve) = summary.mean_block_variance(k);
        let ((mf, sf), (ml, sl)) = summary.edge_means(k);
        rows.push(VarianceRow {
            t,
            spread: series.value(t)?,
            excess_i: vi - ic.noise_i.variance,
            excess_e: ve - ic.noise_e.variance,
            mean_first: mf,
            se_first: sf,
            mean_last: ml,
            se_last: sl,
        });
    }
    Ok(VarianceReport {
        n: summary.n,
        trials: summary.n_trials,
        c_i: ic.c_i,
        c_e: ic.c_e,
        rows,
    })
}

/// `Var_trials g_n(z, t)` for each size, with the log-log slope.
pub fn selfavg_sweep(
    p: &ModelParams,
    ic: &InitialCondition,
    sizes: &[usize],
    trials: u64,
    t: f64,
    z: Complex64,
    master_seed: u64,
    opts: &IntegratorOptions,
    harness: &Harness,
) -> Result<DecayFit> {
    let grid = grid_with_zero(&[t])?;
    let mut samples = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        let q = p.with_n(n)?;
        let s = run_ensemble(
            &q,
            ic,
            &grid,
            trials,
            |tr| TrialSeed::new(master_seed, sweep_trial_id(si as u32, tr as u32)),
            z,
            opts,
            harness,
        )?;
        samples.push(s.stieltjes.iter().map(|&(re, im)| Complex64::new(re, im)).collect::<Vec<_>>());
    }
    self_averaging_decay(sizes, &samples)
}

pub fn slope_passed(fit: &DecayFit) -> bool {
    (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&fit.fit.slope)
}

/// Samples of `w(t)` and `(x(t), m)` over trials.
pub fn w_ensemble(
    p: &ModelParams,
    ic: &InitialCondition,
    t: f64,
    trials: u64,
    master_seed: u64,
    opts: &IntegratorOptions,
    harness: &Harness,
) -> Result<EnsembleSummary> {
    let grid = grid_with_zero(&[t])?;
    run_ensemble(
        p,
        ic,
        &grid,
        trials,
        |tr| TrialSeed::new(master_seed, tr),
        Complex64::i(),
        opts,
        harness,
    )
}

/// `sqrt(n) t (f c_I mu_I + (1 - f) c_E mu_E)` is the prediction; the
/// ratio of the sample mean to it should approach one.
pub fn mean_ratio_passed(ratio: f64) -> bool {
    (MEAN_RATIO_RANGE.0..=MEAN_RATIO_RANGE.1).contains(&ratio)
}

pub fn predicted_w_mean(p: &ModelParams, ic: &InitialCondition, t: f64) -> f64 {
    w_mean(p, ic, t)
}

/// Exact operator norm through the largest eigenvalue of `J^T J`.
pub fn operator_norm(j: &DMatrix<f64>) -> f64 {
    let g = j.tr_mul(j);
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NormReport {
    pub n: usize,
    pub threshold: f64,
    pub norms: Vec<f64>,
    pub violations: usize,
}

impl NormReport {
    pub fn fraction(&self) -> f64 {
        self.violations as f64 / self.norms.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.fraction() <= NORM_TAIL_FRACTION
    }
}

/// Fraction of trials with `|J| > 2L + margin`.
pub fn norm_ensemble(p: &ModelParams, trials: u64, master_seed: u64, harness: &Harness) -> Result<NormReport> {
    let norms = harness.map(0..trials, |t| {
        let w = sample_projection(p, TrialSeed::new(master_seed, t));
        Ok(operator_norm(&w.coupling()))
    })?;
    let threshold = 2.0 * p.norm_bound() + NORM_MARGIN;
    let violations = norms.iter().filter(|&&v| v > threshold).count();
    Ok(NormReport {
        n: p.n,
        threshold,
        norms,
        violations,
    })
}

/// Spectra of `J`, `J + aM` and of the unprojected draw.
pub fn spectrum_run(p: &ModelParams, seed: TrialSeed, with_unconstrained: bool) -> Result<SpectrumReport> {
    let w = sample_projection(p, seed);
    let v = with_unconstrained.then(|| sample_unconstrained(p, seed));
    spectrum_diag(&w, &assemble_rank_one(p), v.as_ref())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OracleConsistency {
    /// Largest relative gap between the series and the Bessel form.
    pub series_vs_bessel: f64,
    /// `max_t |int int R0 - A t^2 - sigma_tilde(t)|`.
    pub double_integral_minus_at2: f64,
    /// `max_t |int int R0 - sigma_tilde(t)|`.
    pub double_integral: f64,
}

impl OracleConsistency {
    pub fn series_passed(&self) -> bool {
        self.series_vs_bessel <= SERIES_BESSEL_REL
    }

    pub fn double_integral_passed(&self) -> bool {
        self.double_integral_minus_at2 <= DOUBLE_INTEGRAL_TOL
    }
}

/// Compares the two routes to `sigma_tilde` on `t in (0, 10]`,
/// `sigma_* in [0.1, 4]`, and the double integral of `R0` on `t <= 3`.
pub fn oracle_consistency(a: f64) -> Result<OracleConsistency> {
    let mut series_vs_bessel: f64 = 0.0;
    for &s in &[0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
        let series = VarianceSeries::new(a, s)?;
        for k in 1..=100 {
            let t = 0.1 * k as f64;
            let (x, y) = (series.value(t)?, series.bessel_value(t));
            series_vs_bessel = series_vs_bessel.max(((x - y) / y).abs());
        }
    }
    let mut minus: f64 = 0.0;
    let mut plain: f64 = 0.0;
    for &s in &[0.5, 1.0, 2.0] {
        let series = VarianceSeries::new(a, s)?;
        for k in 1..=12 {
            let t = 0.25 * k as f64;
            let di = r0_double_integral(a, s, t, 40)?;
            let st = series.value(t)?;
            minus = minus.max((di - a * t * t - st).abs());
            plain = plain.max((di - st).abs());
        }
    }
    Ok(OracleConsistency {
        series_vs_bessel,
        double_integral_minus_at2: minus,
        double_integral: plain,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityRow {
    pub kappa: f64,
    pub t: f64,
    pub max_abs: f64,
    /// `a e^{-kappa t} w(t)`, the common shift of every coordinate.
    pub coherent: f64,
    /// `a e^{-kappa t} E w(t)`, which grows like `t sqrt(n)` when `c_I != c_E`.
    pub coherent_predicted: f64,
}

/// One free trajectory post-processed for each leak rate.
pub fn stability_sweep(
    p: &ModelParams,
    ic: &InitialCondition,
    kappas: &[f64],
    grid: &TimeGrid,
    seed: TrialSeed,
    opts: &IntegratorOptions,
) -> Result<Vec<StabilityRow>> {
    let (_, free) = simulate_trial(p, ic, grid, seed, opts)?;
    let w = free.w_values.clone().ok_or(Error::MissingW)?;
    let mut rows = Vec::new();
    for &kappa in kappas {
        let q = p.with_coupling(p.a, kappa)?;
        let full = full_solution(&free, &q)?;
        let states = full.full_states.as_ref().ok_or(Error::MissingW)?;
        for ((&t, x), &wk) in full.times.iter().zip(states).zip(&w) {
            let decay = (-kappa * t).exp();
            rows.push(StabilityRow {
                kappa,
                t,
                max_abs: x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                coherent: q.a * decay * wk,
                coherent_predicted: q.a * decay * w_mean(p, ic, t),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::NoiseLaw;

    fn harness() -> Harness {
        Harness::new(Some(2)).unwrap()
    }

    #[test]
    fn moments_standard_error() {
        let mut m = Moments::new(1);
        for x in [1.0, -1.0, 1.0, -1.0] {
            m.add(&[x]);
        }
        assert_eq!(m.mean(0), 0.0);
        assert!((m.se(0) - (4.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert_eq!(z_score(1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn small_covariance_suite_passes() {
        let p = ModelParams::new(8, 0.4, 2.0, 1.0, 0.0, 0.0).unwrap();
        let r = row_covariance_suite(&p, 20_000, 3, &harness()).unwrap();
        assert_eq!(r.checks.len(), 36);
        assert!(r.passed(), "max z {}", r.max_abs_z());
    }

    #[test]
    fn small_route_and_rotation_suites_pass() {
        let p = ModelParams::new(6, 0.5, 2.0, 1.0, 0.0, 0.0).unwrap();
        let r = route_equivalence(&p, 8_000, 5, &harness()).unwrap();
        assert!(r.passed(), "max z {}", r.max_abs_z());
        assert!(r.max_row_sum < 1e-12);
        let rot = rotated_variance_suite(&p, 8_000, 5, &harness()).unwrap();
        assert!(rot.passed());
        let kinds: Vec<RotatedColumn> = rot.columns.iter().map(|c| c.0).collect();
        assert_eq!(kinds[..3], [RotatedColumn::Ones, RotatedColumn::Mean, RotatedColumn::Inhibitory]);
        assert_eq!(kinds[5], RotatedColumn::Excitatory);
    }

    #[test]
    fn ensemble_is_deterministic_across_pool_sizes() {
        let p = ModelParams::new(40, 0.5, 2.0, 1.0, 1.0, 0.0).unwrap();
        let ic = InitialCondition::homogeneous(1.0, -1.0, NoiseLaw::gaussian(0.25).unwrap()).unwrap();
        let grid = grid_with_zero(&[0.5]).unwrap();
        let run = |h: &Harness| {
            run_ensemble(&p, &ic, &grid, 6, |t| TrialSeed::new(1, t), Complex64::i(), &IntegratorOptions::default(), h)
                .unwrap()
        };
        assert_eq!(run(&Harness::new(Some(1)).unwrap()), run(&Harness::new(Some(3)).unwrap()));
    }

    #[test]
    fn cdf_degenerate_configurations() {
        let p = ModelParams::new(200, 0.5, 2.0, 1.0, 1.0, 0.0).unwrap();
        let still = InitialCondition::homogeneous(0.5, 0.5, NoiseLaw::gaussian(0.0).unwrap()).unwrap();
        let r = single_realization_cdf(&p, &still, &[0.5, 1.0], TrialSeed::new(0, 0), &IntegratorOptions::default(), 11).unwrap();
        for s in &r.snapshots {
            assert_eq!(s.spread, 0.0);
            assert!(s.var_i < 1e-20 && s.var_e < 1e-20);
        }
        assert_eq!(r.cdf_rows.len(), 22);
    }

    #[test]
    fn stability_rows_cover_every_kappa() {
        let p = ModelParams::new(50, 0.5, 1.0, 1.0, 1.0, 0.0).unwrap();
        let ic = InitialCondition::homogeneous(0.0, 1.0, NoiseLaw::point_mass()).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let rows = stability_sweep(&p, &ic, &[0.0, 1.0], &grid, TrialSeed::new(2, 0), &IntegratorOptions::default()).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].max_abs, 1.0);
        // e^{-kappa t} scales the coherent part
        assert!((rows[9].coherent - rows[4].coherent * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_matches_svd() {
        let p = ModelParams::new(30, 0.5, 2.0, 1.0, 0.0, 0.0).unwrap();
        let j = sample_projection(&p, TrialSeed::new(0, 1)).coupling();
        let svd = j.singular_values().max();
        assert!((operator_norm(&j) - svd).abs() < 1e-10);
    }
}
