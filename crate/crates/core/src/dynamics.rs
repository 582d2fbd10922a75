//! Integration of the free flow `x' = J x` and assembly of the full solution.
//!
//! The leak `-kappa x` and the rank-one part `a M` never enter the
//! integrator. Because `M^2 = 0` and `J M = 0`, the full flow is
//! `e^{-kappa t} (e^{tJ} x0 + a w(t) u)` with `w(t) = int_0^t (e^{sJ} x0, m) ds`,
//! so a single free trajectory plus the running integral `w` gives the
//! solution for every `(kappa, a)`.
//!
//! The integrator is classical RK4 with a fixed step. Each output interval
//! is split into an even number of equal substeps so `w` can be accumulated
//! with composite Simpson on the substep nodes.

use std::io::Write;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::io::{Cell, CsvWriter};
use crate::matrix::{ConstrainedMatrix, RankOnePart};
use crate::params::ModelParams;
use crate::rng::{stream, TrialSeed, LANE_AUX};

/// A linear map on `R^n` given by its action.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], out: &mut [f64]);
}

/// Dense matrix operator, column-major.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    /// `J = n^{-1/2} W`.
    pub fn coupling(w: &ConstrainedMatrix) -> Self {
        Self {
            matrix: w.coupling(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let xv = DVectorView::from_slice(x, n);
        let mut ov = DVectorViewMut::from_slice(out, n);
        ov.gemv(1.0, &self.matrix, &xv, 0.0);
    }

    fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let xv = DVectorView::from_slice(x, n);
        let mut ov = DVectorViewMut::from_slice(out, n);
        ov.gemv_tr(1.0, &self.matrix, &xv, 0.0);
    }
}

/// The full generator `x -> -kappa x + J x + a (m, x) u`.
///
/// Only used to integrate the full system directly, as a cross-check of
/// [`full_solution`].
pub struct ShiftedRankOne<'a, O: LinearOperator> {
    pub coupling: &'a O,
    pub kappa: f64,
    pub rank_one: &'a RankOnePart,
}

impl<O: LinearOperator> LinearOperator for ShiftedRankOne<'_, O> {
    fn dim(&self) -> usize {
        self.coupling.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.coupling.apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= self.kappa * xi;
        }
        self.rank_one.add_scaled_apply(x, out);
    }

    fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        // (a u m^T)^T x = a (u, x) m
        self.coupling.apply_transpose(x, out);
        let s = self.rank_one.a() * x.iter().sum::<f64>();
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(self.rank_one.m()) {
            *o += s * mi - self.kappa * xi;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Power iteration on `J^T J`; returns `|J v|` for the final unit vector,
/// which never exceeds the true operator norm.
pub fn estimate_operator_norm<O: LinearOperator + ?Sized>(op: &O, iterations: usize) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let mut rng = stream(0, 0, LANE_AUX);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut jv = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..iterations {
        op.apply(&v, &mut jv);
        op.apply_transpose(&jv, &mut z);
        let zn = norm(&z);
        if zn == 0.0 {
            return 0.0;
        }
        for (vi, zi) in v.iter_mut().zip(&z) {
            *vi = zi / zn;
        }
    }
    op.apply(&v, &mut jv);
    norm(&jv)
}

/// Output times `0 = t_0 < t_1 < ... < t_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(invalid("grid", "must start at t = 0"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneGrid);
        }
        Ok(Self { times })
    }

    /// `n_steps + 1` equally spaced points on `[0, t_max]`.
    pub fn uniform(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max > 0.0) || n_steps == 0 {
            return Err(invalid("grid", "need t_max > 0 and at least one step"));
        }
        let h = t_max / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * h).collect();
        times[n_steps] = t_max;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("grid is nonempty")
    }

    /// Index of an exact grid point.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(Error::OffGrid { time: t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Target relative error per unit time.
    pub tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub norm_iterations: usize,
    /// Rerun with half the step and refine until the two runs agree.
    pub verify: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_step: 0.01,
            min_step: 1e-7,
            norm_iterations: 30,
            verify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct IntegratorDiagnostics {
    pub norm_estimate: f64,
    pub step: f64,
    pub substeps: usize,
    /// Largest relative difference per unit time against the half-step run.
    pub halving_defect: Option<f64>,
    /// Output times where `|x(t)| > e^{t N} |x0|` with `N = 1.25 |J|_est`.
    pub growth_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub w_values: Option<Vec<f64>>,
    pub full_states: Option<Vec<Vec<f64>>>,
    pub diagnostics: IntegratorDiagnostics,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn state_at(&self, t: f64) -> Result<&[f64]> {
        let k = index_in(&self.times, t)?;
        Ok(&self.states[k])
    }

    /// Long-format CSV `t,i,x`.
    pub fn write_states_csv<W: Write>(&self, out: W) -> std::io::Result<W> {
        let mut csv = CsvWriter::new(out, &["t", "i", "x"])?;
        for (t, x) in self.times.iter().zip(&self.states) {
            for (i, v) in x.iter().enumerate() {
                csv.row(&[Cell::F(*t), Cell::U(i as u64), Cell::F(*v)])?;
            }
        }
        csv.finish()
    }

    pub fn write_w_csv<W: Write>(&self, out: W) -> std::io::Result<W> {
        let mut csv = CsvWriter::new(out, &["t", "w"])?;
        if let Some(w) = &self.w_values {
            for (t, v) in self.times.iter().zip(w) {
                csv.row(&[Cell::F(*t), Cell::F(*v)])?;
            }
        }
        csv.finish()
    }
}

pub(crate) fn index_in(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or(Error::OffGrid { time: t })
}

/// Global error per unit time of RK4 on a linear flow with `|J| <= N` is
/// bounded by `(hN)^5 / 120 * e^{hN} / h`.
fn rk4_error_bound(h: f64, n: f64) -> f64 {
    let z = h * n;
    z.powi(5) / 120.0 * z.exp() / h
}

fn choose_step(norm_estimate: f64, opts: &IntegratorOptions) -> Result<f64> {
    let mut h = if norm_estimate > 0.0 {
        opts.max_step.min(0.1 / norm_estimate)
    } else {
        opts.max_step
    };
    let bound_norm = 1.25 * norm_estimate;
    while rk4_error_bound(h, bound_norm) > opts.tol {
        h *= 0.5;
        if h < opts.min_step {
            return Err(Error::StepUnderflow { step: h });
        }
    }
    Ok(h)
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<O: LinearOperator + ?Sized>(&mut self, op: &O, x: &mut [f64], h: f64) {
        op.apply(x, &mut self.k1);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *t = xi + 0.5 * h * k;
        }
        op.apply(&self.tmp, &mut self.k2);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *t = xi + 0.5 * h * k;
        }
        op.apply(&self.tmp, &mut self.k3);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *t = xi + h * k;
        }
        op.apply(&self.tmp, &mut self.k4);
        let c = h / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += c * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Substeps for an interval of length `dt` with step at most `h`; always even.
fn substeps_for(dt: f64, h: f64) -> usize {
    let s = (dt / h).ceil().max(1.0) as usize;
    s + s % 2
}

fn integrate<O: LinearOperator + ?Sized>(
    op: &O,
    x0: &[f64],
    times: &[f64],
    m: Option<&[f64]>,
    h: f64,
) -> (Vec<Vec<f64>>, Option<Vec<f64>>, usize) {
    let n = x0.len();
    let mut ws = Rk4Workspace::new(n);
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(times.len());
    states.push(x.clone());
    let mut w = m.map(|_| vec![0.0]);
    let mut total = 0;
    for win in times.windows(2) {
        let dt = win[1] - win[0];
        let s = substeps_for(dt, h);
        let step = dt / s as f64;
        // composite Simpson weights 1, 4, 2, 4, ..., 4, 1
        let mut simpson = m.map_or(0.0, |m| dot(&x, m));
        for k in 1..=s {
            ws.step(op, &mut x, step);
            if let Some(m) = m {
                let g = dot(&x, m);
                simpson += if k == s {
                    g
                } else if k % 2 == 1 {
                    4.0 * g
                } else {
                    2.0 * g
                };
            }
        }
        total += s;
        if let Some(w) = w.as_mut() {
            let last = *w.last().expect("w starts at 0");
            w.push(last + simpson * step / 3.0);
        }
        states.push(x.clone());
    }
    (states, w, total)
}

fn max_relative_defect(coarse: &[Vec<f64>], fine: &[Vec<f64>], times: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for ((a, b), &t) in coarse.iter().zip(fine).zip(times).skip(1) {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = norm(b).max(f64::MIN_POSITIVE);
        worst = worst.max(diff / scale / t.max(1.0));
    }
    worst
}

/// Integrates `x' = J x` from `x0` and records `x` on the grid.
///
/// With `m` given, `w(t) = int_0^t (x(s), m) ds` is accumulated alongside.
pub fn propagate_free<O: LinearOperator + ?Sized>(
    op: &O,
    x0: &[f64],
    grid: &TimeGrid,
    m: Option<&[f64]>,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = op.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if let Some(m) = m {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.len(),
            });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let norm_estimate = estimate_operator_norm(op, opts.norm_iterations);
    let mut h = choose_step(norm_estimate, opts)?;
    let times = grid.times();
    let (mut states, mut w, mut substeps) = integrate(op, x0, times, m, h);
    let mut halving_defect = None;
    if opts.verify {
        loop {
            let half = 0.5 * h;
            if half < opts.min_step {
                return Err(Error::StepUnderflow { step: half });
            }
            let (fine, fine_w, fine_steps) = integrate(op, x0, times, m, half);
            let defect = max_relative_defect(&states, &fine, times);
            states = fine;
            w = fine_w;
            substeps = fine_steps;
            h = half;
            halving_defect = Some(defect);
            if defect <= opts.tol {
                break;
            }
        }
    }
    if states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { what: "trajectory" });
    }
    let x0_norm = norm(x0);
    let growth_violations = times
        .iter()
        .zip(&states)
        .filter(|(t, x)| norm(x) > (*t * 1.25 * norm_estimate).exp() * x0_norm * (1.0 + 1e-12))
        .count();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        w_values: w,
        full_states: None,
        diagnostics: IntegratorDiagnostics {
            norm_estimate,
            step: h,
            substeps,
            halving_defect,
            growth_violations,
        },
    })
}

/// Integral of `(x(s), m)` from the stored output states only.
///
/// Each interval is integrated exactly against the cubic through the four
/// nearest grid points (fewer near short grids), which is fourth order on
/// smooth integrands and handles uneven spacing.
pub fn accumulate_w(traj: &Trajectory, m: &[f64]) -> Result<Vec<f64>> {
    if traj.times.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: traj.times.len(),
        });
    }
    if traj.dim() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: traj.dim(),
            found: m.len(),
        });
    }
    let values: Vec<f64> = traj.states.iter().map(|x| dot(x, m)).collect();
    Ok(cumulative_integral(&traj.times, &values))
}

/// Running integral of tabulated values (see [`accumulate_w`]).
pub fn cumulative_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    let k = times.len();
    let mut out = vec![0.0; k];
    if k < 2 {
        return out;
    }
    // 3-point Gauss-Legendre is exact for cubics
    let gl = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    for i in 0..k - 1 {
        let lo = i.saturating_sub(1).min(k.saturating_sub(4));
        let hi = (lo + 4).min(k);
        let nodes = &times[lo..hi];
        let vals = &values[lo..hi];
        let (a, b) = (times[i], times[i + 1]);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (z, wt) in gl {
            let s = mid + half * z;
            // Lagrange interpolation
            let mut p = 0.0;
            for (j, (&tj, &vj)) in nodes.iter().zip(vals).enumerate() {
                let mut l = 1.0;
                for (q, &tq) in nodes.iter().enumerate() {
                    if q != j {
                        l *= (s - tq) / (tj - tq);
                    }
                }
                p += l * vj;
            }
            acc += wt * p;
        }
        out[i + 1] = out[i] + half * acc;
    }
    out
}

/// Fills `full_states[k] = e^{-kappa t_k} (states[k] + a w(t_k) u)`.
pub fn full_solution(traj: &Trajectory, p: &ModelParams) -> Result<Trajectory> {
    let w = traj.w_values.as_ref().ok_or(Error::MissingW)?;
    if traj.dim() != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: traj.dim(),
        });
    }
    let full = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(w)
        .map(|((&t, x), &wk)| {
            let decay = (-p.kappa * t).exp();
            let shift = p.a * wk;
            x.iter().map(|xi| decay * (xi + shift)).collect()
        })
        .collect();
    let mut out = traj.clone();
    out.full_states = Some(full);
    Ok(out)
}

/// Largest dimension accepted by the dense exponential oracle.
pub const DENSE_LIMIT: usize = 64;

fn check_dense(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() > DENSE_LIMIT {
        return Err(Error::DimensionTooLarge {
            limit: DENSE_LIMIT,
            found: m.nrows(),
        });
    }
    Ok(())
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Scales `tM` by `2^-s` so its 1-norm is at most 1/2.
fn scaling(m: &DMatrix<f64>, t: f64) -> Result<(u32, DMatrix<f64>)> {
    let x = m * t;
    let nrm = one_norm(&x);
    if !nrm.is_finite() {
        return Err(Error::Overflow { what: "matrix exponential" });
    }
    let s = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as u32 } else { 0 };
    if s > 60 {
        return Err(Error::Overflow { what: "matrix exponential" });
    }
    Ok((s, x / 2f64.powi(s as i32)))
}

/// Taylor terms until the tail bound `|X|^{k+1}/(k+1)! / (1 - |X|/(k+2))`
/// drops below `1e-17`.
fn taylor_terms(x_norm: f64) -> usize {
    let mut k = 1usize;
    let mut term = x_norm;
    loop {
        let next = term * x_norm / (k + 1) as f64;
        let tail = next / (1.0 - x_norm / (k + 2) as f64);
        if tail <= 1e-17 || k >= 40 {
            return k;
        }
        term = next;
        k += 1;
    }
}

/// `e^{tM}` for small dense matrices by scaling and squaring a truncated
/// Taylor series.
pub fn reference_expm_small(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    Ok(expm_with_integral(m, t)?.0)
}

/// `(e^{tM}, int_0^t e^{sM} ds)` for small dense matrices.
///
/// Both come from Taylor series at the scaled time and are doubled back
/// with `E(2r) = E(r)^2` and `P(2r) = (I + E(r)) P(r)`.
pub fn expm_with_integral(m: &DMatrix<f64>, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_dense(m)?;
    let n = m.nrows();
    let (s, x) = scaling(m, t)?;
    let tau = t / 2f64.powi(s as i32);
    let terms = taylor_terms(one_norm(&x));
    let id = DMatrix::<f64>::identity(n, n);
    // E = sum X^k / k!, P = tau * sum X^k / (k+1)!
    let mut e = id.clone();
    let mut p = id.clone();
    let mut power = id.clone();
    let mut fact = 1.0;
    for k in 1..=terms {
        power = &power * &x;
        fact *= k as f64;
        e += &power / fact;
        p += &power / (fact * (k + 1) as f64);
    }
    p *= tau;
    for _ in 0..s {
        p = (&id + &e) * &p;
        e = &e * &e;
    }
    Ok((e, p))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RankOneReport {
    /// `|M M x|_inf` for a random `x`.
    pub m_squared: f64,
    /// `|J M x|_inf`.
    pub j_after_m: f64,
    /// Largest entry of `e^{t(J + aM)} - e^{tJ} - a int_0^t M e^{sJ} ds`.
    pub exponential: f64,
}

impl RankOneReport {
    pub fn max_deviation(&self) -> f64 {
        self.m_squared.max(self.j_after_m).max(self.exponential)
    }
}

/// Checks `M^2 = 0`, `J M = 0` and the exponential identity for `J + aM`
/// against the dense oracle.
pub fn check_rank_one_identities(
    w: &ConstrainedMatrix,
    rank_one: &RankOnePart,
    t: f64,
    seed: TrialSeed,
) -> Result<RankOneReport> {
    let n = w.n();
    if rank_one.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rank_one.n(),
        });
    }
    let j = w.coupling();
    check_dense(&j)?;
    let mut rng = seed.aux();
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mx = rank_one.apply_m(&x);
    let mmx = rank_one.apply_m(&mx);
    let m_squared = mmx.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let op = DenseOperator { matrix: j.clone() };
    let mut jmx = vec![0.0; n];
    op.apply(&mx, &mut jmx);
    let j_after_m = jmx.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let m_row = nalgebra::RowDVector::from_row_slice(rank_one.m());
    let u_col = nalgebra::DVector::from_element(n, 1.0);
    let dense_m = &u_col * &m_row;
    let full = &j + &dense_m * rank_one.a();
    let lhs = reference_expm_small(&full, t)?;
    let (e, p) = expm_with_integral(&j, t)?;
    // M P = u (m^T P)
    let rhs = e + &u_col * (&m_row * &p) * rank_one.a();
    let exponential = (lhs - rhs).amax();
    Ok(RankOneReport {
        m_squared,
        j_after_m,
        exponential,
    })
}
