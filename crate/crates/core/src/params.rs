//! Model constants and the scalars derived from them.
//!
//! The network has `n` units split into an inhibitory block (the first
//! `fn_count = floor(f n)` indices) and an excitatory block (the rest).
//! Sampler-side quantities use the integer split; limit-law quantities
//! (`amplitude_a`, [`ModelParams::limit_sigma_star`]) use the exact fraction
//! `f` so they carry no discretization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which block a coordinate (or column) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Inhibitory,
    Excitatory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub f: f64,
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub a: f64,
    pub kappa: f64,
    fn_count: usize,
}

impl ModelParams {
    pub fn new(n: usize, f: f64, sigma_i: f64, sigma_e: f64, a: f64, kappa: f64) -> Result<Self> {
        if !(f > 0.0 && f < 1.0) {
            return Err(invalid("f", format!("must lie in (0, 1), got {f}")));
        }
        if !(sigma_i > 0.0 && sigma_i.is_finite()) {
            return Err(invalid("sigma_i", format!("must be positive, got {sigma_i}")));
        }
        if !(sigma_e > 0.0 && sigma_e.is_finite()) {
            return Err(invalid("sigma_e", format!("must be positive, got {sigma_e}")));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be nonnegative, got {a}")));
        }
        if !kappa.is_finite() {
            return Err(invalid("kappa", "must be finite"));
        }
        let fn_count = (f * n as f64).floor() as usize;
        if fn_count == 0 || fn_count >= n {
            return Err(Error::DegenerateBlock { n, fn_count });
        }
        Ok(Self {
            n,
            f,
            sigma_i,
            sigma_e,
            a,
            kappa,
            fn_count,
        })
    }

    /// Same ensemble with a different network size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.f, self.sigma_i, self.sigma_e, self.a, self.kappa)
    }

    pub fn with_coupling(&self, a: f64, kappa: f64) -> Result<Self> {
        Self::new(self.n, self.f, self.sigma_i, self.sigma_e, a, kappa)
    }

    /// Size of the inhibitory block, `floor(f n)`.
    pub fn fn_count(&self) -> usize {
        self.fn_count
    }

    pub fn excitatory_count(&self) -> usize {
        self.n - self.fn_count
    }

    pub fn block_of(&self, index: usize) -> Block {
        if index < self.fn_count {
            Block::Inhibitory
        } else {
            Block::Excitatory
        }
    }

    /// Variance `sigma_j` attached to column `j`.
    pub fn column_variance(&self, j: usize) -> f64 {
        match self.block_of(j) {
            Block::Inhibitory => self.sigma_i,
            Block::Excitatory => self.sigma_e,
        }
    }

    pub fn column_variances(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.column_variance(j)).collect()
    }

    pub fn mu(&self) -> (f64, f64) {
        derive_mu(self.n, self.fn_count).expect("validated at construction")
    }

    /// Finite-n mean column variance `n^{-1} sum_j sigma_j`.
    pub fn sigma_star(&self) -> f64 {
        sigma_star(self)
    }

    /// Limit mean column variance `f sigma_I + (1 - f) sigma_E`.
    pub fn limit_sigma_star(&self) -> f64 {
        self.f * self.sigma_i + (1.0 - self.f) * self.sigma_e
    }

    pub fn norm_bound(&self) -> f64 {
        norm_bound_l(self)
    }

    pub fn derived(&self, ic: &InitialCondition) -> DerivedConstants {
        let (mu_i, mu_e) = self.mu();
        DerivedConstants {
            mu_i,
            mu_e,
            sigma_star: self.sigma_star(),
            l: self.norm_bound(),
            a: amplitude_a(self, ic),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub mu_i: f64,
    pub mu_e: f64,
    pub sigma_star: f64,
    pub l: f64,
    pub a: f64,
}

/// Block means of the vector `m` before the `n^{-1/2}` scaling.
///
/// They are the unique pair with `mu_I < 0 < mu_E` satisfying
/// `k mu_I + (n - k) mu_E = 0` and `k mu_I^2 + (n - k) mu_E^2 = n`.
pub fn derive_mu(n: usize, fn_count: usize) -> Result<(f64, f64)> {
    if fn_count == 0 || fn_count >= n {
        return Err(Error::DegenerateBlock { n, fn_count });
    }
    let k = fn_count as f64;
    let rest = (n - fn_count) as f64;
    Ok((-(rest / k).sqrt(), (k / rest).sqrt()))
}

pub fn sigma_star(p: &ModelParams) -> f64 {
    (p.fn_count as f64 * p.sigma_i + p.excitatory_count() as f64 * p.sigma_e) / p.n as f64
}

/// `L = max(sigma_I^{1/2}, sigma_E^{1/2})`.
pub fn norm_bound_l(p: &ModelParams) -> f64 {
    p.sigma_i.sqrt().max(p.sigma_e.sqrt())
}

/// Amplitude of the limiting variance series, evaluated with the exact
/// fraction `f`.
pub fn amplitude_a(p: &ModelParams, ic: &InitialCondition) -> f64 {
    let f = p.f;
    let s = p.limit_sigma_star();
    let dc = ic.c_i - ic.c_e;
    p.sigma_i * p.sigma_e * f * (1.0 - f) * dc * dc / s
        + (p.sigma_i * ic.noise_i.variance * f + p.sigma_e * ic.noise_e.variance * (1.0 - f))
}

/// Zero-mean noise families for the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on `[-b, b]` with `b = sqrt(3 variance)`.
    Uniform,
    /// `+-sqrt(variance)` with equal probability.
    Rademacher,
    /// Point mass at zero; variance must be zero.
    PointMass,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            "rademacher" => Ok(Self::Rademacher),
            "point-mass" | "pointmass" | "point_mass" => Ok(Self::PointMass),
            other => Err(invalid("noise", format!("unknown noise law `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Uniform => "uniform",
            Self::Rademacher => "rademacher",
            Self::PointMass => "point-mass",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLaw {
    pub kind: NoiseKind,
    pub variance: f64,
}

impl NoiseLaw {
    pub fn new(kind: NoiseKind, variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(invalid("sigma0", format!("must be nonnegative, got {variance}")));
        }
        if kind == NoiseKind::PointMass && variance != 0.0 {
            return Err(invalid("sigma0", "a point mass has zero variance"));
        }
        Ok(Self { kind, variance })
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, variance)
    }

    pub fn point_mass() -> Self {
        Self {
            kind: NoiseKind::PointMass,
            variance: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::PointMass => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z * self.variance.sqrt()
            }
            NoiseKind::Uniform => {
                let b = (3.0 * self.variance).sqrt();
                rng.random_range(-1.0..1.0) * b
            }
            NoiseKind::Rademacher => {
                let s = self.variance.sqrt();
                if rng.random::<bool>() {
                    s
                } else {
                    -s
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub c_i: f64,
    pub c_e: f64,
    pub noise_i: NoiseLaw,
    pub noise_e: NoiseLaw,
}

impl InitialCondition {
    pub fn new(c_i: f64, c_e: f64, noise_i: NoiseLaw, noise_e: NoiseLaw) -> Result<Self> {
        if !c_i.is_finite() || !c_e.is_finite() {
            return Err(invalid("c", "offsets must be finite"));
        }
        Ok(Self {
            c_i,
            c_e,
            noise_i,
            noise_e,
        })
    }

    /// Same noise law (and variance) in both blocks.
    pub fn homogeneous(c_i: f64, c_e: f64, noise: NoiseLaw) -> Result<Self> {
        Self::new(c_i, c_e, noise, noise)
    }

    pub fn offset(&self, block: Block) -> f64 {
        match block {
            Block::Inhibitory => self.c_i,
            Block::Excitatory => self.c_e,
        }
    }

    pub fn noise(&self, block: Block) -> &NoiseLaw {
        match block {
            Block::Inhibitory => &self.noise_i,
            Block::Excitatory => &self.noise_e,
        }
    }

    pub fn equal_offsets(&self) -> bool {
        self.c_i == self.c_e
    }

    /// The deterministic part `c` of the initial state.
    pub fn offsets(&self, p: &ModelParams) -> Vec<f64> {
        (0..p.n).map(|i| self.offset(p.block_of(i))).collect()
    }

    /// Draws `x(0) = c + xi`.
    pub fn realize<R: Rng + ?Sized>(&self, p: &ModelParams, rng: &mut R) -> Vec<f64> {
        (0..p.n)
            .map(|i| {
                let block = p.block_of(i);
                self.offset(block) + self.noise(block).sample(rng)
            })
            .collect()
    }
}
