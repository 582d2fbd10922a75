//! Simulation and verification of linear dynamics on random networks with
//! an inhibitory and an excitatory block.
//!
//! The coupling is `J + aM` where `J = n^{-1/2} W`, the rows of `W` are
//! Gaussian with block column variances and sum to zero, and `M x = (m, x) u`
//! is a fixed rank-one mean part. The crate samples `W` by two routes,
//! integrates `x' = -kappa x + (J + aM) x`, and compares ensembles with the
//! closed-form large-`n` limits in [`theory`].

pub mod basis;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod params;
pub mod rng;
pub mod special;
pub mod stats;
pub mod theory;

pub use basis::{build_basis, BasisCache, OrthonormalBasis};
pub use dynamics::{
    full_solution, propagate_free, DenseOperator, IntegratorOptions, LinearOperator, TimeGrid, Trajectory,
};
pub use ensemble::Harness;
pub use error::{Error, Result};
pub use matrix::{assemble_rank_one, sample_projection, sample_via_basis, ConstrainedMatrix, RankOnePart, SamplingRoute};
pub use num_complex::Complex64;
pub use params::{Block, DerivedConstants, InitialCondition, ModelParams, NoiseKind, NoiseLaw};
pub use rng::TrialSeed;
pub use stats::{Cdf, EnsembleSummary};
pub use theory::{LimitCdf, NoiseWeights, VarianceSeries};
