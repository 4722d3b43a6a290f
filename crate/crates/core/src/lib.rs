//! Model, simulation and inversion toolkit for a fiber-loop photon-counting
//! detector: a pulse trapped in a storage loop leaks a small fraction of its
//! intensity to a single Geiger-mode avalanche photodiode on every roundtrip,
//! and the total number of clicks is recorded.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`]: truncated bivariate power series in the count variable `z`
//!   and the intensity `I`.
//! - [`response`]: detector parameters, exact count statistics, the Poisson
//!   limit and the conditional response matrix `w(k|n)`.
//! - [`simulator`]: seeded, parallel Monte Carlo count histograms.
//! - [`reconstruction`]: truncated-SVD inversion with propagated errors and
//!   conditioning diagnostics.
//! - [`metrics`]: single-shot confidence and coupler optimisation.

pub mod error;
pub mod metrics;
pub mod reconstruction;
pub mod response;
pub mod series;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use metrics::{confidence, optimize_coupling, CouplingOptimum, LossPolicy};
pub use reconstruction::{
    condition_diagnostics, estimate_errors, reconstruct_probabilities, reconstruct_svd,
    ConditioningReport, PseudoInverse, ReconstructionResult, DEFAULT_SV_THRESHOLD,
};
pub use response::{
    click_probability, count_distribution_coherent, count_distribution_mixture,
    effective_efficiency, forward_counts, generating_function, poisson_approximation, poisson_pmf,
    poisson_tail_mass, response_matrix, response_matrix_bruteforce, CountDistribution,
    DetectorParams, PhotonNumberDistribution, ResponseMatrix,
};
pub use series::BivariateSeries;
pub use simulator::{
    params_digest, simulate_coherent, simulate_distribution, simulate_fock, simulate_mixture,
    CountHistogram, SimOptions,
};
