//! Streaming factorization mechanisms for private continual counting.
//!
//! The square-root factorization `A = B·B` of the (weight-decay / momentum)
//! counting matrix gives near-optimal error but needs linear memory to stream.
//! This crate replaces the left factor with a *binned* approximation `L̂`,
//! constant on a small number of column intervals per row, so that `L̂z` can be
//! emitted online with one buffer cell per interval. The right factor is
//! recomputed exactly as `R̂ = L̂⁻¹A`, so the mechanism stays unbiased.
//!
//! Module map:
//!
//! * [`kernels`]: closed-form subdiagonals of `A_{α,β}`, its square root and
//!   the inverse square root.
//! * [`matrix`]: dense lower-triangular matrices, forward substitution, norms.
//! * [`binning`]: intervals, partitions, binnings and the greedy binning scan.
//! * [`binned`]: the endpoint-average approximation and its streaming evaluator.
//! * [`factorization`]: exact error / sensitivity reports and parameter choice.
//! * [`mechanism`]: the Gaussian streaming counter.
//! * [`verify`]: runnable invariant suites shared by tests and the CLI.
//!
//! Row and column indices of intervals and row accessors are 1-based, matching
//! the usual matrix notation; dense matrix storage is indexed 0-based.

pub mod binned;
pub mod binning;
pub mod error;
pub mod factorization;
pub mod kernels;
pub mod matrix;
pub mod mechanism;
pub mod verify;

pub use binned::{BinnedMatrixView, StreamState, StreamingEvaluator};
pub use binning::{
    build_binning, is_mrm, next_partition, verify_binning, Binning, BinningParams, BinningStream,
    Interval, Partition, RowSource,
};
pub use error::{Error, Result};
pub use factorization::{
    binary_mechanism_factorization, error_ratios, max_se, mean_se, right_factor, theorem_params,
    verify_perturbation, BinnedFactorization, FactorizationReport, KappaMode, SqrtFactorization,
};
pub use kernels::{gamma, gamma_prime, ToeplitzRows, ToeplitzSpec};
pub use matrix::{condition_upper_bound, toeplitz_opnorm_bound, LowerTriangularMatrix};
pub use mechanism::{
    gaussian_constant, run_private_counter, CounterOutput, NoiseSource, PrivacyParams,
    PrivateCounter,
};
