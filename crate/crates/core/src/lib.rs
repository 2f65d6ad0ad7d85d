//! Maximum-likelihood community detection on Gaussian mixture models whose
//! noise entries are correlated.
//!
//! The observation is a `p × n` matrix `K = A_y + W`, where `A_y` is the
//! signal determined by the hidden community assignment `y` and `W` is a
//! centered Gaussian matrix with an arbitrary (possibly singular) covariance
//! `Σ` over all `pn` entries. The estimator minimizes the Mahalanobis-type
//! residual against the Moore-Penrose inverse `Σ†` by exhaustive enumeration.
//!
//! Modules:
//!
//! * [`assignment`]: community assignments, confusion tables, equivalence
//!   classes, the `B`/`B_ε` table sets and the one-vertex-at-a-time path.
//! * [`linalg`]: symmetric eigendecomposition, pseudo-determinant,
//!   Moore-Penrose inverse and PSD square root.
//! * [`model`]: the generic dependent Gaussian mixture model.
//! * [`mle`]: objectives and exact enumeration solvers.
//! * [`vertexsum`]: the two-community model whose edge noise is the sum of
//!   i.i.d. vertex noises, with all of its closed forms.
//! * [`bounds`]: `η` statistics, their covariance, and maxima of dependent
//!   Gaussians.
//! * [`experiments`]: Monte Carlo recovery experiments and CSV output.
//! * [`verify`]: the self-check suite behind `dgmm verify`.

pub mod assignment;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mle;
pub mod model;
pub mod rng;
pub mod verify;
pub mod vertexsum;

pub use assignment::{CommunityAssignment, ConfusionTable, Permutation};
pub use error::{Error, Result};
pub use linalg::{EigenFactorization, SymMatrix};
pub use mle::{MleResult, SolverOptions};
pub use model::{ModelSpec, ObservationMatrix, SignalModel, Theta};
pub use vertexsum::VertexSumSpec;
