//! Matrix Chernoff bounds for time-inhomogeneous Markov chains.
//!
//! The crate computes the contraction constants of a chain (Ollivier curvature,
//! one-step L² contraction), evaluates the resulting tail bounds for sums of
//! Hermitian-valued observables, and checks them against Monte Carlo estimates
//! and exact enumeration on small instances. The [`elo`] module holds a dynamic
//! Bradley-Terry-Luce rating world used as an application.
//!
//! With the default `parallel` feature, Monte Carlo loops run on a rayon pool;
//! without it every [`Exec`] runs sequentially. Both produce identical results
//! because every trajectory draws from its own counter-based stream.

pub mod bounds;
pub mod chain;
pub mod elo;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod mc;
pub mod models;
pub mod rng;
pub mod spectral;
pub mod summary;
pub mod transport;

pub use bounds::{BoundKind, BoundParams, TailBound};
pub use chain::{FiniteKernel, FiniteMarkovModel, FiniteMetricSpace, KernelSequence, ObservableSequence, Trajectory};
pub use error::{LabError, Result};
pub use exec::Exec;
pub use linalg::{ComplexMatrix, HermitianMatrix};
pub use rng::StreamKey;
pub use summary::ChainSummary;
