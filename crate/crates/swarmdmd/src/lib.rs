//! Data-driven identification of swarm interaction laws.
//!
//! The crate simulates Vicsek-family swarms, assembles snapshot matrices of
//! observed and derived quantities, fits a linear interaction matrix by
//! rank-truncated SVD regression, propagates the learned model forward in
//! time, and scores the result with collective-motion metrics.
//!
//! Everything here is pure computation over owned values; file formats and
//! the experiment runner live in the companion `swarmdmd-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation deliberately writes `!(x > 0.0)` so NaN fails the check too;
// snapshot assembly walks several parallel arrays by index in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

/// Re-exported so downstream crates use the exact same linear-algebra types.
pub use nalgebra;

pub mod angle;
pub mod dmd;
pub mod error;
pub mod metrics;
pub mod observables;
pub mod rollout;
pub mod trajectory;
pub mod vicsek;

pub use dmd::{estimate_k, Dynamics, InteractionModel, RankSpec};
pub use error::CoreError;
pub use metrics::{
    angular_momentum, angular_momentum_series, heading_error, neighbor_density, polarisation,
    polarisation_series, position_error, summarize, Centering, DensityGrid, GridFrame, GridSpec,
    MetricKind, MetricSeries, Summary, TimeBelow,
};
pub use observables::{
    assemble_matrices, assemble_matrices_with, FeatureKind, FeatureLayout, SnapshotMatrices,
    VelocityEstimator,
};
pub use rollout::{
    reconstruct_and_predict, reconstruct_window, rollout_fo_cartesian, rollout_fo_polar,
    rollout_standard, rollout_with_reinit, PropagatedTrajectory, RolloutResult,
};
pub use trajectory::{AgentState, SwarmParams, SwarmSnapshot, SwarmTrajectory};
pub use vicsek::{simulate, SimDomain, VicsekVariant};

/// Crate version, re-exported so downstream manifests can record it.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
