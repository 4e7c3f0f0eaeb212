//! Error type shared by the core operations.

use alloc::string::String;
use thiserror::Error;

/// Errors produced by simulation, assembly, estimation, and scoring.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("trajectory needs at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("target dt {target_dt} is not an integer refinement of dt {dt}")]
    NonIntegerRefinement { dt: f64, target_dt: f64 },

    #[error("cannot subsample {requested} agents from a swarm of {available}")]
    SubsampleTooLarge { requested: usize, available: usize },

    #[error("duration {duration} is not an integer multiple of dt {dt}")]
    DurationNotMultiple { duration: f64, dt: f64 },

    #[error("feature layout is for {layout_agents} agents but trajectory has {trajectory_agents}")]
    LayoutAgentMismatch {
        layout_agents: usize,
        trajectory_agents: usize,
    },

    #[error("invalid feature layout: {0}")]
    InvalidLayout(String),

    #[error("rank-deficient input")]
    RankDeficient,

    #[error("requested rank {requested} exceeds max rank {max}")]
    RankTooLarge { requested: usize, max: usize },

    #[error("no observable signal: control matrix Y is numerically zero")]
    NoObservableSignal,

    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("influence row {row} disagrees with fitted K (relative error {rel_err:e})")]
    InfluenceInconsistency { row: usize, rel_err: f64 },

    #[error("model dynamics {model:?} do not match requested rollout {requested:?}")]
    DynamicsMismatch { model: String, requested: String },

    #[error("trajectories are misaligned: {0}")]
    MisalignedTrajectories(String),

    #[error("ground truth too short for re-initialisation schedule")]
    GroundTruthTooShort,

    #[error("metric series is empty over the requested range")]
    EmptySeries,
}
