//! Derived observables (velocity, heading, pairwise relative quantities)
//! and assembly of the snapshot matrices `X`, `X'`, `S = X' - X`, and the
//! augmented control matrix `Y`.
//!
//! Block layout: the augmented vector concatenates one block per feature
//! kind; within a block, scalar components are grouped across all agents
//! first (all x-entries for agents `0..N`, then all y-entries, ...), so the
//! row of component `c` of agent `i` inside its block is `c * N + i`.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::angle::angle_diff;
use crate::error::CoreError;
use crate::trajectory::SwarmTrajectory;

/// One kind of per-agent feature block in the augmented vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Agent position, 2 scalars per agent.
    Position,
    /// Finite-difference velocity, 2 scalars per agent.
    Velocity,
    /// Motion direction derived from velocity, 1 scalar per agent.
    Heading,
    /// Componentwise relative position against every agent, 2N scalars.
    RelPosition,
    /// Euclidean distance to every agent, N scalars.
    RelDistance,
    /// Wrapped absolute heading difference to every agent, N scalars.
    RelHeading,
    /// Componentwise relative velocity against every agent, 2N scalars.
    RelVelocity,
    /// Absolute speed difference to every agent, N scalars.
    RelSpeed,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 8] = [
        FeatureKind::Position,
        FeatureKind::Velocity,
        FeatureKind::Heading,
        FeatureKind::RelPosition,
        FeatureKind::RelDistance,
        FeatureKind::RelHeading,
        FeatureKind::RelVelocity,
        FeatureKind::RelSpeed,
    ];

    /// Number of scalars this kind contributes per agent.
    pub fn per_agent_width(&self, n_agents: usize) -> usize {
        match self {
            FeatureKind::Position | FeatureKind::Velocity => 2,
            FeatureKind::Heading => 1,
            FeatureKind::RelPosition | FeatureKind::RelVelocity => 2 * n_agents,
            FeatureKind::RelDistance | FeatureKind::RelHeading | FeatureKind::RelSpeed => n_agents,
        }
    }

    pub fn is_pairwise(&self) -> bool {
        matches!(
            self,
            FeatureKind::RelPosition
                | FeatureKind::RelDistance
                | FeatureKind::RelHeading
                | FeatureKind::RelVelocity
                | FeatureKind::RelSpeed
        )
    }

    /// Canonical name used in configs and the model file format.
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Position => "position",
            FeatureKind::Velocity => "velocity",
            FeatureKind::Heading => "heading",
            FeatureKind::RelPosition => "rel_position",
            FeatureKind::RelDistance => "rel_distance",
            FeatureKind::RelHeading => "rel_heading",
            FeatureKind::RelVelocity => "rel_velocity",
            FeatureKind::RelSpeed => "rel_speed",
        }
    }
}

impl core::str::FromStr for FeatureKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CoreError::InvalidLayout(format!("unknown feature kind {s:?}")))
    }
}

/// Ordered description of which feature blocks compose the augmented
/// vector and where each block sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    kinds: Vec<FeatureKind>,
    n_agents: usize,
    signed_relatives: bool,
}

impl FeatureLayout {
    /// Builds a layout; kinds must be non-empty and free of duplicates.
    pub fn new(kinds: Vec<FeatureKind>, n_agents: usize) -> Result<Self, CoreError> {
        if n_agents == 0 {
            return Err(CoreError::InvalidLayout(
                "layout requires at least one agent".to_string(),
            ));
        }
        if kinds.is_empty() {
            return Err(CoreError::InvalidLayout(
                "layout requires at least one feature kind".to_string(),
            ));
        }
        for (i, kind) in kinds.iter().enumerate() {
            if kinds[..i].contains(kind) {
                return Err(CoreError::InvalidLayout(format!(
                    "duplicate feature kind {:?}",
                    kind.as_str()
                )));
            }
        }
        Ok(Self {
            kinds,
            n_agents,
            signed_relatives: false,
        })
    }

    /// Switches rel_position / rel_velocity from the default componentwise
    /// absolute value to signed differences.
    pub fn with_signed_relatives(mut self, signed: bool) -> Self {
        self.signed_relatives = signed;
        self
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn signed_relatives(&self) -> bool {
        self.signed_relatives
    }

    /// Total number of rows of the augmented vector.
    pub fn total_width(&self) -> usize {
        self.kinds
            .iter()
            .map(|k| self.n_agents * k.per_agent_width(self.n_agents))
            .sum()
    }

    /// Contiguous row range occupied by `kind`, if present.
    pub fn block_range(&self, kind: FeatureKind) -> Option<Range<usize>> {
        let mut start = 0;
        for k in &self.kinds {
            let width = self.n_agents * k.per_agent_width(self.n_agents);
            if *k == kind {
                return Some(start..start + width);
            }
            start += width;
        }
        None
    }

    /// Absolute row of component `c` of agent `i` within `kind`'s block.
    pub fn row_of(&self, kind: FeatureKind, component: usize, agent: usize) -> Option<usize> {
        if component >= kind.per_agent_width(self.n_agents) || agent >= self.n_agents {
            return None;
        }
        self.block_range(kind)
            .map(|range| range.start + component * self.n_agents + agent)
    }
}

/// Snapshot matrices over a trajectory window of `T` snapshots: states `X`
/// and `X'` (stacked positions, `2N` rows), displacements `S = X' - X`, and
/// the augmented control matrix `Y`, all with `T - 1` columns. Column `k`
/// of `X` and of `Y` is built from snapshot `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrices {
    pub x: DMatrix<f64>,
    pub x_next: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub layout: FeatureLayout,
    pub dt: f64,
}

/// Forward-difference velocities per snapshot: `v_k = (p_{k+1} - p_k) / dt`
/// for `k < T - 1`, with the final snapshot holding the previous value.
pub fn velocity_from_positions(
    traj: &SwarmTrajectory,
) -> Result<Vec<Vec<Vector2<f64>>>, CoreError> {
    let t = traj.len();
    if t < 2 {
        return Err(CoreError::TooFewSnapshots { needed: 2, got: t });
    }
    let dt = traj.dt();
    let mut velocities: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(t);
    for k in 0..t - 1 {
        let a = traj.snapshot(k);
        let b = traj.snapshot(k + 1);
        velocities.push(
            a.agents
                .iter()
                .zip(&b.agents)
                .map(|(p, q)| (q.position - p.position) / dt)
                .collect(),
        );
    }
    velocities.push(velocities[t - 2].clone());
    Ok(velocities)
}

/// Backward-difference velocities per snapshot: `v_k = (p_k - p_{k-1}) / dt`
/// for `k >= 1`, with the first snapshot falling back to the forward
/// difference. This is the causal estimator — it only looks at positions
/// already seen — and it is what the first-order formulations assemble
/// their features and drift from, both when fitting and when propagating:
/// with the forward estimator their drift would already equal the whole
/// displacement and the interaction term would have nothing left to learn.
pub fn backward_velocity_from_positions(
    traj: &SwarmTrajectory,
) -> Result<Vec<Vec<Vector2<f64>>>, CoreError> {
    let t = traj.len();
    if t < 2 {
        return Err(CoreError::TooFewSnapshots { needed: 2, got: t });
    }
    let dt = traj.dt();
    let mut velocities: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(t);
    for k in 1..t {
        let a = traj.snapshot(k - 1);
        let b = traj.snapshot(k);
        velocities.push(
            a.agents
                .iter()
                .zip(&b.agents)
                .map(|(p, q)| (q.position - p.position) / dt)
                .collect(),
        );
    }
    velocities.insert(0, velocities[0].clone());
    Ok(velocities)
}

/// Direction of a velocity vector; the zero vector maps to heading 0.
pub fn heading_from_velocity(v: &Vector2<f64>) -> f64 {
    if v.x == 0.0 && v.y == 0.0 {
        return 0.0;
    }
    v.y.atan2(v.x)
}

/// Pairwise feature blocks for one snapshot: for each agent `i`, an ordered
/// block over partners `j = 0..N` (components grouped first, as in the
/// augmented layout); the self-pair entries are structural zeros.
pub fn pairwise_features(
    positions: &[Vector2<f64>],
    velocities: &[Vector2<f64>],
    kind: FeatureKind,
    signed: bool,
) -> Result<Vec<Vec<f64>>, CoreError> {
    if !kind.is_pairwise() {
        return Err(CoreError::InvalidLayout(format!(
            "{:?} is not a pairwise feature kind",
            kind.as_str()
        )));
    }
    let n = positions.len();
    let width = kind.per_agent_width(n);
    let headings: Vec<f64> = match kind {
        FeatureKind::RelHeading => velocities.iter().map(heading_from_velocity).collect(),
        _ => Vec::new(),
    };
    let speeds: Vec<f64> = match kind {
        FeatureKind::RelSpeed => velocities.iter().map(|v| v.norm()).collect(),
        _ => Vec::new(),
    };
    let sign = |value: f64| if signed { value } else { value.abs() };
    let mut blocks = vec![vec![0.0; width]; n];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            match kind {
                FeatureKind::RelPosition => {
                    blocks[i][j] = sign(positions[i].x - positions[j].x);
                    blocks[i][n + j] = sign(positions[i].y - positions[j].y);
                }
                FeatureKind::RelDistance => {
                    blocks[i][j] = (positions[i] - positions[j]).norm();
                }
                FeatureKind::RelHeading => {
                    blocks[i][j] = angle_diff(headings[i], headings[j]).abs();
                }
                FeatureKind::RelVelocity => {
                    blocks[i][j] = sign(velocities[i].x - velocities[j].x);
                    blocks[i][n + j] = sign(velocities[i].y - velocities[j].y);
                }
                FeatureKind::RelSpeed => {
                    blocks[i][j] = (speeds[i] - speeds[j]).abs();
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(blocks)
}

/// Assembles one augmented column from per-agent positions and velocities.
/// This single code path serves both training-matrix assembly and rollout
/// feature reconstruction, so the two stay bit-consistent.
pub fn assemble_y_column(
    positions: &[Vector2<f64>],
    velocities: &[Vector2<f64>],
    layout: &FeatureLayout,
) -> Result<DVector<f64>, CoreError> {
    let n = layout.n_agents();
    if positions.len() != n || velocities.len() != n {
        return Err(CoreError::LayoutAgentMismatch {
            layout_agents: n,
            trajectory_agents: positions.len(),
        });
    }
    let mut y = DVector::zeros(layout.total_width());
    let mut offset = 0;
    for kind in layout.kinds() {
        let width = kind.per_agent_width(n);
        match kind {
            FeatureKind::Position => {
                for i in 0..n {
                    y[offset + i] = positions[i].x;
                    y[offset + n + i] = positions[i].y;
                }
            }
            FeatureKind::Velocity => {
                for i in 0..n {
                    y[offset + i] = velocities[i].x;
                    y[offset + n + i] = velocities[i].y;
                }
            }
            FeatureKind::Heading => {
                for i in 0..n {
                    y[offset + i] = heading_from_velocity(&velocities[i]);
                }
            }
            pairwise => {
                let blocks =
                    pairwise_features(positions, velocities, *pairwise, layout.signed_relatives())?;
                for (i, block) in blocks.iter().enumerate() {
                    for (c, value) in block.iter().enumerate() {
                        y[offset + c * n + i] = *value;
                    }
                }
            }
        }
        offset += n * width;
    }
    Ok(y)
}

/// Stacks a snapshot's positions into a `2N` state vector (all x-components
/// across agents, then all y-components).
pub fn stack_positions(positions: &[Vector2<f64>]) -> DVector<f64> {
    let n = positions.len();
    let mut x = DVector::zeros(2 * n);
    for (i, p) in positions.iter().enumerate() {
        x[i] = p.x;
        x[n + i] = p.y;
    }
    x
}

/// Inverse of [`stack_positions`].
pub fn unstack_positions(x: &DVector<f64>) -> Vec<Vector2<f64>> {
    let n = x.len() / 2;
    (0..n).map(|i| Vector2::new(x[i], x[n + i])).collect()
}

/// Which position-difference scheme derives velocities for feature
/// assembly. `Forward` pairs each snapshot with the displacement the model
/// must predict there; `Backward` is the causal estimate used by the
/// first-order formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityEstimator {
    #[default]
    Forward,
    Backward,
}

impl VelocityEstimator {
    pub fn velocities(&self, traj: &SwarmTrajectory) -> Result<Vec<Vec<Vector2<f64>>>, CoreError> {
        match self {
            VelocityEstimator::Forward => velocity_from_positions(traj),
            VelocityEstimator::Backward => backward_velocity_from_positions(traj),
        }
    }
}

/// Builds the full snapshot-matrix set over a trajectory window. Requires
/// at least 3 snapshots (one velocity estimate plus one transition).
pub fn assemble_matrices(
    traj: &SwarmTrajectory,
    layout: &FeatureLayout,
) -> Result<SnapshotMatrices, CoreError> {
    assemble_matrices_with(traj, layout, VelocityEstimator::Forward)
}

/// `assemble_matrices` with an explicit velocity estimator.
pub fn assemble_matrices_with(
    traj: &SwarmTrajectory,
    layout: &FeatureLayout,
    estimator: VelocityEstimator,
) -> Result<SnapshotMatrices, CoreError> {
    let t = traj.len();
    if t < 3 {
        return Err(CoreError::TooFewSnapshots { needed: 3, got: t });
    }
    let n = traj.agent_count();
    if layout.n_agents() != n {
        return Err(CoreError::LayoutAgentMismatch {
            layout_agents: layout.n_agents(),
            trajectory_agents: n,
        });
    }
    let velocities = estimator.velocities(traj)?;
    let cols = t - 1;
    let mut x = DMatrix::zeros(2 * n, cols);
    let mut x_next = DMatrix::zeros(2 * n, cols);
    let mut y = DMatrix::zeros(layout.total_width(), cols);
    for k in 0..cols {
        let positions = traj.snapshot(k).positions();
        x.set_column(k, &stack_positions(&positions));
        x_next.set_column(k, &stack_positions(&traj.snapshot(k + 1).positions()));
        y.set_column(k, &assemble_y_column(&positions, &velocities[k], layout)?);
    }
    let s = &x_next - &x;
    Ok(SnapshotMatrices {
        x,
        x_next,
        s,
        y,
        layout: layout.clone(),
        dt: traj.dt(),
    })
}
