//! Trajectory containers, model parameters, validation, and the
//! preprocessing transforms (temporal interpolation, agent subsampling).

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::angle::{lerp_angle, wrap_angle};
use crate::error::CoreError;

/// Relative tolerance on the uniform time grid.
pub const TIME_GRID_RTOL: f64 = 1e-9;

/// One agent: planar position plus heading wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Vector2<f64>,
    pub heading: f64,
}

impl AgentState {
    /// Builds a state, wrapping the heading into `(-pi, pi]`.
    pub fn new(position: Vector2<f64>, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }
}

/// All agents at one instant. Agent identity is the index into `agents`,
/// fixed across every snapshot of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmSnapshot {
    pub time: f64,
    pub agents: Vec<AgentState>,
}

impl SwarmSnapshot {
    pub fn new(time: f64, agents: Vec<AgentState>) -> Self {
        Self { time, agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn positions(&self) -> Vec<Vector2<f64>> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn headings(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.heading).collect()
    }
}

/// Ground-truth model parameters, one column of the parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmParams {
    pub n_agents: usize,
    /// Simulation time step in seconds.
    pub dt: f64,
    /// Agents per unit area over the initialisation square.
    pub density: f64,
    pub interaction_radius: f64,
    /// Restricted field of view in radians; `None` means the full circle.
    pub field_of_view: Option<f64>,
    /// Maximum turn rate in rad/s; `None` means unbounded.
    pub max_turn_rate: Option<f64>,
    /// Uniform heading noise width in radians.
    pub noise: f64,
    /// Constant forward speed.
    pub speed: f64,
    pub seed: u64,
}

impl SwarmParams {
    /// Standard flocking column: N = 50, dt = 0.1 s, rho = 16, nu = 0.03.
    pub fn standard(interaction_radius: f64, noise: f64, seed: u64) -> Self {
        Self {
            n_agents: 50,
            dt: 0.1,
            density: 16.0,
            interaction_radius,
            field_of_view: None,
            max_turn_rate: None,
            noise,
            speed: 0.03,
            seed,
        }
    }

    /// Milling column: N = 1000, dt = 1 s, rho = 2.5, r = 1, phi = pi/2,
    /// omega = pi/18, eta = 0.5 omega/dt, nu = 1.03 r omega.
    pub fn milling(seed: u64) -> Self {
        let omega = PI / 18.0;
        let dt = 1.0;
        let r = 1.0;
        Self {
            n_agents: 1000,
            dt,
            density: 2.5,
            interaction_radius: r,
            field_of_view: Some(PI / 2.0),
            max_turn_rate: Some(omega),
            noise: 0.5 * omega / dt,
            speed: 1.03 * r * omega,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |msg: String| Err(CoreError::InvalidParams(msg));
        if self.n_agents == 0 {
            return bad("n_agents must be positive".to_string());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.density > 0.0) {
            return bad(format!("density must be positive, got {}", self.density));
        }
        if !(self.speed >= 0.0) {
            return bad(format!("speed must be non-negative, got {}", self.speed));
        }
        if !(self.interaction_radius >= 0.0) {
            return bad(format!(
                "interaction_radius must be non-negative, got {}",
                self.interaction_radius
            ));
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if let Some(fov) = self.field_of_view {
            if !(0.0..=2.0 * PI).contains(&fov) {
                return bad(format!("field_of_view must lie in [0, 2pi], got {fov}"));
            }
        }
        if let Some(omega) = self.max_turn_rate {
            if !(0.0..=PI / self.dt).contains(&omega) {
                return bad(format!("max_turn_rate must lie in [0, pi/dt], got {omega}"));
            }
        }
        Ok(())
    }

    /// Width of the initialisation square, from `rho = N / l^2`.
    pub fn init_width(&self) -> f64 {
        (self.n_agents as f64 / self.density).sqrt()
    }
}

/// A single violation found by [`SwarmTrajectory::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AgentCountMismatch {
        snapshot: usize,
        expected: usize,
        found: usize,
    },
    TimeGridViolation {
        snapshot: usize,
        expected: f64,
        found: f64,
    },
    NonFinitePosition {
        snapshot: usize,
        agent: usize,
    },
    HeadingOutOfRange {
        snapshot: usize,
        agent: usize,
        value: f64,
    },
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Violation::AgentCountMismatch {
                snapshot,
                expected,
                found,
            } => write!(
                f,
                "snapshot {snapshot}: expected {expected} agents, found {found}"
            ),
            Violation::TimeGridViolation {
                snapshot,
                expected,
                found,
            } => write!(
                f,
                "snapshot {snapshot}: time {found} violates uniform grid (expected {expected})"
            ),
            Violation::NonFinitePosition { snapshot, agent } => {
                write!(f, "snapshot {snapshot}, agent {agent}: non-finite position")
            }
            Violation::HeadingOutOfRange {
                snapshot,
                agent,
                value,
            } => write!(
                f,
                "snapshot {snapshot}, agent {agent}: heading {value} outside (-pi, pi]"
            ),
        }
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl core::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Time-indexed sequence of snapshots with a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmTrajectory {
    dt: f64,
    snapshots: Vec<SwarmSnapshot>,
}

impl SwarmTrajectory {
    /// Wraps snapshots with their time step. Only the cheap structural
    /// requirements are checked here; call [`validate`](Self::validate) for
    /// the full invariant report.
    pub fn new(dt: f64, snapshots: Vec<SwarmSnapshot>) -> Result<Self, CoreError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        if snapshots.is_empty() {
            return Err(CoreError::TooFewSnapshots { needed: 1, got: 0 });
        }
        Ok(Self { dt, snapshots })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn snapshots(&self) -> &[SwarmSnapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &SwarmSnapshot {
        &self.snapshots[k]
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn agent_count(&self) -> usize {
        self.snapshots[0].agent_count()
    }

    pub fn start_time(&self) -> f64 {
        self.snapshots[0].time
    }

    /// Time spanned from the first to the last snapshot.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Checks every type invariant; on failure the report names each
    /// violation with its snapshot index.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut violations = Vec::new();
        let n = self.agent_count();
        let t0 = self.snapshots[0].time;
        for (k, snap) in self.snapshots.iter().enumerate() {
            if snap.agent_count() != n {
                violations.push(Violation::AgentCountMismatch {
                    snapshot: k,
                    expected: n,
                    found: snap.agent_count(),
                });
            }
            let expected = t0 + k as f64 * self.dt;
            if (snap.time - expected).abs() > TIME_GRID_RTOL * self.dt.max(expected.abs()) {
                violations.push(Violation::TimeGridViolation {
                    snapshot: k,
                    expected,
                    found: snap.time,
                });
            }
            for (i, agent) in snap.agents.iter().enumerate() {
                if !agent.position.x.is_finite() || !agent.position.y.is_finite() {
                    violations.push(Violation::NonFinitePosition {
                        snapshot: k,
                        agent: i,
                    });
                }
                if !(agent.heading > -PI && agent.heading <= PI) {
                    violations.push(Violation::HeadingOutOfRange {
                        snapshot: k,
                        agent: i,
                        value: agent.heading,
                    });
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }

    /// Refines the time grid to `target_dt` by linear interpolation of
    /// positions and shortest-arc interpolation of headings. `target_dt`
    /// must divide `dt` into an integer number of sub-steps; original
    /// snapshots are reproduced exactly at coincident times.
    pub fn interpolate(&self, target_dt: f64) -> Result<SwarmTrajectory, CoreError> {
        if !(target_dt > 0.0) || !target_dt.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "target_dt must be positive and finite, got {target_dt}"
            )));
        }
        let ratio = self.dt / target_dt;
        let factor = ratio.round();
        if factor < 1.0 || (ratio - factor).abs() > TIME_GRID_RTOL * ratio {
            return Err(CoreError::NonIntegerRefinement {
                dt: self.dt,
                target_dt,
            });
        }
        let factor = factor as usize;
        let t0 = self.start_time();
        let mut snapshots = Vec::with_capacity((self.len() - 1) * factor + 1);
        for k in 0..self.len() - 1 {
            let a = &self.snapshots[k];
            let b = &self.snapshots[k + 1];
            for j in 0..factor {
                if j == 0 {
                    snapshots.push(a.clone());
                    let idx = snapshots.len() - 1;
                    snapshots[idx].time = t0 + (k * factor) as f64 * target_dt;
                    continue;
                }
                let s = j as f64 / factor as f64;
                let agents = a
                    .agents
                    .iter()
                    .zip(&b.agents)
                    .map(|(x, y)| AgentState {
                        position: x.position + s * (y.position - x.position),
                        heading: lerp_angle(x.heading, y.heading, s),
                    })
                    .collect();
                snapshots.push(SwarmSnapshot {
                    time: t0 + ((k * factor + j) as f64) * target_dt,
                    agents,
                });
            }
        }
        let mut last = self.snapshots[self.len() - 1].clone();
        last.time = t0 + ((self.len() - 1) * factor) as f64 * target_dt;
        snapshots.push(last);
        SwarmTrajectory::new(target_dt, snapshots)
    }

    /// Keeps `target_n` agents chosen uniformly without replacement, the
    /// same indices in every snapshot, relative order preserved.
    /// Deterministic per seed.
    pub fn subsample_agents(
        &self,
        target_n: usize,
        seed: u64,
    ) -> Result<SwarmTrajectory, CoreError> {
        let n = self.agent_count();
        if target_n > n {
            return Err(CoreError::SubsampleTooLarge {
                requested: target_n,
                available: n,
            });
        }
        if target_n == n {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = rand::seq::index::sample(&mut rng, n, target_n).into_vec();
        indices.sort_unstable();
        let snapshots = self
            .snapshots
            .iter()
            .map(|snap| SwarmSnapshot {
                time: snap.time,
                agents: indices.iter().map(|&i| snap.agents[i]).collect(),
            })
            .collect();
        SwarmTrajectory::new(self.dt, snapshots)
    }

    /// Copies `count` snapshots starting at `start`, re-timed to begin at 0.
    pub fn window(&self, start: usize, count: usize) -> Result<SwarmTrajectory, CoreError> {
        if start + count > self.len() {
            return Err(CoreError::TooFewSnapshots {
                needed: start + count,
                got: self.len(),
            });
        }
        let snapshots = self.snapshots[start..start + count]
            .iter()
            .enumerate()
            .map(|(k, snap)| SwarmSnapshot {
                time: k as f64 * self.dt,
                agents: snap.agents.clone(),
            })
            .collect();
        SwarmTrajectory::new(self.dt, snapshots)
    }

    /// Index of the snapshot at time `t` relative to the trajectory start,
    /// or `None` when `t` is off the grid.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let offset = (t - self.start_time()) / self.dt;
        let idx = offset.round();
        if idx < 0.0 || (offset - idx).abs() > 1e-6 {
            return None;
        }
        let idx = idx as usize;
        (idx < self.len()).then_some(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn agent(x: f64, y: f64, heading: f64) -> AgentState {
        AgentState::new(Vector2::new(x, y), heading)
    }

    fn uniform_motion(n_snapshots: usize, dt: f64) -> SwarmTrajectory {
        let snapshots = (0..n_snapshots)
            .map(|k| {
                SwarmSnapshot::new(
                    k as f64 * dt,
                    alloc::vec![
                        agent(k as f64 * dt, 0.0, 0.0),
                        agent(0.0, k as f64 * dt, core::f64::consts::FRAC_PI_2),
                    ],
                )
            })
            .collect();
        SwarmTrajectory::new(dt, snapshots).unwrap()
    }

    #[test]
    fn well_formed_trajectory_validates() {
        assert!(uniform_motion(3, 0.1).validate().is_ok());
    }

    #[test]
    fn missing_agent_is_reported_with_snapshot_index() {
        let mut traj = uniform_motion(4, 0.1);
        traj.snapshots[2].agents.pop();
        let report = traj.validate().unwrap_err();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::AgentCountMismatch { snapshot: 2, .. }
        ));
    }

    #[test]
    fn non_uniform_times_are_reported() {
        let mut traj = uniform_motion(3, 0.1);
        traj.snapshots[2].time = 0.25;
        let report = traj.validate().unwrap_err();
        assert!(matches!(
            report.violations[0],
            Violation::TimeGridViolation { snapshot: 2, .. }
        ));
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut traj = uniform_motion(4, 0.1);
        traj.snapshots[1].agents.pop();
        traj.snapshots[3].time = 1.7;
        traj.snapshots[2].agents[0].position.x = f64::NAN;
        let report = traj.validate().unwrap_err();
        assert_eq!(report.violations.len(), 3);
    }

    #[test]
    fn interpolation_linear_midpoint() {
        let snapshots = alloc::vec![
            SwarmSnapshot::new(0.0, alloc::vec![agent(0.0, 0.0, 0.0)]),
            SwarmSnapshot::new(1.0, alloc::vec![agent(1.0, 0.0, 0.0)]),
        ];
        let traj = SwarmTrajectory::new(1.0, snapshots).unwrap();
        let fine = traj.interpolate(0.1).unwrap();
        assert_eq!(fine.len(), 11);
        let mid = &fine.snapshot(5).agents[0];
        assert_relative_eq!(mid.position.x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(mid.position.y, 0.0);
    }

    #[test]
    fn interpolation_heading_shortest_arc() {
        let snapshots = alloc::vec![
            SwarmSnapshot::new(0.0, alloc::vec![agent(0.0, 0.0, 0.0)]),
            SwarmSnapshot::new(
                1.0,
                alloc::vec![agent(0.0, 0.0, core::f64::consts::FRAC_PI_2)]
            ),
        ];
        let traj = SwarmTrajectory::new(1.0, snapshots).unwrap();
        let fine = traj.interpolate(0.5).unwrap();
        assert_relative_eq!(
            fine.snapshot(1).agents[0].heading,
            core::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn interpolation_heading_wraps_through_pi() {
        // 3 rad -> -3 rad: the short arc crosses +-pi, so the midpoint is pi.
        let snapshots = alloc::vec![
            SwarmSnapshot::new(0.0, alloc::vec![agent(0.0, 0.0, 3.0)]),
            SwarmSnapshot::new(1.0, alloc::vec![agent(0.0, 0.0, -3.0)]),
        ];
        let traj = SwarmTrajectory::new(1.0, snapshots).unwrap();
        let fine = traj.interpolate(0.5).unwrap();
        assert_relative_eq!(
            fine.snapshot(1).agents[0].heading.abs(),
            PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn interpolation_rejects_non_integer_factor() {
        let traj = uniform_motion(3, 0.1);
        assert!(matches!(
            traj.interpolate(0.03),
            Err(CoreError::NonIntegerRefinement { .. })
        ));
    }

    #[test]
    fn interpolation_restricted_to_original_grid_is_identity() {
        let traj = uniform_motion(5, 0.5);
        let fine = traj.interpolate(0.1).unwrap();
        for k in 0..traj.len() {
            let orig = traj.snapshot(k);
            let restored = fine.snapshot(5 * k);
            for (a, b) in orig.agents.iter().zip(&restored.agents) {
                assert_eq!(a.position, b.position);
                assert!(crate::angle::angle_diff(a.heading, b.heading).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subsample_identity_when_target_is_full() {
        let traj = uniform_motion(3, 0.1);
        let sub = traj.subsample_agents(2, 42).unwrap();
        assert_eq!(sub, traj);
    }

    #[test]
    fn subsample_is_deterministic_and_order_preserving() {
        let snapshots = (0..3)
            .map(|k| {
                SwarmSnapshot::new(
                    k as f64,
                    (0..10).map(|i| agent(i as f64, k as f64, 0.0)).collect(),
                )
            })
            .collect::<Vec<_>>();
        let traj = SwarmTrajectory::new(1.0, snapshots).unwrap();
        let a = traj.subsample_agents(4, 7).unwrap();
        let b = traj.subsample_agents(4, 7).unwrap();
        assert_eq!(a, b);
        // Relative order preserved: x coordinates (agent ids) stay increasing.
        let xs: Vec<f64> = a.snapshot(0).agents.iter().map(|s| s.position.x).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let c = traj.subsample_agents(4, 8).unwrap();
        assert_ne!(
            a.snapshot(0).positions(),
            c.snapshot(0).positions(),
            "different seeds should pick different subsets for 10 choose 4"
        );
    }

    #[test]
    fn subsample_rejects_oversized_target() {
        let traj = uniform_motion(3, 0.1);
        assert!(matches!(
            traj.subsample_agents(3, 0),
            Err(CoreError::SubsampleTooLarge { .. })
        ));
    }

    #[test]
    fn subsample_commutes_with_interpolation() {
        let snapshots = (0..4)
            .map(|k| {
                SwarmSnapshot::new(
                    k as f64,
                    (0..6)
                        .map(|i| agent(i as f64 + 0.1 * k as f64, k as f64, 0.3 * i as f64))
                        .collect(),
                )
            })
            .collect::<Vec<_>>();
        let traj = SwarmTrajectory::new(1.0, snapshots).unwrap();
        let a = traj
            .interpolate(0.5)
            .unwrap()
            .subsample_agents(3, 11)
            .unwrap();
        let b = traj
            .subsample_agents(3, 11)
            .unwrap()
            .interpolate(0.5)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_retimes_from_zero() {
        let traj = uniform_motion(5, 0.1);
        let w = traj.window(2, 3).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.snapshot(0).time, 0.0);
        assert_eq!(w.snapshot(0).agents, traj.snapshot(2).agents);
    }
}
