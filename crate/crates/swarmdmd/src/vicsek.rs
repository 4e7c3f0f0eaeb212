//! Ground-truth swarm simulators: the standard alignment model and the
//! restricted-field-of-view milling variant, with seeded uniform noise.
//!
//! RNG discipline (required for cross-implementation determinism):
//! initialisation draws, per agent in index order, position x, position y,
//! then heading; every step draws exactly one uniform noise value per agent
//! in index order, even when the noise width is zero.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle::{angle_diff, wrap_angle};
use crate::error::CoreError;
use crate::trajectory::{AgentState, SwarmParams, SwarmSnapshot, SwarmTrajectory};

/// Open (non-wrapping) simulation domain. Agents are initialised uniformly
/// in a centered square of width `init_width`; `sim_width` is a reporting
/// frame only and never constrains motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDomain {
    pub init_width: f64,
    pub sim_width: f64,
}

impl SimDomain {
    /// Domain implied by the parameters: `init_width = sqrt(N / density)`,
    /// `sim_width` twice that.
    pub fn for_params(params: &SwarmParams) -> Self {
        let l = params.init_width();
        Self {
            init_width: l,
            sim_width: 2.0 * l,
        }
    }

    /// Checks consistency with the configured density (1e-9 relative) and
    /// that the reporting frame contains the initialisation square.
    pub fn validate(&self, params: &SwarmParams) -> Result<(), CoreError> {
        let expected = params.init_width();
        if (self.init_width - expected).abs() > 1e-9 * expected {
            return Err(CoreError::InvalidParams(format!(
                "init_width {} inconsistent with density {} (expected {})",
                self.init_width, params.density, expected
            )));
        }
        if self.sim_width < self.init_width {
            return Err(CoreError::InvalidParams(format!(
                "sim_width {} smaller than init_width {}",
                self.sim_width, self.init_width
            )));
        }
        Ok(())
    }
}

/// Which update rule drives the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicsekVariant {
    Standard,
    Milling,
}

impl VicsekVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            VicsekVariant::Standard => "standard",
            VicsekVariant::Milling => "milling",
        }
    }
}

impl core::str::FromStr for VicsekVariant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(VicsekVariant::Standard),
            "milling" => Ok(VicsekVariant::Milling),
            other => Err(CoreError::InvalidParams(format!(
                "unknown model variant {other:?} (expected \"standard\" or \"milling\")"
            ))),
        }
    }
}

/// Draws the initial snapshot from an explicit RNG stream: positions i.i.d.
/// uniform on the centered init square, headings i.i.d. uniform on
/// `(-pi, pi]`.
pub fn init_swarm_with_rng<R: Rng + ?Sized>(
    params: &SwarmParams,
    domain: &SimDomain,
    rng: &mut R,
) -> SwarmSnapshot {
    let l = domain.init_width;
    let agents = (0..params.n_agents)
        .map(|_| {
            let x = (rng.gen::<f64>() - 0.5) * l;
            let y = (rng.gen::<f64>() - 0.5) * l;
            // u in [0, 1) maps to pi * (1 - 2u) in (-pi, pi].
            let heading = PI * (1.0 - 2.0 * rng.gen::<f64>());
            AgentState {
                position: Vector2::new(x, y),
                heading,
            }
        })
        .collect();
    SwarmSnapshot::new(0.0, agents)
}

/// Seeded initial snapshot; deterministic per `params.seed`.
pub fn init_swarm(params: &SwarmParams, domain: &SimDomain) -> SwarmSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    init_swarm_with_rng(params, domain, &mut rng)
}

/// Circular mean heading of every agent within radius `r` of agent `i`
/// (self always included) whose bearing from `i` lies within `+-fov/2` of
/// agent `i`'s heading when `fov < 2*pi`. Falls back to agent `i`'s own
/// heading when no other agent qualifies, and returns the shared value
/// exactly when every qualifying heading is identical.
pub fn mean_neighbor_heading(snapshot: &SwarmSnapshot, i: usize, r: f64, fov: f64) -> f64 {
    let focal = &snapshot.agents[i];
    let r2 = r * r;
    let restrict_fov = fov < TAU;
    let half_fov = 0.5 * fov;

    let mut sin_sum = focal.heading.sin();
    let mut cos_sum = focal.heading.cos();
    let mut all_same = true;
    let mut others = 0usize;
    for (j, agent) in snapshot.agents.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = agent.position - focal.position;
        if d.norm_squared() > r2 {
            continue;
        }
        if restrict_fov {
            let bearing = d.y.atan2(d.x);
            if angle_diff(bearing, focal.heading).abs() > half_fov {
                continue;
            }
        }
        others += 1;
        if agent.heading != focal.heading {
            all_same = false;
        }
        sin_sum += agent.heading.sin();
        cos_sum += agent.heading.cos();
    }
    if others == 0 || all_same {
        return focal.heading;
    }
    sin_sum.atan2(cos_sum)
}

fn draw_noises<R: Rng + ?Sized>(n: usize, eta: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| eta * (rng.gen::<f64>() - 0.5)).collect()
}

fn advance(position: Vector2<f64>, heading: f64, step_length: f64) -> Vector2<f64> {
    position + Vector2::new(step_length * heading.cos(), step_length * heading.sin())
}

/// One step of the standard alignment model: each heading moves to the
/// circular mean of all headings within radius `r` plus uniform noise on
/// `[-eta/2, eta/2]`, then the agent advances `speed * dt` along its new
/// heading. Open boundary, no wrapping.
pub fn step_standard<R: Rng + ?Sized>(
    snapshot: &SwarmSnapshot,
    params: &SwarmParams,
    rng: &mut R,
) -> SwarmSnapshot {
    let n = snapshot.agent_count();
    let noises = draw_noises(n, params.noise, rng);
    let step_length = params.speed * params.dt;
    let agents = (0..n)
        .map(|i| {
            let target = mean_neighbor_heading(snapshot, i, params.interaction_radius, TAU);
            let heading = wrap_angle(target + noises[i]);
            AgentState {
                position: advance(snapshot.agents[i].position, heading, step_length),
                heading,
            }
        })
        .collect();
    SwarmSnapshot::new(snapshot.time + params.dt, agents)
}

/// One step of the milling variant: the neighbor average is restricted to
/// the field of view, the turn toward it saturates at `max_turn_rate * dt`,
/// noise is added after saturation, and the agent advances `speed * dt`
/// along its new heading.
pub fn step_milling<R: Rng + ?Sized>(
    snapshot: &SwarmSnapshot,
    params: &SwarmParams,
    rng: &mut R,
) -> SwarmSnapshot {
    let n = snapshot.agent_count();
    let noises = draw_noises(n, params.noise, rng);
    let step_length = params.speed * params.dt;
    let fov = params.field_of_view.unwrap_or(TAU);
    let max_turn = params
        .max_turn_rate
        .map(|omega| omega * params.dt)
        .unwrap_or(f64::INFINITY);
    let agents = (0..n)
        .map(|i| {
            let old = snapshot.agents[i].heading;
            let target = mean_neighbor_heading(snapshot, i, params.interaction_radius, fov);
            let dtheta = angle_diff(target, old);
            let aligned = if dtheta.abs() < max_turn {
                target
            } else if dtheta >= 0.0 {
                old + max_turn
            } else {
                old - max_turn
            };
            let heading = wrap_angle(aligned + noises[i]);
            AgentState {
                position: advance(snapshot.agents[i].position, heading, step_length),
                heading,
            }
        })
        .collect();
    SwarmSnapshot::new(snapshot.time + params.dt, agents)
}

/// Runs `duration / dt` steps from a seeded uniform initialisation and
/// returns the full trajectory (`duration / dt + 1` snapshots on the exact
/// grid `t = k * dt`). Deterministic per seed.
pub fn simulate(
    params: &SwarmParams,
    domain: &SimDomain,
    variant: VicsekVariant,
    duration: f64,
) -> Result<SwarmTrajectory, CoreError> {
    params.validate()?;
    domain.validate(params)?;
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(CoreError::InvalidParams(format!(
            "duration must be non-negative and finite, got {duration}"
        )));
    }
    let steps_exact = duration / params.dt;
    let steps = steps_exact.round();
    if (steps_exact - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(CoreError::DurationNotMultiple {
            duration,
            dt: params.dt,
        });
    }
    let steps = steps as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut current = init_swarm_with_rng(params, domain, &mut rng);
    let mut snapshots = Vec::with_capacity(steps + 1);
    snapshots.push(current.clone());
    for k in 1..=steps {
        current = match variant {
            VicsekVariant::Standard => step_standard(&current, params, &mut rng),
            VicsekVariant::Milling => step_milling(&current, params, &mut rng),
        };
        current.time = k as f64 * params.dt;
        snapshots.push(current.clone());
    }
    SwarmTrajectory::new(params.dt, snapshots)
}
