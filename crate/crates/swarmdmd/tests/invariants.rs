//! Randomised invariant checks over the public API: angle arithmetic,
//! collective-motion metrics, feature assembly, and simulator steps.

use proptest::prelude::*;

use swarmdmd::angle::{angle_diff, wrap_angle};
use swarmdmd::metrics::{angular_momentum, heading_error, polarisation, Centering};
use swarmdmd::nalgebra::Vector2;
use swarmdmd::observables::{
    assemble_matrices, backward_velocity_from_positions, velocity_from_positions, FeatureKind,
    FeatureLayout,
};
use swarmdmd::trajectory::{AgentState, SwarmParams, SwarmSnapshot, SwarmTrajectory};
use swarmdmd::vicsek::step_standard;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn rotate(v: &Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (sin, cos) = angle.sin_cos();
    Vector2::new(v.x * cos - v.y * sin, v.x * sin + v.y * cos)
}

fn vec2() -> impl Strategy<Value = Vector2<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| Vector2::new(x, y))
}

/// Vectors bounded away from zero so metric denominators stay well away
/// from the undefined all-zero case.
fn nonzero_vec2() -> impl Strategy<Value = Vector2<f64>> {
    vec2().prop_filter("needs a clearly nonzero vector", |v| v.norm() > 1e-3)
}

proptest! {
    #[test]
    fn wrapped_angles_lie_in_the_half_open_interval(a in -1e6..1e6f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -core::f64::consts::PI && w <= core::f64::consts::PI);
        // Wrapping preserves the angle modulo a full turn.
        let turns = (a - w) / core::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }

    #[test]
    fn angle_difference_is_antisymmetric_and_bounded(
        a in -10.0..10.0f64,
        b in -10.0..10.0f64,
    ) {
        let d = angle_diff(a, b);
        prop_assert!(d.abs() <= core::f64::consts::PI + TOL);
        // Swapping the arguments negates the difference unless it sits on
        // the branch cut at pi, where both signs are valid.
        let swapped = angle_diff(b, a);
        prop_assert!(
            (d + swapped).abs() < 1e-9 || (d.abs() - core::f64::consts::PI).abs() < 1e-9
        );
    }

    #[test]
    fn polarisation_is_normalised_and_scale_and_rotation_invariant(
        vs in prop::collection::vec(nonzero_vec2(), 1..16),
        scale in 0.1..10.0f64,
        angle in -3.0..3.0f64,
    ) {
        let p = polarisation(&vs).expect("nonzero velocities");
        prop_assert!((-TOL..=1.0 + TOL).contains(&p));
        let scaled: Vec<_> = vs.iter().map(|v| v * scale).collect();
        prop_assert!((polarisation(&scaled).unwrap() - p).abs() < TOL);
        let rotated: Vec<_> = vs.iter().map(|v| rotate(v, angle)).collect();
        prop_assert!((polarisation(&rotated).unwrap() - p).abs() < TOL);
    }

    #[test]
    fn angular_momentum_is_normalised_and_invariant(
        pairs in prop::collection::vec((nonzero_vec2(), nonzero_vec2()), 1..16),
        scale in 0.1..10.0f64,
        angle in -3.0..3.0f64,
    ) {
        let (ps, vs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let m = angular_momentum(&ps, &vs, Centering::Origin).expect("nonzero terms");
        prop_assert!((-TOL..=1.0 + TOL).contains(&m));
        // Scaling all velocities rescales numerator and denominator alike.
        let scaled: Vec<_> = vs.iter().map(|v| v * scale).collect();
        prop_assert!((angular_momentum(&ps, &scaled, Centering::Origin).unwrap() - m).abs() < TOL);
        // A joint rotation of positions and velocities preserves cross
        // products and norms.
        let rp: Vec<_> = ps.iter().map(|p| rotate(p, angle)).collect();
        let rv: Vec<_> = vs.iter().map(|v| rotate(v, angle)).collect();
        prop_assert!((angular_momentum(&rp, &rv, Centering::Origin).unwrap() - m).abs() < TOL);
    }

    #[test]
    fn heading_error_stays_within_the_half_turn(
        headings in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..8),
    ) {
        let make = |pick: fn((f64, f64)) -> f64| {
            let agents: Vec<AgentState> = headings
                .iter()
                .map(|&pair| AgentState::new(Vector2::new(0.0, 0.0), wrap_angle(pick(pair))))
                .collect();
            SwarmTrajectory::new(
                0.1,
                vec![
                    SwarmSnapshot::new(0.0, agents.clone()),
                    SwarmSnapshot::new(0.1, agents),
                ],
            )
            .unwrap()
        };
        let truth = make(|(a, _)| a);
        let test = make(|(_, b)| b);
        let series = heading_error(&truth, &test).unwrap();
        for v in &series.values {
            prop_assert!((0.0..=core::f64::consts::PI + TOL).contains(v));
        }
    }

    #[test]
    fn assembled_displacements_are_position_differences(
        seed in 0u64..1000,
        n in 2usize..6,
        t in 3usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snapshots: Vec<SwarmSnapshot> = (0..t)
            .map(|k| {
                SwarmSnapshot::new(
                    0.1 * k as f64,
                    (0..n)
                        .map(|_| {
                            AgentState::new(
                                Vector2::new(
                                    rand::Rng::gen::<f64>(&mut rng),
                                    rand::Rng::gen::<f64>(&mut rng),
                                ),
                                0.0,
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        let traj = SwarmTrajectory::new(0.1, snapshots).unwrap();
        let layout = FeatureLayout::new(vec![FeatureKind::Position], n).unwrap();
        let mats = assemble_matrices(&traj, &layout).unwrap();
        prop_assert_eq!(mats.s.ncols(), t - 1);
        for k in 0..t - 1 {
            for i in 0..n {
                let d = traj.snapshot(k + 1).agents[i].position
                    - traj.snapshot(k).agents[i].position;
                prop_assert_eq!(mats.s[(i, k)], d.x);
                prop_assert_eq!(mats.s[(n + i, k)], d.y);
            }
        }
    }

    #[test]
    fn backward_velocities_are_the_forward_ones_shifted(
        seed in 0u64..1000,
        n in 1usize..5,
        t in 2usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snapshots: Vec<SwarmSnapshot> = (0..t)
            .map(|k| {
                SwarmSnapshot::new(
                    0.1 * k as f64,
                    (0..n)
                        .map(|_| {
                            AgentState::new(
                                Vector2::new(
                                    rand::Rng::gen::<f64>(&mut rng),
                                    rand::Rng::gen::<f64>(&mut rng),
                                ),
                                0.0,
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        let traj = SwarmTrajectory::new(0.1, snapshots).unwrap();
        let forward = velocity_from_positions(&traj).unwrap();
        let backward = backward_velocity_from_positions(&traj).unwrap();
        prop_assert_eq!(backward[0].clone(), forward[0].clone());
        for k in 1..t {
            prop_assert_eq!(backward[k].clone(), forward[k - 1].clone());
        }
    }

    #[test]
    fn standard_step_preserves_speed_and_agent_count(
        seed in 0u64..1000,
        n in 1usize..8,
        noise in 0.0..1.0f64,
    ) {
        let params = SwarmParams {
            n_agents: n,
            dt: 0.1,
            density: 16.0,
            interaction_radius: 0.3,
            field_of_view: None,
            max_turn_rate: None,
            noise,
            speed: 0.03,
            seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snapshot = SwarmSnapshot::new(
            0.0,
            (0..n)
                .map(|_| {
                    AgentState::new(
                        Vector2::new(
                            rand::Rng::gen::<f64>(&mut rng),
                            rand::Rng::gen::<f64>(&mut rng),
                        ),
                        wrap_angle(rand::Rng::gen::<f64>(&mut rng) * 7.0),
                    )
                })
                .collect(),
        );
        let next = step_standard(&snapshot, &params, &mut rng);
        prop_assert_eq!(next.agent_count(), n);
        for (before, after) in snapshot.agents.iter().zip(&next.agents) {
            let step = (after.position - before.position).norm();
            prop_assert!((step - params.speed * params.dt).abs() < 1e-14);
            prop_assert!(after.heading > -core::f64::consts::PI);
            prop_assert!(after.heading <= core::f64::consts::PI);
        }
    }
}
