//! Numerical core: rank-truncated SVD, the interaction-matrix estimator
//! `K = S V inv(Sigma) U*`, classic DMD mode extraction, and the per-row
//! influence diagnostic.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Vector2};

use crate::error::CoreError;
use crate::observables::{
    heading_from_velocity, FeatureKind, FeatureLayout, SnapshotMatrices, VelocityEstimator,
};

/// Relative floor under which singular values are treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn complex_abs(c: Complex<f64>) -> f64 {
    c.norm_sqr().sqrt()
}

/// How many singular triplets to retain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSpec {
    /// Keep exactly this many (before the small-singular-value floor).
    Rank(usize),
    /// Keep the smallest rank whose cumulative squared-singular-value
    /// energy reaches this fraction in (0, 1].
    EnergyThreshold(f64),
}

/// Economy-size rank-truncated SVD factors, singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// The rank-r reconstruction `U Sigma V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(self.sigma.iter()) {
            col *= *s;
        }
        scaled * self.v.transpose()
    }
}

/// Economy SVD truncated to `rank`, with singular values below
/// `1e-12 * sigma_1` always dropped. Never forms full square factors.
pub fn truncated_svd(m: &DMatrix<f64>, rank: RankSpec) -> Result<TruncatedSvd, CoreError> {
    let max_rank = m.nrows().min(m.ncols());
    if let RankSpec::Rank(r) = rank {
        if r > max_rank {
            return Err(CoreError::RankTooLarge {
                requested: r,
                max: max_rank,
            });
        }
    }
    if let RankSpec::EnergyThreshold(t) = rank {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CoreError::InvalidParams(format!(
                "energy threshold must lie in (0, 1], got {t}"
            )));
        }
    }
    let svd = m.clone().svd(true, true);
    let sigma = svd.singular_values;
    debug_assert!(
        sigma.iter().zip(sigma.iter().skip(1)).all(|(a, b)| a >= b),
        "singular values must be sorted descending"
    );
    let floor = SIGMA_FLOOR * sigma[0];
    let numerical_rank = sigma.iter().take_while(|&&s| s > floor && s > 0.0).count();
    let keep = match rank {
        RankSpec::Rank(r) => r.min(numerical_rank),
        RankSpec::EnergyThreshold(t) => {
            let total: f64 = sigma.iter().take(numerical_rank).map(|s| s * s).sum();
            let mut cumulative = 0.0;
            let mut r = 0;
            for s in sigma.iter().take(numerical_rank) {
                cumulative += s * s;
                r += 1;
                if cumulative >= t * total {
                    break;
                }
            }
            r
        }
    };
    if keep == 0 {
        return Err(CoreError::RankDeficient);
    }
    let u_full = svd.u.expect("left singular vectors requested");
    let v_t_full = svd.v_t.expect("right singular vectors requested");
    Ok(TruncatedSvd {
        u: u_full.columns(0, keep).into_owned(),
        sigma: sigma.rows(0, keep).into_owned(),
        v: v_t_full.rows(0, keep).transpose(),
    })
}

/// Dynamics formulation a learned model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// `x_{k+1} = x_k + K y_k`.
    Standard,
    /// `x_{k+1} = x_k + v_k dt + K y_k`.
    FoCartesian,
    /// `x_{k+1} = x_k + (v_k cos th_k, v_k sin th_k) dt + K y_k`.
    FoPolar,
}

impl Dynamics {
    pub const ALL: [Dynamics; 3] = [Dynamics::Standard, Dynamics::FoCartesian, Dynamics::FoPolar];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dynamics::Standard => "standard",
            Dynamics::FoCartesian => "fo_cartesian",
            Dynamics::FoPolar => "fo_polar",
        }
    }

    /// Default feature layout for this formulation.
    pub fn default_layout(&self, n_agents: usize) -> FeatureLayout {
        let kinds = match self {
            Dynamics::Standard => alloc::vec![
                FeatureKind::Position,
                FeatureKind::Velocity,
                FeatureKind::Heading,
                FeatureKind::RelDistance,
            ],
            Dynamics::FoCartesian => {
                alloc::vec![FeatureKind::RelPosition, FeatureKind::RelVelocity]
            }
            Dynamics::FoPolar => alloc::vec![
                FeatureKind::RelDistance,
                FeatureKind::RelSpeed,
                FeatureKind::RelHeading,
            ],
        };
        FeatureLayout::new(kinds, n_agents).expect("default layouts are well-formed")
    }

    /// Velocity estimator this formulation assembles features from.
    /// Standard and first-order Cartesian features pair each snapshot with
    /// the forward difference — the velocity convention the feature
    /// pipeline defines. The polar formulation's quantities are the speed
    /// and direction of the *backward*-difference velocity, exactly as its
    /// propagation rule defines them, so its features use that estimator
    /// when fitting too; this causal consistency is what keeps polar
    /// propagation locked to the data while Cartesian drifts.
    pub fn velocity_estimator(&self) -> VelocityEstimator {
        match self {
            Dynamics::Standard | Dynamics::FoCartesian => VelocityEstimator::Forward,
            Dynamics::FoPolar => VelocityEstimator::Backward,
        }
    }

    /// Displacement contributed by the drift term over one step, given the
    /// agent's current velocity. Standard dynamics have no drift; the two
    /// first-order forms carry the current velocity forward — Cartesian
    /// componentwise, polar through speed and direction. Training, teacher-
    /// forced reconstruction, and closed-loop prediction all call this one
    /// helper so the drift arithmetic is bit-identical everywhere.
    pub fn drift_displacement(&self, velocity: &Vector2<f64>, dt: f64) -> Vector2<f64> {
        match self {
            Dynamics::Standard => Vector2::zeros(),
            Dynamics::FoCartesian => velocity * dt,
            Dynamics::FoPolar => {
                let speed = velocity.norm();
                let heading = heading_from_velocity(velocity);
                Vector2::new(speed * heading.cos() * dt, speed * heading.sin() * dt)
            }
        }
    }
}

impl core::str::FromStr for Dynamics {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dynamics::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                CoreError::InvalidParams(format!(
                    "unknown dynamics {s:?} (expected standard, fo_cartesian, or fo_polar)"
                ))
            })
    }
}

/// Learned interaction matrix with everything needed to roll it forward.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    /// Maps the augmented vector to per-agent displacement, `2N x Nm`.
    pub k: DMatrix<f64>,
    pub layout: FeatureLayout,
    /// Rank actually retained by the fit.
    pub rank: usize,
    pub dynamics: Dynamics,
    pub dt: f64,
}

/// Displacement matrix the interaction term has to explain. Standard
/// dynamics fit the raw displacements; the first-order forms fit what is
/// left after carrying each agent's current velocity forward one step
/// (backward difference per column; the first column falls back to the
/// forward difference, the same estimate a rollout seed uses).
fn fit_target(mats: &SnapshotMatrices, dynamics: Dynamics) -> DMatrix<f64> {
    let mut target = mats.s.clone();
    if dynamics == Dynamics::Standard {
        return target;
    }
    let n = mats.layout.n_agents();
    let dt = mats.dt;
    for k in 0..target.ncols() {
        for i in 0..n {
            let v = if k == 0 {
                Vector2::new(mats.s[(i, 0)], mats.s[(n + i, 0)]) / dt
            } else {
                Vector2::new(
                    mats.x[(i, k)] - mats.x[(i, k - 1)],
                    mats.x[(n + i, k)] - mats.x[(n + i, k - 1)],
                ) / dt
            };
            let d = dynamics.drift_displacement(&v, dt);
            target[(i, k)] -= d.x;
            target[(n + i, k)] -= d.y;
        }
    }
    target
}

/// Fits the interaction matrix by rank-truncated least squares:
/// `K = S V inv(Sigma) U^T` from the SVD of `Y`, with `S` replaced by the
/// drift-corrected target for the first-order formulations.
pub fn estimate_k(
    mats: &SnapshotMatrices,
    rank: RankSpec,
    dynamics: Dynamics,
) -> Result<InteractionModel, CoreError> {
    if mats.y.iter().all(|&v| v == 0.0) {
        return Err(CoreError::NoObservableSignal);
    }
    let target = fit_target(mats, dynamics);
    let svd = truncated_svd(&mats.y, rank)?;
    let mut sv = &target * &svd.v;
    for (mut col, s) in sv.column_iter_mut().zip(svd.sigma.iter()) {
        col /= *s;
    }
    let k = sv * svd.u.transpose();
    Ok(InteractionModel {
        k,
        layout: mats.layout.clone(),
        rank: svd.rank(),
        dynamics,
        dt: mats.dt,
    })
}

/// Classic DMD decomposition: eigenvalues of the reduced operator and the
/// full-order modes.
#[derive(Debug, Clone)]
pub struct DmdModes {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Full-order modes, one column per eigenvalue.
    pub modes: DMatrix<Complex<f64>>,
    /// The reduced operator `U^T X' V inv(Sigma)`.
    pub reduced: DMatrix<f64>,
    /// Eigenvectors of the reduced operator, one column per eigenvalue.
    pub reduced_modes: DMatrix<Complex<f64>>,
}

impl DmdModes {
    /// Predicts states by discrete eigenvalue powers: amplitudes are fitted
    /// to `x0` in the mode basis, then `x_k = W diag(lambda^k) b`.
    pub fn predict(&self, x0: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>, CoreError> {
        if x0.len() != self.modes.nrows() {
            return Err(CoreError::ShapeMismatch(format!(
                "state length {} does not match mode rows {}",
                x0.len(),
                self.modes.nrows()
            )));
        }
        let x0_c = x0.map(|v| Complex::new(v, 0.0));
        let amplitudes = self
            .modes
            .clone()
            .svd(true, true)
            .solve(&x0_c, 1e-12)
            .map_err(|e| CoreError::ShapeMismatch(format!("amplitude solve failed: {e}")))?;
        let mut predictions = Vec::with_capacity(steps + 1);
        let mut powers: Vec<Complex<f64>> = self
            .eigenvalues
            .iter()
            .map(|_| Complex::new(1.0, 0.0))
            .collect();
        for _ in 0..=steps {
            let mut state = DVector::from_element(self.modes.nrows(), Complex::new(0.0, 0.0));
            for (j, power) in powers.iter().enumerate() {
                let coeff = amplitudes[j] * power;
                state += self.modes.column(j) * coeff;
            }
            predictions.push(state.map(|c| c.re));
            for (power, lambda) in powers.iter_mut().zip(&self.eigenvalues) {
                *power *= lambda;
            }
        }
        Ok(predictions)
    }
}

/// Unit eigenvector of `(m - lambda I)`'s numerical null space; for the
/// `occurrence`-th repeat of an eigenvalue, successive null-space basis
/// vectors are taken so repeated eigenvalues get independent directions.
fn eigenvector_for(
    m: &DMatrix<f64>,
    lambda: Complex<f64>,
    occurrence: usize,
) -> DVector<Complex<f64>> {
    let r = m.nrows();
    let mut shifted = m.map(|v| Complex::new(v, 0.0));
    for i in 0..r {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted.svd(false, true);
    let v = svd.v_t.expect("right singular vectors requested").adjoint();
    let col = r - 1 - occurrence.min(r - 1);
    v.column(col).into_owned()
}

/// Classic DMD steps on a snapshot pair: SVD of `X`, reduced operator
/// `U^T X' V inv(Sigma)`, its eigendecomposition, and full-order modes
/// `X' V inv(Sigma) W`.
pub fn dmd_modes(
    x: &DMatrix<f64>,
    x_next: &DMatrix<f64>,
    rank: RankSpec,
) -> Result<DmdModes, CoreError> {
    if x.shape() != x_next.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "X is {:?} but X' is {:?}",
            x.shape(),
            x_next.shape()
        )));
    }
    let svd = truncated_svd(x, rank)?;
    let mut v_sigma_inv = svd.v.clone();
    for (mut col, s) in v_sigma_inv.column_iter_mut().zip(svd.sigma.iter()) {
        col /= *s;
    }
    let projected = x_next * &v_sigma_inv;
    let reduced = svd.u.transpose() * &projected;

    let eigenvalues: Vec<Complex<f64>> = reduced.complex_eigenvalues().iter().copied().collect();
    let scale = eigenvalues
        .iter()
        .map(|l| complex_abs(*l))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let r = eigenvalues.len();
    let mut reduced_modes = DMatrix::from_element(r, r, Complex::new(0.0, 0.0));
    for (idx, lambda) in eigenvalues.iter().enumerate() {
        let occurrence = eigenvalues[..idx]
            .iter()
            .filter(|prev| complex_abs(*prev - lambda) <= 1e-8 * scale)
            .count();
        reduced_modes.set_column(idx, &eigenvector_for(&reduced, *lambda, occurrence));
    }
    let projected_c = projected.map(|v| Complex::new(v, 0.0));
    let modes = projected_c * &reduced_modes;
    Ok(DmdModes {
        eigenvalues,
        modes,
        reduced,
        reduced_modes,
    })
}

/// Recomputes each state row of `K` through the factored identity
/// `k_i = U inv(Sigma) V^T s_i` and verifies it matches the fitted matrix
/// row within 1e-9 relative tolerance. A mismatch signals an internal
/// inconsistency, not a user error.
pub fn influence_rows(
    model: &InteractionModel,
    mats: &SnapshotMatrices,
) -> Result<Vec<DVector<f64>>, CoreError> {
    let target = fit_target(mats, model.dynamics);
    let svd = truncated_svd(&mats.y, RankSpec::Rank(model.rank))?;
    let mut u_sigma_inv = svd.u.clone();
    for (mut col, s) in u_sigma_inv.column_iter_mut().zip(svd.sigma.iter()) {
        col /= *s;
    }
    let mut rows = Vec::with_capacity(model.k.nrows());
    for i in 0..model.k.nrows() {
        let s_i = target.row(i).transpose();
        let k_i = &u_sigma_inv * (svd.v.transpose() * s_i);
        let fitted = model.k.row(i).transpose();
        let denom = fitted.norm().max(f64::MIN_POSITIVE);
        let rel_err = (&k_i - &fitted).norm() / denom;
        if rel_err > 1e-9 && (&k_i - &fitted).norm() > 1e-12 {
            return Err(CoreError::InfluenceInconsistency { row: i, rel_err });
        }
        rows.push(k_i);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() - 0.5)
    }

    fn toy_layout() -> FeatureLayout {
        FeatureLayout::new(vec![FeatureKind::Position, FeatureKind::Velocity], 2).unwrap()
    }

    /// Hand-built matrices around a given Y and S (layout widths 8 and 4).
    fn mats_from(y: DMatrix<f64>, s: DMatrix<f64>) -> SnapshotMatrices {
        let cols = y.ncols();
        SnapshotMatrices {
            x: DMatrix::zeros(4, cols),
            x_next: s.clone(),
            s,
            y,
            layout: toy_layout(),
            dt: 0.1,
        }
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = truncated_svd(&DMatrix::identity(3, 3), RankSpec::Rank(3)).unwrap();
        assert_eq!(svd.rank(), 3);
        for s in svd.sigma.iter() {
            assert_relative_eq!(*s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_singular_values_are_dropped() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1e-15]));
        let svd = truncated_svd(&m, RankSpec::Rank(3)).unwrap();
        assert_eq!(svd.rank(), 2);
        assert_relative_eq!(svd.sigma[0], 3.0);
        assert_relative_eq!(svd.sigma[1], 2.0);
    }

    #[test]
    fn constructed_rank_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(10, 4, &mut rng) * random_matrix(4, 6, &mut rng);
        let svd = truncated_svd(&m, RankSpec::Rank(6)).unwrap();
        assert_eq!(svd.rank(), 4);
    }

    #[test]
    fn truncation_residual_is_next_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(8, 6, &mut rng);
        let full = truncated_svd(&m, RankSpec::Rank(6)).unwrap();
        let r = 3;
        let truncated = truncated_svd(&m, RankSpec::Rank(r)).unwrap();
        let residual = &m - truncated.reconstruct();
        let spectral = residual.svd(false, false).singular_values[0];
        assert!((spectral - full.sigma[r]).abs() <= 1e-9 * full.sigma[0]);
    }

    #[test]
    fn factors_have_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(9, 5, &mut rng);
        let svd = truncated_svd(&m, RankSpec::Rank(4)).unwrap();
        let gram_u = svd.u.transpose() * &svd.u;
        let gram_v = svd.v.transpose() * &svd.v;
        let identity = DMatrix::identity(4, 4);
        assert!((gram_u - &identity).norm() < 1e-10);
        assert!((gram_v - &identity).norm() < 1e-10);
    }

    #[test]
    fn energy_threshold_selects_rank() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 0.0]));
        let half = truncated_svd(&m, RankSpec::EnergyThreshold(0.5)).unwrap();
        assert_eq!(half.rank(), 1);
        let most = truncated_svd(&m, RankSpec::EnergyThreshold(0.9)).unwrap();
        assert_eq!(most.rank(), 2);
        assert!(truncated_svd(&m, RankSpec::EnergyThreshold(1.5)).is_err());
    }

    #[test]
    fn oversized_rank_is_rejected() {
        let m = DMatrix::identity(3, 3);
        assert!(matches!(
            truncated_svd(&m, RankSpec::Rank(4)),
            Err(CoreError::RankTooLarge {
                requested: 4,
                max: 3
            })
        ));
    }

    #[test]
    fn zero_matrix_is_rank_deficient() {
        let m = DMatrix::zeros(3, 3);
        assert!(matches!(
            truncated_svd(&m, RankSpec::Rank(2)),
            Err(CoreError::RankDeficient)
        ));
    }

    #[test]
    fn identity_control_matrix_returns_displacements() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_matrix(4, 8, &mut rng);
        let mats = mats_from(DMatrix::identity(8, 8), s.clone());
        let model = estimate_k(&mats, RankSpec::Rank(8), Dynamics::Standard).unwrap();
        assert!((model.k - s).norm() < 1e-12);
    }

    #[test]
    fn zero_displacements_give_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_matrix(8, 12, &mut rng);
        let mats = mats_from(y, DMatrix::zeros(4, 12));
        let model = estimate_k(&mats, RankSpec::Rank(8), Dynamics::Standard).unwrap();
        assert!(model.k.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_control_matrix_is_rejected() {
        let mats = mats_from(DMatrix::zeros(8, 12), DMatrix::zeros(4, 12));
        assert!(matches!(
            estimate_k(&mats, RankSpec::Rank(8), Dynamics::Standard),
            Err(CoreError::NoObservableSignal)
        ));
    }

    #[test]
    fn known_interaction_matrix_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k0 = random_matrix(4, 8, &mut rng);
        let y = random_matrix(8, 49, &mut rng);
        let s = &k0 * &y;
        let mats = mats_from(y, s);
        let model = estimate_k(&mats, RankSpec::Rank(8), Dynamics::Standard).unwrap();
        assert_eq!(model.rank, 8);
        assert!((&model.k - &k0).norm() / k0.norm() <= 1e-8);
    }

    #[test]
    fn residual_is_non_increasing_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_matrix(8, 20, &mut rng);
        let s = random_matrix(4, 20, &mut rng);
        let mats = mats_from(y, s);
        let mut previous = f64::INFINITY;
        for r in 1..=8 {
            let model = estimate_k(&mats, RankSpec::Rank(r), Dynamics::Standard).unwrap();
            let residual = (&mats.s - &model.k * &mats.y).norm();
            assert!(residual <= previous + 1e-12);
            previous = residual;
        }
    }

    #[test]
    fn scaling_dynamics_has_eigenvalue_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(5, 12, &mut rng);
        let x_next = &x * 2.0;
        let modes = dmd_modes(&x, &x_next, RankSpec::Rank(5)).unwrap();
        for lambda in &modes.eigenvalues {
            assert!((lambda - Complex::new(2.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn rotation_dynamics_has_conjugate_unit_eigenvalues() {
        let alpha = 0.7f64;
        let rotation =
            DMatrix::from_row_slice(2, 2, &[alpha.cos(), -alpha.sin(), alpha.sin(), alpha.cos()]);
        let mut cols = vec![DVector::from_vec(vec![1.0, 0.0])];
        for k in 1..20 {
            let next = &rotation * &cols[k - 1];
            cols.push(next);
        }
        let x = DMatrix::from_fn(2, 19, |i, j| cols[j][i]);
        let x_next = DMatrix::from_fn(2, 19, |i, j| cols[j + 1][i]);
        let modes = dmd_modes(&x, &x_next, RankSpec::Rank(2)).unwrap();
        let mut expected = vec![
            Complex::new(alpha.cos(), alpha.sin()),
            Complex::new(alpha.cos(), -alpha.sin()),
        ];
        for lambda in &modes.eigenvalues {
            let hit = expected
                .iter()
                .position(|e| (e - lambda).norm() < 1e-8)
                .expect("eigenvalue should match a rotation eigenvalue");
            expected.remove(hit);
        }
        // Reduced eigen residual under the stated bound.
        let reduced_c = modes.reduced.map(|v| Complex::new(v, 0.0));
        for (idx, lambda) in modes.eigenvalues.iter().enumerate() {
            let w = modes.reduced_modes.column(idx);
            let residual = &reduced_c * w - w * *lambda;
            assert!(residual.norm() < 1e-8);
        }
    }

    #[test]
    fn rank_one_data_yields_single_mode() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = &u * v.transpose();
        let x_next = &x * 2.0;
        let modes = dmd_modes(&x, &x_next, RankSpec::Rank(1)).unwrap();
        assert_eq!(modes.eigenvalues.len(), 1);
        assert!((modes.eigenvalues[0] - Complex::new(2.0, 0.0)).norm() < 1e-8);
        assert_eq!(modes.modes.ncols(), 1);
    }

    #[test]
    fn prediction_follows_discrete_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(4, 10, &mut rng);
        let x_next = &x * 2.0;
        let modes = dmd_modes(&x, &x_next, RankSpec::Rank(4)).unwrap();
        let x0 = x.column(0).into_owned();
        let predicted = modes.predict(&x0, 3).unwrap();
        for (k, state) in predicted.iter().enumerate() {
            let expected = &x0 * 2.0f64.powi(k as i32);
            assert!((state - &expected).norm() < 1e-6 * expected.norm());
        }
    }

    #[test]
    fn influence_rows_match_fitted_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let k0 = random_matrix(4, 8, &mut rng);
        let y = random_matrix(8, 30, &mut rng);
        let s = &k0 * &y;
        let mats = mats_from(y, s);
        let model = estimate_k(&mats, RankSpec::Rank(6), Dynamics::Standard).unwrap();
        let rows = influence_rows(&model, &mats).unwrap();
        assert_eq!(rows.len(), 4);
        for (i, row) in rows.iter().enumerate() {
            assert!((row - model.k.row(i).transpose()).norm() <= 1e-9 * row.norm().max(1e-300));
        }
    }

    #[test]
    fn zero_displacements_give_zero_influence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = random_matrix(8, 12, &mut rng);
        let mats = mats_from(y, DMatrix::zeros(4, 12));
        let model = estimate_k(&mats, RankSpec::Rank(4), Dynamics::Standard).unwrap();
        for row in influence_rows(&model, &mats).unwrap() {
            assert!(row.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn influence_flags_largest_entry_at_correlated_feature() {
        // Displacement row 0 is driven purely by one feature row: the fitted
        // model and its row diagnostic must both point there.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut y = random_matrix(8, 30, &mut rng);
        let driver = 5;
        for c in 0..30 {
            y[(driver, c)] *= 10.0;
        }
        let mut k_true = DMatrix::zeros(4, 8);
        k_true[(0, driver)] = 3.0;
        let s = &k_true * &y;
        let mats = mats_from(y, s);
        let model = estimate_k(&mats, RankSpec::Rank(8), Dynamics::Standard).unwrap();
        let rows = influence_rows(&model, &mats).unwrap();
        let best = rows[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(best, driver);
    }

    #[test]
    fn default_layouts_match_formulations() {
        let n = 5;
        assert_eq!(
            Dynamics::Standard.default_layout(n).kinds(),
            &[
                FeatureKind::Position,
                FeatureKind::Velocity,
                FeatureKind::Heading,
                FeatureKind::RelDistance
            ]
        );
        assert_eq!(
            Dynamics::FoCartesian.default_layout(n).kinds(),
            &[FeatureKind::RelPosition, FeatureKind::RelVelocity]
        );
        assert_eq!(
            Dynamics::FoPolar.default_layout(n).kinds(),
            &[
                FeatureKind::RelDistance,
                FeatureKind::RelSpeed,
                FeatureKind::RelHeading
            ]
        );
        for d in Dynamics::ALL {
            assert_eq!(d.as_str().parse::<Dynamics>().unwrap(), d);
        }
    }

    #[test]
    fn drift_is_zero_for_standard_and_carries_velocity_for_first_order() {
        let v = Vector2::new(0.3, -0.4);
        let dt = 0.1;
        assert_eq!(
            Dynamics::Standard.drift_displacement(&v, dt),
            Vector2::zeros()
        );
        let cart = Dynamics::FoCartesian.drift_displacement(&v, dt);
        assert_eq!(cart, v * dt);
        // Speed times direction is the same vector written in polar form.
        let polar = Dynamics::FoPolar.drift_displacement(&v, dt);
        assert_relative_eq!(polar.x, cart.x, epsilon = 1e-15);
        assert_relative_eq!(polar.y, cart.y, epsilon = 1e-15);
        // A resting agent contributes nothing in any formulation.
        let rest = Vector2::zeros();
        for d in Dynamics::ALL {
            assert_eq!(d.drift_displacement(&rest, dt), Vector2::zeros());
        }
    }

    #[test]
    fn feature_velocities_are_forward_except_polar() {
        assert_eq!(
            Dynamics::Standard.velocity_estimator(),
            VelocityEstimator::Forward
        );
        assert_eq!(
            Dynamics::FoCartesian.velocity_estimator(),
            VelocityEstimator::Forward
        );
        assert_eq!(
            Dynamics::FoPolar.velocity_estimator(),
            VelocityEstimator::Backward
        );
    }

    /// Matrices whose `x`/`x_next`/`s` triple is internally consistent, as
    /// the assembly stage guarantees.
    fn consistent_mats(seed: u64, t: usize) -> SnapshotMatrices {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_full = random_matrix(4, t, &mut rng);
        let x = x_full.columns(0, t - 1).into_owned();
        let x_next = x_full.columns(1, t - 1).into_owned();
        let s = &x_next - &x;
        let y = random_matrix(8, t - 1, &mut rng);
        SnapshotMatrices {
            x,
            x_next,
            s,
            y,
            layout: toy_layout(),
            dt: 0.1,
        }
    }

    #[test]
    fn fit_target_for_standard_dynamics_is_the_raw_displacement() {
        let mats = consistent_mats(41, 6);
        assert_eq!(fit_target(&mats, Dynamics::Standard), mats.s);
    }

    #[test]
    fn fit_target_for_first_order_dynamics_removes_the_carried_step() {
        let mats = consistent_mats(43, 6);
        let target = fit_target(&mats, Dynamics::FoCartesian);
        let scale = mats.s.norm();
        // Column 0 has only the forward-difference estimate, which cancels
        // the whole displacement.
        assert!(target.column(0).norm() < 1e-14 * scale.max(1.0));
        // Later columns subtract the previous step's displacement.
        for k in 1..target.ncols() {
            let expected = mats.s.column(k) - mats.s.column(k - 1);
            assert!((target.column(k) - expected).norm() < 1e-13 * scale.max(1.0));
        }
        // The polar drift is the same vector in polar form.
        let polar = fit_target(&mats, Dynamics::FoPolar);
        assert!((&polar - &target).norm() < 1e-13 * scale.max(1.0));
    }
}
