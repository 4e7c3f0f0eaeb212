//! Evaluation metrics: position/heading error series, polarisation,
//! angular momentum, neighbour-density grids, and summary statistics.
//!
//! Series metrics derive velocities from positions by forward differences,
//! applying the same functional to ground truth and reconstruction so the
//! two sides stay comparable.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Vector2};

use crate::angle::angle_diff;
use crate::error::CoreError;
use crate::observables::velocity_from_positions;
use crate::trajectory::SwarmTrajectory;

/// Which quantity a series tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    PositionError,
    HeadingError,
    Polarisation,
    AngularMomentum,
    PolarisationError,
    AngularMomentumError,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::PositionError => "position_error",
            MetricKind::HeadingError => "heading_error",
            MetricKind::Polarisation => "polarisation",
            MetricKind::AngularMomentum => "angular_momentum",
            MetricKind::PolarisationError => "polarisation_error",
            MetricKind::AngularMomentumError => "angular_momentum_error",
        }
    }

    /// The error-series counterpart of an observable series.
    pub fn error_kind(&self) -> MetricKind {
        match self {
            MetricKind::Polarisation => MetricKind::PolarisationError,
            MetricKind::AngularMomentum => MetricKind::AngularMomentumError,
            other => *other,
        }
    }
}

/// A finite, strictly time-increasing scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub metric: MetricKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(metric: MetricKind, times: Vec<f64>, values: Vec<f64>) -> Result<Self, CoreError> {
        if times.len() != values.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "series has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::MisalignedTrajectories(
                "series times must be strictly increasing".to_string(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParams(
                "series values must be finite".to_string(),
            ));
        }
        Ok(Self {
            metric,
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Index pairs of snapshots sharing the same instant.
fn aligned_indices(
    truth: &SwarmTrajectory,
    test: &SwarmTrajectory,
) -> Result<Vec<(usize, usize)>, CoreError> {
    if (truth.dt() - test.dt()).abs() > 1e-9 * truth.dt() {
        return Err(CoreError::MisalignedTrajectories(format!(
            "time steps differ: {} vs {}",
            truth.dt(),
            test.dt()
        )));
    }
    if truth.agent_count() != test.agent_count() {
        return Err(CoreError::MisalignedTrajectories(format!(
            "agent counts differ: {} vs {}",
            truth.agent_count(),
            test.agent_count()
        )));
    }
    let dt = truth.dt();
    let offset = (test.start_time() - truth.start_time()) / dt;
    let rounded = offset.round();
    if (offset - rounded).abs() > 1e-6 {
        return Err(CoreError::MisalignedTrajectories(format!(
            "start times are off-grid by {} steps",
            offset - rounded
        )));
    }
    let offset = rounded as i64;
    let mut pairs = Vec::new();
    for j in 0..test.len() as i64 {
        let i = offset + j;
        if i >= 0 && (i as usize) < truth.len() {
            pairs.push((i as usize, j as usize));
        }
    }
    if pairs.is_empty() {
        return Err(CoreError::MisalignedTrajectories(
            "trajectories share no common instants".to_string(),
        ));
    }
    Ok(pairs)
}

/// Mean over agents of the Euclidean distance between reconstructed and
/// true positions, at every shared instant.
pub fn position_error(
    truth: &SwarmTrajectory,
    test: &SwarmTrajectory,
) -> Result<MetricSeries, CoreError> {
    let pairs = aligned_indices(truth, test)?;
    let n = truth.agent_count() as f64;
    let mut times = Vec::with_capacity(pairs.len());
    let mut values = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let a = truth.snapshot(i);
        let b = test.snapshot(j);
        let sum: f64 = a
            .agents
            .iter()
            .zip(&b.agents)
            .map(|(x, y)| (y.position - x.position).norm())
            .sum();
        times.push(a.time);
        values.push(sum / n);
    }
    MetricSeries::new(MetricKind::PositionError, times, values)
}

/// Mean over agents of the wrapped absolute heading difference, in
/// `[0, pi]`, at every shared instant.
pub fn heading_error(
    truth: &SwarmTrajectory,
    test: &SwarmTrajectory,
) -> Result<MetricSeries, CoreError> {
    let pairs = aligned_indices(truth, test)?;
    let n = truth.agent_count() as f64;
    let mut times = Vec::with_capacity(pairs.len());
    let mut values = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let a = truth.snapshot(i);
        let b = test.snapshot(j);
        let sum: f64 = a
            .agents
            .iter()
            .zip(&b.agents)
            .map(|(x, y)| angle_diff(y.heading, x.heading).abs())
            .sum();
        times.push(a.time);
        values.push(sum / n);
    }
    MetricSeries::new(MetricKind::HeadingError, times, values)
}

/// Normalised magnitude of the summed velocities, in `[0, 1]`; `None` when
/// every velocity is zero (undefined rather than zero).
pub fn polarisation(velocities: &[Vector2<f64>]) -> Option<f64> {
    let total: Vector2<f64> = velocities.iter().sum();
    let denom: f64 = velocities.iter().map(|v| v.norm()).sum();
    if denom == 0.0 {
        return None;
    }
    Some(total.norm() / denom)
}

/// Reference point for the angular-momentum metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Positions used exactly as given (the literal definition).
    #[default]
    Origin,
    /// Positions taken relative to the swarm centroid.
    Centroid,
}

/// Normalised magnitude of the summed position-velocity cross products
/// (z-components), in `[0, 1]`; `None` when every `|p||v|` term vanishes.
pub fn angular_momentum(
    positions: &[Vector2<f64>],
    velocities: &[Vector2<f64>],
    centering: Centering,
) -> Option<f64> {
    let reference = match centering {
        Centering::Origin => Vector2::new(0.0, 0.0),
        Centering::Centroid => {
            let sum: Vector2<f64> = positions.iter().sum();
            sum / positions.len() as f64
        }
    };
    let mut cross = 0.0;
    let mut denom = 0.0;
    for (p, v) in positions.iter().zip(velocities) {
        let q = p - reference;
        cross += q.x * v.y - q.y * v.x;
        denom += q.norm() * v.norm();
    }
    if denom == 0.0 {
        return None;
    }
    Some(cross.abs() / denom)
}

/// Per-snapshot polarisation of a trajectory, with undefined samples
/// (all-zero velocities) skipped.
pub fn polarisation_series(traj: &SwarmTrajectory) -> Result<MetricSeries, CoreError> {
    let velocities = velocity_from_positions(traj)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, snap) in traj.snapshots().iter().enumerate() {
        if let Some(p) = polarisation(&velocities[k]) {
            times.push(snap.time);
            values.push(p);
        }
    }
    MetricSeries::new(MetricKind::Polarisation, times, values)
}

/// Per-snapshot angular momentum of a trajectory, with undefined samples
/// skipped.
pub fn angular_momentum_series(
    traj: &SwarmTrajectory,
    centering: Centering,
) -> Result<MetricSeries, CoreError> {
    let velocities = velocity_from_positions(traj)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, snap) in traj.snapshots().iter().enumerate() {
        if let Some(m) = angular_momentum(&snap.positions(), &velocities[k], centering) {
            times.push(snap.time);
            values.push(m);
        }
    }
    MetricSeries::new(MetricKind::AngularMomentum, times, values)
}

/// Absolute difference between two series of the same kind at their shared
/// instants.
pub fn metric_error_series(
    truth: &MetricSeries,
    test: &MetricSeries,
) -> Result<MetricSeries, CoreError> {
    if truth.metric != test.metric {
        return Err(CoreError::MisalignedTrajectories(format!(
            "cannot difference {} against {}",
            truth.metric.as_str(),
            test.metric.as_str()
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut j = 0usize;
    for (i, &t) in truth.times.iter().enumerate() {
        let tol = 1e-9 * t.abs().max(1.0);
        while j < test.times.len() && test.times[j] < t - tol {
            j += 1;
        }
        if j < test.times.len() && (test.times[j] - t).abs() <= tol {
            times.push(t);
            values.push((truth.values[i] - test.values[j]).abs());
            j += 1;
        }
    }
    if times.is_empty() {
        return Err(CoreError::MisalignedTrajectories(
            "series share no common instants".to_string(),
        ));
    }
    MetricSeries::new(truth.metric.error_kind(), times, values)
}

/// Frame in which neighbour offsets are binned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridFrame {
    /// Offsets taken in world axes about the focal agent.
    #[default]
    WorldAligned,
    /// Offsets rotated into the focal agent's heading frame.
    HeadingAligned,
}

/// Square binning grid centered on the focal agent: `n_bins` bins per axis
/// whose centers sit `spacing` apart, each `width` wide (gaps appear when
/// `width < spacing`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_bins: usize,
    pub spacing: f64,
    pub width: f64,
    pub frame: GridFrame,
}

impl GridSpec {
    /// Contiguous 21x21 grid reaching two interaction radii out from the
    /// focal agent.
    pub fn for_radius(interaction_radius: f64) -> Self {
        let n_bins = 21;
        let spacing = 4.0 * interaction_radius / n_bins as f64;
        Self {
            n_bins,
            spacing,
            width: spacing,
            frame: GridFrame::WorldAligned,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_bins == 0 {
            return Err(CoreError::InvalidParams(
                "density grid needs at least one bin".to_string(),
            ));
        }
        if !(self.spacing > 0.0) || !(self.width > 0.0) || self.width > self.spacing {
            return Err(CoreError::InvalidParams(format!(
                "density grid needs 0 < width <= spacing, got width {} spacing {}",
                self.width, self.spacing
            )));
        }
        Ok(())
    }

    /// Center coordinate of bin `m` along one axis.
    fn center(&self, m: usize) -> f64 {
        (m as f64 - (self.n_bins as f64 - 1.0) / 2.0) * self.spacing
    }

    /// Half-extent of the covered neighbourhood square.
    fn extent(&self) -> f64 {
        (self.n_bins as f64 - 1.0) / 2.0 * self.spacing + self.width / 2.0
    }

    /// Bin index along one axis for a coordinate, honouring gaps; bins are
    /// half-open `[center - width/2, center + width/2)`.
    fn bin_of(&self, coord: f64) -> Option<usize> {
        let first_low = self.center(0) - self.width / 2.0;
        let m = ((coord - first_low) / self.spacing).floor();
        if m < 0.0 || m >= self.n_bins as f64 {
            return None;
        }
        let m = m as usize;
        let low = self.center(m) - self.width / 2.0;
        (coord >= low && coord < low + self.width).then_some(m)
    }
}

/// Time-and-agent averaged neighbour occupancy fractions; cell `(row, col)`
/// covers y-bin `row` and x-bin `col`, indices ascending with coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub cells: DMatrix<f64>,
    /// Number of (agent, time) samples that had at least one neighbour;
    /// zero means the grid is all-zero and should be treated as a warning.
    pub samples: usize,
}

impl DensityGrid {
    pub fn mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / (self.cells.len() as f64)
    }
}

/// Bins every neighbour of every focal agent over the snapshots whose time
/// lies in `[t_start, t_end]`: per (agent, time) sample the counts are
/// normalised by the number of neighbours inside the covered square, then
/// averaged over all samples that saw at least one neighbour.
pub fn neighbor_density(
    traj: &SwarmTrajectory,
    t_start: f64,
    t_end: f64,
    spec: &GridSpec,
) -> Result<DensityGrid, CoreError> {
    spec.validate()?;
    let n = traj.agent_count();
    let extent = spec.extent();
    let mut accumulated = DMatrix::zeros(spec.n_bins, spec.n_bins);
    let mut sample = DMatrix::zeros(spec.n_bins, spec.n_bins);
    let mut samples = 0usize;
    let tol = 1e-9 * traj.dt();
    for snap in traj.snapshots() {
        if snap.time < t_start - tol || snap.time > t_end + tol {
            continue;
        }
        for i in 0..n {
            let focal = &snap.agents[i];
            sample.fill(0.0);
            let mut total = 0usize;
            for (j, other) in snap.agents.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = other.position - focal.position;
                let offset = match spec.frame {
                    GridFrame::WorldAligned => d,
                    GridFrame::HeadingAligned => {
                        let (sin, cos) = focal.heading.sin_cos();
                        Vector2::new(d.x * cos + d.y * sin, -d.x * sin + d.y * cos)
                    }
                };
                if offset.x.abs() > extent || offset.y.abs() > extent {
                    continue;
                }
                total += 1;
                if let (Some(mx), Some(my)) = (spec.bin_of(offset.x), spec.bin_of(offset.y)) {
                    sample[(my, mx)] += 1.0;
                }
            }
            if total > 0 {
                accumulated += &sample / total as f64;
                samples += 1;
            }
        }
    }
    if samples > 0 {
        accumulated /= samples as f64;
    }
    Ok(DensityGrid {
        spec: *spec,
        cells: accumulated,
        samples,
    })
}

/// Post-training survival time of [`summarize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeBelow {
    /// Seconds from the training end to the first sample exceeding the
    /// threshold.
    Bounded(f64),
    /// The threshold was never exceeded within the series.
    Unbounded,
}

/// Training mean plus post-training survival time of a metric series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub train_mean: f64,
    pub time_below: TimeBelow,
}

/// Mean of the values at `t <= train_end`, and the time until the first
/// post-training sample exceeds `threshold` (unbounded when none does).
pub fn summarize(
    series: &MetricSeries,
    train_end: f64,
    threshold: f64,
) -> Result<Summary, CoreError> {
    let tol = 1e-9 * train_end.abs().max(1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, v) in series.times.iter().zip(&series.values) {
        if *t <= train_end + tol {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(CoreError::EmptySeries);
    }
    let mut time_below = TimeBelow::Unbounded;
    for (t, v) in series.times.iter().zip(&series.values) {
        if *t > train_end + tol && *v > threshold {
            time_below = TimeBelow::Bounded(t - train_end);
            break;
        }
    }
    Ok(Summary {
        train_mean: sum / count as f64,
        time_below,
    })
}
