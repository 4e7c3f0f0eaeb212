//! The experiment pipeline: simulate (or load) -> preprocess -> fit ->
//! rollout -> score -> emit artifacts, plus the concurrent suite runner.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use swarmdmd::dmd::{estimate_k, Dynamics, InteractionModel, RankSpec};
use swarmdmd::metrics::{
    angular_momentum_series, heading_error, metric_error_series, neighbor_density,
    polarisation_series, position_error, summarize, DensityGrid, GridSpec, MetricKind,
    MetricSeries,
};
use swarmdmd::observables::{assemble_matrices_with, FeatureLayout};
use swarmdmd::rollout::{
    reconstruct_and_predict, rollout_fo_cartesian, rollout_fo_polar, rollout_with_reinit,
    RolloutConfig, RolloutResult,
};
use swarmdmd::trajectory::SwarmTrajectory;
use swarmdmd::vicsek::simulate;

use crate::config::{Experiment, Preprocess, RawConfig, RolloutSpec};
use crate::io::{
    fmt_f64, save_grid, save_model, save_series, save_summary, save_trajectory, SuiteRow,
    SummaryRow,
};
use crate::svg;

/// A pipeline failure with the stage it occurred in.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn at_stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

/// How far through the pipeline a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Truth trajectory only.
    Simulate,
    /// Through model fitting.
    Fit,
    /// Through propagation.
    Rollout,
    /// Through metrics, without charts.
    Score,
    /// Everything, including charts.
    Full,
}

/// Everything the scoring stage computes.
#[derive(Debug, Clone)]
pub struct Scores {
    pub position_error: MetricSeries,
    pub heading_error: MetricSeries,
    pub polarisation_truth: MetricSeries,
    pub polarisation_test: MetricSeries,
    pub polarisation_error: MetricSeries,
    pub momentum_truth: MetricSeries,
    pub momentum_test: MetricSeries,
    pub momentum_error: MetricSeries,
    pub density_truth: DensityGrid,
    pub density_test: DensityGrid,
    pub summary: SummaryRow,
    /// Reinit mode only: per-start position-error series.
    pub per_rollout_errors: Vec<(f64, MetricSeries)>,
    /// Reinit mode only: mean position error as a function of time since
    /// restart, averaged over all rollouts that reach each elapsed step.
    pub reinit_average: Option<MetricSeries>,
}

fn steps_of(duration: f64, dt: f64, what: &'static str) -> Result<usize, PipelineError> {
    let exact = duration / dt;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(PipelineError {
            stage: "prepare",
            message: format!("{what} {duration} is not a multiple of the time step {dt}"),
        });
    }
    Ok(rounded as usize)
}

fn apply_preprocess(
    traj: SwarmTrajectory,
    pp: &Preprocess,
) -> Result<SwarmTrajectory, PipelineError> {
    let stage = at_stage::<swarmdmd::CoreError>("preprocess");
    let mut traj = traj;
    if pp.warmup > 0.0 {
        let skip = steps_of(pp.warmup, traj.dt(), "warmup")?;
        if skip + 2 > traj.len() {
            return Err(PipelineError {
                stage: "preprocess",
                message: format!(
                    "warmup of {skip} steps leaves fewer than two of {} snapshots",
                    traj.len()
                ),
            });
        }
        traj = traj.window(skip, traj.len() - skip).map_err(stage)?;
    }
    let stage = at_stage::<swarmdmd::CoreError>("preprocess");
    if let Some(n) = pp.subsample_to {
        traj = traj.subsample_agents(n, pp.subsample_seed).map_err(stage)?;
    }
    let stage = at_stage::<swarmdmd::CoreError>("preprocess");
    if let Some(target) = pp.interpolate_dt {
        traj = traj.interpolate(target).map_err(stage)?;
    }
    Ok(traj)
}

/// Simulates (or loads) the raw trajectory and applies the configured
/// preprocessing, then restricts it to the scored span.
pub fn prepare_truth(exp: &Experiment) -> Result<SwarmTrajectory, PipelineError> {
    let raw = match &exp.trajectory {
        Some(path) => crate::io::load_trajectory(path).map_err(at_stage("load"))?,
        None => {
            let warmup = exp.preprocess.as_ref().map_or(0.0, |p| p.warmup);
            simulate(
                &exp.params,
                &exp.domain,
                exp.scenario.variant(),
                warmup + exp.span(),
            )
            .map_err(at_stage("simulate"))?
        }
    };
    let truth = match &exp.preprocess {
        Some(pp) => apply_preprocess(raw, pp)?,
        None => raw,
    };
    let span_steps = steps_of(exp.span(), truth.dt(), "train + predict span")?;
    if span_steps + 1 > truth.len() {
        return Err(PipelineError {
            stage: "prepare",
            message: format!(
                "trajectory has {} snapshots but the span needs {}",
                truth.len(),
                span_steps + 1
            ),
        });
    }
    truth.window(0, span_steps + 1).map_err(at_stage("prepare"))
}

/// The training prefix of the truth trajectory.
pub fn training_window(
    exp: &Experiment,
    truth: &SwarmTrajectory,
) -> Result<SwarmTrajectory, PipelineError> {
    let steps = steps_of(exp.train_duration, truth.dt(), "train_duration")?;
    if steps + 1 > truth.len() {
        return Err(PipelineError {
            stage: "prepare",
            message: format!(
                "training needs {} snapshots but the trajectory has {}",
                steps + 1,
                truth.len()
            ),
        });
    }
    truth.window(0, steps + 1).map_err(at_stage("prepare"))
}

/// The feature layout this experiment trains with.
pub fn resolve_layout(exp: &Experiment, n_agents: usize) -> Result<FeatureLayout, PipelineError> {
    let layout = match &exp.layout_kinds {
        Some(kinds) => FeatureLayout::new(kinds.clone(), n_agents).map_err(at_stage("fit"))?,
        None => exp.dynamics.default_layout(n_agents),
    };
    Ok(layout.with_signed_relatives(exp.signed_relatives))
}

/// Assembles the training matrices and fits the interaction matrix.
pub fn fit(exp: &Experiment, train: &SwarmTrajectory) -> Result<InteractionModel, PipelineError> {
    let layout = resolve_layout(exp, train.agent_count())?;
    let mats = assemble_matrices_with(train, &layout, exp.dynamics.velocity_estimator())
        .map_err(at_stage("fit"))?;
    estimate_k(&mats, RankSpec::Rank(exp.rank), exp.dynamics).map_err(at_stage("fit"))
}

/// Propagates the model per the configured schedule.
///
/// Basic mode depends on the formulation. Standard dynamics reconstruct
/// the training window teacher-forced — the interaction features are the
/// training columns themselves — and then continue closed-loop through the
/// prediction horizon; their forward-difference velocity features are not
/// available to a closed loop, so this is the evaluation under which the
/// training-window error is a fit-residual measurement. The first-order
/// formulations propagate closed-loop from the training start: their drift
/// makes the state self-propelled and their training-window error is a
/// stability measurement, which is why it can grow before prediction
/// begins. Reinit mode restarts closed-loop rollouts from the ground truth
/// on the configured schedule for every formulation.
pub fn run_rollout(
    exp: &Experiment,
    model: &InteractionModel,
    truth: &SwarmTrajectory,
) -> Result<RolloutResult, PipelineError> {
    match exp.rollout {
        RolloutSpec::Basic => {
            let rolled = match model.dynamics {
                Dynamics::Standard => {
                    let window = training_window(exp, truth)?;
                    let predict = truth.duration() - window.duration();
                    reconstruct_and_predict(model, &window, predict).map_err(at_stage("rollout"))?
                }
                Dynamics::FoCartesian => {
                    let window = truth.window(0, 2).map_err(at_stage("rollout"))?;
                    rollout_fo_cartesian(model, &window, truth.duration())
                        .map_err(at_stage("rollout"))?
                }
                Dynamics::FoPolar => {
                    let window = truth.window(0, 2).map_err(at_stage("rollout"))?;
                    rollout_fo_polar(model, &window, truth.duration())
                        .map_err(at_stage("rollout"))?
                }
            };
            Ok(RolloutResult {
                dynamics: model.dynamics,
                rollouts: vec![rolled],
            })
        }
        RolloutSpec::Reinit { period, horizon } => {
            let config = RolloutConfig::reinit(period, horizon);
            rollout_with_reinit(model, truth, &config).map_err(at_stage("rollout"))
        }
    }
}

/// Mean across rollouts of the error at each elapsed time since restart.
fn elapsed_aligned_average(per_rollout: &[(f64, MetricSeries)], dt: f64) -> Option<MetricSeries> {
    let longest = per_rollout.iter().map(|(_, s)| s.len()).max()?;
    let mut times = Vec::with_capacity(longest);
    let mut values = Vec::with_capacity(longest);
    for k in 0..longest {
        let samples: Vec<f64> = per_rollout
            .iter()
            .filter_map(|(_, s)| s.values.get(k).copied())
            .collect();
        if samples.is_empty() {
            break;
        }
        times.push(k as f64 * dt);
        values.push(samples.iter().sum::<f64>() / samples.len() as f64);
    }
    MetricSeries::new(MetricKind::PositionError, times, values).ok()
}

/// Computes the full metric suite against the truth trajectory.
pub fn score(
    exp: &Experiment,
    truth: &SwarmTrajectory,
    result: &RolloutResult,
) -> Result<Scores, PipelineError> {
    let stage = "score";
    let test = &result
        .rollouts
        .first()
        .ok_or_else(|| PipelineError {
            stage,
            message: "rollout produced no trajectories".into(),
        })?
        .trajectory;

    let e_x = position_error(truth, test).map_err(at_stage(stage))?;
    let e_theta = heading_error(truth, test).map_err(at_stage(stage))?;
    let pol_truth = polarisation_series(truth).map_err(at_stage(stage))?;
    let pol_test = polarisation_series(test).map_err(at_stage(stage))?;
    let e_p = metric_error_series(&pol_truth, &pol_test).map_err(at_stage(stage))?;
    let mom_truth =
        angular_momentum_series(truth, exp.momentum_centering).map_err(at_stage(stage))?;
    let mom_test =
        angular_momentum_series(test, exp.momentum_centering).map_err(at_stage(stage))?;
    let e_m = metric_error_series(&mom_truth, &mom_test).map_err(at_stage(stage))?;

    let grid_spec = GridSpec::for_radius(exp.params.interaction_radius);
    let density_truth =
        neighbor_density(truth, 0.0, exp.train_duration, &grid_spec).map_err(at_stage(stage))?;
    let density_test =
        neighbor_density(test, 0.0, exp.train_duration, &grid_spec).map_err(at_stage(stage))?;

    let train_end = exp.train_duration;
    let threshold = exp.threshold;
    let sx = summarize(&e_x, train_end, threshold).map_err(at_stage(stage))?;
    let stheta = summarize(&e_theta, train_end, threshold).map_err(at_stage(stage))?;
    let sp = summarize(&e_p, train_end, threshold).map_err(at_stage(stage))?;
    let sm = summarize(&e_m, train_end, threshold).map_err(at_stage(stage))?;
    let summary = SummaryRow {
        name: exp.name.clone(),
        interaction_radius: exp.params.interaction_radius,
        noise: exp.params.noise,
        e_x: sx.train_mean,
        e_theta: stheta.train_mean,
        e_p: sp.train_mean,
        e_m: sm.train_mean,
        t_x: sx.time_below,
        t_theta: stheta.time_below,
        t_p: sp.time_below,
        t_m: sm.time_below,
    };

    let mut per_rollout_errors = Vec::new();
    let mut reinit_average = None;
    if matches!(exp.rollout, RolloutSpec::Reinit { .. }) {
        for rolled in &result.rollouts {
            let series = position_error(truth, &rolled.trajectory).map_err(at_stage(stage))?;
            per_rollout_errors.push((rolled.start_time, series));
        }
        reinit_average = elapsed_aligned_average(&per_rollout_errors, truth.dt());
    }

    Ok(Scores {
        position_error: e_x,
        heading_error: e_theta,
        polarisation_truth: pol_truth,
        polarisation_test: pol_test,
        polarisation_error: e_p,
        momentum_truth: mom_truth,
        momentum_test: mom_test,
        momentum_error: e_m,
        density_truth,
        density_test,
        summary,
        per_rollout_errors,
        reinit_average,
    })
}

fn write_manifest(exp: &Experiment, out_dir: &Path) -> Result<(), PipelineError> {
    let raw: RawConfig = exp.to_raw();
    let body = toml::to_string(&raw).map_err(at_stage("emit"))?;
    let text = format!(
        "# swarmdmd-cli {} / swarmdmd {}\n# fully-resolved experiment; re-run with: swarmdmd run --config manifest.toml\n{}",
        env!("CARGO_PKG_VERSION"),
        swarmdmd::VERSION,
        body
    );
    std::fs::write(out_dir.join("manifest.toml"), text).map_err(at_stage("emit"))
}

fn rollout_file_name(start_time: f64) -> String {
    format!("rollout_{}.csv", (start_time * 1000.0).round() as i64)
}

fn write_rollouts(result: &RolloutResult, out_dir: &Path) -> Result<(), PipelineError> {
    let mut index = String::from("start_time,file,diverged_at\n");
    for rolled in &result.rollouts {
        let file = rollout_file_name(rolled.start_time);
        save_trajectory(&rolled.trajectory, &out_dir.join(&file)).map_err(at_stage("emit"))?;
        let diverged = rolled.diverged_at.map(fmt_f64).unwrap_or_default();
        index.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(rolled.start_time),
            file,
            diverged
        ));
    }
    std::fs::write(out_dir.join("rollouts_index.csv"), index).map_err(at_stage("emit"))
}

fn write_scores(scores: &Scores, out_dir: &Path) -> Result<(), PipelineError> {
    let stage = at_stage::<crate::io::FileError>("emit");
    let pairs: [(&str, &MetricSeries); 8] = [
        ("position_error.csv", &scores.position_error),
        ("heading_error.csv", &scores.heading_error),
        ("polarisation_truth.csv", &scores.polarisation_truth),
        ("polarisation_test.csv", &scores.polarisation_test),
        ("polarisation_error.csv", &scores.polarisation_error),
        ("angular_momentum_truth.csv", &scores.momentum_truth),
        ("angular_momentum_test.csv", &scores.momentum_test),
        ("angular_momentum_error.csv", &scores.momentum_error),
    ];
    for (file, series) in pairs {
        save_series(series, &out_dir.join(file)).map_err(at_stage("emit"))?;
    }
    save_grid(&scores.density_truth, &out_dir.join("density_truth.csv"))
        .map_err(at_stage("emit"))?;
    save_grid(&scores.density_test, &out_dir.join("density_test.csv")).map_err(at_stage("emit"))?;
    for (start, series) in &scores.per_rollout_errors {
        let file = format!("rollout_error_{}.csv", (start * 1000.0).round() as i64);
        save_series(series, &out_dir.join(file)).map_err(at_stage("emit"))?;
    }
    if let Some(avg) = &scores.reinit_average {
        save_series(avg, &out_dir.join("reinit_error_avg.csv")).map_err(at_stage("emit"))?;
    }
    save_summary(&[SuiteRow::Ok(scores.summary.clone())], out_dir, "summary").map_err(stage)
}

fn write_charts(exp: &Experiment, scores: &Scores, out_dir: &Path) -> Result<(), PipelineError> {
    let errors = [
        ("position error", &scores.position_error),
        ("heading error", &scores.heading_error),
        ("polarisation error", &scores.polarisation_error),
        ("angular momentum error", &scores.momentum_error),
    ];
    svg::write_log_chart(
        &out_dir.join("errors.svg"),
        &format!("{}: reconstruction error", exp.name),
        "time [s]",
        "error (log)",
        &errors,
        Some(exp.train_duration),
    )
    .map_err(at_stage("emit"))?;
    let observables = [
        ("polarisation truth", &scores.polarisation_truth),
        ("polarisation model", &scores.polarisation_test),
        ("momentum truth", &scores.momentum_truth),
        ("momentum model", &scores.momentum_test),
    ];
    svg::write_linear_chart(
        &out_dir.join("observables.svg"),
        &format!("{}: collective observables", exp.name),
        "time [s]",
        "value",
        &observables,
        Some(exp.train_duration),
    )
    .map_err(at_stage("emit"))
}

/// Runs the pipeline up to `stage`, writing each completed stage's artifacts
/// into `out_dir`. Returns the summary row when scoring ran.
pub fn run_experiment(
    exp: &Experiment,
    out_dir: &Path,
    stage: Stage,
) -> Result<Option<SummaryRow>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(at_stage("emit"))?;
    write_manifest(exp, out_dir)?;
    let truth = prepare_truth(exp)?;
    save_trajectory(&truth, &out_dir.join("truth.csv")).map_err(at_stage("emit"))?;
    if stage == Stage::Simulate {
        return Ok(None);
    }
    let train = training_window(exp, &truth)?;
    let model = fit(exp, &train)?;
    save_model(&model, &out_dir.join("model.txt")).map_err(at_stage("emit"))?;
    if stage == Stage::Fit {
        return Ok(None);
    }
    let result = run_rollout(exp, &model, &truth)?;
    write_rollouts(&result, out_dir)?;
    if stage == Stage::Rollout {
        return Ok(None);
    }
    let scores = score(exp, &truth, &result)?;
    write_scores(&scores, out_dir)?;
    if stage == Stage::Full {
        write_charts(exp, &scores, out_dir)?;
    }
    Ok(Some(scores.summary))
}

/// A suite member: a label plus either a resolved experiment or the reason
/// its config could not be resolved.
pub struct SuiteJob {
    pub name: String,
    pub experiment: Result<Experiment, String>,
}

/// Maximum worker threads: `SWARMDMD_THREADS` when set, else the machine
/// parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("SWARMDMD_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// Runs every job (concurrently up to the thread cap), writes per-experiment
/// outputs under `out_dir/<name>/`, and returns the rows in job order.
pub fn run_suite(jobs: &[SuiteJob], out_dir: &Path) -> Vec<SuiteRow> {
    let workers = thread_cap().min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SuiteRow>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i];
                let row = match &job.experiment {
                    Err(message) => SuiteRow::Failed {
                        name: job.name.clone(),
                        message: message.clone(),
                    },
                    Ok(exp) => match run_experiment(exp, &out_dir.join(&job.name), Stage::Full) {
                        Ok(Some(summary)) => SuiteRow::Ok(summary),
                        Ok(None) => SuiteRow::Failed {
                            name: job.name.clone(),
                            message: "pipeline stopped before scoring".into(),
                        },
                        Err(e) => SuiteRow::Failed {
                            name: job.name.clone(),
                            message: e.to_string(),
                        },
                    },
                };
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job produced a row"))
        .collect()
}

/// Output directory resolution shared by the CLI commands: the `--out` flag
/// wins, then the config's `output_dir`, then `./out/<name>`.
pub fn resolve_out_dir(flag: Option<PathBuf>, exp: &Experiment) -> PathBuf {
    flag.or_else(|| exp.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&exp.name))
}
