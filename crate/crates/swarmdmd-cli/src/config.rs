//! Experiment configuration: TOML files with exact field-name keys, scenario
//! presets, and resolution into fully-explicit values for the manifest echo.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use swarmdmd::dmd::Dynamics;
use swarmdmd::metrics::Centering;
use swarmdmd::observables::FeatureKind;
use swarmdmd::trajectory::SwarmParams;
use swarmdmd::vicsek::{SimDomain, VicsekVariant};

/// Default retained rank of the feature-matrix SVD.
pub const DEFAULT_RANK: usize = 8;
/// Default error threshold for the post-training survival time.
pub const DEFAULT_THRESHOLD: f64 = 1e-1;
/// Seconds of milling simulation discarded so training starts from a formed
/// mill rather than the random initial transient.
pub const DEFAULT_MILLING_WARMUP: f64 = 100.0;
/// Time step the milling trajectory is interpolated onto.
pub const DEFAULT_MILLING_INTERP_DT: f64 = 0.1;
/// Agent count the milling trajectory is subsampled to.
pub const DEFAULT_MILLING_SUBSAMPLE: usize = 200;

#[derive(Debug, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn bad(message: impl Into<String>) -> ConfigError {
    ConfigError(message.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Standard,
    Milling,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Standard => "standard",
            Scenario::Milling => "milling",
        }
    }

    pub fn variant(&self) -> VicsekVariant {
        match self {
            Scenario::Standard => VicsekVariant::Standard,
            Scenario::Milling => VicsekVariant::Milling,
        }
    }
}

/// On-disk experiment configuration. Every field is optional except the
/// scenario; omitted fields take scenario defaults during [`RawConfig::resolve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predict_duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum_centering: Option<String>,
    /// Optional externally-supplied trajectory; skips the simulation stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<RawParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<RawDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<RawPreprocess>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RawRollout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<RawLayout>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interaction_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_of_view: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_turn_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_width: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPreprocess {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolate_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_to: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRollout {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reinit_period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reinit_horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLayout {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signed_relatives: Option<bool>,
}

/// Preprocessing applied between simulation/loading and the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    /// Leading seconds discarded from the simulated trajectory.
    pub warmup: f64,
    pub interpolate_dt: Option<f64>,
    pub subsample_to: Option<usize>,
    pub subsample_seed: u64,
}

/// Resolved rollout schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RolloutSpec {
    Basic,
    Reinit { period: f64, horizon: f64 },
}

/// A fully-resolved experiment: every value explicit, everything validated
/// that can be validated without running the pipeline.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub scenario: Scenario,
    pub params: SwarmParams,
    pub domain: SimDomain,
    pub dynamics: Dynamics,
    /// Explicit feature-kind override; `None` means the dynamics default.
    pub layout_kinds: Option<Vec<FeatureKind>>,
    pub signed_relatives: bool,
    pub rank: usize,
    pub train_duration: f64,
    pub predict_duration: f64,
    pub rollout: RolloutSpec,
    pub threshold: f64,
    pub momentum_centering: Centering,
    pub preprocess: Option<Preprocess>,
    pub trajectory: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RawConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// Fills every omitted field with its scenario default and validates the
    /// result. `default_name` labels the experiment when `name` is absent
    /// (callers pass the config file stem).
    pub fn resolve(&self, default_name: &str) -> Result<Experiment, ConfigError> {
        let p = self.params.clone().unwrap_or_default();
        let seed = p.seed.unwrap_or(1);
        let mut params = match self.scenario {
            Scenario::Standard => SwarmParams::standard(
                p.interaction_radius.unwrap_or(0.5),
                p.noise.unwrap_or(0.0),
                seed,
            ),
            Scenario::Milling => {
                let mut m = SwarmParams::milling(seed);
                if let Some(r) = p.interaction_radius {
                    m.interaction_radius = r;
                }
                if let Some(noise) = p.noise {
                    m.noise = noise;
                }
                m
            }
        };
        if let Some(n) = p.n_agents {
            params.n_agents = n;
        }
        if let Some(dt) = p.dt {
            params.dt = dt;
        }
        if let Some(density) = p.density {
            params.density = density;
        }
        if let Some(fov) = p.field_of_view {
            params.field_of_view = Some(fov);
        }
        if let Some(w) = p.max_turn_rate {
            params.max_turn_rate = Some(w);
        }
        if let Some(speed) = p.speed {
            params.speed = speed;
        }
        params.validate().map_err(|e| bad(e.to_string()))?;

        let mut domain = SimDomain::for_params(&params);
        if let Some(d) = &self.domain {
            if let Some(w) = d.init_width {
                domain.init_width = w;
            }
            if let Some(w) = d.sim_width {
                domain.sim_width = w;
            }
        }
        domain.validate(&params).map_err(|e| bad(e.to_string()))?;

        let dynamics = match &self.dynamics {
            None => Dynamics::Standard,
            Some(s) => Dynamics::from_str(s).map_err(|e| bad(e.to_string()))?,
        };

        let layout_kinds = match self.layout.as_ref().and_then(|l| l.kinds.as_ref()) {
            None => None,
            Some(names) => {
                let mut kinds = Vec::with_capacity(names.len());
                for name in names {
                    kinds.push(FeatureKind::from_str(name).map_err(|e| bad(e.to_string()))?);
                }
                Some(kinds)
            }
        };
        let signed_relatives = self
            .layout
            .as_ref()
            .and_then(|l| l.signed_relatives)
            .unwrap_or(false);

        let rank = self.rank.unwrap_or(DEFAULT_RANK);
        if rank == 0 {
            return Err(bad("rank must be at least 1"));
        }
        let train_duration = self.train_duration.unwrap_or(5.0);
        let predict_duration = self.predict_duration.unwrap_or(5.0);
        if !(train_duration > 0.0) || !train_duration.is_finite() {
            return Err(bad(format!(
                "train_duration must be positive, got {train_duration}"
            )));
        }
        if !(predict_duration >= 0.0) || !predict_duration.is_finite() {
            return Err(bad(format!(
                "predict_duration must be non-negative, got {predict_duration}"
            )));
        }
        let threshold = self.threshold.unwrap_or(DEFAULT_THRESHOLD);
        if !(threshold > 0.0) {
            return Err(bad(format!("threshold must be positive, got {threshold}")));
        }

        let momentum_centering = match self.momentum_centering.as_deref() {
            None | Some("origin") => Centering::Origin,
            Some("centroid") => Centering::Centroid,
            Some(other) => {
                return Err(bad(format!(
                    "unknown momentum_centering '{other}' (expected origin|centroid)"
                )))
            }
        };

        let rollout = match self.rollout.as_ref() {
            None => RolloutSpec::Basic,
            Some(r) => match r.mode.as_deref().unwrap_or("basic") {
                "basic" => RolloutSpec::Basic,
                "reinit" => {
                    let period = r
                        .reinit_period
                        .ok_or_else(|| bad("reinit mode requires reinit_period"))?;
                    let horizon = r
                        .reinit_horizon
                        .ok_or_else(|| bad("reinit mode requires reinit_horizon"))?;
                    if !(period > 0.0) || horizon < period {
                        return Err(bad(format!(
                            "reinit needs period > 0 and horizon >= period, got {period}, {horizon}"
                        )));
                    }
                    RolloutSpec::Reinit { period, horizon }
                }
                other => return Err(bad(format!("unknown rollout mode '{other}'"))),
            },
        };

        let preprocess = match (&self.preprocess, self.scenario) {
            (Some(pp), _) => Some(Preprocess {
                warmup: pp.warmup.unwrap_or(0.0),
                interpolate_dt: pp.interpolate_dt,
                subsample_to: pp.subsample_to,
                subsample_seed: pp.subsample_seed.unwrap_or(params.seed),
            }),
            (None, Scenario::Milling) => Some(Preprocess {
                warmup: DEFAULT_MILLING_WARMUP,
                interpolate_dt: Some(DEFAULT_MILLING_INTERP_DT),
                subsample_to: Some(DEFAULT_MILLING_SUBSAMPLE),
                subsample_seed: params.seed,
            }),
            (None, Scenario::Standard) => None,
        };
        if let Some(pp) = &preprocess {
            if !(pp.warmup >= 0.0) || !pp.warmup.is_finite() {
                return Err(bad(format!(
                    "preprocess warmup must be non-negative, got {}",
                    pp.warmup
                )));
            }
            if let Some(target) = pp.interpolate_dt {
                if !(target > 0.0) || target > params.dt * (1.0 + 1e-9) {
                    return Err(bad(format!(
                        "interpolate_dt must be in (0, dt], got {target}"
                    )));
                }
            }
            if let Some(n) = pp.subsample_to {
                if n == 0 || n > params.n_agents {
                    return Err(bad(format!(
                        "subsample_to must be in 1..={}, got {n}",
                        params.n_agents
                    )));
                }
            }
        }

        Ok(Experiment {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| default_name.to_string()),
            scenario: self.scenario,
            params,
            domain,
            dynamics,
            layout_kinds,
            signed_relatives,
            rank,
            train_duration,
            predict_duration,
            rollout,
            threshold,
            momentum_centering,
            preprocess,
            trajectory: self.trajectory.clone(),
            output_dir: self.output_dir.clone(),
        })
    }
}

impl Experiment {
    /// Total scored span: training plus prediction.
    pub fn span(&self) -> f64 {
        self.train_duration + self.predict_duration
    }

    /// Time step of the trajectory the pipeline actually consumes.
    pub fn effective_dt(&self) -> f64 {
        self.preprocess
            .as_ref()
            .and_then(|p| p.interpolate_dt)
            .unwrap_or(self.params.dt)
    }

    /// Fully-explicit config echo; parsing and resolving it reproduces this
    /// experiment exactly.
    pub fn to_raw(&self) -> RawConfig {
        let default_kind_names: Vec<String> = self
            .dynamics
            .default_layout(self.params.n_agents.max(1))
            .kinds()
            .iter()
            .map(|k| k.as_str().to_string())
            .collect();
        let kind_names = match &self.layout_kinds {
            Some(kinds) => kinds.iter().map(|k| k.as_str().to_string()).collect(),
            None => default_kind_names,
        };
        RawConfig {
            name: Some(self.name.clone()),
            scenario: self.scenario,
            dynamics: Some(self.dynamics.as_str().to_string()),
            rank: Some(self.rank),
            train_duration: Some(self.train_duration),
            predict_duration: Some(self.predict_duration),
            threshold: Some(self.threshold),
            momentum_centering: Some(
                match self.momentum_centering {
                    Centering::Origin => "origin",
                    Centering::Centroid => "centroid",
                }
                .to_string(),
            ),
            trajectory: self.trajectory.clone(),
            output_dir: self.output_dir.clone(),
            params: Some(RawParams {
                n_agents: Some(self.params.n_agents),
                dt: Some(self.params.dt),
                density: Some(self.params.density),
                interaction_radius: Some(self.params.interaction_radius),
                field_of_view: self.params.field_of_view,
                max_turn_rate: self.params.max_turn_rate,
                noise: Some(self.params.noise),
                speed: Some(self.params.speed),
                seed: Some(self.params.seed),
            }),
            domain: Some(RawDomain {
                init_width: Some(self.domain.init_width),
                sim_width: Some(self.domain.sim_width),
            }),
            preprocess: self.preprocess.as_ref().map(|p| RawPreprocess {
                warmup: Some(p.warmup),
                interpolate_dt: p.interpolate_dt,
                subsample_to: p.subsample_to,
                subsample_seed: Some(p.subsample_seed),
            }),
            rollout: Some(match self.rollout {
                RolloutSpec::Basic => RawRollout {
                    mode: Some("basic".to_string()),
                    reinit_period: None,
                    reinit_horizon: None,
                },
                RolloutSpec::Reinit { period, horizon } => RawRollout {
                    mode: Some("reinit".to_string()),
                    reinit_period: Some(period),
                    reinit_horizon: Some(horizon),
                },
            }),
            layout: Some(RawLayout {
                kinds: Some(kind_names),
                signed_relatives: Some(self.signed_relatives),
            }),
        }
    }
}
