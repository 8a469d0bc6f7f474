//! Scenario configuration files.
//!
//! A config is a TOML document with five tables: `[episode]`,
//! `[controller]`, `[optimizer]`, `[detector]` and `[sim]`. Every key is optional;
//! missing keys take the scenario's defaults (see `configs/defaults.toml`).

use serde::{Deserialize, Serialize};

use crate::controller::{ActionFlags, ControllerConfig, Scenario, MAX_ROTATION_CAP_DEG};
use crate::error::HarnessError;
use crate::optimizer::OptimizerConfig;
use crate::sim::{ObjectKind, SimParams};

/// Orientation error below which an episode succeeds, degrees.
pub const SUCCESS_ERROR_DEG: f64 = 5.0;
/// Accumulated slip above which an episode has slipped, mm.
pub const SLIP_LIMIT_MM: f64 = 20.0;
/// Largest gripper rotation per control cycle, degrees.
pub const ROTATION_CAP_DEG: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "NTO")]
    NoTask,
    #[serde(rename = "NCB")]
    NoConstraint,
    #[serde(rename = "NC")]
    NoCoordinating,
    #[serde(rename = "NOA")]
    NoOnlineAdjust,
    #[serde(rename = "CG")]
    Complete,
}

impl Group {
    pub const ALL: [Group; 5] =
        [Group::NoTask, Group::NoConstraint, Group::NoCoordinating, Group::NoOnlineAdjust, Group::Complete];

    pub fn id(self) -> &'static str {
        match self {
            Group::NoTask => "NTO",
            Group::NoConstraint => "NCB",
            Group::NoCoordinating => "NC",
            Group::NoOnlineAdjust => "NOA",
            Group::Complete => "CG",
        }
    }

    pub fn from_id(s: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.id() == s)
    }

    pub fn flags(self) -> ActionFlags {
        let mut f = ActionFlags::ALL;
        match self {
            Group::NoTask => f.task = false,
            Group::NoConstraint => f.constraint = false,
            Group::NoCoordinating => f.coordinating = false,
            Group::NoOnlineAdjust => f.online_adjust = false,
            Group::Complete => {}
        }
        f
    }
}

/// Scripted external wrench sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceScript {
    None,
    /// A cable tugging at the far end of the object.
    Cable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub object: String,
    pub scenario: Scenario,
    pub seed: u64,
    /// s.
    pub time_limit: f64,
    pub disturbance: DisturbanceScript,
    /// Disturbance magnitude as a fraction of the object weight.
    pub disturbance_fraction: f64,
    /// Target rotation axis in the hand frame. Pivoting is about hand Y.
    pub target_axis: [f64; 3],
    /// Target rotation, degrees, signed about `target_axis`. Absent means
    /// the object's benchmark target.
    pub target_deg: Option<f64>,
    /// Overrides the controller's enabled flags with an ablation group.
    pub group: Option<Group>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub success_error_deg: f64,
    pub slip_limit_mm: f64,
    /// Sliding window of the stall test, s.
    pub stall_window: f64,
    /// Least error decrease over the window that counts as progress, deg.
    pub stall_progress_deg: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            success_error_deg: SUCCESS_ERROR_DEG,
            slip_limit_mm: SLIP_LIMIT_MM,
            stall_window: 5.0,
            stall_progress_deg: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub episode: EpisodeConfig,
    pub controller: ControllerConfig,
    pub optimizer: OptimizerConfig,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub sim: SimParams,
}

/// Controller defaults for a scenario.
pub fn default_controller(scenario: Scenario) -> ControllerConfig {
    match scenario {
        Scenario::Contact => ControllerConfig {
            v0: 5.0,
            delta_f: 0.5,
            d_lim: 0.1,
            f_init: 4.0,
            f_min: 1.0,
            f_max: 12.0,
            rotation_cap_deg: MAX_ROTATION_CAP_DEG,
            scenario,
            enabled: ActionFlags::ALL,
            s2_sense: -1.0,
        },
        Scenario::InAir => ControllerConfig {
            v0: 5.0,
            delta_f: 0.25,
            d_lim: 0.1,
            f_init: 8.0,
            f_min: 1.0,
            f_max: 40.0,
            rotation_cap_deg: MAX_ROTATION_CAP_DEG,
            scenario,
            enabled: ActionFlags::ALL,
            s2_sense: 1.0,
        },
    }
}

/// Optimizer defaults for a scenario. Rotation gradients are in loss per
/// radian and come out small, so the in-air rate is larger.
pub fn default_optimizer(scenario: Scenario) -> OptimizerConfig {
    match scenario {
        Scenario::Contact => OptimizerConfig { alpha: 2.0, ..OptimizerConfig::default() },
        Scenario::InAir => OptimizerConfig { alpha: 1.0, ..OptimizerConfig::default() },
    }
}

impl ScenarioConfig {
    pub fn defaults(object: ObjectKind, scenario: Scenario) -> Self {
        Self {
            episode: EpisodeConfig {
                object: object.id().to_string(),
                scenario,
                seed: 0,
                time_limit: 60.0,
                disturbance: DisturbanceScript::None,
                disturbance_fraction: 0.0,
                target_axis: [0.0, 1.0, 0.0],
                target_deg: None,
                group: None,
            },
            controller: default_controller(scenario),
            optimizer: default_optimizer(scenario),
            detector: DetectorConfig::default(),
            sim: SimParams::default(),
        }
    }

    /// Parses a config, filling unspecified keys with the defaults of the
    /// scenario named in `[episode]` (contact when absent).
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let scenario = match user.get("episode").and_then(|e| e.get("scenario")) {
            Some(toml::Value::String(s)) => Scenario::from_id(s)
                .ok_or_else(|| HarnessError::Config(format!("unknown scenario '{s}'")))?,
            Some(_) => return Err(HarnessError::Config("scenario must be a string".into())),
            None => Scenario::Contact,
        };
        let base = Self::defaults(ObjectKind::Soft, scenario);
        let mut merged = toml::Table::try_from(&base).map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: ScenarioConfig = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn object_kind(&self) -> Result<ObjectKind, HarnessError> {
        ObjectKind::from_id(&self.episode.object)
            .ok_or_else(|| HarnessError::Config(format!("unknown object '{}'", self.episode.object)))
    }

    /// Controller config with the group flags and scenario applied.
    pub fn effective_controller(&self) -> ControllerConfig {
        let mut c = self.controller;
        c.scenario = self.episode.scenario;
        if let Some(g) = self.episode.group {
            c.enabled = g.flags();
        }
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.object_kind()?;
        if self.controller.scenario != self.episode.scenario {
            return bad("controller.scenario disagrees with episode.scenario".into());
        }
        if !(self.episode.time_limit > 0.0) {
            return bad("time_limit must be positive".into());
        }
        if let Some(t) = self.episode.target_deg {
            if !(t.abs() > 0.0 && t.abs() <= 180.0) {
                return bad("target rotation must be in (0°, 180°]".into());
            }
        }
        let axis = self.episode.target_axis;
        if !(axis.iter().map(|a| a * a).sum::<f64>() > 0.0) {
            return bad("target_axis must be nonzero".into());
        }
        if !(0.0..=1.0).contains(&self.episode.disturbance_fraction) {
            return bad("disturbance_fraction must be in [0, 1]".into());
        }
        self.controller.validate().map_err(HarnessError::Config)?;
        self.optimizer.validate().map_err(HarnessError::Config)?;
        let d = &self.detector;
        if !(d.stall_window > 0.0 && d.stall_progress_deg >= 0.0) {
            return bad("stall detector parameters must be positive".into());
        }
        if !(d.success_error_deg > 0.0 && d.slip_limit_mm > 0.0) {
            return bad("thresholds must be positive".into());
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
