//! Two-phase demo: an in-air pivot to an intermediate attitude, then a
//! contact pivot against an obstacle the controller has never seen, with a
//! cable tugging at the object the whole time.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::controller::{ControllerConfig, Scenario};
use crate::error::HarnessError;
use crate::optimizer::OptimizerConfig;
use crate::sim::scene::{build_scene, build_scene_at, Scene, SceneJitter};
use crate::sim::{make_object_suite, ObjectKind, ObjectTemplate};

use super::config::{default_controller, default_optimizer, DisturbanceScript, ScenarioConfig};
use super::episode::{make_disturbance, run_scene_returning, EpisodeOutcome, EpisodeRun};

/// In-hand rotation of the in-air phase, degrees.
pub const INTERMEDIATE_DEG: f64 = 35.0;
/// In-hand rotation of the contact phase, degrees, from wherever the first
/// phase left the object.
pub const FINAL_DEG: f64 = -30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub scenario: Scenario,
    pub outcome: EpisodeOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    /// One entry per phase that ran. The contact phase only runs after the
    /// in-air phase succeeds.
    pub phases: Vec<PhaseOutcome>,
}

impl DemoOutcome {
    pub fn success(&self) -> bool {
        self.phases.len() == 2 && self.phases.iter().all(|p| p.outcome.label.is_success())
    }
}

/// The demo's default config: the cable pulls with 20% of the weight.
pub fn demo_defaults() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(ObjectKind::Asymmetric, Scenario::InAir);
    cfg.episode.disturbance = DisturbanceScript::Cable;
    cfg.episode.disturbance_fraction = 0.2;
    cfg
}

/// Controller and optimizer for one phase: the config's own sections when it
/// names that scenario, the scenario defaults otherwise.
fn phase_settings(cfg: &ScenarioConfig, scenario: Scenario, target_deg: f64) -> (ControllerConfig, OptimizerConfig) {
    let (mut controller, optimizer) = if cfg.episode.scenario == scenario {
        (cfg.controller, cfg.optimizer)
    } else {
        (default_controller(scenario), default_optimizer(scenario))
    };
    controller.scenario = scenario;
    if let Some(g) = cfg.episode.group {
        controller.enabled = g.flags();
    }
    controller.s2_sense = if target_deg < 0.0 { -1.0 } else { 1.0 };
    (controller, optimizer)
}

fn run_phase(
    cfg: &ScenarioConfig,
    mut scene: Scene,
    controller: ControllerConfig,
    optimizer: OptimizerConfig,
    log_path: Option<PathBuf>,
) -> Result<(EpisodeOutcome, Scene), HarnessError> {
    scene.world.disturbance =
        make_disturbance(cfg.episode.disturbance, cfg.episode.disturbance_fraction, &scene.world);
    let mut file = match &log_path {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let (mut outcome, end) = {
        let log = file.as_mut().map(|f| f as &mut dyn Write);
        let time_limit = cfg.episode.time_limit;
        run_scene_returning(EpisodeRun { scene, controller, optimizer, detector: cfg.detector, time_limit, log })?
    };
    if let Some(mut f) = file {
        f.flush()?;
    }
    outcome.log_path = log_path;
    Ok((outcome, end))
}

fn template_for(cfg: &ScenarioConfig) -> Result<ObjectTemplate, HarnessError> {
    let kind = cfg.object_kind()?;
    Ok(make_object_suite().into_iter().find(|t| t.kind == kind).expect("suite covers all kinds"))
}

/// Runs both phases. With `log_dir`, writes `phase1_in_air.csv` and
/// `phase2_contact.csv` there.
pub fn run_two_phase_demo(cfg: &ScenarioConfig, log_dir: Option<&Path>) -> Result<DemoOutcome, HarnessError> {
    cfg.validate()?;
    let template = template_for(cfg)?;
    let seed = cfg.episode.seed;
    let scene_err = |e| HarnessError::Config(format!("scene setup failed: {e}"));
    let log = |name: &str| log_dir.map(|d| d.join(name));

    let (controller, optimizer) = phase_settings(cfg, Scenario::InAir, INTERMEDIATE_DEG);
    let mut air = template.clone();
    air.in_air.target_rotation = INTERMEDIATE_DEG.to_radians();
    let scene = build_scene(&air, Scenario::InAir, seed, controller.f_init, cfg.sim, SceneJitter::from_seed(seed))
        .map_err(scene_err)?;
    let (first, end) = run_phase(cfg, scene, controller, optimizer, log("phase1_in_air.csv"))?;
    let mut phases = vec![PhaseOutcome { scenario: Scenario::InAir, outcome: first }];
    if !phases[0].outcome.label.is_success() {
        return Ok(DemoOutcome { phases });
    }

    let (grasp, tilt) = end.world.current_grasp();
    let (controller, optimizer) = phase_settings(cfg, Scenario::Contact, FINAL_DEG);
    let scene = build_scene_at(
        &template,
        Scenario::Contact,
        grasp,
        tilt,
        FINAL_DEG.to_radians(),
        seed,
        controller.f_init,
        cfg.sim,
        SceneJitter::obstacle(seed),
    )
    .map_err(scene_err)?;
    let (second, _) = run_phase(cfg, scene, controller, optimizer, log("phase2_contact.csv"))?;
    phases.push(PhaseOutcome { scenario: Scenario::Contact, outcome: second });
    Ok(DemoOutcome { phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Group;

    #[test]
    fn both_phases_succeed_without_disturbance() {
        let mut cfg = demo_defaults();
        cfg.episode.disturbance = DisturbanceScript::None;
        cfg.episode.seed = 1;
        let d = run_two_phase_demo(&cfg, None).unwrap();
        assert!(d.success(), "{d:?}");
        assert_eq!(d.phases[0].scenario, Scenario::InAir);
        assert_eq!(d.phases[1].scenario, Scenario::Contact);
    }

    #[test]
    fn contact_phase_waits_for_in_air_success() {
        let mut cfg = demo_defaults();
        cfg.episode.group = Some(Group::NoTask);
        cfg.episode.time_limit = 8.0;
        let d = run_two_phase_demo(&cfg, None).unwrap();
        assert_eq!(d.phases.len(), 1);
        assert!(!d.success());
    }

    #[test]
    fn obstacle_is_hidden_from_the_controller() {
        for s in Scenario::BOTH {
            let text = toml::to_string(&default_controller(s)).unwrap();
            for word in ["wall", "table", "obstacle", "environment", "gap", "clearance"] {
                assert!(!text.contains(word), "{word} in {text}");
            }
        }
        assert_ne!(SceneJitter::obstacle(1), SceneJitter::obstacle(2));
    }
}
