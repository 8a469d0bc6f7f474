//! Episode runner, outcome classification and the episode log.
//!
//! Log layout (comma separated, `#` lines are comments). Every control
//! cycle writes one `cycle` row:
//!
//! ```text
//! cycle,tick,time_s,phase,qw,qx,qy,qz,px,py,pz,grip_force_n,
//!   s1_left_mm,s2_left_mm,s1_right_mm,s2_right_mm,slip_left_mm,slip_right_mm,
//!   error_deg,task,constraint,coordinating
//! ```
//!
//! The pose is the object attitude quaternion and position in the ground
//! frame. `phase` is `run` for ordinary cycles and `probeMS` / `restoreMS` /
//! `nominal` inside an optimization step. Each optimization step also
//! writes one `opt` row after its cycles:
//!
//! ```text
//! opt,tick,time_s,qb1,qb2,qb3,qa1,qa2,qa3,g1,g2,g3,
//!   l1p,l1m,l2p,l2m,l3p,l3m,alpha
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::controller::{control_cycle, ControllerConfig, CycleActivity, GripperCommand, Scenario, Signal};
use crate::error::{HarnessError, OptimizerError, SimError};
use crate::geometry::{axis_angle, Vec3};
use crate::optimizer::{loss, optimize_step, Mode, OptimizeTrace, OptimizerConfig, OptimizerState, ProbeEnvironment, ProbeKind};
use crate::sim::scene::{build_scene, Scene, SceneJitter};
use crate::sim::{make_object_suite, Disturbance, SimWorld, TactileFrame, GRAVITY_MM_S2};

use super::config::{DetectorConfig, DisturbanceScript, ScenarioConfig};

pub const LOG_HEADER: &str = "# episode log v1\n\
# cycle,tick,time_s,phase,qw,qx,qy,qz,px,py,pz,grip_force_n,s1_left_mm,s2_left_mm,s1_right_mm,s2_right_mm,slip_left_mm,slip_right_mm,error_deg,task,constraint,coordinating\n\
# opt,tick,time_s,qb1,qb2,qb3,qa1,qa2,qa3,g1,g2,g3,l1p,l1m,l2p,l2m,l3p,l3m,alpha\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Labels {
    pub slipped: bool,
    pub stalled: bool,
    pub dropped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Success,
    Sl,
    St,
    SlSt,
    Dropped,
}

impl Label {
    pub fn id(self) -> &'static str {
        match self {
            Label::Success => "Success",
            Label::Sl => "SL",
            Label::St => "ST",
            Label::SlSt => "SL+ST",
            Label::Dropped => "Dropped",
        }
    }

    pub fn from_id(s: &str) -> Option<Label> {
        [Label::Success, Label::Sl, Label::St, Label::SlSt, Label::Dropped].into_iter().find(|l| l.id() == s)
    }

    pub fn is_success(self) -> bool {
        self == Label::Success
    }

    pub fn has_slip(self) -> bool {
        matches!(self, Label::Sl | Label::SlSt)
    }

    pub fn has_stall(self) -> bool {
        matches!(self, Label::St | Label::SlSt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub label: Label,
    pub final_error_deg: f64,
    pub max_slip_mm: f64,
    pub duration: f64,
    pub log_path: Option<PathBuf>,
    /// Control cycles run, probes included.
    pub ticks: u64,
    /// Probe cycles run.
    pub probes: u64,
    pub reason: String,
}

/// Fires when the error has not dropped by `progress` over `window`.
#[derive(Debug, Clone)]
pub struct StallDetector {
    window_cycles: usize,
    progress: f64,
    threshold: f64,
    history: VecDeque<f64>,
}

impl StallDetector {
    pub fn new(cfg: &DetectorConfig, cycle_time: f64) -> Self {
        Self {
            window_cycles: (cfg.stall_window / cycle_time).round().max(1.0) as usize,
            progress: cfg.stall_progress_deg,
            threshold: cfg.success_error_deg,
            history: VecDeque::new(),
        }
    }

    /// Feeds one cycle's error; returns true when the detector fires.
    pub fn update(&mut self, error_deg: f64) -> bool {
        self.history.push_back(error_deg);
        if self.history.len() <= self.window_cycles {
            return false;
        }
        let old = self.history.pop_front().unwrap();
        error_deg >= self.threshold && old - error_deg < self.progress
    }
}

/// Everything an episode needs once the scene is built.
pub struct EpisodeRun<'a> {
    pub scene: Scene,
    pub controller: ControllerConfig,
    pub optimizer: OptimizerConfig,
    pub detector: DetectorConfig,
    pub time_limit: f64,
    pub log: Option<&'a mut dyn Write>,
}

struct Runner<'a, 'b> {
    world: &'a mut SimWorld,
    target: crate::geometry::Mat3,
    cfg: &'a ControllerConfig,
    lambda0: f64,
    detector: &'a DetectorConfig,
    stall: StallDetector,
    log: &'a mut Option<&'b mut dyn Write>,
    frame: TactileFrame,
    /// Error at the first cycle inside the success band.
    reached: Option<f64>,
    stalled: bool,
    probes: u64,
    io_error: Option<std::io::Error>,
}

impl Runner<'_, '_> {
    fn cycle(&mut self, phase: &str, cmd: &GripperCommand, act: CycleActivity) -> Result<Signal, SimError> {
        let frame = self.world.step(cmd)?;
        let signal = Signal::from_frame(&frame, self.cfg.s2_sense);
        let err = self.world.object_orientation_error(&self.target);
        let slip = self.world.max_accumulated_slip();
        if self.reached.is_none() && err < self.detector.success_error_deg && slip <= self.detector.slip_limit_mm {
            self.reached = Some(err);
        }
        if self.stall.update(err) {
            self.stalled = true;
        }
        if self.log.is_some() {
            let row = cycle_row(self.world, &frame, phase, &signal, err, act);
            if let Some(w) = self.log.as_mut() {
                if let Err(e) = w.write_all(row.as_bytes()) {
                    self.io_error.get_or_insert(e);
                }
            }
        }
        self.frame = frame;
        Ok(signal)
    }

    fn slipped(&self) -> bool {
        self.world.max_accumulated_slip() > self.detector.slip_limit_mm
    }
}

impl ProbeEnvironment for Runner<'_, '_> {
    fn run_cycle(&mut self, kind: ProbeKind, cmd: &GripperCommand) -> Result<f64, SimError> {
        if kind != ProbeKind::Nominal {
            self.probes += 1;
        }
        let s = self.cycle(&kind.tag(), cmd, CycleActivity::default())?;
        Ok(loss(&s.metrics, self.lambda0, s.sense))
    }
}

fn cycle_row(
    w: &SimWorld,
    frame: &TactileFrame,
    phase: &str,
    s: &Signal,
    err: f64,
    act: CycleActivity,
) -> String {
    let q = nalgebra::UnitQuaternion::from_matrix(&w.object_rotation());
    let p = w.object_position();
    let slip = w.accumulated_tangential_slip();
    let b = |x: bool| u8::from(x);
    let mut row = String::with_capacity(256);
    let _ = writeln!(
        row,
        "cycle,{},{:.6},{},{:.9},{:.9},{:.9},{:.9},{:.6},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9},{:.9},{:.6},{:.6},{:.6},{},{},{}",
        frame.tick,
        frame.sim_time,
        phase,
        q.w,
        q.i,
        q.j,
        q.k,
        p.x,
        p.y,
        p.z,
        w.gripper.grip_force,
        s.left.s1_norm(),
        s.left.s2,
        s.right.s1_norm(),
        s.right.s2,
        slip[0],
        slip[1],
        err,
        b(act.task),
        b(act.constraint),
        b(act.coordinating),
    );
    row
}

fn opt_row(tick: u64, time: f64, t: &OptimizeTrace) -> String {
    let v = |x: &Vec3| format!("{:.9},{:.9},{:.9}", x.x, x.y, x.z);
    let l = t.losses.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(",");
    format!("opt,{tick},{time:.6},{},{},{},{l},{:.9}\n", v(&t.q_before), v(&t.q_after), v(&t.gradient), t.alpha)
}

/// Runs the control loop on a prepared scene until success, slip, stall,
/// drop or the time limit.
pub fn run_scene(run: EpisodeRun<'_>) -> Result<EpisodeOutcome, HarnessError> {
    run_scene_returning(run).map(|(outcome, _)| outcome)
}

/// [`run_scene`], also handing back the scene in its final state.
pub fn run_scene_returning(run: EpisodeRun<'_>) -> Result<(EpisodeOutcome, Scene), HarnessError> {
    let EpisodeRun { mut scene, controller: cfg, optimizer, detector, time_limit, mut log } = run;
    let world = &mut scene.world;
    if let Some(w) = log.as_mut() {
        w.write_all(LOG_HEADER.as_bytes())?;
    }
    let (mode, q0) = match cfg.scenario {
        Scenario::Contact => (Mode::TaskDirection, scene.initial_task_direction),
        Scenario::InAir => (Mode::CoordinatingRotation, Vec3::zeros()),
    };
    let mut opt = OptimizerState::new(mode, q0, &optimizer, cfg.d_lim, cfg.rotation_cap());
    // The optimized action must itself be active for probing to mean anything.
    let optimized_enabled = match cfg.scenario {
        Scenario::Contact => cfg.enabled.task,
        Scenario::InAir => cfg.enabled.coordinating,
    };
    let online = cfg.enabled.online_adjust && optimized_enabled;
    world.gripper.grip_force = cfg.f_init;

    let cycle_time = world.params.cycle_time();
    let frame = world.tactile_frame();
    let mut runner = Runner {
        world,
        target: scene.target,
        cfg: &cfg,
        lambda0: opt.lambda0,
        detector: &detector,
        stall: StallDetector::new(&detector, cycle_time),
        log: &mut log,
        frame,
        reached: None,
        stalled: false,
        probes: 0,
        io_error: None,
    };
    let mut since_opt = 0usize;
    let mut dropped: Option<SimError> = None;
    loop {
        let signal = Signal::from_frame(&runner.frame, cfg.s2_sense);
        let (cmd, act) = control_cycle(&signal, &runner.world.gripper, &opt.q, &cfg);
        since_opt += 1;
        let result = if online && since_opt >= optimizer.cadence {
            since_opt = 0;
            let force = runner.world.gripper.grip_force;
            match optimize_step(&mut runner, &mut opt, true, cfg.v0, force, cmd) {
                Ok(Some(trace)) => {
                    let row = opt_row(runner.world.tick, runner.world.time, &trace);
                    if let Some(w) = runner.log.as_mut() {
                        if let Err(e) = w.write_all(row.as_bytes()) {
                            runner.io_error.get_or_insert(e);
                        }
                    }
                    Ok(())
                }
                Ok(None) => Ok(()),
                Err(OptimizerError::ProbeAborted(e)) => Err(e),
                Err(e) => unreachable!("optimize_step only aborts: {e}"),
            }
        } else {
            runner.cycle("run", &cmd, act).map(|_| ())
        };
        if let Err(e) = result {
            dropped = Some(e);
            break;
        }
        if runner.reached.is_some() || runner.slipped() || runner.stalled || runner.world.time >= time_limit {
            break;
        }
    }
    if let Some(e) = runner.io_error.take() {
        return Err(e.into());
    }
    let world = &*runner.world;
    // An optimization step finishes its schedule after the target is hit;
    // report the error at the moment of success.
    let final_error_deg = runner.reached.unwrap_or_else(|| world.object_orientation_error(&scene.target));
    let max_slip_mm = world.max_accumulated_slip();
    let slipped = max_slip_mm > detector.slip_limit_mm;
    let (label, reason) = match dropped {
        Some(e) => (Label::Dropped, e.to_string()),
        None if runner.reached.is_some() && !slipped => (Label::Success, "target reached".into()),
        None => {
            let timed_out = !runner.stalled && world.time >= time_limit;
            let stalled = runner.stalled || timed_out;
            let label = match (slipped, stalled) {
                (true, true) => Label::SlSt,
                (true, false) => Label::Sl,
                _ => Label::St,
            };
            let reason = if slipped {
                "slip limit exceeded"
            } else if timed_out {
                "time limit reached"
            } else {
                "no progress"
            };
            (label, reason.into())
        }
    };
    let outcome = EpisodeOutcome {
        label,
        final_error_deg,
        max_slip_mm,
        duration: world.time,
        log_path: None,
        ticks: world.tick,
        probes: runner.probes,
        reason,
    };
    Ok((outcome, scene))
}

/// Disturbance for a script, scaled to the object weight.
pub fn make_disturbance(script: DisturbanceScript, fraction: f64, world: &SimWorld) -> Option<Disturbance> {
    match script {
        DisturbanceScript::None => None,
        DisturbanceScript::Cable => {
            let weight = world.template.mass * 1e-3 * GRAVITY_MM_S2;
            let far_end = Vec3::new(world.template.shape.half_length(), 0.0, 0.0);
            let dir = Vec3::new(-0.6, 0.0, -0.8);
            Some(Disturbance {
                force: dir * (weight * fraction),
                ripple: 0.3,
                period: 2.0,
                point: far_end,
                torque: Vec3::zeros(),
            })
        }
    }
}

/// Builds the configured scene, applying target overrides and disturbance.
pub fn prepare_scene(cfg: &ScenarioConfig) -> Result<(Scene, ControllerConfig), HarnessError> {
    cfg.validate()?;
    let kind = cfg.object_kind()?;
    let template = make_object_suite().into_iter().find(|t| t.kind == kind).expect("suite covers all kinds");
    let mut controller = cfg.effective_controller();
    let seed = cfg.episode.seed;
    let mut scene = build_scene(
        &template,
        cfg.episode.scenario,
        seed,
        controller.f_init,
        cfg.sim,
        SceneJitter::from_seed(seed),
    )
    .map_err(|e| HarnessError::Config(format!("scene setup failed: {e}")))?;
    let setup = match cfg.episode.scenario {
        Scenario::Contact => template.contact,
        Scenario::InAir => template.in_air,
    };
    let target_rad = cfg.episode.target_deg.map(f64::to_radians).unwrap_or(setup.target_rotation);
    let axis = Vec3::from(cfg.episode.target_axis);
    scene.target = axis_angle(&axis, target_rad) * scene.world.reference_rotation;
    // Positive σ should mean rotation toward the target about hand +Y.
    let about_y = axis.normalize().y * target_rad;
    controller.s2_sense = if about_y < 0.0 { -1.0 } else { 1.0 };
    scene.world.disturbance =
        make_disturbance(cfg.episode.disturbance, cfg.episode.disturbance_fraction, &scene.world);
    Ok((scene, controller))
}

/// Runs one configured episode, writing the log to `log_path` if given.
pub fn run_episode(cfg: &ScenarioConfig, log_path: Option<&Path>) -> Result<EpisodeOutcome, HarnessError> {
    let (scene, controller) = prepare_scene(cfg)?;
    let mut file = match log_path {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let log = file.as_mut().map(|f| f as &mut dyn Write);
    let mut outcome = run_scene(EpisodeRun {
        scene,
        controller,
        optimizer: cfg.optimizer,
        detector: cfg.detector,
        time_limit: cfg.episode.time_limit,
        log,
    })?;
    if let Some(mut f) = file {
        f.flush()?;
    }
    outcome.log_path = log_path.map(Path::to_path_buf);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Group;
    use crate::sim::ObjectKind;

    #[test]
    fn stall_detector_fires_without_progress() {
        let cfg = DetectorConfig::default();
        let mut d = StallDetector::new(&cfg, 1.0);
        // Window of five samples, 0.45° of progress per window.
        let fired: Vec<bool> = (0..8).map(|i| d.update(30.0 - 0.09 * i as f64)).collect();
        assert_eq!(fired, [false, false, false, false, false, true, true, true]);
        let mut d = StallDetector::new(&cfg, 1.0);
        assert!(!(0..20).any(|i| d.update(30.0 - 0.2 * i as f64)));
        // Never fires once below the success threshold.
        let mut d = StallDetector::new(&cfg, 1.0);
        assert!(!(0..20).any(|_| d.update(4.0)));
    }

    #[test]
    fn time_limit_without_progress_is_a_stall() {
        let mut cfg = ScenarioConfig::defaults(ObjectKind::Textured, Scenario::Contact);
        cfg.episode.group = Some(Group::NoTask);
        cfg.episode.time_limit = 1.0;
        let out = run_episode(&cfg, None).unwrap();
        assert_eq!(out.label, Label::St);
        assert!(out.final_error_deg >= 5.0);
    }

    #[test]
    fn noa_never_probes() {
        let mut cfg = ScenarioConfig::defaults(ObjectKind::Soft, Scenario::InAir);
        cfg.episode.group = Some(Group::NoOnlineAdjust);
        cfg.episode.time_limit = 3.0;
        let out = run_episode(&cfg, None).unwrap();
        assert_eq!(out.probes, 0);
    }

    #[test]
    fn log_rows_match_ticks() {
        let mut cfg = ScenarioConfig::defaults(ObjectKind::Curved, Scenario::Contact);
        cfg.episode.time_limit = 1.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ep.csv");
        let out = run_episode(&cfg, Some(&path)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cycles = text.lines().filter(|l| l.starts_with("cycle,")).count();
        assert_eq!(cycles as u64, out.ticks);
        assert!(text.lines().any(|l| l.starts_with("opt,")));
        for l in text.lines().filter(|l| l.starts_with("cycle,")) {
            assert_eq!(l.split(',').count(), 22);
        }
    }
}
