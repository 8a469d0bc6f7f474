//! The three deconstructed actions and their per-cycle composition.
//!
//! Contact scenario: the task action moves the gripper along `n_task`, the
//! constraint action raises the grip force when the mean marker
//! displacement exceeds `d_lim`, and the coordinating action moves the
//! gripper along the tangential slip direction. In the air, the task action
//! lowers the grip force instead and the coordinating action is a capped RPY
//! rotation of the gripper.

use serde::{Deserialize, Serialize};

use crate::error::TactileError;
use crate::geometry::{
    rotation_angle, rpy_matrix, transform_vector, Frame, FramedVector, Rotation, RpyVector, Vec3,
};
use crate::sim::{sensor_mount, GripperState, TactileFrame};
use crate::tactile::{select_signal_finger, slip_metrics, tangential_direction, Finger, SlipMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Contact,
    InAir,
}

impl Scenario {
    pub const BOTH: [Scenario; 2] = [Scenario::Contact, Scenario::InAir];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Contact => "contact",
            Scenario::InAir => "in_air",
        }
    }

    pub fn from_id(s: &str) -> Option<Scenario> {
        Scenario::BOTH.into_iter().find(|x| x.id() == s)
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionFlags {
    pub task: bool,
    pub constraint: bool,
    pub coordinating: bool,
    pub online_adjust: bool,
}

impl ActionFlags {
    pub const ALL: ActionFlags =
        ActionFlags { task: true, constraint: true, coordinating: true, online_adjust: true };
    pub const NONE: ActionFlags =
        ActionFlags { task: false, constraint: false, coordinating: false, online_adjust: false };
}

impl Default for ActionFlags {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Preset gripper speed, mm/s.
    pub v0: f64,
    /// Grip-force increment per cycle, N.
    pub delta_f: f64,
    /// Mean-displacement threshold, mm.
    pub d_lim: f64,
    pub f_init: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Largest gripper rotation per control cycle, degrees.
    pub rotation_cap_deg: f64,
    pub scenario: Scenario,
    pub enabled: ActionFlags,
    /// +1 or −1: which sign of the rotational tendency about hand +Y the
    /// task wants.
    pub s2_sense: f64,
}

/// Largest allowed per-cycle rotation, 3°.
pub const MAX_ROTATION_CAP_DEG: f64 = 3.0;

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v0: 5.0,
            delta_f: 0.5,
            d_lim: 0.06,
            f_init: 10.0,
            f_min: 2.0,
            f_max: 40.0,
            rotation_cap_deg: MAX_ROTATION_CAP_DEG,
            scenario: Scenario::Contact,
            enabled: ActionFlags::ALL,
            s2_sense: 1.0,
        }
    }
}

impl ControllerConfig {
    /// The rotation cap in radians.
    pub fn rotation_cap(&self) -> f64 {
        self.rotation_cap_deg.to_radians()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.v0 > 0.0) {
            return Err("v0 must be positive".into());
        }
        if !(self.delta_f > 0.0) {
            return Err("delta_f must be positive".into());
        }
        if !(self.d_lim > 0.0) {
            return Err("d_lim must be positive".into());
        }
        if !(self.f_min <= self.f_init && self.f_init <= self.f_max) {
            return Err("need f_min <= f_init <= f_max".into());
        }
        if self.f_min < 0.0 {
            return Err("f_min must be non-negative".into());
        }
        if !(self.rotation_cap_deg > 0.0 && self.rotation_cap_deg <= MAX_ROTATION_CAP_DEG) {
            return Err("rotation_cap_deg must be in (0, 3]".into());
        }
        if self.s2_sense != 1.0 && self.s2_sense != -1.0 {
            return Err("s2_sense must be +1 or -1".into());
        }
        Ok(())
    }

    fn clamp_force(&self, f: f64) -> f64 {
        f.clamp(self.f_min, self.f_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperCommand {
    /// Ground frame, mm/s.
    pub linear_velocity: FramedVector,
    pub rpy_increment: RpyVector,
    /// N.
    pub grip_force: f64,
}

impl GripperCommand {
    /// Stand still at `grip_force`.
    pub fn hold(grip_force: f64) -> Self {
        Self {
            linear_velocity: FramedVector::zero(Frame::Ground),
            rpy_increment: RpyVector::zero(),
            grip_force,
        }
    }
}

/// `v0 · n_task` in the ground frame.
pub fn task_action_contact(n_task: &Vec3, cfg: &ControllerConfig) -> FramedVector {
    if !cfg.enabled.task {
        return FramedVector::zero(Frame::Ground);
    }
    FramedVector::new(Frame::Ground, n_task * cfg.v0)
}

/// Raises the grip force by `ΔF` while `‖s1‖ > d_lim`. Never lowers it.
pub fn constraint_action(s: &SlipMetrics, f_prev: f64, cfg: &ControllerConfig) -> f64 {
    let f = if s.s1_norm() > cfg.d_lim { f_prev + cfg.delta_f } else { f_prev };
    cfg.clamp_force(f)
}

/// Moves along the tangential slip direction at `v0`:
/// `ᴳ_H R · ᴴ_C R · e_tan · v0`. Zero when there is no tangential slip.
pub fn coordinating_action_contact(
    s: &SlipMetrics,
    hand: &Rotation,
    mount: &Rotation,
    cfg: &ControllerConfig,
) -> FramedVector {
    match tangential_direction(s, &s.normal) {
        Ok(e_tan) => {
            let sensor = mount.from;
            let dir = transform_vector(&hand.compose(mount), FramedVector::new(sensor, e_tan));
            dir.scale(cfg.v0)
        }
        Err(TactileError::NoTangentialComponent) | Err(_) => FramedVector::zero(Frame::Ground),
    }
}

/// Lowers the grip force by `ΔF` while `‖s1‖ < d_lim`; never below `f_min`.
pub fn task_action_air(s: &SlipMetrics, f_prev: f64, cfg: &ControllerConfig) -> f64 {
    let f = if s.s1_norm() < cfg.d_lim { f_prev - cfg.delta_f } else { f_prev };
    f.max(cfg.f_min).min(cfg.f_max)
}

/// Scales `rpy` so the rotation it induces is at most `cap`, keeping its
/// direction.
pub fn cap_rotation(rpy: &Vec3, cap: f64) -> Vec3 {
    let induced = |s: f64| rotation_angle(&rpy_matrix(RpyVector::from_vec(&(rpy * s))));
    if induced(1.0) <= cap {
        return *rpy;
    }
    // The induced angle grows monotonically with the scale on [0, 1] for the
    // small angles involved; bisect for the boundary.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if induced(mid) <= cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    rpy * lo
}

/// The RPY increment for this cycle: `n_coor` rescaled under the cap.
pub fn coordinating_action_air(n_coor: &Vec3, cfg: &ControllerConfig) -> RpyVector {
    RpyVector::from_vec(&cap_rotation(n_coor, cfg.rotation_cap()))
}

/// Which way a finger's rotational tendency reads relative to hand +Y.
/// Sensor normals point into the object, so the two fingers disagree.
pub fn finger_sense(finger: Finger) -> f64 {
    let n_hand = sensor_mount(finger).matrix() * Vec3::z();
    -n_hand.y
}

/// What the controller perceives in one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub finger: Finger,
    pub metrics: SlipMetrics,
    pub left: SlipMetrics,
    pub right: SlipMetrics,
    /// Sign applied to `s2` so that positive means rotation the task wants.
    pub sense: f64,
}

impl Signal {
    pub fn from_frame(frame: &TactileFrame, s2_sense: f64) -> Signal {
        let metrics = |f| slip_metrics(f).unwrap_or_default();
        let left = metrics(&frame.left);
        let right = metrics(&frame.right);
        let (finger, chosen) = select_signal_finger(left, right);
        Signal { finger, metrics: chosen, left, right, sense: s2_sense * finger_sense(finger) }
    }

    /// Rotational tendency in the task's sense.
    pub fn sigma(&self) -> f64 {
        self.sense * self.metrics.s2
    }
}

/// Which actions were active in a cycle, for the activity timeline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleActivity {
    pub task: bool,
    pub constraint: bool,
    pub coordinating: bool,
}

/// Evaluates task → constraint → coordinating from one tactile frame and
/// sums them into a single command. `q` is `n_task` (contact) or `n_coor`
/// (in air).
pub fn control_cycle(
    signal: &Signal,
    gripper: &GripperState,
    q: &Vec3,
    cfg: &ControllerConfig,
) -> (GripperCommand, CycleActivity) {
    let s = &signal.metrics;
    let f_prev = gripper.grip_force;
    let mut activity = CycleActivity::default();
    let cmd = match cfg.scenario {
        Scenario::Contact => {
            let v_task = task_action_contact(q, cfg);
            activity.task = v_task.norm() > 0.0;
            let force = if cfg.enabled.constraint { constraint_action(s, f_prev, cfg) } else { f_prev };
            activity.constraint = force != f_prev;
            let v_coor = if cfg.enabled.coordinating {
                coordinating_action_contact(s, &gripper.rotation, &sensor_mount(signal.finger), cfg)
            } else {
                FramedVector::zero(Frame::Ground)
            };
            activity.coordinating = v_coor.norm() > 0.0;
            GripperCommand {
                linear_velocity: v_task + v_coor,
                rpy_increment: RpyVector::zero(),
                grip_force: force,
            }
        }
        Scenario::InAir => {
            let mut force = f_prev;
            if cfg.enabled.task {
                force = task_action_air(s, force, cfg);
                activity.task = force != f_prev;
            }
            if cfg.enabled.constraint {
                let raised = constraint_action(s, force, cfg);
                activity.constraint = raised != force;
                force = raised;
            }
            let rpy = if cfg.enabled.coordinating {
                coordinating_action_air(q, cfg)
            } else {
                RpyVector::zero()
            };
            activity.coordinating = rpy != RpyVector::zero();
            GripperCommand {
                linear_velocity: FramedVector::zero(Frame::Ground),
                rpy_increment: rpy,
                grip_force: force,
            }
        }
    };
    (cmd, activity)
}
