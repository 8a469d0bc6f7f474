//! Fixed-step world: an object pinched between two compliant pads, optional
//! static environment, gravity and a scripted disturbance.
//!
//! The object is a rigid body whose pose relative to the hand has three free
//! coordinates: slide along the pad plane (hand X and Z) and rotation about
//! the squeeze axis (hand Y). The remaining directions are held by the
//! fingers' normal contact. Each pad is a grid of elastic pins with an
//! elasto-plastic friction law: a pin follows its anchor on the object until
//! its deflection reaches `μ·f_n/k_t`, after which the anchor slides. Pin
//! deflections are the marker displacements the tactile module consumes.
//!
//! Integration is linearly implicit Euler on the three coordinates with a
//! 1 ms substep; the gripper pose is kinematic and commanded once per
//! control cycle.

pub mod object;
pub mod scene;

use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::GripperCommand;
use crate::error::SimError;
use crate::geometry::{
    axis_angle, geodesic_angle, log_map, rot_y, rotation_angle, rpy_matrix, Frame, Mat3,
    Rotation, Vec3,
};
use crate::tactile::{Finger, MarkerField};

pub use object::{make_object_suite, ObjectKind, ObjectTemplate, Shape};

pub type Vec2 = Vector2<f64>;

/// Standard gravity, mm/s².
pub const GRAVITY_MM_S2: f64 = 9810.0;
/// kg → N·s²/mm.
const KG_TO_INTERNAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Integrator substep, s.
    pub dt: f64,
    /// Substeps per control cycle.
    pub substeps: usize,
    /// mm/s², pointing down −Z of the ground frame. Zero disables gravity.
    pub gravity: f64,
    /// Largest accepted commanded speed, mm/s.
    pub max_speed: f64,
    /// Largest accepted rotation per cycle, degrees.
    pub rotation_cap_deg: f64,
    /// Largest accepted grip force, N.
    pub max_grip_force: f64,
    /// Environment penalty stiffness per sample point, N/mm.
    pub env_stiffness: f64,
    /// Environment penalty damping per sample point, N·s/mm.
    pub env_damping: f64,
    /// Velocity scale of the tanh-regularized Coulomb law, mm/s.
    pub friction_velocity_scale: f64,
    /// Object speed treated as numerical blow-up, mm/s.
    pub divergence_speed: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            substeps: 33,
            gravity: GRAVITY_MM_S2,
            max_speed: 40.0,
            rotation_cap_deg: 3.0,
            max_grip_force: 40.0,
            env_stiffness: 4.0,
            env_damping: 0.02,
            friction_velocity_scale: 0.1,
            divergence_speed: 1e4,
        }
    }
}

impl SimParams {
    pub fn cycle_time(&self) -> f64 {
        self.dt * self.substeps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperState {
    /// `ᴳ_H R`.
    pub rotation: Rotation,
    /// Hand origin (midpoint between pad centres) in the ground frame, mm.
    pub position: Vec3,
    /// mm.
    pub finger_separation: f64,
    /// N.
    pub grip_force: f64,
}

impl GripperState {
    pub fn new(rotation: Mat3, position: Vec3, grip_force: f64) -> Self {
        Self {
            rotation: Rotation::new(Frame::Hand, Frame::Ground, rotation),
            position,
            finger_separation: 0.0,
            grip_force,
        }
    }
}

/// Static environment geometry in the ground frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvShape {
    /// Solid side is `normal · x < offset`.
    HalfSpace { normal: Vec3, offset: f64 },
    Box { center: Vec3, half: Vec3 },
}

impl EnvShape {
    /// Penetration depth and outward normal if `p` is inside.
    fn penetration(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        match self {
            EnvShape::HalfSpace { normal, offset } => {
                let depth = offset - normal.dot(p);
                (depth > 0.0).then_some((depth, *normal))
            }
            EnvShape::Box { center, half } => {
                let d = p - center;
                let mut best: Option<(f64, Vec3)> = None;
                for i in 0..3 {
                    let depth = half[i] - d[i].abs();
                    if depth <= 0.0 {
                        return None;
                    }
                    if best.is_none_or(|(b, _)| depth < b) {
                        let mut n = Vec3::zeros();
                        n[i] = if d[i] >= 0.0 { 1.0 } else { -1.0 };
                        best = Some((depth, n));
                    }
                }
                best
            }
        }
    }
}

/// Scripted external force on the object, e.g. a cable pulling on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    /// Mean force in the ground frame, N.
    pub force: Vec3,
    /// Relative amplitude of a sinusoidal ripple on top of the mean.
    pub ripple: f64,
    /// s.
    pub period: f64,
    /// Application point in the body frame, mm.
    pub point: Vec3,
    /// Extra torque in the ground frame, N·mm.
    pub torque: Vec3,
}

impl Disturbance {
    fn scale_at(&self, t: f64) -> f64 {
        1.0 + self.ripple * (2.0 * std::f64::consts::PI * t / self.period).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pin {
    /// Pin root in the hand X–Z plane, mm.
    base: Vec2,
    /// Object-fixed anchor, in reference hand-plane coordinates.
    anchor: Vec2,
    friction: f64,
    share: f64,
    slope: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
struct Pad {
    finger: Finger,
    /// `ᴴ_C R`.
    mount: Rotation,
    pins: Vec<Pin>,
    slip: f64,
}

/// In-hand state of the object.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectState {
    /// Translation along hand X and Z, mm.
    pub slide: Vec2,
    /// Rotation about hand Y, radians.
    pub pivot: f64,
    /// (ẋ, ż, φ̇) in mm/s and rad/s.
    pub velocity: Vec3,
}

/// Both fingers' marker fields for one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub left: MarkerField,
    pub right: MarkerField,
    pub tick: u64,
    pub sim_time: f64,
}

impl TactileFrame {
    pub fn field(&self, finger: Finger) -> &MarkerField {
        match finger {
            Finger::Left => &self.left,
            Finger::Right => &self.right,
        }
    }
}

/// `ᴴ_C R` for each sensor. Sensor Z is the pad normal pointing into the
/// object; sensor X is hand X.
pub fn sensor_mount(finger: Finger) -> Rotation {
    let m = match finger {
        Finger::Left => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
        Finger::Right => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0),
    };
    Rotation::new(finger.frame(), Frame::Hand, m)
}

/// Rotation about hand Y applied to hand-plane (x, z) coordinates.
fn rot2(phi: f64, v: &Vec2) -> Vec2 {
    let (s, c) = phi.sin_cos();
    Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

fn plane(v: &Vec3) -> Vec2 {
    Vec2::new(v.x, v.z)
}

/// Generalized-velocity Jacobian rows of a point at offset `r` (hand
/// plane) from the slide origin.
fn point_jacobian(r: &Vec2) -> nalgebra::Matrix2x3<f64> {
    nalgebra::Matrix2x3::new(1.0, 0.0, r.y, 0.0, 1.0, -r.x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub template: ObjectTemplate,
    /// Object attitude and position in the hand at zero in-hand motion.
    pub reference_rotation: Mat3,
    pub reference_position: Vec3,
    pub state: ObjectState,
    /// Current shift of the centre of mass along its axis, mm.
    pub com_shift: f64,
    pub gripper: GripperState,
    pub environment: Vec<EnvShape>,
    pub disturbance: Option<Disturbance>,
    pub params: SimParams,
    pub rng_seed: u64,
    pub time: f64,
    pub tick: u64,
    /// Forces the in-hand velocity instead of integrating it (scripted
    /// kinematic tests).
    pub prescribed_velocity: Option<Vec3>,
    pads: [Pad; 2],
    samples: Vec<Vec3>,
}

impl SimWorld {
    /// Places `template` in the hand so that body point `grasp_point` sits at
    /// the hand origin with in-hand tilt `tilt`.
    pub fn new(
        template: ObjectTemplate,
        grasp_point: Vec3,
        tilt: f64,
        gripper: GripperState,
        params: SimParams,
        rng_seed: u64,
    ) -> Result<Self, SimError> {
        if template.mass <= 0.0 {
            return Err(SimError::InvalidWorld("mass must be positive".into()));
        }
        let inertia = template.inertia();
        if inertia.symmetric_eigenvalues().iter().any(|&e| e <= 0.0) {
            return Err(SimError::InvalidWorld("inertia must be positive definite".into()));
        }
        if params.dt <= 0.0 || params.substeps == 0 {
            return Err(SimError::InvalidWorld("time step must be positive".into()));
        }
        if template.patch.friction < 0.0 || template.env_friction < 0.0 {
            return Err(SimError::InvalidWorld("friction must be non-negative".into()));
        }
        if gripper.grip_force < 0.0 || gripper.grip_force > params.max_grip_force {
            return Err(SimError::InvalidWorld("grip force outside [0, max]".into()));
        }
        let reference_rotation = rot_y(tilt);
        let reference_position = -(reference_rotation * grasp_point);

        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let patch = template.patch;
        let n = patch.grid;
        let pitch = patch.extent / n as f64;
        let mut bases = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = (j as f64 - (n as f64 - 1.0) / 2.0) * pitch;
                let z = (i as f64 - (n as f64 - 1.0) / 2.0) * pitch;
                bases.push(Vec2::new(x, z));
            }
        }
        let mut make_pad = |finger: Finger| {
            let pins = bases
                .iter()
                .map(|b| {
                    let jitter = if patch.friction_variation > 0.0 {
                        rng.gen_range(-patch.friction_variation..=patch.friction_variation)
                    } else {
                        0.0
                    };
                    Pin {
                        base: *b,
                        anchor: *b,
                        friction: patch.friction * (1.0 + jitter),
                        share: 0.0,
                        slope: Vec2::zeros(),
                    }
                })
                .collect();
            Pad { finger, mount: sensor_mount(finger), pins, slip: 0.0 }
        };
        let pads = [make_pad(Finger::Left), make_pad(Finger::Right)];
        let samples = template.shape.sample_points();
        let mut world = Self {
            template,
            reference_rotation,
            reference_position,
            state: ObjectState::default(),
            com_shift: 0.0,
            gripper,
            environment: Vec::new(),
            disturbance: None,
            params,
            rng_seed,
            time: 0.0,
            tick: 0,
            prescribed_velocity: None,
            pads,
            samples,
        };
        world.update_contact_shares();
        world.update_separation();
        Ok(world)
    }

    fn mass(&self) -> f64 {
        self.template.mass * KG_TO_INTERNAL
    }

    fn pin_stiffness(&self) -> f64 {
        let n = self.template.patch.grid;
        self.template.patch.tangential_stiffness / (n * n) as f64
    }

    fn pin_damping(&self) -> f64 {
        let n = self.template.patch.grid;
        self.template.patch.damping / (n * n) as f64
    }

    /// Centre of mass in the body frame.
    pub fn com_body(&self) -> Vec3 {
        match &self.template.com_shift {
            Some(shift) => self.template.com + shift.axis * self.com_shift,
            None => self.template.com,
        }
    }

    /// Reference (unmoved) hand coordinates of a body point.
    fn reference_point(&self, body: &Vec3) -> Vec3 {
        self.reference_rotation * body + self.reference_position
    }

    /// Offset of a reference point from the slide origin, current pose.
    fn rotated(&self, reference: &Vec3) -> Vec3 {
        rot_y(self.state.pivot) * reference
    }

    fn hand_point(&self, reference: &Vec3) -> Vec3 {
        let r = self.rotated(reference);
        Vec3::new(self.state.slide.x + r.x, r.y, self.state.slide.y + r.z)
    }

    /// The body point currently at the hand origin and the current in-hand
    /// tilt, i.e. the grasp a fresh world would need to start in this pose.
    pub fn current_grasp(&self) -> (Vec3, f64) {
        let r0 = self.reference_rotation;
        let grasp0 = -(r0.transpose() * self.reference_position);
        let rot = self.object_rotation_in_hand();
        let slide = Vec3::new(self.state.slide.x, 0.0, self.state.slide.y);
        let tilt = rot[(0, 2)].atan2(rot[(0, 0)]);
        (grasp0 - rot.transpose() * slide, tilt)
    }

    /// Object attitude in the hand frame.
    pub fn object_rotation_in_hand(&self) -> Mat3 {
        rot_y(self.state.pivot) * self.reference_rotation
    }

    /// Object attitude in the ground frame.
    pub fn object_rotation(&self) -> Mat3 {
        self.gripper.rotation.matrix() * self.object_rotation_in_hand()
    }

    /// Body origin in the ground frame, mm.
    pub fn object_position(&self) -> Vec3 {
        self.gripper.position
            + self.gripper.rotation.matrix() * self.hand_point(&self.reference_position)
    }

    /// Centre of mass in the ground frame, mm.
    pub fn com_world(&self) -> Vec3 {
        let com = self.reference_point(&self.com_body());
        self.gripper.position + self.gripper.rotation.matrix() * self.hand_point(&com)
    }

    /// Ground-frame position of a body point, mm.
    pub fn world_point(&self, body: &Vec3) -> Vec3 {
        let r = self.reference_point(body);
        self.gripper.position + self.gripper.rotation.matrix() * self.hand_point(&r)
    }

    /// Path length of kinetic slip per finger since the start, mm.
    pub fn accumulated_tangential_slip(&self) -> [f64; 2] {
        [self.pads[0].slip, self.pads[1].slip]
    }

    pub fn max_accumulated_slip(&self) -> f64 {
        self.pads[0].slip.max(self.pads[1].slip)
    }

    /// Pin deflection in the hand plane.
    fn deflection(&self, pin: &Pin) -> Vec2 {
        let a = rot2(self.state.pivot, &pin.anchor) + self.state.slide;
        a - pin.base
    }

    /// Body-frame (x, z) of a hand-plane point on the pad.
    fn body_plane_coords(&self, p: &Vec2) -> Vec2 {
        let reference = rot2(-self.state.pivot, &(p - self.state.slide));
        let r3 = Vec3::new(reference.x, 0.0, reference.y) - self.reference_position;
        let body = self.reference_rotation.transpose() * r3;
        Vec2::new(body.x, body.z)
    }

    fn update_contact_shares(&mut self) {
        let shape = self.template.shape.clone();
        let indentation = self.template.patch.indentation;
        // Face slope in body coordinates → hand plane.
        let theta = self.state.pivot + rotation_angle_about_y(&self.reference_rotation);
        for k in 0..2 {
            let mut total = 0.0;
            let contacts: Vec<_> = self.pads[k]
                .pins
                .iter()
                .map(|pin| {
                    let b = self.body_plane_coords(&pin.base);
                    let c = shape.face_contact(b.x, b.y, indentation);
                    total += c.pressure;
                    c
                })
                .collect();
            for (pin, c) in self.pads[k].pins.iter_mut().zip(contacts) {
                pin.share = if total > 0.0 { c.pressure / total } else { 0.0 };
                pin.slope = rot2(theta, &c.slope);
            }
        }
    }

    fn update_separation(&mut self) {
        let width = 2.0 * self.template.shape.half_width();
        let squeeze = self.gripper.grip_force / self.template.patch.normal_stiffness;
        self.gripper.finger_separation = (width - 2.0 * squeeze).max(0.0);
    }

    fn in_contact(&self) -> bool {
        self.gripper.grip_force > 0.0
            && self.pads.iter().any(|p| p.pins.iter().any(|pin| pin.share > 0.0))
    }

    /// Mass matrix of the three in-hand coordinates.
    fn mass_matrix(&self) -> Matrix3<f64> {
        let m = self.mass();
        let com = self.rotated(&self.reference_point(&self.com_body()));
        let jc = point_jacobian(&plane(&com));
        let inertia = self.reference_rotation * self.template.inertia() * self.reference_rotation.transpose();
        let mut mm = m * jc.transpose() * jc;
        mm[(2, 2)] += inertia[(1, 1)] * KG_TO_INTERNAL;
        mm
    }

    /// Total mechanical energy, J: kinetic, pin elastic, gravitational and
    /// penalty-spring energy.
    pub fn mechanical_energy(&self) -> f64 {
        let w = self.state.velocity;
        let kinetic = 0.5 * w.dot(&(self.mass_matrix() * w));
        let k = self.pin_stiffness();
        let elastic: f64 = self
            .pads
            .iter()
            .flat_map(|p| p.pins.iter())
            .filter(|pin| pin.share > 0.0)
            .map(|pin| 0.5 * k * self.deflection(pin).norm_squared())
            .sum();
        let potential = self.mass() * self.params.gravity * self.com_world().z;
        let mut penalty = 0.0;
        for s in &self.samples {
            let p = self.world_point(s);
            for env in &self.environment {
                if let Some((depth, _)) = env.penetration(&p) {
                    penalty += 0.5 * self.params.env_stiffness * depth * depth;
                }
            }
        }
        // N·mm → J.
        (kinetic + elastic + potential + penalty) * 1e-3
    }

    /// Advances one control cycle under `cmd` and returns the tactile frame
    /// read at its end.
    pub fn step(&mut self, cmd: &GripperCommand) -> Result<TactileFrame, SimError> {
        self.validate(cmd)?;
        self.gripper.grip_force = cmd.grip_force;
        self.update_separation();

        let n = self.params.substeps;
        let cycle = self.params.cycle_time();
        let velocity = cmd.linear_velocity.v;
        let increment = rpy_matrix(cmd.rpy_increment);
        let (axis, angle) = log_map(&increment);
        let angular_velocity = axis * (angle / cycle);
        let start_position = self.gripper.position;
        let start_rotation = self.gripper.rotation;

        for k in 1..=n {
            self.substep(&velocity, &angular_velocity)?;
            // Exact endpoint on the last substep keeps pose restoration exact.
            if k == n {
                self.gripper.position = start_position + velocity * cycle;
                self.gripper.rotation = start_rotation.premultiply(&increment);
            } else {
                let frac = k as f64 / n as f64;
                self.gripper.position = start_position + velocity * (cycle * frac);
                self.gripper.rotation =
                    start_rotation.premultiply(&axis_angle(&axis, angle * frac));
            }
            self.time += self.params.dt;
            self.return_map();
            self.update_com_shift();
            self.update_contact_shares();
            if !self.in_contact() {
                return Err(SimError::ObjectDropped { time: self.time });
            }
        }
        self.tick += 1;
        Ok(self.tactile_frame())
    }

    fn validate(&self, cmd: &GripperCommand) -> Result<(), SimError> {
        assert_eq!(cmd.linear_velocity.frame, Frame::Ground, "velocity must be in the ground frame");
        let speed = cmd.linear_velocity.norm();
        if !(speed <= self.params.max_speed + 1e-9) {
            return Err(SimError::InvalidWorld(format!("commanded speed {speed:.3} mm/s exceeds limit")));
        }
        let rot = rotation_angle(&rpy_matrix(cmd.rpy_increment));
        if !(rot <= self.params.rotation_cap_deg.to_radians() + 1e-12) {
            return Err(SimError::InvalidWorld(format!(
                "commanded rotation {:.4}° exceeds cap",
                rot.to_degrees()
            )));
        }
        if !(cmd.grip_force >= 0.0 && cmd.grip_force <= self.params.max_grip_force + 1e-9) {
            return Err(SimError::InvalidWorld(format!("grip force {} N out of range", cmd.grip_force)));
        }
        Ok(())
    }

    fn substep(&mut self, gripper_velocity: &Vec3, gripper_omega: &Vec3) -> Result<(), SimError> {
        let dt = self.params.dt;
        let w = self.state.velocity;

        if let Some(v) = self.prescribed_velocity {
            self.state.velocity = v;
            self.state.slide += Vec2::new(v.x, v.y) * dt;
            self.state.pivot += v.z * dt;
            return Ok(());
        }

        let mut force = Vec3::zeros();
        let mut stiffness = Matrix3::<f64>::zeros();
        let mut damping = Matrix3::<f64>::zeros();

        // Pads.
        let k = self.pin_stiffness();
        let c = self.pin_damping();
        for pad in &self.pads {
            for pin in pad.pins.iter().filter(|p| p.share > 0.0) {
                let r = rot2(self.state.pivot, &pin.anchor);
                let j = point_jacobian(&r);
                let delta = r + self.state.slide - pin.base;
                let v = j * w;
                force += j.transpose() * (-k * delta - c * v);
                let jtj = j.transpose() * j;
                stiffness += k * jtj;
                damping += c * jtj;
            }
        }

        // Gravity and the centripetal term at the centre of mass.
        let m = self.mass();
        let com = self.rotated(&self.reference_point(&self.com_body()));
        let jc = point_jacobian(&plane(&com));
        let g_hand = self.gripper.rotation.matrix().transpose() * Vec3::new(0.0, 0.0, -self.params.gravity);
        force += jc.transpose() * (m * plane(&g_hand) + m * w.z * w.z * plane(&com));

        // Environment.
        let r_gh = *self.gripper.rotation.matrix();
        let r_hg = r_gh.transpose();
        if !self.environment.is_empty() {
            let mu = self.template.env_friction;
            let ks = self.params.env_stiffness;
            let cs = self.params.env_damping;
            let vs = self.params.friction_velocity_scale;
            for s in &self.samples {
                let reference = self.reference_point(s);
                let r = self.rotated(&reference);
                let p_hand = Vec3::new(self.state.slide.x + r.x, r.y, self.state.slide.y + r.z);
                let p_world = self.gripper.position + r_gh * p_hand;
                for env in &self.environment {
                    let Some((depth, normal)) = env.penetration(&p_world) else { continue };
                    let j = point_jacobian(&plane(&r));
                    let jw = j * w;
                    let v_world = gripper_velocity
                        + gripper_omega.cross(&(r_gh * p_hand))
                        + r_gh * Vec3::new(jw.x, 0.0, jw.y);
                    let vn = v_world.dot(&normal);
                    let fn_ = (ks * depth - cs * vn).max(0.0);
                    let vt = v_world - vn * normal;
                    let u = vt.norm();
                    let friction_gain = if u > 1e-12 {
                        mu * fn_ * (u / vs).tanh() / u
                    } else {
                        mu * fn_ / vs
                    };
                    let f_world = fn_ * normal - friction_gain * vt;
                    force += j.transpose() * plane(&(r_hg * f_world));

                    let n_hand = r_hg * normal;
                    let np = plane(&n_hand);
                    let jn = np.transpose() * j;
                    stiffness += ks * jn.transpose() * jn;
                    damping += cs * jn.transpose() * jn;
                    let tangent = Mat3::identity() - n_hand * n_hand.transpose();
                    let tp = nalgebra::Matrix2::new(
                        tangent[(0, 0)],
                        tangent[(0, 2)],
                        tangent[(2, 0)],
                        tangent[(2, 2)],
                    );
                    damping += friction_gain * j.transpose() * tp * j;
                }
            }
        }

        // Disturbance.
        if let Some(d) = &self.disturbance {
            let scale = d.scale_at(self.time);
            let r = self.rotated(&self.reference_point(&d.point));
            let j = point_jacobian(&plane(&r));
            force += j.transpose() * plane(&(r_hg * (d.force * scale)));
            force.z += (r_hg * (d.torque * scale)).y;
        }

        let system = self.mass_matrix() + dt * damping + dt * dt * stiffness;
        let rhs = dt * (force - dt * stiffness * w);
        let dw = system
            .lu()
            .solve(&rhs)
            .ok_or(SimError::Diverged { time: self.time, speed: f64::NAN })?;
        let w_new = w + dw;
        let speed = Vec2::new(w_new.x, w_new.y).norm();
        if !w_new.iter().all(|x| x.is_finite()) || speed > self.params.divergence_speed {
            return Err(SimError::Diverged { time: self.time, speed });
        }
        self.state.velocity = w_new;
        self.state.slide += Vec2::new(w_new.x, w_new.y) * dt;
        self.state.pivot += w_new.z * dt;
        Ok(())
    }

    /// Elasto-plastic return mapping: pins past their friction limit slide
    /// their anchors back onto the limit circle.
    fn return_map(&mut self) {
        let k = self.pin_stiffness();
        let grip = self.gripper.grip_force;
        let (slide, pivot) = (self.state.slide, self.state.pivot);
        for pad in &mut self.pads {
            let mut slip_sum = Vec2::zeros();
            let mut count = 0usize;
            for pin in &mut pad.pins {
                let current = rot2(pivot, &pin.anchor) + slide;
                let delta = current - pin.base;
                if pin.share <= 0.0 {
                    pin.anchor = rot2(-pivot, &(pin.base - slide));
                    continue;
                }
                count += 1;
                let limit = pin.friction * grip * pin.share / k;
                let len = delta.norm();
                if len > limit {
                    let kept = if len > 0.0 { delta * (limit / len) } else { delta };
                    slip_sum += delta - kept;
                    pin.anchor = rot2(-pivot, &(pin.base + kept - slide));
                }
            }
            if count > 0 {
                pad.slip += slip_sum.norm() / count as f64;
            }
        }
    }

    fn update_com_shift(&mut self) {
        let Some(shift) = self.template.com_shift else { return };
        let down_body = self.object_rotation().transpose() * Vec3::new(0.0, 0.0, -1.0);
        let target = shift.amplitude * down_body.dot(&shift.axis);
        self.com_shift += (target - self.com_shift) * (self.params.dt / shift.time_constant);
    }

    /// Marker fields from the current pin deflections.
    pub fn tactile_frame(&self) -> TactileFrame {
        let field = |pad: &Pad| {
            let to_sensor = pad.mount.inverse();
            let mut refs = Vec::with_capacity(pad.pins.len());
            let mut disps = Vec::with_capacity(pad.pins.len());
            let mut normals = Vec::with_capacity(pad.pins.len());
            let side = match pad.finger {
                Finger::Left => 1.0,
                Finger::Right => -1.0,
            };
            for pin in &pad.pins {
                let base = Vec3::new(pin.base.x, 0.0, pin.base.y);
                refs.push(to_sensor.matrix() * base);
                let d = if pin.share > 0.0 { self.deflection(pin) } else { Vec2::zeros() };
                disps.push(to_sensor.matrix() * Vec3::new(d.x, 0.0, d.y));
                // Pad normal in the hand frame, tilted by the face slope.
                let n_hand = Vec3::new(pin.slope.x, -side, pin.slope.y).normalize();
                normals.push(to_sensor.matrix() * n_hand);
            }
            MarkerField { finger: pad.finger, ref_positions: refs, displacements: disps, normals }
        };
        TactileFrame {
            left: field(&self.pads[0]),
            right: field(&self.pads[1]),
            tick: self.tick,
            sim_time: self.time,
        }
    }

    /// Geodesic angle between the object's in-hand attitude and `target`,
    /// degrees in [0, 180].
    pub fn object_orientation_error(&self, target: &Mat3) -> f64 {
        object_orientation_error(self, target)
    }

    /// Normal force currently transmitted by a finger, N.
    pub fn finger_normal_force(&self, finger: Finger) -> f64 {
        let pad = &self.pads[finger as usize];
        if pad.pins.iter().any(|p| p.share > 0.0) { self.gripper.grip_force } else { 0.0 }
    }

    /// Lets the object come to rest under a constant command, without
    /// advancing the tick counter or accumulating slip.
    pub fn settle(&mut self, cycles: usize) -> Result<(), SimError> {
        let hold = GripperCommand::hold(self.gripper.grip_force);
        for _ in 0..cycles {
            self.step(&hold)?;
        }
        self.tick = 0;
        self.time = 0.0;
        for pad in &mut self.pads {
            pad.slip = 0.0;
        }
        Ok(())
    }
}

fn rotation_angle_about_y(m: &Mat3) -> f64 {
    m[(0, 2)].atan2(m[(0, 0)])
}

/// Geodesic angle in degrees between the object's attitude relative to the
/// hand and `target` (also relative to the hand).
pub fn object_orientation_error(world: &SimWorld, target: &Mat3) -> f64 {
    geodesic_angle(&world.object_rotation_in_hand(), target).to_degrees()
}
