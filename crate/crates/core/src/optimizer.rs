//! Online central-difference optimization of the decision vector.
//!
//! In contact `q` is the unit task direction `n_task`; in the air it is the
//! RPY increment `n_coor`. Every probe cycle is followed by a cycle with the
//! inverse motion, so once the six probes are done the gripper is back where
//! it started and only the nominal move remains.

use serde::{Deserialize, Serialize};

use crate::controller::{cap_rotation, GripperCommand};
use crate::error::{OptimizerError, SimError};
use crate::geometry::{rpy_from_matrix, rpy_matrix, Frame, FramedVector, RpyVector, Vec3};
use crate::tactile::SlipMetrics;

/// Norm below which a direction update is rejected.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `q` is a unit translation direction.
    TaskDirection,
    /// `q` is an RPY increment in radians.
    CoordinatingRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Normal,
    /// Probing axis `m` (0-based) with the given sign.
    Probing { axis: usize, sign: i8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub alpha: f64,
    /// Probe size for direction components.
    pub epsilon_direction: f64,
    /// Probe size for RPY components, degrees.
    pub epsilon_rotation_deg: f64,
    /// Loss shaping constant, mm. Defaults to `2 · d_lim` when absent.
    pub lambda0: Option<f64>,
    /// Control cycles between optimization steps.
    pub cadence: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { alpha: 0.05, epsilon_direction: 0.1, epsilon_rotation_deg: 0.5, lambda0: None, cadence: 5 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err("alpha must be positive".into());
        }
        if !(self.epsilon_direction > 0.0 && self.epsilon_rotation_deg > 0.0) {
            return Err("epsilon must be positive".into());
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0) {
                return Err("lambda0 must be positive".into());
            }
        }
        if self.cadence == 0 {
            return Err("cadence must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerState {
    pub mode: Mode,
    pub q: Vec3,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub phase: Phase,
    pub last_gradient: Vec3,
    /// Per-cycle rotation cap applied to `q` in rotation mode.
    pub rotation_cap: f64,
    last_loss: Option<f64>,
    increases: u32,
}

impl OptimizerState {
    pub fn new(mode: Mode, q: Vec3, cfg: &OptimizerConfig, d_lim: f64, rotation_cap: f64) -> Self {
        let epsilon = match mode {
            Mode::TaskDirection => cfg.epsilon_direction,
            Mode::CoordinatingRotation => cfg.epsilon_rotation_deg.to_radians(),
        };
        let q = match mode {
            Mode::TaskDirection => q.normalize(),
            Mode::CoordinatingRotation => cap_rotation(&q, rotation_cap),
        };
        Self {
            mode,
            q,
            alpha: cfg.alpha,
            epsilon,
            lambda0: cfg.lambda0.unwrap_or(2.0 * d_lim),
            phase: Phase::Normal,
            last_gradient: Vec3::zeros(),
            rotation_cap,
            last_loss: None,
            increases: 0,
        }
    }

    /// `q ← q − αg`, renormalized (direction) or capped (rotation). A
    /// collapsing direction leaves `q` alone and halves `α`.
    pub fn update(&mut self, g: &Vec3) -> Result<(), OptimizerError> {
        self.last_gradient = *g;
        let raw = self.q - self.alpha * g;
        match self.mode {
            Mode::TaskDirection => {
                let n = raw.norm();
                if n < DEGENERATE_NORM {
                    self.alpha *= 0.5;
                    return Err(OptimizerError::DegenerateDirection(n));
                }
                self.q = raw / n;
            }
            Mode::CoordinatingRotation => {
                self.q = cap_rotation(&raw, self.rotation_cap);
            }
        }
        Ok(())
    }

    /// Records the loss seen after a step; two increases in a row halve `α`.
    pub fn observe_loss(&mut self, loss: f64) {
        if let Some(prev) = self.last_loss {
            if loss > prev {
                self.increases += 1;
                if self.increases >= 2 {
                    self.alpha *= 0.5;
                    self.increases = 0;
                }
            } else {
                self.increases = 0;
            }
        }
        self.last_loss = Some(loss);
    }
}

/// Loss shaping term on the rotational tendency `σ`.
pub fn l2(sigma: f64, lambda0: f64) -> f64 {
    if sigma > 0.0 {
        (lambda0 - sigma).powi(2) - lambda0 * lambda0
    } else {
        sigma * sigma
    }
}

/// `‖S₁‖² + L₂(s2_sense · S₂)`.
pub fn loss(s: &SlipMetrics, lambda0: f64, s2_sense: f64) -> f64 {
    s.s1.norm_squared() + l2(s2_sense * s.s2, lambda0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Probe { axis: usize, sign: i8 },
    Restore { axis: usize, sign: i8 },
    Nominal,
}

impl ProbeKind {
    pub fn tag(self) -> String {
        let s = |sign: i8| if sign > 0 { '+' } else { '-' };
        match self {
            ProbeKind::Probe { axis, sign } => format!("probe{}{}", axis + 1, s(sign)),
            ProbeKind::Restore { axis, sign } => format!("restore{}{}", axis + 1, s(sign)),
            ProbeKind::Nominal => "nominal".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeStep {
    pub kind: ProbeKind,
    pub command: GripperCommand,
}

/// The six probe cycles, each followed by its inverse, then `nominal`.
/// Probes hold the grip force and carry only the perturbed optimized
/// action.
pub fn probe_schedule(
    opt: &OptimizerState,
    v0: f64,
    grip_force: f64,
    nominal: GripperCommand,
) -> Vec<ProbeStep> {
    let mut steps = Vec::with_capacity(13);
    for axis in 0..3 {
        for sign in [1i8, -1] {
            let mut e = Vec3::zeros();
            e[axis] = opt.epsilon * sign as f64;
            let perturbed = opt.q + e;
            let (probe, restore) = match opt.mode {
                Mode::TaskDirection => {
                    let v = FramedVector::new(Frame::Ground, perturbed * v0);
                    let hold = GripperCommand::hold(grip_force);
                    (
                        GripperCommand { linear_velocity: v, ..hold },
                        GripperCommand { linear_velocity: -v, ..hold },
                    )
                }
                Mode::CoordinatingRotation => {
                    let rpy = RpyVector::from_vec(&cap_rotation(&perturbed, opt.rotation_cap));
                    let back = rpy_from_matrix(&rpy_matrix(rpy).transpose());
                    let hold = GripperCommand::hold(grip_force);
                    (
                        GripperCommand { rpy_increment: rpy, ..hold },
                        GripperCommand { rpy_increment: back, ..hold },
                    )
                }
            };
            steps.push(ProbeStep { kind: ProbeKind::Probe { axis, sign }, command: probe });
            steps.push(ProbeStep { kind: ProbeKind::Restore { axis, sign }, command: restore });
        }
    }
    steps.push(ProbeStep { kind: ProbeKind::Nominal, command: nominal });
    steps
}

/// Central differences from `[L⁺₁, L⁻₁, L⁺₂, L⁻₂, L⁺₃, L⁻₃]`.
pub fn gradient(losses: &[f64; 6], epsilon: f64) -> Vec3 {
    Vec3::new(
        (losses[0] - losses[1]) / (2.0 * epsilon),
        (losses[2] - losses[3]) / (2.0 * epsilon),
        (losses[4] - losses[5]) / (2.0 * epsilon),
    )
}

/// Something that can execute a gripper command for one control cycle and
/// report the loss read from the resulting tactile frame.
pub trait ProbeEnvironment {
    fn run_cycle(&mut self, kind: ProbeKind, cmd: &GripperCommand) -> Result<f64, SimError>;
}

/// One optimization step, as written to the optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeTrace {
    pub q_before: Vec3,
    pub q_after: Vec3,
    pub gradient: Vec3,
    pub losses: [f64; 6],
    pub alpha: f64,
    pub nominal_loss: f64,
    pub degenerate: bool,
}

/// Runs the probe schedule, estimates the gradient and updates `opt`.
/// Returns `None` without touching the environment when online adjustment
/// is disabled.
pub fn optimize_step<E: ProbeEnvironment>(
    env: &mut E,
    opt: &mut OptimizerState,
    online_adjust: bool,
    v0: f64,
    grip_force: f64,
    nominal: GripperCommand,
) -> Result<Option<OptimizeTrace>, OptimizerError> {
    if !online_adjust {
        return Ok(None);
    }
    let q_before = opt.q;
    let mut losses = [0.0; 6];
    let mut nominal_loss = 0.0;
    for step in probe_schedule(opt, v0, grip_force, nominal) {
        opt.phase = match step.kind {
            ProbeKind::Probe { axis, sign } | ProbeKind::Restore { axis, sign } => {
                Phase::Probing { axis, sign }
            }
            ProbeKind::Nominal => Phase::Normal,
        };
        let l = env.run_cycle(step.kind, &step.command).map_err(|e| {
            opt.phase = Phase::Normal;
            OptimizerError::ProbeAborted(e)
        })?;
        match step.kind {
            ProbeKind::Probe { axis, sign } => {
                losses[2 * axis + usize::from(sign < 0)] = l;
            }
            ProbeKind::Nominal => nominal_loss = l,
            ProbeKind::Restore { .. } => {}
        }
    }
    let g = gradient(&losses, opt.epsilon);
    let degenerate = matches!(opt.update(&g), Err(OptimizerError::DegenerateDirection(_)));
    opt.observe_loss(nominal_loss);
    Ok(Some(OptimizeTrace {
        q_before,
        q_after: opt.q,
        gradient: g,
        losses,
        alpha: opt.alpha,
        nominal_loss,
        degenerate,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle;

    fn slip(s1: Vec3, s2: f64) -> SlipMetrics {
        SlipMetrics { s1, s2, normal: Vec3::z() }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&slip(Vec3::zeros(), 0.0), 1.0, 1.0), 0.0);
        assert!((loss(&slip(Vec3::new(0.1, 0.0, 0.0), 0.0), 1.0, 1.0) - 0.01).abs() < 1e-15);
        assert_eq!(l2(1.0, 1.0), -1.0);
        assert_eq!(l2(0.5, 1.0), -0.75);
        // σ² − 2λ₀σ expansion.
        for &(s, l) in &[(0.3, 0.7), (2.5, 1.0), (0.01, 2.0)] {
            assert!((l2(s, l) - (s * s - 2.0 * l * s)).abs() < 1e-12);
        }
        // The sense flag flips which sign is rewarded.
        assert_eq!(loss(&slip(Vec3::zeros(), -1.0), 1.0, -1.0), -1.0);
        assert_eq!(loss(&slip(Vec3::zeros(), -1.0), 1.0, 1.0), 1.0);
    }

    #[test]
    fn l2_is_continuous_at_zero() {
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let d = 10f64.powi(-k);
            let jump = (l2(d, 1.0) - l2(-d, 1.0)).abs();
            assert!(jump < prev);
            prev = jump;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient(&[1.0; 6], 0.1), Vec3::zeros());
        let g = gradient(&[1.2, 1.0, 0.0, 0.0, 0.0, 0.0], 0.05);
        assert!((g.x - 2.0).abs() < 1e-12);
    }

    fn task_state(q: Vec3, alpha: f64) -> OptimizerState {
        let cfg = OptimizerConfig { alpha, ..Default::default() };
        OptimizerState::new(Mode::TaskDirection, q, &cfg, 0.05, 3f64.to_radians())
    }

    #[test]
    fn update_examples() {
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.5);
        s.update(&Vec3::zeros()).unwrap();
        assert_eq!(s.q, Vec3::new(0.0, 0.0, -1.0));
        s.update(&Vec3::new(0.2, 0.0, 0.0)).unwrap();
        let expected = Vec3::new(-0.1, 0.0, -1.0).normalize();
        assert!((s.q - expected).norm() < 1e-15);
        assert!((s.q.norm() - 1.0).abs() < 1e-12);

        let cfg = OptimizerConfig::default();
        let cap = 3f64.to_radians();
        let mut r = OptimizerState::new(Mode::CoordinatingRotation, Vec3::zeros(), &cfg, 0.05, cap);
        r.alpha = 1.0;
        r.update(&Vec3::new(-0.2, 0.1, 0.0)).unwrap();
        let induced = rotation_angle(&rpy_matrix(RpyVector::from_vec(&r.q)));
        assert!((induced - cap).abs() < 1e-9);
    }

    #[test]
    fn collapsing_direction_halves_alpha() {
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.5);
        let err = s.update(&Vec3::new(0.0, 0.0, -2.0)).unwrap_err();
        assert!(matches!(err, OptimizerError::DegenerateDirection(_)));
        assert_eq!(s.alpha, 0.25);
        assert_eq!(s.q, Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn two_loss_increases_halve_alpha() {
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.4);
        s.observe_loss(1.0);
        s.observe_loss(2.0);
        assert_eq!(s.alpha, 0.4);
        s.observe_loss(3.0);
        assert_eq!(s.alpha, 0.2);
        s.observe_loss(1.0);
        s.observe_loss(2.0);
        assert_eq!(s.alpha, 0.2);
    }

    #[test]
    fn schedule_shape() {
        let s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.05);
        let sched = probe_schedule(&s, 5.0, 10.0, GripperCommand::hold(10.0));
        assert_eq!(sched.len(), 13);
        assert_eq!(sched.iter().filter(|p| matches!(p.kind, ProbeKind::Probe { .. })).count(), 6);
        assert_eq!(sched.last().unwrap().kind, ProbeKind::Nominal);
        for pair in sched[..12].chunks(2) {
            assert_eq!(pair[0].command.linear_velocity.v, -pair[1].command.linear_velocity.v);
            assert_eq!(pair[0].command.grip_force, 10.0);
        }
    }

    /// Loss wired directly to the probed decision vector.
    struct Planted<F: Fn(&Vec3) -> f64> {
        mode: Mode,
        v0: f64,
        f: F,
        probes: usize,
    }

    impl<F: Fn(&Vec3) -> f64> ProbeEnvironment for Planted<F> {
        fn run_cycle(&mut self, kind: ProbeKind, cmd: &GripperCommand) -> Result<f64, SimError> {
            if matches!(kind, ProbeKind::Probe { .. }) {
                self.probes += 1;
            }
            let q = match self.mode {
                Mode::TaskDirection => cmd.linear_velocity.v / self.v0,
                Mode::CoordinatingRotation => cmd.rpy_increment.to_vec(),
            };
            Ok((self.f)(&q))
        }
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let target = Vec3::new(0.3, -0.2, -0.9);
        let mut env = Planted { mode: Mode::TaskDirection, v0: 5.0, f: |q: &Vec3| (q - target).norm_squared(), probes: 0 };
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.05);
        for eps in [0.1, 0.05, 0.025] {
            s.epsilon = eps;
            let q = s.q;
            let trace = optimize_step(&mut env, &mut s, true, 5.0, 10.0, GripperCommand::hold(10.0)).unwrap().unwrap();
            assert!((trace.gradient - 2.0 * (q - target)).norm() < 1e-12);
        }
    }

    #[test]
    fn noa_runs_no_probes() {
        let mut env = Planted { mode: Mode::TaskDirection, v0: 5.0, f: |q: &Vec3| q.x, probes: 0 };
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.05);
        let before = s;
        for _ in 0..50 {
            assert!(optimize_step(&mut env, &mut s, false, 5.0, 10.0, GripperCommand::hold(10.0)).unwrap().is_none());
        }
        assert_eq!(env.probes, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn descent_on_planted_quadratic() {
        let target = Vec3::new(0.01, -0.015, 0.005);
        let mut env = Planted { mode: Mode::CoordinatingRotation, v0: 5.0, f: |q: &Vec3| (q - target).norm_squared(), probes: 0 };
        let cfg = OptimizerConfig { alpha: 0.2, epsilon_rotation_deg: 0.05, ..Default::default() };
        let mut s = OptimizerState::new(Mode::CoordinatingRotation, Vec3::zeros(), &cfg, 0.05, 3f64.to_radians());
        let mut dist = (s.q - target).norm();
        for _ in 0..10 {
            optimize_step(&mut env, &mut s, true, 5.0, 10.0, GripperCommand::hold(10.0)).unwrap();
            let d = (s.q - target).norm();
            assert!(d < dist);
            dist = d;
        }
    }

    #[test]
    fn symmetric_axis_has_zero_gradient() {
        let mut env = Planted { mode: Mode::TaskDirection, v0: 5.0, f: |q: &Vec3| q.y * q.y + q.z, probes: 0 };
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.05);
        let t = optimize_step(&mut env, &mut s, true, 5.0, 10.0, GripperCommand::hold(10.0)).unwrap().unwrap();
        assert_eq!(t.gradient.x, 0.0);
    }

    #[test]
    fn aborted_probe_reports_error() {
        struct Dropping;
        impl ProbeEnvironment for Dropping {
            fn run_cycle(&mut self, _: ProbeKind, _: &GripperCommand) -> Result<f64, SimError> {
                Err(SimError::ObjectDropped { time: 0.1 })
            }
        }
        let mut s = task_state(Vec3::new(0.0, 0.0, -1.0), 0.05);
        let err = optimize_step(&mut Dropping, &mut s, true, 5.0, 10.0, GripperCommand::hold(10.0)).unwrap_err();
        assert!(matches!(err, OptimizerError::ProbeAborted(SimError::ObjectDropped { .. })));
        assert_eq!(s.phase, Phase::Normal);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn direction_stays_unit(gx in -5.0..5.0f64, gy in -5.0..5.0f64, gz in -5.0..5.0f64, a in 0.001..0.3f64) {
                let mut s = task_state(Vec3::new(0.1, 0.2, -1.0), a);
                let _ = s.update(&Vec3::new(gx, gy, gz));
                prop_assert!((s.q.norm() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn rotation_stays_under_cap(gx in -5.0..5.0f64, gy in -5.0..5.0f64, gz in -5.0..5.0f64) {
                let cfg = OptimizerConfig { alpha: 1.0, ..Default::default() };
                let cap = 3f64.to_radians();
                let mut s = OptimizerState::new(Mode::CoordinatingRotation, Vec3::zeros(), &cfg, 0.05, cap);
                s.update(&Vec3::new(gx, gy, gz)).unwrap();
                prop_assert!(rotation_angle(&rpy_matrix(RpyVector::from_vec(&s.q))) <= cap + 1e-12);
            }
        }
    }
}
