//! Frame-tagged rotations and vectors.
//!
//! Four frames exist: ground `G`, gripper `H`, and the two tactile sensor
//! frames. A [`Rotation`] tagged `(from, to)` maps coordinates expressed in
//! `from` into `to`, so `ᴳ_H R` is `Rotation { from: H, to: G }`. Mixing frames
//! is a programming error and panics.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    Ground,
    Hand,
    LeftSensor,
    RightSensor,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Frame::Ground => "G",
            Frame::Hand => "H",
            Frame::LeftSensor => "C_left",
            Frame::RightSensor => "C_right",
        };
        f.write_str(s)
    }
}

/// A vector with the frame its coordinates are expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedVector {
    pub frame: Frame,
    pub v: Vec3,
}

impl FramedVector {
    pub fn new(frame: Frame, v: Vec3) -> Self {
        Self { frame, v }
    }

    pub fn zero(frame: Frame) -> Self {
        Self::new(frame, Vec3::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.frame, self.v * s)
    }
}

impl Add for FramedVector {
    type Output = FramedVector;

    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.frame, rhs.frame, "adding vectors from different frames");
        Self::new(self.frame, self.v + rhs.v)
    }
}

impl Sub for FramedVector {
    type Output = FramedVector;

    fn sub(self, rhs: Self) -> Self {
        assert_eq!(self.frame, rhs.frame, "subtracting vectors from different frames");
        Self::new(self.frame, self.v - rhs.v)
    }
}

impl Neg for FramedVector {
    type Output = FramedVector;

    fn neg(self) -> Self {
        Self::new(self.frame, -self.v)
    }
}

/// Proper orthonormal 3×3 matrix mapping `from` coordinates into `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub from: Frame,
    pub to: Frame,
    m: Mat3,
}

impl Rotation {
    /// Wraps a matrix. Panics unless it is orthonormal with det +1 to 1e-9.
    pub fn new(from: Frame, to: Frame, m: Mat3) -> Self {
        let r = Self { from, to, m };
        assert!(
            r.orthonormality_error() < 1e-9 && (m.determinant() - 1.0).abs() < 1e-9,
            "matrix is not a proper rotation"
        );
        r
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        Self { from, to, m: Mat3::identity() }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    /// `self ∘ rhs`: requires `self.from == rhs.to`, giving `rhs.from → self.to`.
    pub fn compose(&self, rhs: &Rotation) -> Rotation {
        assert_eq!(
            self.from, rhs.to,
            "cannot compose {}→{} after {}→{}",
            self.from, self.to, rhs.from, rhs.to
        );
        Rotation { from: rhs.from, to: self.to, m: self.m * rhs.m }
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { from: self.to, to: self.from, m: self.m.transpose() }
    }

    /// Left-multiplies an untagged rotation expressed in the `to` frame.
    /// This is how a ground-frame increment is applied to `ᴳ_H R`.
    pub fn premultiply(&self, increment: &Mat3) -> Rotation {
        Rotation { from: self.from, to: self.to, m: increment * self.m }
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.m.transpose() * self.m - Mat3::identity()).abs().max()
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.m))
    }
}

impl Mul<FramedVector> for &Rotation {
    type Output = FramedVector;

    fn mul(self, v: FramedVector) -> FramedVector {
        transform_vector(self, v)
    }
}

/// Yaw about ground Z, pitch about ground Y, roll about ground X, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RpyVector {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl RpyVector {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vec(self) -> Vec3 {
        Vec3::new(self.yaw, self.pitch, self.roll)
    }

    pub fn is_within_pi(&self) -> bool {
        [self.yaw, self.pitch, self.roll].iter().all(|a| a.abs() <= std::f64::consts::PI)
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R(Z, yaw) · R(Y, pitch) · R(X, roll)`, all axes of the ground frame.
pub fn rpy_matrix(r: RpyVector) -> Mat3 {
    rot_z(r.yaw) * rot_y(r.pitch) * rot_x(r.roll)
}

/// Inverse of [`rpy_matrix`] with pitch in `[-π/2, π/2]`.
pub fn rpy_from_matrix(m: &Mat3) -> RpyVector {
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    RpyVector::new(yaw, pitch, roll)
}

/// The RPY increment as a ground-frame rotation (`G → G`).
pub fn rpy_to_rotation(r: RpyVector) -> Rotation {
    Rotation { from: Frame::Ground, to: Frame::Ground, m: rpy_matrix(r) }
}

pub fn transform_vector(r: &Rotation, v: FramedVector) -> FramedVector {
    assert_eq!(v.frame, r.from, "vector in {} given to a {}→{} rotation", v.frame, r.from, r.to);
    FramedVector::new(r.to, r.m * v.v)
}

/// Rotation angle of a matrix in radians, in `[0, π]`.
pub fn rotation_angle(m: &Mat3) -> f64 {
    let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos is badly conditioned near 0 and π; use the skew part there.
    let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let s = skew.norm() / 2.0;
    s.atan2(c)
}

/// Geodesic distance between two rotations in radians.
pub fn geodesic_angle(a: &Mat3, b: &Mat3) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Matrix exponential of `angle` about unit `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    if axis.norm() == 0.0 || angle == 0.0 {
        return Mat3::identity();
    }
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

/// Axis and angle of a rotation matrix; the axis is zero for the identity.
pub fn log_map(m: &Mat3) -> (Vec3, f64) {
    match Rotation3::from_matrix_unchecked(*m).axis_angle() {
        Some((axis, angle)) => (axis.into_inner(), angle),
        None => (Vec3::zeros(), 0.0),
    }
}

/// Re-orthonormalizes a matrix that has accumulated rounding drift.
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    Rotation3::from_matrix_eps(m, 1e-15, 16, Rotation3::identity()).into_inner()
}
