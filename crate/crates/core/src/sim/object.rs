//! Object shapes, contact-patch geometry and the benchmark object suite.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{rot_y, Mat3, Vec3};

pub type Vec2 = Vector2<f64>;

/// Convex object geometry in the body frame, mm. The fingers squeeze along
/// body Y, so the grasped faces are the ±Y faces and in-hand rotation is
/// about Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { half: Vec3 },
    /// Prism with a convex polygonal X–Z cross-section (counter-clockwise
    /// vertices seen from +Y) and half-thickness along Y.
    Prism { outline: Vec<(f64, f64)>, half_y: f64 },
    /// `|x/a|^p + |y/b|^p + |z/c|^p = 1`.
    Superellipsoid { semi: Vec3, exponent: f64 },
}

/// Local contact between one pad pin and the object face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceContact {
    /// Relative pressure share before normalization; zero means no contact.
    pub pressure: f64,
    /// Face slope (∂y/∂x, ∂y/∂z) of the +Y face at the pin, body frame.
    pub slope: Vec2,
}

impl Shape {
    /// Half-thickness along the squeeze axis at the grasp point.
    pub fn half_width(&self) -> f64 {
        match self {
            Shape::Box { half } => half.y,
            Shape::Prism { half_y, .. } => *half_y,
            Shape::Superellipsoid { semi, .. } => semi.y,
        }
    }

    /// Half-extent along body X, used to place objects in scenes.
    pub fn half_length(&self) -> f64 {
        match self {
            Shape::Box { half } => half.x,
            Shape::Prism { outline, .. } => {
                outline.iter().map(|p| p.0.abs()).fold(0.0, f64::max)
            }
            Shape::Superellipsoid { semi, .. } => semi.x,
        }
    }

    /// Contact of a pad pin located at body coordinates `(x, z)` on the +Y
    /// face. Flat faces give uniform pressure inside the outline; curved
    /// faces give pressure proportional to the local indentation `depth`.
    pub fn face_contact(&self, x: f64, z: f64, indentation: f64) -> FaceContact {
        match self {
            Shape::Box { half } => FaceContact {
                pressure: if x.abs() <= half.x && z.abs() <= half.z { 1.0 } else { 0.0 },
                slope: Vec2::zeros(),
            },
            Shape::Prism { outline, .. } => FaceContact {
                pressure: if point_in_convex(outline, x, z) { 1.0 } else { 0.0 },
                slope: Vec2::zeros(),
            },
            Shape::Superellipsoid { semi, exponent } => {
                let p = *exponent;
                let u = (x / semi.x).abs().powf(p) + (z / semi.z).abs().powf(p);
                if u >= 1.0 {
                    return FaceContact { pressure: 0.0, slope: Vec2::zeros() };
                }
                let y = semi.y * (1.0 - u).powf(1.0 / p);
                let gap = semi.y - y;
                let pressure = (indentation - gap).max(0.0);
                // ∂y/∂x = -b (1-u)^(1/p - 1) |x/a|^(p-1) sign(x) / a
                let common = -semi.y * (1.0 - u).powf(1.0 / p - 1.0);
                let dx = common * (x / semi.x).abs().powf(p - 1.0) * x.signum() / semi.x;
                let dz = common * (z / semi.z).abs().powf(p - 1.0) * z.signum() / semi.z;
                FaceContact { pressure, slope: Vec2::new(dx, dz) }
            }
        }
    }

    /// Surface sample points used for environment penalty contact.
    pub fn sample_points(&self) -> Vec<Vec3> {
        match self {
            Shape::Box { half } => {
                let mut pts = Vec::new();
                for &sy in &[-1.0, 1.0] {
                    // Outline of the X–Z rectangle, corners plus edge samples.
                    let n = 8;
                    for i in 0..n {
                        let t = -1.0 + 2.0 * i as f64 / n as f64;
                        pts.push(Vec3::new(t * half.x, sy * half.y, -half.z));
                        pts.push(Vec3::new(half.x, sy * half.y, t * half.z));
                        pts.push(Vec3::new(-t * half.x, sy * half.y, half.z));
                        pts.push(Vec3::new(-half.x, sy * half.y, -t * half.z));
                    }
                }
                pts
            }
            Shape::Prism { outline, half_y } => {
                let mut pts = Vec::new();
                for &sy in &[-1.0, 1.0] {
                    for (i, a) in outline.iter().enumerate() {
                        let b = outline[(i + 1) % outline.len()];
                        for k in 0..6 {
                            let t = k as f64 / 6.0;
                            pts.push(Vec3::new(
                                a.0 + t * (b.0 - a.0),
                                sy * half_y,
                                a.1 + t * (b.1 - a.1),
                            ));
                        }
                    }
                }
                pts
            }
            Shape::Superellipsoid { semi, exponent } => {
                let mut pts = Vec::new();
                let n = 48;
                for &fy in &[-0.7, 0.0, 0.7] {
                    let y = fy * semi.y;
                    // Cross-section at height y shrinks by (1 - |y/b|^p)^(1/p).
                    let shrink = (1.0 - (fy as f64).abs().powf(*exponent)).powf(1.0 / exponent);
                    for i in 0..n {
                        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        let (s, c) = t.sin_cos();
                        let e = 2.0 / exponent;
                        let x = semi.x * shrink * c.signum() * c.abs().powf(e);
                        let z = semi.z * shrink * s.signum() * s.abs().powf(e);
                        pts.push(Vec3::new(x, y, z));
                    }
                }
                pts
            }
        }
    }

    /// Volume-based inertia about the geometric centre for a given mass,
    /// kg·mm². Superellipsoids and prisms use their bounding box.
    pub fn inertia(&self, mass: f64) -> Mat3 {
        let half = match self {
            Shape::Box { half } => *half,
            Shape::Prism { outline, half_y } => {
                let hx = outline.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
                let hz = outline.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
                Vec3::new(hx, *half_y, hz)
            }
            Shape::Superellipsoid { semi, .. } => *semi,
        };
        let (a, b, c) = (2.0 * half.x, 2.0 * half.y, 2.0 * half.z);
        Mat3::from_diagonal(&Vector3::new(
            mass * (b * b + c * c) / 12.0,
            mass * (a * a + c * c) / 12.0,
            mass * (a * a + b * b) / 12.0,
        ))
    }
}

fn point_in_convex(outline: &[(f64, f64)], x: f64, z: f64) -> bool {
    let n = outline.len();
    (0..n).all(|i| {
        let a = outline[i];
        let b = outline[(i + 1) % n];
        // Left of every counter-clockwise edge (X right, Z up).
        (b.0 - a.0) * (z - a.1) - (b.1 - a.1) * (x - a.0) >= 0.0
    })
}

/// Centre-of-mass offset that relaxes towards the low end of an axis,
/// like liquid settling in a bottle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComShift {
    pub axis: Vec3,
    pub amplitude: f64,
    pub time_constant: f64,
}

/// Pad material parameters for one object (gel plus object compliance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchParams {
    /// Tangential stiffness of the whole pad, N/mm.
    pub tangential_stiffness: f64,
    /// Normal stiffness of the whole pad, N/mm.
    pub normal_stiffness: f64,
    /// Viscous damping of the whole pad, N·s/mm.
    pub damping: f64,
    pub friction: f64,
    /// Relative spread of per-pin friction (textured surfaces).
    pub friction_variation: f64,
    /// Square pad side, mm.
    pub extent: f64,
    pub grid: usize,
    /// Indentation depth used for curved faces, mm.
    pub indentation: f64,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self {
            tangential_stiffness: 20.0,
            normal_stiffness: 60.0,
            damping: 0.25,
            friction: 0.8,
            friction_variation: 0.0,
            extent: 16.0,
            grid: 10,
            indentation: 1.0,
        }
    }
}

/// Where the object sits in the hand and what counts as done.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspSetup {
    /// Body-frame point held between the pad centres, mm.
    pub grasp_point: Vec3,
    /// Initial in-hand tilt about the pivot axis, radians.
    pub tilt: f64,
    /// Target in-hand rotation about the pivot axis, radians (signed).
    pub target_rotation: f64,
}

impl GraspSetup {
    /// Object orientation in the hand frame at the start.
    pub fn initial_attitude(&self) -> Mat3 {
        rot_y(self.tilt)
    }

    pub fn target_attitude(&self) -> Mat3 {
        rot_y(self.target_rotation) * rot_y(self.tilt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Soft,
    ShiftingMass,
    Textured,
    Curved,
    Asymmetric,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] = [
        ObjectKind::Soft,
        ObjectKind::ShiftingMass,
        ObjectKind::Textured,
        ObjectKind::Curved,
        ObjectKind::Asymmetric,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ObjectKind::Soft => "soft",
            ObjectKind::ShiftingMass => "shifting_mass",
            ObjectKind::Textured => "textured",
            ObjectKind::Curved => "curved",
            ObjectKind::Asymmetric => "asymmetric",
        }
    }

    pub fn from_id(s: &str) -> Option<ObjectKind> {
        ObjectKind::ALL.into_iter().find(|k| k.id() == s)
    }
}

/// Everything needed to instantiate a benchmark object in either scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub kind: ObjectKind,
    pub shape: Shape,
    /// kg.
    pub mass: f64,
    /// Centre of mass in the body frame, mm.
    pub com: Vec3,
    pub com_shift: Option<ComShift>,
    pub patch: PatchParams,
    /// Friction between object and environment.
    pub env_friction: f64,
    pub contact: GraspSetup,
    pub in_air: GraspSetup,
}

impl ObjectTemplate {
    pub fn inertia(&self) -> Mat3 {
        self.shape.inertia(self.mass)
    }
}

/// The five benchmark analogues: soft, shifting centre of mass, textured,
/// curved and asymmetric.
pub fn make_object_suite() -> Vec<ObjectTemplate> {
    let rigid = PatchParams::default();
    vec![
        ObjectTemplate {
            kind: ObjectKind::Soft,
            shape: Shape::Box { half: Vec3::new(55.0, 15.0, 22.0) },
            mass: 0.04,
            com: Vec3::zeros(),
            com_shift: None,
            patch: PatchParams { tangential_stiffness: 4.0, friction: 0.2, damping: 0.08, ..rigid },
            env_friction: 2.0,
            contact: GraspSetup {
                grasp_point: Vec3::new(-25.0, 0.0, 0.0),
                tilt: 35f64.to_radians(),
                target_rotation: -30f64.to_radians(),
            },
            in_air: GraspSetup {
                grasp_point: Vec3::new(-45.0, 0.0, 0.0),
                tilt: 0.0,
                target_rotation: 40f64.to_radians(),
            },
        },
        ObjectTemplate {
            kind: ObjectKind::ShiftingMass,
            shape: Shape::Box { half: Vec3::new(50.0, 17.0, 17.0) },
            mass: 0.12,
            com: Vec3::zeros(),
            com_shift: Some(ComShift { axis: Vec3::x(), amplitude: 15.0, time_constant: 1.5 }),
            patch: rigid,
            env_friction: 2.0,
            contact: GraspSetup {
                grasp_point: Vec3::new(-20.0, 0.0, 0.0),
                tilt: 35f64.to_radians(),
                target_rotation: -30f64.to_radians(),
            },
            in_air: GraspSetup {
                grasp_point: Vec3::new(-25.0, 0.0, 0.0),
                tilt: 0.0,
                target_rotation: 40f64.to_radians(),
            },
        },
        ObjectTemplate {
            kind: ObjectKind::Textured,
            shape: Shape::Box { half: Vec3::new(45.0, 12.0, 12.0) },
            mass: 0.06,
            com: Vec3::zeros(),
            com_shift: None,
            patch: PatchParams { friction: 1.2, friction_variation: 0.25, extent: 12.0, tangential_stiffness: 30.0, ..rigid },
            env_friction: 2.0,
            contact: GraspSetup {
                grasp_point: Vec3::new(-20.0, 0.0, 0.0),
                tilt: 35f64.to_radians(),
                target_rotation: -30f64.to_radians(),
            },
            in_air: GraspSetup {
                grasp_point: Vec3::new(-33.0, 0.0, 0.0),
                tilt: 0.0,
                target_rotation: 40f64.to_radians(),
            },
        },
        ObjectTemplate {
            kind: ObjectKind::Curved,
            shape: Shape::Superellipsoid { semi: Vec3::new(55.0, 30.0, 20.0), exponent: 2.5 },
            mass: 0.1,
            com: Vec3::zeros(),
            com_shift: None,
            patch: PatchParams { indentation: 1.5, ..rigid },
            env_friction: 2.0,
            contact: GraspSetup {
                grasp_point: Vec3::new(-15.0, 0.0, 0.0),
                tilt: 35f64.to_radians(),
                target_rotation: -30f64.to_radians(),
            },
            in_air: GraspSetup {
                grasp_point: Vec3::new(-20.0, 0.0, 0.0),
                tilt: 0.0,
                target_rotation: 40f64.to_radians(),
            },
        },
        ObjectTemplate {
            kind: ObjectKind::Asymmetric,
            shape: Shape::Prism {
                outline: vec![(-60.0, -15.0), (60.0, -15.0), (60.0, 5.0), (-10.0, 25.0), (-60.0, 25.0)],
                half_y: 18.0,
            },
            mass: 0.25,
            com: Vec3::new(-20.0, 0.0, 6.0),
            com_shift: None,
            patch: rigid,
            env_friction: 2.0,
            contact: GraspSetup {
                grasp_point: Vec3::new(-10.0, 0.0, 0.0),
                tilt: 35f64.to_radians(),
                target_rotation: -30f64.to_radians(),
            },
            in_air: GraspSetup {
                grasp_point: Vec3::new(-24.0, 0.0, 17.0),
                tilt: 0.0,
                target_rotation: 40f64.to_radians(),
            },
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_has_five_distinct_objects() {
        let suite = make_object_suite();
        assert_eq!(suite.len(), 5);
        for (k, t) in ObjectKind::ALL.iter().zip(&suite) {
            assert_eq!(*k, t.kind);
        }
    }

    #[test]
    fn soft_object_is_at_least_five_times_softer() {
        let suite = make_object_suite();
        let soft = suite.iter().find(|t| t.kind == ObjectKind::Soft).unwrap();
        let rigid = PatchParams::default().tangential_stiffness;
        assert!(soft.patch.tangential_stiffness * 5.0 <= rigid);
    }

    #[test]
    fn asymmetric_object_has_offset_com() {
        let suite = make_object_suite();
        let t = suite.iter().find(|t| t.kind == ObjectKind::Asymmetric).unwrap();
        assert!(t.com.norm() > 0.0);
    }

    #[test]
    fn textured_and_curved_are_what_they_claim() {
        let suite = make_object_suite();
        let tex = &suite[2];
        assert!(tex.patch.friction > PatchParams::default().friction);
        assert!(tex.patch.friction_variation > 0.0);
        assert!(matches!(suite[3].shape, Shape::Superellipsoid { .. }));
        assert!(suite[1].com_shift.is_some());
    }

    #[test]
    fn superellipsoid_pressure_peaks_at_pole() {
        let s = Shape::Superellipsoid { semi: Vec3::new(50.0, 30.0, 20.0), exponent: 2.5 };
        let centre = s.face_contact(0.0, 0.0, 1.0);
        let off = s.face_contact(6.0, 3.0, 1.0);
        let far = s.face_contact(30.0, 0.0, 1.0);
        assert_eq!(centre.pressure, 1.0);
        assert!(off.pressure < centre.pressure && off.pressure >= 0.0);
        assert_eq!(far.pressure, 0.0);
        assert!(off.slope.x < 0.0 && off.slope.y < 0.0);
    }

    #[test]
    fn prism_contains_interior_points_only() {
        let s = &make_object_suite()[4].shape;
        assert_eq!(s.face_contact(0.0, 0.0, 1.0).pressure, 1.0);
        assert_eq!(s.face_contact(50.0, 20.0, 1.0).pressure, 0.0);
        assert_eq!(s.face_contact(0.0, -16.0, 1.0).pressure, 0.0);
    }
}
