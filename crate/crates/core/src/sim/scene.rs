//! Benchmark scenes: a table corner for the contact scenario and free space
//! for the in-air scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvShape, GripperState, ObjectTemplate, SimParams, SimWorld};
use crate::controller::Scenario;
use crate::error::SimError;
use crate::geometry::{Mat3, Vec3};

/// Control cycles spent settling before an episode starts.
pub const SETTLE_CYCLES: usize = 30;
/// Height of the hand above the ground for in-air scenes, mm.
const AIR_HEIGHT: f64 = 300.0;

/// Per-seed perturbations of the nominal scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneJitter {
    /// Added to the initial tilt, radians.
    pub tilt: f64,
    /// Added to the grasp point along body X, mm.
    pub grasp_x: f64,
    /// Moves the wall away from the object, mm.
    pub wall_gap: f64,
    /// Starts the hand this far above first contact with the table, mm.
    pub clearance: f64,
}

impl SceneJitter {
    pub const NONE: SceneJitter = SceneJitter { tilt: 0.0, grasp_x: 0.0, wall_gap: 0.0, clearance: 0.0 };

    pub fn from_seed(seed: u64) -> SceneJitter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed);
        SceneJitter {
            tilt: rng.gen_range(-1.5f64..=1.5).to_radians(),
            grasp_x: rng.gen_range(-2.0..=2.0),
            wall_gap: rng.gen_range(0.0..=1.0),
            clearance: 0.0,
        }
    }

    /// An obstacle placement the controller knows nothing about: the wall
    /// and table sit at seeded offsets, the grasp is left alone.
    pub fn obstacle(seed: u64) -> SceneJitter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xd1b5_4a32_d192_ed03) ^ 0x0b57);
        SceneJitter {
            tilt: 0.0,
            grasp_x: 0.0,
            wall_gap: rng.gen_range(0.0..=4.0),
            clearance: rng.gen_range(0.0..=3.0),
        }
    }
}

/// A ready-to-run world plus the in-hand attitude that counts as done.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub world: SimWorld,
    pub target: Mat3,
    /// Initial `n_task`: toward the nearest environment surface.
    pub initial_task_direction: Vec3,
}

/// Builds and settles the benchmark scene for `template`.
pub fn build_scene(
    template: &ObjectTemplate,
    scenario: Scenario,
    seed: u64,
    grip_force: f64,
    params: SimParams,
    jitter: SceneJitter,
) -> Result<Scene, SimError> {
    let setup = match scenario {
        Scenario::Contact => template.contact,
        Scenario::InAir => template.in_air,
    };
    build_scene_at(template, scenario, setup.grasp_point, setup.tilt, setup.target_rotation, seed, grip_force, params, jitter)
}

/// Like [`build_scene`] but with an explicit grasp, tilt and target
/// rotation, e.g. carried over from an earlier episode.
#[allow(clippy::too_many_arguments)]
pub fn build_scene_at(
    template: &ObjectTemplate,
    scenario: Scenario,
    grasp_point: Vec3,
    tilt: f64,
    target_rotation: f64,
    seed: u64,
    grip_force: f64,
    params: SimParams,
    jitter: SceneJitter,
) -> Result<Scene, SimError> {
    let grasp = grasp_point + Vec3::new(jitter.grasp_x, 0.0, 0.0);
    let tilt = tilt + jitter.tilt;
    let gripper = GripperState::new(Mat3::identity(), Vec3::zeros(), grip_force);
    let mut world = SimWorld::new(template.clone(), grasp, tilt, gripper, params, seed)?;
    let target = crate::geometry::rot_y(target_rotation) * world.reference_rotation;

    match scenario {
        Scenario::Contact => {
            let points: Vec<Vec3> =
                template.shape.sample_points().iter().map(|s| world.world_point(s)).collect();
            let lowest = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            let rightmost = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            world.gripper.position = Vec3::new(0.0, 0.0, jitter.clearance - lowest);
            world.environment.push(EnvShape::HalfSpace { normal: Vec3::z(), offset: 0.0 });
            let face = rightmost + jitter.wall_gap;
            world.environment.push(EnvShape::Box {
                center: Vec3::new(face + 50.0, 0.0, 100.0),
                half: Vec3::new(50.0, 200.0, 110.0),
            });
        }
        Scenario::InAir => {
            world.gripper.position = Vec3::new(0.0, 0.0, AIR_HEIGHT);
        }
    }
    world.settle(SETTLE_CYCLES)?;
    Ok(Scene { world, target, initial_task_direction: Vec3::new(0.0, 0.0, -1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::make_object_suite;

    #[test]
    fn every_object_builds_in_both_scenes() {
        for t in make_object_suite() {
            for scenario in Scenario::BOTH {
                let scene = build_scene(&t, scenario, 1, 10.0, SimParams::default(), SceneJitter::from_seed(1))
                    .unwrap_or_else(|e| panic!("{:?} {:?}: {e}", t.kind, scenario));
                let err = scene.world.object_orientation_error(&scene.target);
                let expected = match scenario {
                    Scenario::Contact => t.contact.target_rotation.abs().to_degrees(),
                    Scenario::InAir => t.in_air.target_rotation.abs().to_degrees(),
                };
                assert!((err - expected).abs() < 6.0, "{:?} {:?}: {err} vs {expected}", t.kind, scenario);
                assert_eq!(scene.world.tick, 0);
            }
        }
    }

    #[test]
    fn jitter_is_seeded() {
        assert_eq!(SceneJitter::from_seed(7), SceneJitter::from_seed(7));
        assert_ne!(SceneJitter::from_seed(7), SceneJitter::from_seed(8));
    }
}
