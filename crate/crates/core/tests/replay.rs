//! Marker traces recorded from a simulated grasp replay to the same metrics.

use pivot_core::controller::{GripperCommand, Scenario};
use pivot_core::harness::episode::prepare_scene;
use pivot_core::harness::ScenarioConfig;
use pivot_core::sim::ObjectKind;
use pivot_core::tactile::trace::{parse, to_string, TraceRecord};
use pivot_core::tactile::{slip_metrics, Finger};

fn recorded(object: ObjectKind, scenario: Scenario, cycles: usize) -> Vec<TraceRecord> {
    let mut cfg = ScenarioConfig::defaults(object, scenario);
    cfg.episode.seed = 4;
    let (mut scene, controller) = prepare_scene(&cfg).unwrap();
    // Let the grip relax so the fields carry real shear and twist.
    let cmd = GripperCommand::hold(controller.f_min.max(controller.f_init * 0.5));
    let mut out = Vec::new();
    for _ in 0..cycles {
        let frame = scene.world.step(&cmd).unwrap();
        for finger in [Finger::Left, Finger::Right] {
            out.push(TraceRecord { tick: frame.tick, field: frame.field(finger).clone() });
        }
    }
    out
}

#[test]
fn simulated_trace_round_trips_bit_for_bit() {
    let records = recorded(ObjectKind::Curved, Scenario::InAir, 20);
    let text = to_string(&records);
    let back = parse(&text).unwrap();
    assert_eq!(back.len(), 40);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.tick, b.tick);
        assert_eq!(a.field.finger, b.field.finger);
        for (x, y) in a.field.displacements.iter().zip(&b.field.displacements) {
            for k in 0..3 {
                assert_eq!(x[k].to_bits(), y[k].to_bits());
            }
        }
        assert_eq!(a, b);
    }
    assert_eq!(to_string(&back), text);
}

#[test]
fn replayed_metrics_match_live_ones() {
    let records = recorded(ObjectKind::Asymmetric, Scenario::InAir, 10);
    let back = parse(&to_string(&records)).unwrap();
    let mut moved = false;
    for (a, b) in records.iter().zip(&back) {
        let (ma, mb) = (slip_metrics(&a.field).unwrap(), slip_metrics(&b.field).unwrap());
        assert_eq!(ma, mb);
        moved |= ma.s1_norm() > 0.0;
    }
    assert!(moved);
}
