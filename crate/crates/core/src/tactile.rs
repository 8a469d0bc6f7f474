//! Marker-field tactile sensing and the slip-tendency metrics.
//!
//! A [`MarkerField`] is what one finger's sensor reports each tick: marker
//! reference positions, their displacements, and the local surface normals,
//! all in that finger's sensor frame. Everything the controller perceives is
//! condensed into [`SlipMetrics`]: the mean displacement `s1` and the signed
//! rotational moment `s2`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TactileError;
use crate::geometry::{Frame, Vec3};

/// Markers closer than this to the centroid have no defined radial direction.
pub const CENTROID_EPS_MM: f64 = 1e-9;
/// Tangential slip below this is treated as absent.
pub const TANGENT_FLOOR_MM: f64 = 1e-6;
const NORMAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Finger {
    Left,
    Right,
}

impl Finger {
    pub const BOTH: [Finger; 2] = [Finger::Left, Finger::Right];

    pub fn frame(self) -> Frame {
        match self {
            Finger::Left => Frame::LeftSensor,
            Finger::Right => Frame::RightSensor,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Finger::Left => "L",
            Finger::Right => "R",
        }
    }

    pub fn from_tag(s: &str) -> Option<Finger> {
        match s {
            "L" => Some(Finger::Left),
            "R" => Some(Finger::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One finger's marker readings, mm, in that finger's sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerField {
    pub finger: Finger,
    pub ref_positions: Vec<Vec3>,
    pub displacements: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl MarkerField {
    /// Builds a field, checking lengths and normal magnitudes.
    pub fn new(
        finger: Finger,
        ref_positions: Vec<Vec3>,
        displacements: Vec<Vec3>,
        normals: Vec<Vec3>,
    ) -> Result<Self, TactileError> {
        if ref_positions.len() != displacements.len() || ref_positions.len() != normals.len() {
            return Err(TactileError::LengthMismatch {
                refs: ref_positions.len(),
                disps: displacements.len(),
                normals: normals.len(),
            });
        }
        if ref_positions.len() < 3 {
            return Err(TactileError::TooFewMarkers(ref_positions.len()));
        }
        debug_assert!(normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-9));
        Ok(Self { finger, ref_positions, displacements, normals })
    }

    /// A `rows × cols` grid of pitch `pitch` mm centred on the sensor origin,
    /// flat normals, no displacement.
    pub fn grid(finger: Finger, rows: usize, cols: usize, pitch: f64) -> Self {
        let mut refs = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
                let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
                refs.push(Vec3::new(x, y, 0.0));
            }
        }
        let n = refs.len();
        Self {
            finger,
            ref_positions: refs,
            displacements: vec![Vec3::zeros(); n],
            normals: vec![Vec3::z(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.ref_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ref_positions.is_empty()
    }

    pub fn frame(&self) -> Frame {
        self.finger.frame()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.ref_positions.iter().sum();
        sum / self.len() as f64
    }

    pub fn with_displacements(&self, displacements: Vec<Vec3>) -> Self {
        assert_eq!(displacements.len(), self.len());
        Self { displacements, ..self.clone() }
    }
}

/// Mean tangential-slip tendency `s1` (mm, sensor frame) and rotational
/// tendency `s2` (mm, signed about the mean normal).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlipMetrics {
    pub s1: Vec3,
    pub s2: f64,
    /// Mean contact normal the moment was taken about.
    pub normal: Vec3,
}

impl SlipMetrics {
    pub fn s1_norm(&self) -> f64 {
        self.s1.norm()
    }
}

/// Normalized arithmetic mean of the marker normals.
pub fn mean_normal(f: &MarkerField) -> Result<Vec3, TactileError> {
    if f.normals.is_empty() {
        return Err(TactileError::DegenerateNormal(0.0));
    }
    let sum: Vec3 = f.normals.iter().sum();
    let mean = sum / f.normals.len() as f64;
    let norm = mean.norm();
    if norm < NORMAL_EPS {
        return Err(TactileError::DegenerateNormal(norm));
    }
    Ok(mean / norm)
}

/// `s1` is the mean displacement. `s2` is the mean of `(r̃ᵢ × dᵢ)·n` where
/// `r̃ᵢ` points from marker `i` to the reference centroid; markers sitting on
/// the centroid are left out of both sum and count.
pub fn slip_metrics(f: &MarkerField) -> Result<SlipMetrics, TactileError> {
    let n_markers = f.len();
    if n_markers < 3 {
        return Err(TactileError::TooFewMarkers(n_markers));
    }
    if f.displacements.len() != n_markers || f.normals.len() != n_markers {
        return Err(TactileError::LengthMismatch {
            refs: n_markers,
            disps: f.displacements.len(),
            normals: f.normals.len(),
        });
    }
    let normal = mean_normal(f)?;
    let centroid = f.centroid();

    let s1 = f.displacements.iter().sum::<Vec3>() / n_markers as f64;

    let mut moment = 0.0;
    let mut counted = 0usize;
    for (r, d) in f.ref_positions.iter().zip(&f.displacements) {
        let to_centroid = centroid - r;
        let dist = to_centroid.norm();
        if dist < CENTROID_EPS_MM {
            continue;
        }
        moment += (to_centroid / dist).cross(d).dot(&normal);
        counted += 1;
    }
    let s2 = if counted == 0 { 0.0 } else { moment / counted as f64 };

    Ok(SlipMetrics { s1, s2, normal })
}

/// Unit projection of `s1` onto the tangent plane of `n`.
pub fn tangential_direction(s: &SlipMetrics, n: &Vec3) -> Result<Vec3, TactileError> {
    let tangential = s.s1 - s.s1.dot(n) * n;
    let norm = tangential.norm();
    if norm <= TANGENT_FLOOR_MM {
        return Err(TactileError::NoTangentialComponent);
    }
    Ok(tangential / norm)
}

/// The finger whose mean displacement is larger; ties go to the left finger.
pub fn select_signal_finger(left: SlipMetrics, right: SlipMetrics) -> (Finger, SlipMetrics) {
    if right.s1_norm() > left.s1_norm() {
        (Finger::Right, right)
    } else {
        (Finger::Left, left)
    }
}

pub mod trace {
    //! Marker-trace replay text format.
    //!
    //! ```text
    //! <tick>,<L|R>,<N>
    //! rx,ry,rz,dx,dy,dz,nx,ny,nz      (N rows)
    //! ```
    //! Floats are written in shortest round-trip form, so a parse of a
    //! written trace reproduces every value bit for bit.

    use std::fmt::Write as _;

    use super::{Finger, MarkerField};
    use crate::error::HarnessError;
    use crate::geometry::Vec3;

    #[derive(Debug, Clone, PartialEq)]
    pub struct TraceRecord {
        pub tick: u64,
        pub field: MarkerField,
    }

    pub fn write_record(out: &mut String, rec: &TraceRecord) {
        let f = &rec.field;
        let _ = writeln!(out, "{},{},{}", rec.tick, f.finger.tag(), f.len());
        for i in 0..f.len() {
            let (r, d, n) = (f.ref_positions[i], f.displacements[i], f.normals[i]);
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.x, r.y, r.z, d.x, d.y, d.z, n.x, n.y, n.z
            );
        }
    }

    pub fn to_string(records: &[TraceRecord]) -> String {
        let mut out = String::new();
        for r in records {
            write_record(&mut out, r);
        }
        out
    }

    fn bad(line: usize, reason: impl Into<String>) -> HarnessError {
        HarnessError::MalformedTrace { line, reason: reason.into() }
    }

    pub fn parse(text: &str) -> Result<Vec<TraceRecord>, HarnessError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut records = Vec::new();
        while let Some((ln, header)) = lines.next() {
            let parts: Vec<&str> = header.split(',').collect();
            if parts.len() != 3 {
                return Err(bad(ln + 1, "record header needs tick,finger,N"));
            }
            let tick = parts[0].parse::<u64>().map_err(|e| bad(ln + 1, e.to_string()))?;
            let finger =
                Finger::from_tag(parts[1]).ok_or_else(|| bad(ln + 1, "finger must be L or R"))?;
            let n = parts[2].parse::<usize>().map_err(|e| bad(ln + 1, e.to_string()))?;
            let (mut refs, mut disps, mut normals) =
                (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let (ln, row) = lines.next().ok_or_else(|| bad(ln + 1, "truncated record"))?;
                let vals = row
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(ln + 1, e.to_string()))?;
                if vals.len() != 9 {
                    return Err(bad(ln + 1, format!("expected 9 values, got {}", vals.len())));
                }
                refs.push(Vec3::new(vals[0], vals[1], vals[2]));
                disps.push(Vec3::new(vals[3], vals[4], vals[5]));
                normals.push(Vec3::new(vals[6], vals[7], vals[8]));
            }
            let field = MarkerField { finger, ref_positions: refs, displacements: disps, normals };
            records.push(TraceRecord { tick, field });
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_field(refs: Vec<Vec3>, disps: Vec<Vec3>) -> MarkerField {
        let n = refs.len();
        MarkerField::new(Finger::Left, refs, disps, vec![Vec3::z(); n]).unwrap()
    }

    #[test]
    fn mean_normal_of_flat_field() {
        let f = MarkerField::grid(Finger::Left, 3, 3, 1.0);
        assert_eq!(mean_normal(&f).unwrap(), Vec3::z());
    }

    #[test]
    fn mean_normal_of_two_axes() {
        let mut f = MarkerField::grid(Finger::Left, 1, 2, 1.0);
        f.normals = vec![Vec3::x(), Vec3::y()];
        let n = mean_normal(&f).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((n - Vec3::new(h, h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mean_normal_on_spherical_cap_matches_summation() {
        // 100 normals on a 10° cap: 10 polar rings × 10 azimuths.
        let half = 10f64.to_radians();
        let mut normals = Vec::new();
        for i in 0..10 {
            let theta = half * (i as f64 + 0.5) / 10.0;
            for j in 0..10 {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.3 * i as f64) / 10.0;
                normals.push(Vec3::new(
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ));
            }
        }
        let refs: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let f = MarkerField::new(Finger::Right, refs, vec![Vec3::zeros(); 100], normals.clone())
            .unwrap();
        // Oracle: component-wise scalar sums.
        let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
        for n in &normals {
            sx += n.x;
            sy += n.y;
            sz += n.z;
        }
        let len = (sx * sx + sy * sy + sz * sz).sqrt();
        let got = mean_normal(&f).unwrap();
        assert!((got.x - sx / len).abs() < 1e-12);
        assert!((got.y - sy / len).abs() < 1e-12);
        assert!((got.z - sz / len).abs() < 1e-12);
    }

    #[test]
    fn opposing_normals_are_degenerate() {
        let mut f = MarkerField::grid(Finger::Left, 1, 4, 1.0);
        f.normals = vec![Vec3::z(), -Vec3::z(), Vec3::x(), -Vec3::x()];
        assert!(matches!(mean_normal(&f), Err(TactileError::DegenerateNormal(_))));
    }

    #[test]
    fn zero_displacement_gives_zero_metrics() {
        let f = MarkerField::grid(Finger::Left, 10, 10, 1.6);
        let m = slip_metrics(&f).unwrap();
        assert_eq!(m.s1, Vec3::zeros());
        assert_eq!(m.s2, 0.0);
    }

    #[test]
    fn uniform_translation_on_symmetric_grid() {
        let base = MarkerField::grid(Finger::Left, 4, 4, 2.0);
        let d = Vec3::new(0.3, -0.1, 0.05);
        let f = base.with_displacements(vec![d; 16]);
        let m = slip_metrics(&f).unwrap();
        // Brute force: accumulate the moment terms by hand.
        let c = f.centroid();
        let mut moment = 0.0;
        for r in &f.ref_positions {
            let t = (c - r).normalize();
            // z-component of t × d, the normal being +z.
            moment += t.x * d.y - t.y * d.x;
        }
        assert!((m.s1 - d).norm() < 1e-15);
        assert!((moment / 16.0).abs() < 1e-15);
        assert!(m.s2.abs() < 1e-15);
    }

    #[test]
    fn rigid_rotation_of_square() {
        // Half-diagonal 5 mm; displacement θ·(n × rᵢ) with rᵢ = centroid − refᵢ.
        let h = 5.0 / 2f64.sqrt();
        let refs = vec![
            Vec3::new(h, h, 0.0),
            Vec3::new(-h, h, 0.0),
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
        ];
        let theta = 0.01;
        let disps = refs.iter().map(|r| theta * Vec3::z().cross(&(-r))).collect();
        let m = slip_metrics(&flat_field(refs, disps)).unwrap();
        assert!((m.s2 - 0.05).abs() < 1e-9, "s2 = {}", m.s2);
        assert!(m.s1.norm() < 1e-12);
    }

    #[test]
    fn centroid_marker_is_excluded() {
        let refs = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
        ];
        let disps = vec![Vec3::new(0.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(5.0, 5.0, 0.0)];
        let m = slip_metrics(&flat_field(refs, disps)).unwrap();
        // Two counted markers, each contributing +1.
        assert_eq!(m.s2, 1.0);
    }

    #[test]
    fn too_few_markers_is_rejected() {
        let f = MarkerField {
            finger: Finger::Left,
            ref_positions: vec![Vec3::zeros(); 2],
            displacements: vec![Vec3::zeros(); 2],
            normals: vec![Vec3::z(); 2],
        };
        assert_eq!(slip_metrics(&f), Err(TactileError::TooFewMarkers(2)));
        assert!(matches!(
            MarkerField::new(Finger::Left, vec![Vec3::zeros(); 3], vec![Vec3::zeros(); 2], vec![Vec3::z(); 3]),
            Err(TactileError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn tangential_direction_cases() {
        let n = Vec3::z();
        let dir = |s1: Vec3| tangential_direction(&SlipMetrics { s1, s2: 0.0, normal: n }, &n);
        assert_eq!(dir(Vec3::new(1.0, 0.0, 0.0)).unwrap(), Vec3::x());
        assert_eq!(dir(Vec3::new(1.0, 0.0, 1.0)).unwrap(), Vec3::x());
        // (0.3, 0.4, 0.5) → drop z → (0.3, 0.4)/0.5.
        let t = dir(Vec3::new(0.3, 0.4, 0.5)).unwrap();
        assert!((t - Vec3::new(0.6, 0.8, 0.0)).norm() < 1e-15);
        assert_eq!(dir(Vec3::new(0.0, 0.0, 2.0)), Err(TactileError::NoTangentialComponent));
        assert_eq!(dir(Vec3::new(1e-7, 0.0, 0.0)), Err(TactileError::NoTangentialComponent));
    }

    #[test]
    fn signal_finger_selection() {
        let m = |x: f64| SlipMetrics { s1: Vec3::new(x, 0.0, 0.0), s2: 0.0, normal: Vec3::z() };
        assert_eq!(select_signal_finger(m(0.2), m(0.5)).0, Finger::Right);
        assert_eq!(select_signal_finger(m(0.5), m(0.2)).0, Finger::Left);
        assert_eq!(select_signal_finger(m(0.3), m(-0.3)).0, Finger::Left);
    }

    #[test]
    fn trace_round_trip_is_bit_exact() {
        let mut f = MarkerField::grid(Finger::Right, 3, 3, 1.0 / 3.0);
        f.displacements[4] = Vec3::new(1e-300, -0.0, std::f64::consts::PI);
        f.normals[2] = Vec3::new(0.1, 0.2, 1.0).normalize();
        let recs = vec![
            trace::TraceRecord { tick: 7, field: f.clone() },
            trace::TraceRecord { tick: 8, field: MarkerField { finger: Finger::Left, ..f } },
        ];
        let text = trace::to_string(&recs);
        let back = trace::parse(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.tick, b.tick);
            for (x, y) in a.field.displacements.iter().zip(&b.field.displacements) {
                for k in 0..3 {
                    assert_eq!(x[k].to_bits(), y[k].to_bits());
                }
            }
        }
        assert_eq!(trace::to_string(&back), text);
    }

    #[test]
    fn trace_rejects_truncation() {
        let text = "0,L,3\n0,0,0,0,0,0,0,0,1\n";
        assert!(trace::parse(text).is_err());
        assert!(trace::parse("0,X,0\n").is_err());
    }

    mod props {
        use super::*;
        use crate::geometry::{rpy_matrix, RpyVector};
        use proptest::prelude::*;

        fn field_pair() -> impl Strategy<Value = (Vec<Vec3>, Vec<Vec3>, Vec<Vec3>)> {
            (3usize..40).prop_flat_map(|n| {
                let v = || prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -1.0..1.0f64), n);
                (v(), v(), v())
            })
            .prop_map(|(r, a, b)| {
                let to = |v: Vec<(f64, f64, f64)>| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
                (to(r), to(a), to(b))
            })
        }

        proptest! {
            #[test]
            fn metrics_are_linear((refs, d1, d2) in field_pair(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
                let f1 = flat_field(refs.clone(), d1.clone());
                let f2 = flat_field(refs.clone(), d2.clone());
                let mix: Vec<Vec3> = d1.iter().zip(&d2).map(|(x, y)| a * x + b * y).collect();
                let fm = flat_field(refs, mix);
                let (m1, m2, mm) = (slip_metrics(&f1).unwrap(), slip_metrics(&f2).unwrap(), slip_metrics(&fm).unwrap());
                prop_assert!((mm.s1 - (a * m1.s1 + b * m2.s1)).norm() < 1e-9);
                prop_assert!((mm.s2 - (a * m1.s2 + b * m2.s2)).abs() < 1e-9);
            }

            #[test]
            fn metrics_are_rotation_equivariant((refs, d, _) in field_pair(),
                                                y in -3.0..3.0f64, p in -1.5..1.5f64, r in -3.0..3.0f64) {
                let rot = rpy_matrix(RpyVector::new(y, p, r));
                let f = flat_field(refs.clone(), d.clone());
                let n = refs.len();
                let g = MarkerField::new(
                    Finger::Left,
                    refs.iter().map(|v| rot * v).collect(),
                    d.iter().map(|v| rot * v).collect(),
                    vec![rot * Vec3::z(); n],
                ).unwrap();
                let (mf, mg) = (slip_metrics(&f).unwrap(), slip_metrics(&g).unwrap());
                prop_assert!((mg.s1 - rot * mf.s1).norm() < 1e-9);
                prop_assert!((mg.s2 - mf.s2).abs() < 1e-9);
            }

            #[test]
            fn negating_displacements_negates_s2((refs, d, _) in field_pair()) {
                let f = flat_field(refs.clone(), d.clone());
                let g = flat_field(refs, d.iter().map(|v| -v).collect());
                prop_assert_eq!(slip_metrics(&g).unwrap().s2, -slip_metrics(&f).unwrap().s2);
            }

            #[test]
            fn tangential_direction_is_unit_and_orthogonal(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
                                                           a in -3.0..3.0f64, b in -1.5..1.5f64) {
                let n = rpy_matrix(RpyVector::new(a, b, 0.0)) * Vec3::z();
                let s = SlipMetrics { s1: Vec3::new(x, y, z), s2: 0.0, normal: n };
                if let Ok(t) = tangential_direction(&s, &n) {
                    prop_assert!((t.norm() - 1.0).abs() < 1e-9);
                    prop_assert!(t.dot(&n).abs() < 1e-9);
                }
            }
        }
    }
}
