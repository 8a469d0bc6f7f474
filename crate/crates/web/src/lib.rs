//! Browser bindings: slip metrics of a synthetic marker field, a full
//! episode as plot series, and the rotational loss term.
//!
//! Each export wraps a plain Rust function so the logic is testable off
//! the browser.

use pivot_core::controller::Scenario;
use pivot_core::geometry::Vec3;
use pivot_core::harness::episode::{prepare_scene, run_scene, EpisodeRun};
use pivot_core::harness::plot::parse_log;
use pivot_core::harness::{Group, ScenarioConfig};
use pivot_core::optimizer::l2;
use pivot_core::sim::ObjectKind;
use pivot_core::tactile::{slip_metrics, Finger, MarkerField};
use wasm_bindgen::prelude::*;

/// Slip metrics of a `rows × cols` grid under a uniform shear plus a twist
/// about the grid centre. Returns `[s1x, s1y, s1z, s2, |s1|]`.
pub fn field_metrics(rows: usize, cols: usize, pitch: f64, shear: [f64; 2], twist_deg: f64) -> Result<[f64; 5], String> {
    let base = MarkerField::grid(Finger::Left, rows, cols, pitch);
    let c = base.centroid();
    let (s, co) = twist_deg.to_radians().sin_cos();
    let d = base
        .ref_positions
        .iter()
        .map(|p| {
            let r = p - c;
            Vec3::new(shear[0] + co * r.x - s * r.y - r.x, shear[1] + s * r.x + co * r.y - r.y, 0.0)
        })
        .collect();
    let m = slip_metrics(&base.with_displacements(d)).map_err(|e| e.to_string())?;
    Ok([m.s1.x, m.s1.y, m.s1.z, m.s2, m.s1_norm()])
}

#[wasm_bindgen(js_name = fieldMetrics)]
pub fn field_metrics_js(rows: usize, cols: usize, pitch: f64, shear_x: f64, shear_y: f64, twist_deg: f64) -> Result<Vec<f64>, JsValue> {
    field_metrics(rows, cols, pitch, [shear_x, shear_y], twist_deg).map(|m| m.to_vec()).map_err(|e| JsValue::from_str(&e))
}

/// One episode's plot series, one entry per logged control cycle.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSeries {
    label: String,
    final_error_deg: f64,
    max_slip_mm: f64,
    time: Vec<f64>,
    error: Vec<f64>,
    force: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

#[wasm_bindgen]
impl EpisodeSeries {
    #[wasm_bindgen(getter)]
    pub fn label(&self) -> String {
        self.label.clone()
    }
    #[wasm_bindgen(getter, js_name = finalErrorDeg)]
    pub fn final_error_deg(&self) -> f64 {
        self.final_error_deg
    }
    #[wasm_bindgen(getter, js_name = maxSlipMm)]
    pub fn max_slip_mm(&self) -> f64 {
        self.max_slip_mm
    }
    #[wasm_bindgen(getter)]
    pub fn time(&self) -> Vec<f64> {
        self.time.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn error(&self) -> Vec<f64> {
        self.error.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn force(&self) -> Vec<f64> {
        self.force.clone()
    }
    /// Larger of the two fingers' `|s1|`.
    #[wasm_bindgen(getter)]
    pub fn s1(&self) -> Vec<f64> {
        self.s1.clone()
    }
    /// Left finger `s2`.
    #[wasm_bindgen(getter)]
    pub fn s2(&self) -> Vec<f64> {
        self.s2.clone()
    }
}

pub fn episode(object: &str, scenario: &str, group: &str, seed: u64) -> Result<EpisodeSeries, String> {
    let object = ObjectKind::from_id(object).ok_or_else(|| format!("unknown object '{object}'"))?;
    let scenario = Scenario::from_id(scenario).ok_or_else(|| format!("unknown scenario '{scenario}'"))?;
    let group = Group::from_id(group).ok_or_else(|| format!("unknown group '{group}'"))?;
    let mut cfg = ScenarioConfig::defaults(object, scenario);
    cfg.episode.group = Some(group);
    cfg.episode.seed = seed;
    let (scene, controller) = prepare_scene(&cfg).map_err(|e| e.to_string())?;
    let mut log = Vec::new();
    let out = run_scene(EpisodeRun {
        scene,
        controller,
        optimizer: cfg.optimizer,
        detector: cfg.detector,
        time_limit: cfg.episode.time_limit,
        log: Some(&mut log),
    })
    .map_err(|e| e.to_string())?;
    let text = String::from_utf8(log).map_err(|e| e.to_string())?;
    let samples = parse_log(&text).map_err(|e| e.to_string())?;
    Ok(EpisodeSeries {
        label: out.label.id().to_string(),
        final_error_deg: out.final_error_deg,
        max_slip_mm: out.max_slip_mm,
        time: samples.iter().map(|s| s.time).collect(),
        error: samples.iter().map(|s| s.error_deg).collect(),
        force: samples.iter().map(|s| s.grip_force).collect(),
        s1: samples.iter().map(|s| s.s1[0].max(s.s1[1])).collect(),
        s2: samples.iter().map(|s| s.s2[0]).collect(),
    })
}

#[wasm_bindgen(js_name = runEpisode)]
pub fn episode_js(object: &str, scenario: &str, group: &str, seed: u32) -> Result<EpisodeSeries, JsValue> {
    episode(object, scenario, group, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

/// `L₂(σ)` sampled at `n` evenly spaced points on `[lo, hi]`.
#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve(lambda0: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![l2(lo, lambda0); n];
    }
    (0..n).map(|i| l2(lo + (hi - lo) * i as f64 / (n - 1) as f64, lambda0)).collect()
}
