//! The ablation matrix: objects × groups × scenarios × seeds.

use std::fmt::Write as _;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::controller::Scenario;
use crate::error::HarnessError;
use crate::sim::ObjectKind;

use super::config::{Group, ScenarioConfig};
use super::episode::{run_episode, Label};

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

pub const RESULTS_HEADER: &str = "object,scenario,group,seed,label,final_error_deg,max_slip_mm,duration_s";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub object: ObjectKind,
    pub scenario: Scenario,
    pub group: Group,
    pub seed: u64,
    pub label: Label,
    pub final_error_deg: f64,
    pub max_slip_mm: f64,
    pub duration: f64,
}

impl EpisodeRecord {
    fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.3}",
            self.object.id(),
            self.scenario.id(),
            self.group.id(),
            self.seed,
            self.label.id(),
            self.final_error_deg,
            self.max_slip_mm,
            self.duration
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub objects: Vec<ObjectKind>,
    pub groups: Vec<Group>,
    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
    /// Applied to every episode before the cell's object/scenario/group.
    pub base: Option<ScenarioConfig>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            objects: ObjectKind::ALL.to_vec(),
            groups: Group::ALL.to_vec(),
            scenarios: Scenario::BOTH.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            base: None,
        }
    }
}

fn cell_config(spec: &AblationSpec, object: ObjectKind, scenario: Scenario, group: Group, seed: u64) -> ScenarioConfig {
    let mut cfg = match &spec.base {
        Some(b) if b.episode.scenario == scenario => b.clone(),
        _ => ScenarioConfig::defaults(object, scenario),
    };
    cfg.episode.object = object.id().to_string();
    cfg.episode.group = Some(group);
    cfg.episode.seed = seed;
    cfg
}

/// Runs every cell, on a thread pool with the `parallel` feature. Results
/// come back in a fixed order either way.
pub fn run_ablation(spec: &AblationSpec) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut cells = Vec::new();
    for &scenario in &spec.scenarios {
        for &object in &spec.objects {
            for &group in &spec.groups {
                for &seed in &spec.seeds {
                    cells.push((object, scenario, group, seed));
                }
            }
        }
    }
    let run = |&(object, scenario, group, seed): &(ObjectKind, Scenario, Group, u64)| {
        let cfg = cell_config(spec, object, scenario, group, seed);
        let out = run_episode(&cfg, None)?;
        Ok(EpisodeRecord {
            object,
            scenario,
            group,
            seed,
            label: out.label,
            final_error_deg: out.final_error_deg,
            max_slip_mm: out.max_slip_mm,
            duration: out.duration,
        })
    };
    #[cfg(feature = "parallel")]
    let records = cells.par_iter().map(run).collect::<Result<Vec<_>, HarnessError>>();
    #[cfg(not(feature = "parallel"))]
    let records = cells.iter().map(run).collect::<Result<Vec<_>, HarnessError>>();
    let mut records = records?;
    records.sort_by_key(|r| (r.scenario as u8, r.object as u8, r.group, r.seed));
    Ok(records)
}

/// Machine-readable results, one row per episode.
pub fn results_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.row());
        out.push('\n');
    }
    out
}

/// The label an object gets in a group: the majority over seeds, or the
/// most frequent failure on ties.
pub fn majority_label(records: &[EpisodeRecord], object: ObjectKind, scenario: Scenario, group: Group) -> Option<Label> {
    let labels: Vec<Label> = records
        .iter()
        .filter(|r| r.object == object && r.scenario == scenario && r.group == group)
        .map(|r| r.label)
        .collect();
    if labels.is_empty() {
        return None;
    }
    let mut best = (0, Label::Success);
    for l in [Label::Sl, Label::St, Label::SlSt, Label::Dropped, Label::Success] {
        let n = labels.iter().filter(|x| **x == l).count();
        if n > best.0 {
            best = (n, l);
        }
    }
    Some(best.1)
}

/// Tables in the layout of the paper: objects as rows, groups as columns,
/// one table per scenario. Cells show ✓ or the failure label with the
/// number of successful seeds.
pub fn results_table(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for scenario in Scenario::BOTH {
        if !records.iter().any(|r| r.scenario == scenario) {
            continue;
        }
        let _ = writeln!(out, "{} scenario", scenario.id());
        let _ = write!(out, "{:<15}", "object");
        for g in Group::ALL {
            let _ = write!(out, "{:>12}", g.id());
        }
        out.push('\n');
        for object in ObjectKind::ALL {
            if !records.iter().any(|r| r.scenario == scenario && r.object == object) {
                continue;
            }
            let _ = write!(out, "{:<15}", object.id());
            for g in Group::ALL {
                let cell: Vec<&EpisodeRecord> =
                    records.iter().filter(|r| r.scenario == scenario && r.object == object && r.group == g).collect();
                let ok = cell.iter().filter(|r| r.label.is_success()).count();
                let text = match majority_label(records, object, scenario, g) {
                    None => "-".to_string(),
                    Some(Label::Success) => format!("✓ {ok}/{}", cell.len()),
                    Some(l) => format!("{} {ok}/{}", l.id(), cell.len()),
                };
                let _ = write!(out, "{text:>12}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
