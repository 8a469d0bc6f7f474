//! Plot data from an episode log: one columnar CSV per panel, one row per
//! logged control cycle.

use std::path::{Path, PathBuf};

use crate::error::HarnessError;

const CYCLE_FIELDS: usize = 22;

/// The columns of a `cycle` row that the plots use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSample {
    pub tick: u64,
    pub time: f64,
    pub grip_force: f64,
    pub s1: [f64; 2],
    pub s2: [f64; 2],
    pub error_deg: f64,
    pub task: bool,
    pub constraint: bool,
    pub coordinating: bool,
}

/// Reads the `cycle` rows of a log. Comments, blank lines and `opt` rows
/// are skipped; anything else is an error.
pub fn parse_log(text: &str) -> Result<Vec<CycleSample>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |reason: String| HarnessError::MalformedLog { line: line_no, reason };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "opt" => continue,
            "cycle" => {}
            other => return Err(bad(format!("unknown row kind '{other}'"))),
        }
        if fields.len() != CYCLE_FIELDS {
            return Err(bad(format!("expected {CYCLE_FIELDS} fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64, HarnessError> {
            fields[k].parse::<f64>().map_err(|_| bad(format!("field {} is not a number: '{}'", k + 1, fields[k])))
        };
        let flag = |k: usize| -> Result<bool, HarnessError> {
            match fields[k] {
                "0" => Ok(false),
                "1" => Ok(true),
                f => Err(bad(format!("field {} is not a 0/1 flag: '{f}'", k + 1))),
            }
        };
        let tick = fields[1].parse::<u64>().map_err(|_| bad(format!("bad tick '{}'", fields[1])))?;
        out.push(CycleSample {
            tick,
            time: num(2)?,
            grip_force: num(11)?,
            s1: [num(12)?, num(14)?],
            s2: [num(13)?, num(15)?],
            error_deg: num(18)?,
            task: flag(19)?,
            constraint: flag(20)?,
            coordinating: flag(21)?,
        });
    }
    Ok(out)
}

/// The four panels as CSV text, in the order error, force, slip, activity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub error: String,
    pub force: String,
    pub slip: String,
    pub activity: String,
}

pub const PLOT_FILES: [&str; 4] = ["error.csv", "force.csv", "slip.csv", "activity.csv"];

pub fn plot_series(samples: &[CycleSample]) -> PlotSeries {
    let mut error = String::from("time_s,error_deg\n");
    let mut force = String::from("time_s,grip_force_n\n");
    let mut slip = String::from("time_s,s1_left_mm,s2_left_mm,s1_right_mm,s2_right_mm\n");
    let mut activity = String::from("time_s,task,constraint,coordinating\n");
    let b = |x: bool| u8::from(x);
    for s in samples {
        error.push_str(&format!("{:.6},{:.6}\n", s.time, s.error_deg));
        force.push_str(&format!("{:.6},{:.6}\n", s.time, s.grip_force));
        slip.push_str(&format!("{:.6},{:.9},{:.9},{:.9},{:.9}\n", s.time, s.s1[0], s.s2[0], s.s1[1], s.s2[1]));
        activity.push_str(&format!("{:.6},{},{},{}\n", s.time, b(s.task), b(s.constraint), b(s.coordinating)));
    }
    PlotSeries { error, force, slip, activity }
}

/// Reads the log at `log` and writes the four series into `out_dir`.
pub fn emit_plots(log: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let text = std::fs::read_to_string(log)?;
    let series = plot_series(&parse_log(&text)?);
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for (name, body) in PLOT_FILES.iter().zip([&series.error, &series.force, &series.slip, &series.activity]) {
        let p = out_dir.join(name);
        std::fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Scenario;
    use crate::harness::episode::{run_scene, EpisodeRun, LOG_HEADER};
    use crate::harness::{episode::prepare_scene, ScenarioConfig};
    use crate::sim::ObjectKind;

    #[test]
    fn empty_log_gives_headers_only() {
        let s = plot_series(&parse_log(LOG_HEADER).unwrap());
        assert_eq!(s.error, "time_s,error_deg\n");
        assert_eq!(s.activity.lines().count(), 1);
    }

    #[test]
    fn rejects_garbage() {
        for text in ["cycle,1,2", "bogus,1", "cycle,x,0,run,1,0,0,0,0,0,0,4,0,0,0,0,0,0,30,1,0,0"] {
            assert!(matches!(parse_log(text), Err(HarnessError::MalformedLog { line: 1, .. })), "{text}");
        }
        let flag = "cycle,1,0.1,run,1,0,0,0,0,0,0,4,0,0,0,0,0,0,30,2,0,0";
        assert!(parse_log(flag).is_err());
    }

    #[test]
    fn series_follow_a_real_episode() {
        let mut cfg = ScenarioConfig::defaults(ObjectKind::ShiftingMass, Scenario::Contact);
        cfg.episode.time_limit = 3.0;
        cfg.episode.seed = 2;
        let (scene, controller) = prepare_scene(&cfg).unwrap();
        let mut buf = Vec::new();
        let out = run_scene(EpisodeRun {
            scene,
            controller,
            optimizer: cfg.optimizer,
            detector: cfg.detector,
            time_limit: cfg.episode.time_limit,
            log: Some(&mut buf),
        })
        .unwrap();
        let samples = parse_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        let series = plot_series(&samples);
        for body in [&series.error, &series.force, &series.slip, &series.activity] {
            assert_eq!(body.lines().count() as u64, out.ticks + 1);
        }
        // Contact force only ever steps up by ΔF, up to the cap.
        for w in samples.windows(2) {
            let d = w[1].grip_force - w[0].grip_force;
            assert!(d.abs() < 1e-9 || (d - controller.delta_f).abs() < 1e-9 || w[1].grip_force == controller.f_max, "{d}");
        }
    }
}
