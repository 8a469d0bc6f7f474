use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pivot_core::harness::ablation::{results_csv, results_table, AblationSpec, EpisodeRecord};
use pivot_core::harness::demo::{demo_defaults, run_two_phase_demo};
use pivot_core::harness::{emit_plots, run_ablation, run_episode, Group, ScenarioConfig};

#[derive(Parser)]
#[command(name = "pivot", version, about = "Tactile in-hand pivoting on a simulated gripper")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; unspecified keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log and result row.
    Run(Common),
    /// Run the ablation matrix: 5 objects × 5 groups × 2 scenarios × 3 seeds.
    Ablate(Common),
    /// Run the two-phase demo: in-air, then against an unseen obstacle.
    Demo(Common),
    /// Turn an episode log into plot series. Without --log, runs the
    /// configured episode first.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn load(common: &Common, fallback: impl FnOnce() -> ScenarioConfig) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => fallback(),
    };
    if let Some(s) = common.seed {
        cfg.episode.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_config() -> ScenarioConfig {
    ScenarioConfig::from_toml("").expect("defaults are valid")
}

fn out_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn run(common: &Common) -> Result<()> {
    let cfg = load(common, default_config)?;
    out_dir(&common.out)?;
    let log = common.out.join("episode.csv");
    let o = run_episode(&cfg, Some(&log))?;
    let record = EpisodeRecord {
        object: cfg.object_kind()?,
        scenario: cfg.episode.scenario,
        group: cfg.episode.group.unwrap_or(Group::Complete),
        seed: cfg.episode.seed,
        label: o.label,
        final_error_deg: o.final_error_deg,
        max_slip_mm: o.max_slip_mm,
        duration: o.duration,
    };
    std::fs::write(common.out.join("results.csv"), results_csv(&[record]))?;
    println!(
        "{} after {:.2} s: error {:.2} deg, max slip {:.2} mm ({})",
        o.label.id(),
        o.duration,
        o.final_error_deg,
        o.max_slip_mm,
        o.reason
    );
    println!("log: {}", log.display());
    Ok(())
}

fn ablate(common: &Common) -> Result<()> {
    let mut spec = AblationSpec::default();
    if let Some(p) = &common.config {
        spec.base = Some(ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    if let Some(s) = common.seed {
        spec.seeds = vec![s, s + 1, s + 2];
    }
    out_dir(&common.out)?;
    let records = run_ablation(&spec)?;
    let table = results_table(&records);
    std::fs::write(common.out.join("results.csv"), results_csv(&records))?;
    std::fs::write(common.out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn demo(common: &Common) -> Result<()> {
    let cfg = load(common, demo_defaults)?;
    out_dir(&common.out)?;
    let d = run_two_phase_demo(&cfg, Some(&common.out))?;
    for (i, p) in d.phases.iter().enumerate() {
        let o = &p.outcome;
        println!(
            "phase {} ({}): {} after {:.2} s, error {:.2} deg, max slip {:.2} mm",
            i + 1,
            p.scenario.id(),
            o.label.id(),
            o.duration,
            o.final_error_deg,
            o.max_slip_mm
        );
    }
    if d.phases.len() < 2 {
        println!("phase 2 skipped: phase 1 did not succeed");
    }
    println!("demo {}", if d.success() { "succeeded" } else { "failed" });
    Ok(())
}

fn plot(common: &Common, log: Option<&Path>) -> Result<()> {
    out_dir(&common.out)?;
    let log = match log {
        Some(l) => {
            if common.config.is_some() || common.seed.is_some() {
                bail!("--log replays an existing episode; drop --config/--seed");
            }
            l.to_path_buf()
        }
        None => {
            let cfg = load(common, default_config)?;
            let path = common.out.join("episode.csv");
            run_episode(&cfg, Some(&path))?;
            path
        }
    };
    for p in emit_plots(&log, &common.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(c) => run(&c),
        Command::Ablate(c) => ablate(&c),
        Command::Demo(c) => demo(&c),
        Command::Plot { common, log } => plot(&common, log.as_deref()),
    }
}
