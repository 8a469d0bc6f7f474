//! Experiment harness: configs, episodes, the ablation matrix, the
//! two-phase demo and plot-data emission.

pub mod ablation;
pub mod config;
pub mod demo;
pub mod episode;
pub mod plot;

pub use ablation::{run_ablation, AblationSpec, EpisodeRecord};
pub use config::{Group, ScenarioConfig};
pub use demo::{run_two_phase_demo, DemoOutcome};
pub use episode::{run_episode, EpisodeOutcome, Label};
pub use plot::emit_plots;
