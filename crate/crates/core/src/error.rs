use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TactileError {
    #[error("marker field has {0} markers, at least 3 are required")]
    TooFewMarkers(usize),
    #[error("marker field arrays disagree in length (refs {refs}, displacements {disps}, normals {normals})")]
    LengthMismatch { refs: usize, disps: usize, normals: usize },
    #[error("mean contact normal is degenerate (norm {0:e})")]
    DegenerateNormal(f64),
    #[error("slip tendency has no tangential component")]
    NoTangentialComponent,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t = {time:.3} s (object speed {speed:.3e} mm/s)")]
    Diverged { time: f64, speed: f64 },
    #[error("object dropped at t = {time:.3} s: no finger carries normal force")]
    ObjectDropped { time: f64 },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("direction update collapsed (|q - αg| = {0:e}); learning rate halved")]
    DegenerateDirection(f64),
    #[error("probe aborted: {0}")]
    ProbeAborted(SimError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("trace parse error at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
