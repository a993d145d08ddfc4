use thiserror::Error;

/// Failures raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("theta = {0} lies outside [0, 1]")]
    ThetaOutOfRange(f64),

    #[error("time {t} lies outside [{t0}, {t_end}]")]
    TimeOutOfRange { t: f64, t0: f64, t_end: f64 },

    #[error("unknown builtin scheme `{0}`")]
    UnknownScheme(String),

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("scheme document: {0}")]
    Document(String),

    #[error("outcome count {required:e} exceeds the cap of {cap}; use Monte Carlo estimation instead")]
    Capacity { required: f64, cap: u64 },

    #[error(
        "non-finite {family} evaluation at t_n = {t_n}, stage {stage}{}{}",
        .step.map(|s| format!(", step {s}")).unwrap_or_default(),
        .path.map(|p| format!(", path {p}")).unwrap_or_default()
    )]
    NumericalBlowup {
        t_n: f64,
        stage: usize,
        family: StageFamily,
        step: Option<usize>,
        path: Option<u64>,
    },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no reference solution for functional {0}")]
    MissingReference(String),

    #[error("order estimation needs at least two nonzero errors, got {0}")]
    Estimation(usize),
}

/// Which stage family produced a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageFamily {
    Drift,
    Diffusion,
    CrossDiffusion,
}

impl std::fmt::Display for StageFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StageFamily::Drift => "drift",
            StageFamily::Diffusion => "diffusion",
            StageFamily::CrossDiffusion => "cross-diffusion",
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
