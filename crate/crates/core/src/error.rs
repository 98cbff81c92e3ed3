use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid atom spec: {0}")]
    AtomSpec(String),

    #[error("invalid field configuration: {0}")]
    FieldConfig(String),

    #[error("operation requires drive mode {expected}, got {found}")]
    WrongMode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid relaxation rates: {0}")]
    Rates(String),

    #[error("reduced tier precondition violated: {0}")]
    ReducedTier(String),

    #[error("time step {dt:e} s exceeds the {tier} tier bound {bound:e} s")]
    StepTooLarge { tier: &'static str, dt: f64, bound: f64 },

    #[error("trace drifted by {drift:e} in one step at t = {t:e} s (stiffness; reduce dt)")]
    TraceDrift { t: f64, drift: f64 },

    #[error("unitarity drift {drift:e} exceeded tolerance before projection (step too large)")]
    UnitarityDrift { drift: f64 },

    #[error("manifold index must be 1 or 2, got {0}")]
    Manifold(u8),

    #[error("empty stroboscopic record")]
    EmptyRecord,

    #[error("invalid sweep: {0}")]
    Sweep(String),

    #[error("no sweep point converged")]
    NoConvergedPoints,

    #[error("no resonance found: {0}")]
    NoResonance(String),

    #[error("ratio {ratio} is not a member of the periodic set (deviation {deviation:e})")]
    NotPeriodic { ratio: f64, deviation: f64 },

    #[error("no periodic-set member within 10% of ratio {0}")]
    NoSetMatch(f64),

    #[error("cannot fit: {0}")]
    Fit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
