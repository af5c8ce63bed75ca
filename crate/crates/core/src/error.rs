use alloc::string::String;

/// Errors raised by the planning stack and the simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate path: {0}")]
    DegeneratePath(&'static str),

    #[error("point is {distance:.3} m from the path, outside the {corridor:.3} m corridor")]
    OutOfCorridor { distance: f64, corridor: f64 },

    #[error("inconsistent map rules: {0}")]
    InconsistentRules(String),

    #[error("no situation context covers s = {0:.3} m")]
    NoContext(f64),

    #[error("segment duration must be positive, got {0} s")]
    NonpositiveDuration(f64),

    #[error("trajectory leaves the safe set but carries no PNR/PGA annotation")]
    MissingAnnotation,

    #[error("no admissible candidate, not even the fail-safe option: {0}")]
    Infeasible(String),

    #[error("tracking solver stalled at iteration {iterations} with constraint violation {violation:.3e}")]
    SolverStall { iterations: usize, violation: f64 },

    #[error("run ended before reaching a terminal condition")]
    Unfinished,

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
