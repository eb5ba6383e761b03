use alloc::string::String;

/// Errors raised by the twin-model library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("tape: {0}")]
    Tape(String),

    #[error("singular step Jacobian at timestep {step}")]
    SingularStep { step: usize },

    #[error("CFL violation at substep {step}: Courant number {courant:.4} > 1, needs at least {required_substeps} substeps per output interval")]
    CflViolation {
        step: usize,
        courant: f64,
        required_substeps: usize,
    },

    #[error("solution blew up (non-finite state) at substep {step}")]
    BlowUp { step: usize },

    #[error("basis {0} is already in the dictionary")]
    DuplicateBasis(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// True for failures of the numerical scheme rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. }
                | Error::BlowUp { .. }
                | Error::SingularStep { .. }
                | Error::Diverged(_)
                | Error::NonFinite { .. }
        )
    }
}
