use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ModelError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("birth mass {mass} needs at least one birth particle")]
    NoBirthParticles { mass: f64 },
    #[error("invalid filter parameter {field}: {reason}")]
    Parameter { field: &'static str, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FilterError {
    pub(crate) fn parameter(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Parameter {
            field,
            reason: reason.into(),
        }
    }
}
