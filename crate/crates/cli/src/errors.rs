//! Exit-code classification: bad input is a validation error (exit 1),
//! everything that fails while computing is a runtime error (exit 2).

use std::fmt;

use cotrade::Error as CoreError;

#[derive(Debug)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

pub fn validation(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ValidationError(message.into()))
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

fn core_is_validation(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Parse { .. }
            | CoreError::InvalidInput(_)
            | CoreError::ShapeMismatch { .. }
            | CoreError::UnsortedTape { .. }
            | CoreError::DuplicateSymbol(_)
            | CoreError::MissingSector(_)
            | CoreError::DateMismatch(_)
            | CoreError::Infeasible(_)
            | CoreError::Csv(_)
            | CoreError::Json(_)
    )
}

pub fn exit_code(error: &anyhow::Error) -> i32 {
    for cause in error.chain() {
        if cause.is::<ValidationError>() {
            return EXIT_VALIDATION;
        }
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return if core_is_validation(core) {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            };
        }
    }
    EXIT_RUNTIME
}
