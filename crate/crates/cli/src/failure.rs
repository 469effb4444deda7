use std::fmt::Display;

use ggtde_core::Error;

/// Process exit status. The numeric values are part of the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Outcome {
    Success = 0,
    Violation = 1,
    InputError = 2,
    NumericalFailure = 3,
    Divergence = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub outcome: Outcome,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Display) -> Self {
        Self {
            outcome: Outcome::InputError,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let outcome = match &e {
            Error::Convergence { .. } => Outcome::NumericalFailure,
            Error::Diverged { .. } => Outcome::Divergence,
            _ => Outcome::InputError,
        };
        Self {
            outcome,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::input(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::input(e)
    }
}

pub type CmdResult = Result<Outcome, Failure>;
