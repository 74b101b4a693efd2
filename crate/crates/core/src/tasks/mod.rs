//! Solution schemas and deterministic evaluators for the three tasks, plus
//! sandboxed execution of generator programs.

pub mod autocorr;
pub mod circles;
pub mod exec;
pub mod hadamard;
pub mod payload;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
pub use circles::VerifyMode;
pub use payload::{parse_solution, Circle, SolutionPayload, TaskId};

/// Result of scoring a candidate solution. Invalid solutions score 0 but are
/// kept so that runs retain them as negative evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub valid: bool,
    pub detail: BTreeMap<String, f64>,
    pub violation: Option<String>,
}

impl Evaluation {
    pub fn invalid(violation: impl Into<String>) -> Self {
        Evaluation {
            score: 0.0,
            valid: false,
            detail: BTreeMap::new(),
            violation: Some(violation.into()),
        }
    }
}

/// Evaluate a payload with its task's scorer. Circle packings use the given
/// verification mode; the other tasks ignore it.
pub fn evaluate(payload: &SolutionPayload, mode: VerifyMode) -> Result<Evaluation> {
    match payload {
        SolutionPayload::HadamardMatrix { entries, .. } => hadamard::evaluate(entries, None),
        SolutionPayload::StepFunction { values, .. } => autocorr::evaluate(values),
        SolutionPayload::CirclePacking { circles } => circles::evaluate(circles, mode),
    }
}
