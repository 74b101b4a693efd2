use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three in-scope optimization tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Hadamard,
    Autocorr,
    CirclePacking,
}

impl TaskId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::Hadamard => "hadamard",
            TaskId::Autocorr => "autocorr",
            TaskId::CirclePacking => "circle_packing",
        }
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" => Ok(TaskId::Hadamard),
            "autocorr" => Ok(TaskId::Autocorr),
            "circle_packing" => Ok(TaskId::CirclePacking),
            other => Err(Error::Schema(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

/// A candidate solution, tagged by task. Field names follow the on-disk
/// JSON schema exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task")]
pub enum SolutionPayload {
    #[serde(rename = "hadamard")]
    HadamardMatrix { n: usize, entries: Vec<Vec<i8>> },
    #[serde(rename = "autocorr")]
    StepFunction { n: usize, values: Vec<f64> },
    #[serde(rename = "circle_packing")]
    CirclePacking { circles: Vec<Circle> },
}

impl SolutionPayload {
    pub fn task(&self) -> TaskId {
        match self {
            SolutionPayload::HadamardMatrix { .. } => TaskId::Hadamard,
            SolutionPayload::StepFunction { .. } => TaskId::Autocorr,
            SolutionPayload::CirclePacking { .. } => TaskId::CirclePacking,
        }
    }

    /// Validate the type invariants beyond what serde checks structurally.
    pub fn validate(&self) -> Result<()> {
        match self {
            SolutionPayload::HadamardMatrix { n, entries } => {
                if entries.len() != *n {
                    return Err(Error::Schema(format!(
                        "expected {n} rows, got {}",
                        entries.len()
                    )));
                }
                for row in entries {
                    if row.len() != *n {
                        return Err(Error::Schema(format!(
                            "expected {n} columns, got {}",
                            row.len()
                        )));
                    }
                    for &v in row {
                        if v != 1 && v != -1 {
                            return Err(Error::Domain(format!("entry {v} not in {{-1,+1}}")));
                        }
                    }
                }
                Ok(())
            }
            SolutionPayload::StepFunction { n, values } => {
                if values.len() != *n {
                    return Err(Error::Schema(format!(
                        "expected {n} values, got {}",
                        values.len()
                    )));
                }
                for &v in values {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Domain(format!("step value {v} must be >= 0")));
                    }
                }
                if values.iter().all(|&v| v == 0.0) {
                    return Err(Error::Domain("step function is identically zero".into()));
                }
                Ok(())
            }
            SolutionPayload::CirclePacking { circles } => {
                for c in circles {
                    if !c.x.is_finite() || !c.y.is_finite() || !c.r.is_finite() {
                        return Err(Error::Domain("non-finite circle coordinate".into()));
                    }
                    if c.r < 0.0 {
                        return Err(Error::Domain(format!("radius {} must be >= 0", c.r)));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Parse and validate a solution payload from raw JSON bytes, checking that
/// it belongs to the expected task.
pub fn parse_solution(task_id: TaskId, bytes: &[u8]) -> Result<SolutionPayload> {
    let payload: SolutionPayload = serde_json::from_slice(bytes)
        .map_err(|e| Error::Schema(format!("solution JSON: {e}")))?;
    if payload.task() != task_id {
        return Err(Error::Schema(format!(
            "expected task '{}', payload is '{}'",
            task_id.as_str(),
            payload.task().as_str()
        )));
    }
    payload.validate()?;
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hadamard() {
        let p = parse_solution(
            TaskId::Hadamard,
            br#"{"task":"hadamard","n":2,"entries":[[1,1],[1,-1]]}"#,
        )
        .unwrap();
        assert!(matches!(p, SolutionPayload::HadamardMatrix { n: 2, .. }));
    }

    #[test]
    fn rejects_zero_entry() {
        let err = parse_solution(
            TaskId::Hadamard,
            br#"{"task":"hadamard","n":2,"entries":[[1,0],[1,-1]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not in {-1,+1}"), "{err}");
    }

    #[test]
    fn rejects_negative_step_value() {
        let err = parse_solution(
            TaskId::Autocorr,
            br#"{"task":"autocorr","n":2,"values":[1.0,-0.5]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = parse_solution(
            TaskId::Hadamard,
            br#"{"task":"hadamard","n":3,"entries":[[1,1],[1,-1]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn rejects_task_mismatch() {
        let err = parse_solution(
            TaskId::CirclePacking,
            br#"{"task":"hadamard","n":2,"entries":[[1,1],[1,-1]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
