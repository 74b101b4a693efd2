//! Prompt assembly and response parsing for the five request kinds.
//!
//! Parse failures never abort a run: a bad mutation response becomes an
//! invalid record, a bad factor list becomes an empty proposal set.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::archive::ProgramRecord;
use crate::error::{Error, Result};
use crate::factor_ledger::{FactorProposal, Hypothesis, SurpriseEvent};
use crate::gateway::{ChatRequest, Gateway, RequestTag};
use crate::tasks::{parse_solution, SolutionPayload, TaskId};

fn task_description(task: TaskId) -> &'static str {
    match task {
        TaskId::Hadamard => {
            "Construct an n x n matrix with entries in {-1,+1} maximizing the absolute \
             determinant. Main target n is 29."
        }
        TaskId::Autocorr => {
            "Choose a nonnegative step function f on [-1,1] with n=256 bins maximizing \
             R(f) = ||f*f||_2^2 / (||f*f||_1 ||f*f||_inf), where f*f is the linear \
             autoconvolution."
        }
        TaskId::CirclePacking => {
            "Place 26 non-overlapping circles inside the unit square maximizing the sum \
             of radii."
        }
    }
}

fn output_schema(task: TaskId) -> &'static str {
    match task {
        TaskId::Hadamard => {
            r#"{"task":"hadamard","n":<int>,"entries":[[1,-1,...],...]}"#
        }
        TaskId::Autocorr => r#"{"task":"autocorr","n":<int>,"values":[<real>,...]}"#,
        TaskId::CirclePacking => {
            r#"{"task":"circle_packing","circles":[{"x":<real>,"y":<real>,"r":<real>},...]}"#
        }
    }
}

/// An inspiration shown to the model: the payload plus its scores.
pub struct Inspiration<'a> {
    pub record: &'a ProgramRecord,
}

/// Deterministic mutation prompt: task description and output schema in the
/// system message; parent, inspirations (in given order) and the scratchpad
/// digest in the user message.
pub fn assemble_mutation_prompt(
    task: TaskId,
    parent: &ProgramRecord,
    inspirations: &[Inspiration<'_>],
    digest: &str,
) -> ChatRequest {
    let system = format!(
        "{}\n\nRespond with exactly one fenced code block containing a JSON solution \
         matching this schema:\n{}",
        task_description(task),
        output_schema(task)
    );
    let mut user = String::new();
    user.push_str("## Parent solution\n");
    user.push_str(&format!("score: {}\n", parent.score));
    if let Some(p) = &parent.payload {
        user.push_str(&serde_json::to_string(p).unwrap_or_default());
        user.push('\n');
    }
    if !inspirations.is_empty() {
        user.push_str("\n## Inspiration solutions\n");
        for insp in inspirations {
            let r = insp.record;
            user.push_str(&format!("- score: {}, metrics: {:?}\n", r.score, r.metrics));
            if let Some(p) = &r.payload {
                user.push_str(&serde_json::to_string(p).unwrap_or_default());
                user.push('\n');
            }
        }
    }
    user.push('\n');
    user.push_str(digest);
    user.push_str("\nPropose an improved solution.\n");
    ChatRequest {
        system,
        user,
        temperature: 0.8,
        max_tokens: 16_384,
        tag: RequestTag::Mutate,
    }
}

/// A generated candidate: either a direct payload or generator program source.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Payload(SolutionPayload),
    Program(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildMode {
    DirectPayload,
    GeneratorProgram,
}

/// Extract the single fenced block from a response body. Zero or multiple
/// fences are ambiguity errors.
pub fn extract_fenced_block(text: &str) -> Result<String> {
    let mut blocks = Vec::new();
    let mut in_block = false;
    let mut current = String::new();
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            if in_block {
                blocks.push(current.clone());
                current.clear();
                in_block = false;
            } else {
                in_block = true;
            }
            continue;
        }
        if in_block {
            current.push_str(line);
            current.push('\n');
        }
    }
    if in_block {
        return Err(Error::Schema("unterminated fenced block".into()));
    }
    match blocks.len() {
        0 => Err(Error::Schema("response contains no fenced block".into())),
        1 => Ok(blocks.pop().unwrap()),
        n => Err(Error::Schema(format!(
            "response contains {n} fenced blocks, expected exactly one"
        ))),
    }
}

/// Parse a mutation response into a candidate for the task.
pub fn parse_child(response_text: &str, task: TaskId, mode: ChildMode) -> Result<Candidate> {
    let block = extract_fenced_block(response_text)?;
    match mode {
        ChildMode::DirectPayload => {
            let payload = parse_solution(task, block.as_bytes())?;
            Ok(Candidate::Payload(payload))
        }
        ChildMode::GeneratorProgram => Ok(Candidate::Program(block)),
    }
}

#[derive(Debug, Deserialize)]
struct WireProposal {
    name: String,
    description: String,
}

/// Ask for procedure factors that explain a high/low score contrast. An
/// unparseable response degrades to an empty list.
pub fn propose_procedure_factors(
    gateway: &dyn Gateway,
    high_group: &[&ProgramRecord],
    low_group: &[&ProgramRecord],
    max_new: usize,
) -> Result<Vec<FactorProposal>> {
    let summarize = |records: &[&ProgramRecord]| -> String {
        records
            .iter()
            .map(|r| {
                format!(
                    "- score {:.4}, payload: {}",
                    r.score,
                    r.payload
                        .as_ref()
                        .map(|p| serde_json::to_string(p).unwrap_or_default())
                        .unwrap_or_else(|| "<unparsed>".to_string())
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let request = ChatRequest {
        system: "You analyze evolutionary search traces. Identify boolean procedure-level \
                 factors that explain why the high-scoring solutions beat the low-scoring \
                 ones. Respond with a JSON list [{\"name\":..., \"description\":...}]."
            .to_string(),
        user: format!(
            "## High scoring\n{}\n\n## Low scoring\n{}\n",
            summarize(high_group),
            summarize(low_group)
        ),
        temperature: 0.3,
        max_tokens: 2048,
        tag: RequestTag::ProposeFactors,
    };
    let response = gateway.complete(&request)?;
    let parsed: std::result::Result<Vec<WireProposal>, _> =
        serde_json::from_str(response.text.trim());
    match parsed {
        Ok(list) => Ok(list
            .into_iter()
            .take(max_new)
            .map(|p| FactorProposal {
                name: p.name,
                description: p.description,
            })
            .collect()),
        Err(e) => {
            eprintln!("warning: unparseable factor proposals ({e}); ignoring");
            Ok(Vec::new())
        }
    }
}

/// Annotate one record against the active factors. Missing keys default to
/// false; an unparseable response degrades to all-false. No request is made
/// when there are no active factors.
pub fn annotate_factors(
    gateway: &dyn Gateway,
    record: &ProgramRecord,
    active_factors: &[String],
) -> Result<BTreeMap<String, bool>> {
    if active_factors.is_empty() {
        return Ok(BTreeMap::new());
    }
    let request = ChatRequest {
        system: "Decide which of the listed boolean factors hold for the given solution. \
                 Respond with a JSON object mapping factor name to true/false."
            .to_string(),
        user: format!(
            "Factors: {:?}\nSolution (score {:.4}): {}\n",
            active_factors,
            record.score,
            record
                .payload
                .as_ref()
                .map(|p| serde_json::to_string(p).unwrap_or_default())
                .unwrap_or_else(|| "<unparsed>".to_string())
        ),
        temperature: 0.0,
        max_tokens: 1024,
        tag: RequestTag::Annotate,
    };
    let response = gateway.complete(&request)?;
    let parsed: std::result::Result<BTreeMap<String, bool>, _> =
        serde_json::from_str(response.text.trim());
    let answers = match parsed {
        Ok(map) => map,
        Err(e) => {
            eprintln!("warning: unparseable annotation ({e}); defaulting to all-false");
            BTreeMap::new()
        }
    };
    Ok(active_factors
        .iter()
        .map(|f| (f.clone(), answers.get(f).copied().unwrap_or(false)))
        .collect())
}

#[derive(Debug, Deserialize)]
struct WireAbduction {
    hypothesis: String,
    #[serde(default)]
    new_factors: Vec<WireProposal>,
}

/// Ask for an explanation of surprise events. Returns the hypothesis plus
/// proposed confounder factors; an unparseable response leaves the surprise
/// open.
pub fn request_abduction(
    gateway: &dyn Gateway,
    digest: &str,
    surprises: &[SurpriseEvent],
) -> Result<(Hypothesis, Vec<FactorProposal>)> {
    if surprises.is_empty() {
        return Err(Error::Factor("abduction requires at least one surprise".into()));
    }
    let listing = surprises
        .iter()
        .map(|s| {
            format!(
                "- [{}] {}: {:?}, effect moved {:+.4} -> {:+.4}",
                s.id, s.factor, s.kind, s.prev.ate, s.curr.ate
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let request = ChatRequest {
        system: "Surprising shifts were detected in estimated factor effects. Propose an \
                 explanation and candidate confounder factors. Respond with JSON \
                 {\"hypothesis\": <text>, \"new_factors\": [{\"name\":..., \
                 \"description\":...}]}."
            .to_string(),
        user: format!("{digest}\n## Surprises\n{listing}\n"),
        temperature: 0.5,
        max_tokens: 2048,
        tag: RequestTag::Abduce,
    };
    let response = gateway.complete(&request)?;
    let wire: WireAbduction = serde_json::from_str(response.text.trim())
        .map_err(|e| Error::Schema(format!("abduction response: {e}")))?;
    let proposals: Vec<FactorProposal> = wire
        .new_factors
        .into_iter()
        .map(|p| FactorProposal {
            name: p.name,
            description: p.description,
        })
        .collect();
    let hypothesis = Hypothesis {
        text: wire.hypothesis,
        proposed_factors: proposals.iter().map(|p| p.name.clone()).collect(),
        triggering_events: surprises.iter().map(|s| s.id).collect(),
    };
    Ok((hypothesis, proposals))
}
