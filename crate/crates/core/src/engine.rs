//! The outer evolution loop: ties the archive, planner, factor ledger,
//! gateway, and task evaluators together, with snapshot/resume and
//! multi-run reporting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, ArchiveSnapshot, ProgramRecord, RecordSource};
use crate::error::{Error, Result};
use crate::factor_ledger::{
    detect_surprises, estimate_ate, AteOutcome, EffectEstimate, FactorLedger, FactorOrigin,
};
use crate::gateway::prompts::{
    annotate_factors, assemble_mutation_prompt, parse_child, propose_procedure_factors,
    request_abduction, Candidate, ChildMode, Inspiration,
};
use crate::gateway::{Backend, ChatRequest, ChatResponse, Gateway, LiveGateway, ScriptedGateway};
use crate::outcome_factors::{compute_metrics, metric_names};
use crate::planner::{select_inspirations, PlannerState};
use crate::tasks::{evaluate, exec, parse_solution, Circle, SolutionPayload, TaskId, VerifyMode};

fn default_tau() -> f64 {
    0.95
}
fn default_block_len() -> u64 {
    10
}
fn default_inspirations_k() -> usize {
    2
}
fn default_min_support() -> u64 {
    3
}
fn default_cadence() -> u64 {
    10
}
fn default_theta_sig_factor() -> f64 {
    0.25
}
fn default_theta_shift() -> f64 {
    1.0
}
fn default_max_active() -> usize {
    12
}
fn default_max_new_factors() -> usize {
    3
}
fn default_parallelism() -> usize {
    1
}
fn default_mode() -> ChildMode {
    ChildMode::DirectPayload
}
fn default_digest_top_k() -> usize {
    6
}
fn default_exec_time_limit_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum GatewayConfig {
    /// Replay responses from a JSONL script.
    Scripted { script: PathBuf },
    /// Live chat-completion endpoint; the API key comes from the
    /// CAUSAL_EVOLVE_API_KEY environment variable.
    Live {
        endpoint: String,
        model: String,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default)]
        transcript: Option<PathBuf>,
    },
}

/// Construct the configured gateway backend.
pub fn build_gateway(config: &GatewayConfig) -> Result<Box<dyn Gateway>> {
    match config {
        GatewayConfig::Scripted { script } => Ok(Box::new(ScriptedGateway::load(script)?)),
        GatewayConfig::Live {
            endpoint,
            model,
            max_retries,
            transcript,
        } => {
            let key = std::env::var(crate::gateway::live::API_KEY_ENV).map_err(|_| {
                Error::Config(format!(
                    "live gateway requires {}",
                    crate::gateway::live::API_KEY_ENV
                ))
            })?;
            let gw = LiveGateway::new(
                endpoint.clone(),
                model.clone(),
                key,
                *max_retries,
                transcript.clone(),
            )
            .map_err(Error::Gateway)?;
            Ok(Box::new(gw))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub task: TaskId,
    /// Number of LLM-generated children (seed records do not count).
    pub budget: u64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_block_len")]
    pub block_len: u64,
    #[serde(default = "default_inspirations_k")]
    pub inspirations_k: usize,
    #[serde(default = "default_min_support")]
    pub min_support: u64,
    /// Ledger maintenance cadence W, in archive records.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    /// theta_sig = theta_sig_factor * std of valid scores.
    #[serde(default = "default_theta_sig_factor")]
    pub theta_sig_factor: f64,
    #[serde(default = "default_theta_shift")]
    pub theta_shift: f64,
    #[serde(default = "default_max_active")]
    pub max_active: usize,
    #[serde(default = "default_max_new_factors")]
    pub max_new_factors: usize,
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_mode")]
    pub mode: ChildMode,
    /// Interpreter prefix for generator-program mode; the candidate source
    /// file path is appended as the final argument.
    #[serde(default)]
    pub generator_command: Option<Vec<String>>,
    #[serde(default = "default_exec_time_limit_ms")]
    pub exec_time_limit_ms: u64,
    #[serde(default)]
    pub exec_memory_hint_mb: Option<u64>,
    #[serde(default = "default_digest_top_k")]
    pub digest_top_k: usize,
    /// Generations at which the report tabulates best-so-far.
    #[serde(default)]
    pub report_steps: Vec<u64>,
    /// Directory for the run log, snapshots, and reports.
    pub output_dir: PathBuf,
    pub gateway: GatewayConfig,
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau {} must be in (0,1)", self.tau)));
        }
        if self.block_len == 0 || self.cadence == 0 {
            return Err(Error::Config("block_len and cadence must be >= 1".into()));
        }
        let mut prev = 0u64;
        for &s in &self.report_steps {
            if s < prev {
                return Err(Error::Config("report_steps must be sorted ascending".into()));
            }
            if s > self.budget {
                return Err(Error::Config(format!(
                    "report step {s} exceeds budget {}",
                    self.budget
                )));
            }
            prev = s;
        }
        if self.mode == ChildMode::GeneratorProgram && self.generator_command.is_none() {
            return Err(Error::Config(
                "generator_program mode requires generator_command".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: EvolveConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn run_id(&self) -> String {
        format!("{}-seed{}", self.task.as_str(), self.seed)
    }
}

/// The trivial valid starting solution for each task.
pub fn seed_payload(task: TaskId) -> SolutionPayload {
    match task {
        // 2I - J: entries +-1, determinant (2-n)*2^(n-1) != 0 for n = 29.
        TaskId::Hadamard => {
            let n = 29;
            let entries = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1 } else { -1 }).collect())
                .collect();
            SolutionPayload::HadamardMatrix { n, entries }
        }
        TaskId::Autocorr => SolutionPayload::StepFunction {
            n: 256,
            values: vec![1.0; 256],
        },
        TaskId::CirclePacking => SolutionPayload::CirclePacking {
            circles: vec![Circle { x: 0.5, y: 0.5, r: 0.5 }],
        },
    }
}

/// Verification mode used while a run is in flight: circle packings use the
/// relaxed verifier during evolution (the champion is re-verified exactly at
/// the end); the other tasks have a single verifier.
fn run_mode(task: TaskId) -> VerifyMode {
    match task {
        TaskId::CirclePacking => VerifyMode::Relaxed,
        _ => VerifyMode::Exact,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub archive: ArchiveSnapshot,
    pub planner: PlannerState,
    pub ledger: FactorLedger,
    /// LLM children committed so far.
    pub children_done: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepBest {
    pub step: u64,
    pub best: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerSummary {
    pub factors: usize,
    pub active_factors: usize,
    pub surprises: usize,
    pub hypotheses: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub run_id: String,
    pub task: TaskId,
    pub seed: u64,
    pub budget: u64,
    pub best_so_far_table: Vec<StepBest>,
    pub final_best: f64,
    /// Exact re-verification of the champion (circle packing only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub champion_exact_score: Option<f64>,
    pub planner_stats: serde_json::Value,
    pub ledger_summary: LedgerSummary,
    pub wall_time_ms_total: u64,
}

struct EngineState {
    archive: Archive,
    planner: PlannerState,
    ledger: FactorLedger,
    children_done: u64,
    next_record_id: u64,
}

/// Run a fresh evolution: seed record, then `budget` LLM children.
pub fn run_evolution(config: &EvolveConfig, gateway: &dyn Gateway) -> Result<RunReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let log_path = config.output_dir.join("run.jsonl");
    if log_path.exists() {
        std::fs::remove_file(&log_path)?;
    }
    let mut archive =
        Archive::new(config.run_id(), config.task).with_log(&log_path)?;

    // Seed record at generation 0 so v_0 > 0 and rewards are well defined.
    let payload = seed_payload(config.task);
    let evaluation = evaluate(&payload, run_mode(config.task))?;
    let metrics = compute_metrics(&payload)?;
    archive.append_record(ProgramRecord {
        id: 0,
        parent_id: None,
        generation: 0,
        payload: Some(payload),
        source: RecordSource::Seed,
        score: evaluation.score,
        valid: evaluation.valid,
        metrics: metrics.values,
        factor_flags: BTreeMap::new(),
        action_used: None,
        violation: None,
        wall_time_ms: 0,
    })?;

    let planner = PlannerState::new(metric_names(config.task), config.tau, config.block_len)?;
    let state = EngineState {
        archive,
        planner,
        ledger: FactorLedger::new(config.max_active),
        children_done: 0,
        next_record_id: 1,
    };
    run_loop(config, gateway, state)
}

/// Resume from an engine snapshot; runs until the configured budget.
pub fn resume_evolution(
    config: &EvolveConfig,
    gateway: &dyn Gateway,
    snapshot_path: &Path,
) -> Result<RunReport> {
    config.validate()?;
    let text = std::fs::read_to_string(snapshot_path)?;
    let snap: EngineSnapshot = serde_json::from_str(&text)?;
    if snap.archive.task != config.task {
        return Err(Error::Config(format!(
            "snapshot task {:?} does not match config task {:?}",
            snap.archive.task, config.task
        )));
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let next_record_id = snap.archive.records.iter().map(|r| r.id + 1).max().unwrap_or(0);
    let archive = Archive::from_snapshot(snap.archive)?
        .with_log(&config.output_dir.join("run.jsonl"))?;
    let state = EngineState {
        archive,
        planner: snap.planner,
        ledger: snap.ledger,
        children_done: snap.children_done,
        next_record_id,
    };
    run_loop(config, gateway, state)
}

/// One dispatched child: everything decided before the gateway round trip.
struct Job {
    action: crate::planner::PlannerAction,
    parent_id: u64,
    v_t: f64,
    request: ChatRequest,
}

fn run_loop(
    config: &EvolveConfig,
    gateway: &dyn Gateway,
    mut state: EngineState,
) -> Result<RunReport> {
    let started = Instant::now();
    // Resumed runs advance the stream so they do not replay old randomness.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(state.children_done));

    while state.children_done < config.budget {
        let batch = (config.budget - state.children_done).min(config.parallelism as u64) as usize;
        let mut jobs = Vec::with_capacity(batch);
        for _ in 0..batch {
            let action = state.planner.select_action(&mut rng)?;
            let parent = state.archive.sample_parent(&mut rng)?;
            let parent_id = parent.id;
            let inspiration_ids = select_inspirations(
                &state.archive,
                &action,
                config.inspirations_k,
                Some(parent_id),
            )?;
            let inspirations: Vec<Inspiration<'_>> = inspiration_ids
                .iter()
                .filter_map(|id| state.archive.get(*id))
                .map(|record| Inspiration { record })
                .collect();
            let digest = state.ledger.scratchpad_digest(config.digest_top_k);
            let request = assemble_mutation_prompt(
                config.task,
                state.archive.get(parent_id).expect("parent exists"),
                &inspirations,
                &digest,
            );
            jobs.push(Job {
                action,
                parent_id,
                v_t: state.archive.best_so_far(),
                request,
            });
        }

        let responses = dispatch(gateway, &jobs);
        for (job_idx, outcome, elapsed_ms) in responses {
            let job = &jobs[job_idx];
            let response = match outcome {
                Ok(r) => r,
                Err(e) => {
                    // Hard gateway failure: leave a resumable snapshot behind.
                    save_snapshot(config, &state)?;
                    return Err(Error::Gateway(e));
                }
            };
            commit_child(config, gateway, &mut state, job, response, elapsed_ms)?;
            if state.archive.len() as u64 % config.cadence == 0 {
                ledger_maintenance(config, gateway, &mut state)?;
                save_snapshot(config, &state)?;
            }
        }
    }

    save_snapshot(config, &state)?;
    Ok(build_report(config, &state, started.elapsed().as_millis() as u64))
}

/// Fan jobs out to the gateway; results come back in completion order.
/// A single job runs inline, so `parallelism = 1` stays fully deterministic.
#[allow(clippy::type_complexity)]
fn dispatch(
    gateway: &dyn Gateway,
    jobs: &[Job],
) -> Vec<(usize, std::result::Result<ChatResponse, crate::error::GatewayError>, u64)> {
    if jobs.len() == 1 {
        let t0 = Instant::now();
        let outcome = gateway.complete(&jobs[0].request);
        return vec![(0, outcome, t0.elapsed().as_millis() as u64)];
    }
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for (i, job) in jobs.iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move || {
                let t0 = Instant::now();
                let outcome = gateway.complete(&job.request);
                let _ = tx.send((i, outcome, t0.elapsed().as_millis() as u64));
            });
        }
    });
    drop(tx);
    rx.into_iter().collect()
}

/// Turn a gateway response into an archived record; per-child failures
/// degrade to invalid records rather than aborting the run.
fn commit_child(
    config: &EvolveConfig,
    gateway: &dyn Gateway,
    state: &mut EngineState,
    job: &Job,
    response: ChatResponse,
    elapsed_ms: u64,
) -> Result<()> {
    let mut payload = None;
    let mut violation = None;
    match parse_child(&response.text, config.task, config.mode) {
        Ok(Candidate::Payload(p)) => payload = Some(p),
        Ok(Candidate::Program(source)) => {
            match run_generator(config, &source) {
                Ok(p) => payload = Some(p),
                Err(e) => violation = Some(e.to_string()),
            }
        }
        Err(e) => violation = Some(e.to_string()),
    }

    let (score, valid, metrics) = match &payload {
        Some(p) => {
            let evaluation = evaluate(p, run_mode(config.task))?;
            if !evaluation.valid {
                violation = evaluation.violation.clone();
            }
            let metrics = if evaluation.valid {
                compute_metrics(p)?.values
            } else {
                BTreeMap::new()
            };
            (evaluation.score, evaluation.valid, metrics)
        }
        None => (0.0, false, BTreeMap::new()),
    };

    let mut record = ProgramRecord {
        id: state.next_record_id,
        parent_id: Some(job.parent_id),
        generation: state.archive.len() as u64,
        payload,
        source: RecordSource::Llm,
        score,
        valid,
        metrics,
        factor_flags: BTreeMap::new(),
        action_used: Some(job.action.clone()),
        violation,
        // Scripted replays must produce byte-identical logs, so only live
        // responses record real timings.
        wall_time_ms: if response.backend == Backend::Scripted {
            0
        } else {
            elapsed_ms
        },
    };
    record.factor_flags = annotate_factors(gateway, &record, &state.ledger.active_names())?;
    state.archive.append_record(record)?;
    state.next_record_id += 1;
    state.children_done += 1;
    state.planner.update_reward(&job.action, score, job.v_t)?;
    Ok(())
}

/// Write the candidate source to a file and run the configured interpreter
/// on it; stdout is parsed as the solution payload.
fn run_generator(config: &EvolveConfig, source: &str) -> Result<SolutionPayload> {
    let prefix = config
        .generator_command
        .as_ref()
        .ok_or_else(|| Error::Config("generator_command not configured".into()))?;
    let dir = tempfile::tempdir()?;
    let src_path = dir.path().join("candidate");
    std::fs::write(&src_path, source)?;
    let mut command: Vec<String> = prefix.clone();
    command.push(src_path.to_string_lossy().into_owned());
    let stdout = exec::execute_candidate(
        &command,
        config.exec_time_limit_ms,
        config.exec_memory_hint_mb,
    )?;
    parse_solution(config.task, &stdout)
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Cadence work: re-estimate effects, detect surprises, abduce on new
/// surprises, and ask for new factors on a high/low score contrast.
fn ledger_maintenance(
    config: &EvolveConfig,
    gateway: &dyn Gateway,
    state: &mut EngineState,
) -> Result<()> {
    let window_end = state.archive.len() as u64;
    let records = state.archive.records();
    let valid_scores: Vec<f64> = records.iter().filter(|r| r.valid).map(|r| r.score).collect();
    let sigma_scores = population_std(&valid_scores);

    // Re-estimate ATEs for active factors; keep the last estimate when the
    // contrast is insufficient.
    let prev = state.ledger.estimates.clone();
    let mut curr: BTreeMap<String, EffectEstimate> = BTreeMap::new();
    for name in state.ledger.active_names() {
        if let AteOutcome::Estimate(e) =
            estimate_ate(records, &name, config.min_support, window_end)
        {
            curr.insert(name, e);
        }
    }
    for (name, e) in &curr {
        state.ledger.estimates.insert(name.clone(), *e);
    }

    // A zero spread means the magnitude rule would fire on any change at all;
    // skip detection until scores actually vary.
    if sigma_scores > 0.0 {
        let events = detect_surprises(
            &prev,
            &curr,
            config.theta_sig_factor * sigma_scores,
            config.theta_shift,
            sigma_scores,
            window_end,
            state.ledger.surprises.len() as u64,
        );
        if !events.is_empty() {
            let digest = state.ledger.scratchpad_digest(config.digest_top_k);
            match request_abduction(gateway, &digest, &events) {
                Ok((hypothesis, proposals)) => {
                    state.ledger.record_hypothesis(hypothesis)?;
                    let _ = state.ledger.register_factors(
                        &proposals,
                        FactorOrigin::Abduced,
                        window_end,
                    );
                }
                Err(Error::Gateway(e)) => return Err(Error::Gateway(e)),
                Err(e) => {
                    eprintln!("warning: abduction failed ({e}); surprises stay open");
                }
            }
            state.ledger.surprises.extend(events);
        }
    }

    // High/low contrast for factor proposals: top vs bottom valid records.
    let mut by_score: Vec<&ProgramRecord> = records.iter().filter(|r| r.valid).collect();
    by_score.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let group = by_score.len().min(6) / 2;
    if group >= 1 {
        let high = &by_score[..group];
        let low = &by_score[by_score.len() - group..];
        let proposals =
            propose_procedure_factors(gateway, high, low, config.max_new_factors)?;
        if !proposals.is_empty() {
            let _ = state
                .ledger
                .register_factors(&proposals, FactorOrigin::LlmProposed, window_end)?;
        }
    }
    Ok(())
}

fn save_snapshot(config: &EvolveConfig, state: &EngineState) -> Result<()> {
    let snap = EngineSnapshot {
        archive: state.archive.snapshot(),
        planner: state.planner.clone(),
        ledger: state.ledger.clone(),
        children_done: state.children_done,
    };
    let path = config.output_dir.join("snapshot.json");
    let tmp = config.output_dir.join("snapshot.json.tmp");
    let mut file = std::fs::File::create(&tmp)?;
    serde_json::to_writer_pretty(&mut file, &snap)?;
    file.write_all(b"\n")?;
    file.sync_all()?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

fn build_report(config: &EvolveConfig, state: &EngineState, wall_ms: u64) -> RunReport {
    let steps: Vec<u64> = if config.report_steps.is_empty() {
        vec![config.budget]
    } else {
        config.report_steps.clone()
    };
    let best_so_far_table = steps
        .iter()
        .map(|&s| StepBest {
            step: s,
            best: state.archive.best_at_step(s),
        })
        .collect();

    let champion_exact_score = if config.task == TaskId::CirclePacking {
        state
            .archive
            .records()
            .iter()
            .filter(|r| r.valid)
            .max_by(|a, b| {
                a.score
                    .partial_cmp(&b.score)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.id.cmp(&a.id))
            })
            .and_then(|r| r.payload.as_ref())
            .and_then(|p| evaluate(p, VerifyMode::Exact).ok())
            .map(|e| e.score)
    } else {
        None
    };

    RunReport {
        run_id: state.archive.run_id.clone(),
        task: config.task,
        seed: config.seed,
        budget: config.budget,
        best_so_far_table,
        final_best: state.archive.best_so_far(),
        champion_exact_score,
        planner_stats: state.planner.stats_json(),
        ledger_summary: LedgerSummary {
            factors: state.ledger.factors.len(),
            active_factors: state.ledger.active_factors().count(),
            surprises: state.ledger.surprises.len(),
            hypotheses: state.ledger.hypotheses.len(),
        },
        wall_time_ms_total: wall_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportRow {
    pub step: u64,
    pub mean: f64,
    pub best: f64,
}

/// Cross-run summary: for each step, the mean over runs of best-so-far at
/// that generation, and the max over runs.
pub fn report_at_steps(runs: &[(String, Archive)], steps: &[u64]) -> Result<Vec<ReportRow>> {
    if runs.is_empty() {
        return Err(Error::Report("no run logs given".into()));
    }
    for (name, archive) in runs {
        if archive.is_empty() {
            return Err(Error::Report(format!("run '{name}' is empty")));
        }
        let max_gen = archive.len() as u64 - 1;
        for &s in steps {
            if s > max_gen {
                return Err(Error::Report(format!(
                    "step {s} exceeds run '{name}' (last generation {max_gen})"
                )));
            }
        }
    }
    Ok(steps
        .iter()
        .map(|&step| {
            let bests: Vec<f64> = runs
                .iter()
                .map(|(_, a)| a.best_at_step(step))
                .collect();
            ReportRow {
                step,
                mean: bests.iter().sum::<f64>() / bests.len() as f64,
                best: bests.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Aligned-column text rendering of a cross-run report.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:>8}  {:>12}  {:>12}\n", "Step", "Mean", "Best"));
    for r in rows {
        out.push_str(&format!("{:>8}  {:>12.6}  {:>12.6}\n", r.step, r.mean, r.best));
    }
    out
}
