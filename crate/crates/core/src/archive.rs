//! Append-only store of evaluated programs: ranking, rank-weighted parent
//! sampling, JSONL run log, and snapshot persistence.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlannerAction;
use crate::tasks::{SolutionPayload, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Llm,
    Seed,
    Direct,
}

/// One evaluated candidate. `payload` is absent when the candidate could not
/// even be parsed; such records are invalid with score 0 but stay in the
/// history as negative evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<u64>,
    pub generation: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<SolutionPayload>,
    pub source: RecordSource,
    pub score: f64,
    pub valid: bool,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub factor_flags: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_used: Option<PlannerAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
    pub wall_time_ms: u64,
}

/// Snapshot document for an archive alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveSnapshot {
    pub run_id: String,
    pub task: TaskId,
    pub best_so_far: f64,
    pub records: Vec<ProgramRecord>,
}

#[derive(Debug)]
pub struct Archive {
    records: Vec<ProgramRecord>,
    best_so_far: f64,
    pub run_id: String,
    pub task: TaskId,
    log: Option<BufWriter<File>>,
}

impl Archive {
    pub fn new(run_id: impl Into<String>, task: TaskId) -> Self {
        Archive {
            records: Vec::new(),
            best_so_far: 0.0,
            run_id: run_id.into(),
            task,
            log: None,
        }
    }

    /// Attach a JSONL run log; every subsequent append is also written there.
    pub fn with_log(mut self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn records(&self) -> &[ProgramRecord] {
        &self.records
    }

    pub fn best_so_far(&self) -> f64 {
        self.best_so_far
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append a record. The record's generation must equal the current record
    /// count; invalid records get their score forced to 0.
    pub fn append_record(&mut self, mut record: ProgramRecord) -> Result<u64> {
        let expected = self.records.len() as u64;
        if record.generation != expected {
            return Err(Error::GenerationMismatch {
                expected,
                got: record.generation,
            });
        }
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(Error::DuplicateId(record.id));
        }
        if let Some(pid) = record.parent_id {
            if !self.records.iter().any(|r| r.id == pid) {
                return Err(Error::Schema(format!(
                    "parent_id {pid} does not reference an earlier record"
                )));
            }
        }
        if !record.valid {
            record.score = 0.0;
        }
        if record.valid && record.score > self.best_so_far {
            self.best_so_far = record.score;
        }
        if let Some(log) = &mut self.log {
            serde_json::to_writer(&mut *log, &record)?;
            log.write_all(b"\n")?;
            log.flush()?;
        }
        let id = record.id;
        self.records.push(record);
        Ok(id)
    }

    /// Valid records sorted by metric_value * direction descending; ties by
    /// higher score, then lower id. Errors if any valid record lacks the
    /// metric.
    pub fn rank_by_metric(&self, metric_name: &str, direction: i8) -> Result<Vec<u64>> {
        let mut keyed: Vec<(f64, f64, u64)> = Vec::new();
        for r in self.records.iter().filter(|r| r.valid) {
            let value = r
                .metrics
                .get(metric_name)
                .ok_or_else(|| Error::UnknownMetric(metric_name.to_string()))?;
            keyed.push((value * direction as f64, r.score, r.id));
        }
        keyed.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
                .then(a.2.cmp(&b.2))
        });
        Ok(keyed.into_iter().map(|(_, _, id)| id).collect())
    }

    /// Sample a valid record with probability proportional to 1/rank, where
    /// rank 1 is the highest-score valid record (ties by lower id).
    pub fn sample_parent<R: Rng>(&self, rng: &mut R) -> Result<&ProgramRecord> {
        let mut valid: Vec<&ProgramRecord> = self.records.iter().filter(|r| r.valid).collect();
        if valid.is_empty() {
            return Err(Error::EmptyArchive);
        }
        valid.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
        let weights: Vec<f64> = (1..=valid.len()).map(|rank| 1.0 / rank as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        for (record, w) in valid.iter().zip(&weights) {
            draw -= w;
            if draw < 0.0 {
                return Ok(record);
            }
        }
        Ok(valid.last().expect("nonempty"))
    }

    pub fn get(&self, id: u64) -> Option<&ProgramRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Best valid score among records with generation <= step.
    pub fn best_at_step(&self, step: u64) -> f64 {
        self.records
            .iter()
            .filter(|r| r.valid && r.generation <= step)
            .map(|r| r.score)
            .fold(0.0, f64::max)
    }

    pub fn snapshot(&self) -> ArchiveSnapshot {
        ArchiveSnapshot {
            run_id: self.run_id.clone(),
            task: self.task,
            best_so_far: self.best_so_far,
            records: self.records.clone(),
        }
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.snapshot())?;
        Ok(())
    }

    pub fn from_snapshot(snap: ArchiveSnapshot) -> Result<Self> {
        let mut archive = Archive::new(snap.run_id, snap.task);
        for record in snap.records {
            archive.append_record(record)?;
        }
        Ok(archive)
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let snap: ArchiveSnapshot = serde_json::from_reader(BufReader::new(file))?;
        Self::from_snapshot(snap)
    }

    /// Load an archive from a JSONL run log. Malformed lines are reported
    /// with their 1-based line number.
    pub fn load_jsonl(path: &Path, run_id: impl Into<String>, task: TaskId) -> Result<Self> {
        let file = File::open(path)?;
        let mut archive = Archive::new(run_id, task);
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ProgramRecord =
                serde_json::from_str(&line).map_err(|e| Error::ParseLine {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
            archive.append_record(record)?;
        }
        Ok(archive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(id: u64, score: f64, valid: bool) -> ProgramRecord {
        ProgramRecord {
            id,
            parent_id: None,
            generation: id,
            payload: None,
            source: RecordSource::Direct,
            score,
            valid,
            metrics: BTreeMap::new(),
            factor_flags: BTreeMap::new(),
            action_used: None,
            violation: None,
            wall_time_ms: 0,
        }
    }

    fn with_metric(mut r: ProgramRecord, name: &str, value: f64) -> ProgramRecord {
        r.metrics.insert(name.to_string(), value);
        r
    }

    #[test]
    fn best_so_far_tracks_valid_max() {
        let mut a = Archive::new("t", TaskId::Hadamard);
        a.append_record(record(0, 0.3, true)).unwrap();
        assert_eq!(a.best_so_far(), 0.3);
        a.append_record(record(1, 0.5, true)).unwrap();
        a.append_record(record(2, 0.4, true)).unwrap();
        assert_eq!(a.best_so_far(), 0.5);
        a.append_record(record(3, 0.6, false)).unwrap();
        assert_eq!(a.best_so_far(), 0.5);
        assert_eq!(a.records()[3].score, 0.0);
    }

    #[test]
    fn generation_mismatch_rejected() {
        let mut a = Archive::new("t", TaskId::Hadamard);
        let err = a.append_record(record(5, 0.3, true)).unwrap_err();
        assert!(matches!(err, Error::GenerationMismatch { expected: 0, got: 5 }));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut a = Archive::new("t", TaskId::Hadamard);
        a.append_record(record(0, 0.3, true)).unwrap();
        let mut dup = record(0, 0.1, true);
        dup.generation = 1;
        assert!(matches!(a.append_record(dup), Err(Error::DuplicateId(0))));
    }

    #[test]
    fn rank_by_metric_directions() {
        let mut a = Archive::new("t", TaskId::Autocorr);
        a.append_record(with_metric(record(0, 0.1, true), "entropy", 5.2))
            .unwrap();
        a.append_record(with_metric(record(1, 0.1, true), "entropy", 3.1))
            .unwrap();
        a.append_record(with_metric(record(2, 0.1, true), "entropy", 4.0))
            .unwrap();
        assert_eq!(a.rank_by_metric("entropy", -1).unwrap(), vec![1, 2, 0]);
        assert_eq!(a.rank_by_metric("entropy", 1).unwrap(), vec![0, 2, 1]);
        assert!(matches!(
            a.rank_by_metric("nope", 1),
            Err(Error::UnknownMetric(_))
        ));
    }

    #[test]
    fn rank_tie_breaks_on_score() {
        let mut a = Archive::new("t", TaskId::Autocorr);
        a.append_record(with_metric(record(0, 0.2, true), "entropy", 1.0))
            .unwrap();
        a.append_record(with_metric(record(1, 0.4, true), "entropy", 1.0))
            .unwrap();
        assert_eq!(a.rank_by_metric("entropy", 1).unwrap(), vec![1, 0]);
    }

    #[test]
    fn sample_parent_single_and_empty() {
        let mut a = Archive::new("t", TaskId::Hadamard);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(a.sample_parent(&mut rng), Err(Error::EmptyArchive)));
        a.append_record(record(0, 0.3, false)).unwrap();
        assert!(matches!(a.sample_parent(&mut rng), Err(Error::EmptyArchive)));
        a.append_record(record(1, 0.3, true)).unwrap();
        assert_eq!(a.sample_parent(&mut rng).unwrap().id, 1);
    }

    #[test]
    fn sample_parent_rank_weights() {
        let mut a = Archive::new("t", TaskId::Hadamard);
        a.append_record(record(0, 0.9, true)).unwrap();
        a.append_record(record(1, 0.1, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = [0usize; 2];
        for _ in 0..30_000 {
            hits[a.sample_parent(&mut rng).unwrap().id as usize] += 1;
        }
        // Expected 2/3 vs 1/3.
        let frac = hits[0] as f64 / 30_000.0;
        assert!((frac - 2.0 / 3.0).abs() < 0.02, "frac={frac}");
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        let mut a = Archive::new("run-1", TaskId::CirclePacking);
        a.append_record(record(0, 0.25, true)).unwrap();
        a.append_record(record(1, 0.5, true)).unwrap();
        a.append_record(record(2, 0.0, false)).unwrap();
        a.save_snapshot(&path).unwrap();
        let b = Archive::load_snapshot(&path).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(a.best_so_far(), b.best_so_far());
        assert_eq!(b.run_id, "run-1");
    }

    #[test]
    fn jsonl_truncated_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut a = Archive::new("r", TaskId::Hadamard).with_log(&path).unwrap();
        a.append_record(record(0, 0.1, true)).unwrap();
        a.append_record(record(1, 0.2, true)).unwrap();
        drop(a);
        let mut content = std::fs::read_to_string(&path).unwrap();
        content.push_str("{\"id\":2,\"trunc");
        std::fs::write(&path, content).unwrap();
        let err = Archive::load_jsonl(&path, "r", TaskId::Hadamard).unwrap_err();
        match err {
            Error::ParseLine { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn empty_jsonl_is_empty_archive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let a = Archive::load_jsonl(&path, "r", TaskId::Hadamard).unwrap();
        assert!(a.is_empty());
        assert_eq!(a.best_so_far(), 0.0);
    }
}
