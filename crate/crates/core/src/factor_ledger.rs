//! The procedure-level causal scratchpad: factor registry, difference-in-means
//! treatment effect estimates, surprise detection, and abduction bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::ProgramRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorOrigin {
    LlmProposed,
    Abduced,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorStatus {
    Active,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureFactor {
    pub name: String,
    pub description: String,
    pub origin: FactorOrigin,
    pub status: FactorStatus,
    pub created_at_generation: u64,
}

/// Difference of mean scores between factor-present and factor-absent
/// records over an estimation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub window_end: u64,
    pub ate: f64,
    pub n_present: u64,
    pub n_absent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurpriseKind {
    SignInverse,
    MagnitudeShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseEvent {
    pub id: u64,
    pub factor: String,
    pub prev: EffectEstimate,
    pub curr: EffectEstimate,
    pub kind: SurpriseKind,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub proposed_factors: Vec<String>,
    pub triggering_events: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorProposal {
    pub name: String,
    pub description: String,
}

/// Outcome of an ATE computation: a usable estimate or a signal that one of
/// the two groups is too small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AteOutcome {
    Estimate(EffectEstimate),
    InsufficientContrast { n_present: u64, n_absent: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorLedger {
    pub factors: Vec<ProcedureFactor>,
    pub estimates: BTreeMap<String, EffectEstimate>,
    pub surprises: Vec<SurpriseEvent>,
    pub hypotheses: Vec<Hypothesis>,
    pub max_active: usize,
}

impl FactorLedger {
    pub fn new(max_active: usize) -> Self {
        FactorLedger {
            factors: Vec::new(),
            estimates: BTreeMap::new(),
            surprises: Vec::new(),
            hypotheses: Vec::new(),
            max_active,
        }
    }

    pub fn active_factors(&self) -> impl Iterator<Item = &ProcedureFactor> {
        self.factors
            .iter()
            .filter(|f| f.status == FactorStatus::Active)
    }

    pub fn active_names(&self) -> Vec<String> {
        self.active_factors().map(|f| f.name.clone()).collect()
    }

    /// Register proposals: case-insensitive duplicates are rejected, and
    /// whenever the active set exceeds the cap, the active factor with the
    /// smallest |ATE| (other than the one just added) is retired.
    pub fn register_factors(
        &mut self,
        proposals: &[FactorProposal],
        origin: FactorOrigin,
        generation: u64,
    ) -> Result<Vec<String>> {
        let mut accepted = Vec::new();
        for p in proposals {
            if p.name.trim().is_empty() || p.description.trim().is_empty() {
                return Err(Error::Factor("empty factor name or description".into()));
            }
            let lower = p.name.to_lowercase();
            if self.factors.iter().any(|f| f.name.to_lowercase() == lower) {
                continue; // duplicate
            }
            self.factors.push(ProcedureFactor {
                name: p.name.clone(),
                description: p.description.clone(),
                origin,
                status: FactorStatus::Active,
                created_at_generation: generation,
            });
            accepted.push(p.name.clone());
            self.enforce_cap(&p.name);
        }
        Ok(accepted)
    }

    fn enforce_cap(&mut self, just_added: &str) {
        while self.active_factors().count() > self.max_active {
            let weakest = self
                .factors
                .iter()
                .enumerate()
                .filter(|(_, f)| f.status == FactorStatus::Active && f.name != just_added)
                .min_by(|(_, a), (_, b)| {
                    let ea = self.estimates.get(&a.name).map(|e| e.ate.abs()).unwrap_or(0.0);
                    let eb = self.estimates.get(&b.name).map(|e| e.ate.abs()).unwrap_or(0.0);
                    ea.partial_cmp(&eb)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.name.cmp(&b.name))
                })
                .map(|(i, _)| i);
            match weakest {
                Some(i) => self.factors[i].status = FactorStatus::Retired,
                None => break,
            }
        }
    }

    pub fn record_hypothesis(&mut self, hypothesis: Hypothesis) -> Result<()> {
        if hypothesis.triggering_events.is_empty() {
            return Err(Error::Factor("hypothesis without triggering events".into()));
        }
        self.hypotheses.push(hypothesis);
        Ok(())
    }

    /// Deterministic text block for mutation prompts: top_k factors by |ATE|,
    /// open surprises, active hypotheses. Retired factors never appear.
    pub fn scratchpad_digest(&self, top_k: usize) -> String {
        let mut out = String::from("## Causal scratchpad\n");
        let mut ranked: Vec<&ProcedureFactor> = self.active_factors().collect();
        ranked.sort_by(|a, b| {
            let ea = self.estimates.get(&a.name).map(|e| e.ate.abs()).unwrap_or(0.0);
            let eb = self.estimates.get(&b.name).map(|e| e.ate.abs()).unwrap_or(0.0);
            eb.partial_cmp(&ea)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.name.cmp(&b.name))
        });
        for f in ranked.into_iter().take(top_k) {
            match self.estimates.get(&f.name) {
                Some(e) => out.push_str(&format!(
                    "- {}: ATE {:+.4} (present {}, absent {}) — {}\n",
                    f.name, e.ate, e.n_present, e.n_absent, f.description
                )),
                None => out.push_str(&format!("- {}: no estimate yet — {}\n", f.name, f.description)),
            }
        }
        if !self.surprises.is_empty() {
            out.push_str("### Surprises\n");
            for s in &self.surprises {
                out.push_str(&format!(
                    "- [{}] {}: {:?} prev {:+.4} -> curr {:+.4}\n",
                    s.id, s.factor, s.kind, s.prev.ate, s.curr.ate
                ));
            }
        }
        if !self.hypotheses.is_empty() {
            out.push_str("### Hypotheses\n");
            for h in &self.hypotheses {
                out.push_str(&format!("- {}\n", h.text));
            }
        }
        out
    }
}

/// Difference-in-means ATE over records annotated with the factor. Records
/// whose flags do not mention the factor are ignored.
pub fn estimate_ate(
    records: &[ProgramRecord],
    factor: &str,
    min_support: u64,
    window_end: u64,
) -> AteOutcome {
    let mut present = Vec::new();
    let mut absent = Vec::new();
    for r in records {
        match r.factor_flags.get(factor) {
            Some(true) => present.push(r.score),
            Some(false) => absent.push(r.score),
            None => {}
        }
    }
    let (np, na) = (present.len() as u64, absent.len() as u64);
    if np < min_support || na < min_support {
        return AteOutcome::InsufficientContrast {
            n_present: np,
            n_absent: na,
        };
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    AteOutcome::Estimate(EffectEstimate {
        window_end,
        ate: mean(&present) - mean(&absent),
        n_present: np,
        n_absent: na,
    })
}

/// Compare two estimate snapshots. A sign inversion fires when the sign flips
/// and both magnitudes clear theta_sig; otherwise a magnitude shift fires when
/// |curr - prev| >= theta_shift * sigma_scores.
pub fn detect_surprises(
    prev: &BTreeMap<String, EffectEstimate>,
    curr: &BTreeMap<String, EffectEstimate>,
    theta_sig: f64,
    theta_shift: f64,
    sigma_scores: f64,
    generation: u64,
    next_id: u64,
) -> Vec<SurpriseEvent> {
    let mut events = Vec::new();
    let mut id = next_id;
    for (factor, c) in curr {
        let Some(p) = prev.get(factor) else { continue };
        let sign_flip = p.ate.signum() != c.ate.signum()
            && p.ate.abs() >= theta_sig
            && c.ate.abs() >= theta_sig;
        let kind = if sign_flip {
            Some(SurpriseKind::SignInverse)
        } else if (c.ate - p.ate).abs() >= theta_shift * sigma_scores {
            Some(SurpriseKind::MagnitudeShift)
        } else {
            None
        };
        if let Some(kind) = kind {
            events.push(SurpriseEvent {
                id,
                factor: factor.clone(),
                prev: *p,
                curr: *c,
                kind,
                generation,
            });
            id += 1;
        }
    }
    events
}
