//! Bandit planner over (metric, direction) actions.
//!
//! The schedule alternates fixed-length blocks: random actions for one block,
//! then the action with the best mean reward for the next. Rewards are the
//! thresholded improvements (y_c - tau * v_t)_+ so children that come close
//! to the best-so-far still earn signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlannerAction {
    pub metric: String,
    pub direction: i8,
}

impl PlannerAction {
    pub fn new(metric: impl Into<String>, direction: i8) -> Self {
        PlannerAction {
            metric: metric.into(),
            direction,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub pulls: u64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerState {
    actions: Vec<PlannerAction>,
    stats: Vec<ActionStats>,
    pub tau: f64,
    pub block_len: u64,
    pub step: u64,
}

impl PlannerState {
    /// Build the action set {(m,+1), (m,-1)} over the given metric names.
    pub fn new(metrics: &[&str], tau: f64, block_len: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) || tau == 0.0 {
            return Err(Error::Config(format!("tau {tau} must be in (0,1)")));
        }
        if block_len == 0 {
            return Err(Error::Config("block_len must be >= 1".into()));
        }
        let mut actions = Vec::with_capacity(metrics.len() * 2);
        for m in metrics {
            actions.push(PlannerAction::new(*m, 1));
            actions.push(PlannerAction::new(*m, -1));
        }
        let stats = vec![ActionStats::default(); actions.len()];
        Ok(PlannerState {
            actions,
            stats,
            tau,
            block_len,
            step: 0,
        })
    }

    pub fn actions(&self) -> &[PlannerAction] {
        &self.actions
    }

    pub fn stats_for(&self, action: &PlannerAction) -> Option<&ActionStats> {
        self.actions
            .iter()
            .position(|a| a == action)
            .map(|i| &self.stats[i])
    }

    /// Phase the *next* select_action call will run in.
    pub fn current_phase(&self) -> Phase {
        if (self.step / self.block_len) % 2 == 0 {
            Phase::Explore
        } else {
            Phase::Exploit
        }
    }

    /// Argmax of mean reward among pulled actions; ties break lexicographically
    /// by (metric, direction). None when nothing has been pulled.
    pub fn best_action(&self) -> Option<&PlannerAction> {
        self.actions
            .iter()
            .zip(&self.stats)
            .filter(|(_, s)| s.pulls > 0)
            .min_by(|(a, sa), (b, sb)| {
                let ma = sa.total_reward / sa.pulls as f64;
                let mb = sb.total_reward / sb.pulls as f64;
                mb.partial_cmp(&ma)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| (&a.metric, a.direction).cmp(&(&b.metric, b.direction)))
            })
            .map(|(a, _)| a)
    }

    pub fn select_action<R: Rng>(&mut self, rng: &mut R) -> Result<PlannerAction> {
        if self.actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let phase = self.current_phase();
        let chosen = match phase {
            Phase::Explore => self.actions[rng.gen_range(0..self.actions.len())].clone(),
            Phase::Exploit => match self.best_action() {
                Some(a) => a.clone(),
                None => self.actions[rng.gen_range(0..self.actions.len())].clone(),
            },
        };
        self.step += 1;
        Ok(chosen)
    }

    /// Apply the thresholded-improvement reward for a finished child and
    /// return it.
    pub fn update_reward(&mut self, action: &PlannerAction, y_c: f64, v_t: f64) -> Result<f64> {
        let idx = self
            .actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::UnknownAction {
                metric: action.metric.clone(),
                direction: action.direction,
            })?;
        let reward = (y_c - self.tau * v_t).max(0.0);
        self.stats[idx].pulls += 1;
        self.stats[idx].total_reward += reward;
        Ok(reward)
    }

    pub fn total_pulls(&self) -> u64 {
        self.stats.iter().map(|s| s.pulls).sum()
    }

    /// Serialized planner stats in the snapshot layout.
    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tau": self.tau,
            "block_len": self.block_len,
            "stats": self.actions.iter().zip(&self.stats).map(|(a, s)| {
                serde_json::json!({
                    "metric": a.metric,
                    "direction": a.direction,
                    "pulls": s.pulls,
                    "total_reward": s.total_reward,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// First k ids of rank_by_metric for the action, excluding the current
/// parent. May return fewer than k on small archives.
pub fn select_inspirations(
    archive: &Archive,
    action: &PlannerAction,
    k: usize,
    parent_id: Option<u64>,
) -> Result<Vec<u64>> {
    let ranked = archive.rank_by_metric(&action.metric, action.direction)?;
    Ok(ranked
        .into_iter()
        .filter(|id| Some(*id) != parent_id)
        .take(k)
        .collect())
}
