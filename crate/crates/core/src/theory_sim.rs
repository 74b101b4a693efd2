//! Monte-Carlo experiments for the two sample-complexity results: the
//! structured-vs-black-box efficiency gap and the source/target
//! non-identifiability barrier.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};

/// Linear environment: program values are inner products with an unknown
/// weight vector; the first d features are the standard basis.
#[derive(Debug, Clone)]
pub struct LinearInstance {
    pub d: usize,
    pub features: Vec<Vec<f64>>,
    pub w_star: Vec<f64>,
    pub sigma: f64,
}

impl LinearInstance {
    /// Random instance: basis features first, then K-d random unit-norm
    /// features; w_star uniform in [-1,1]^d.
    pub fn random(d: usize, k: usize, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        if k < d {
            return Err(Error::Config(format!("K={k} must be >= d={d}")));
        }
        let mut features = Vec::with_capacity(k);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            features.push(e);
        }
        for _ in d..k {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            } else {
                v[0] = 1.0;
            }
            features.push(v);
        }
        let w_star: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        Ok(LinearInstance {
            d,
            features,
            w_star,
            sigma,
        })
    }

    pub fn k(&self) -> usize {
        self.features.len()
    }

    pub fn true_value(&self, p: usize) -> f64 {
        self.features[p]
            .iter()
            .zip(&self.w_star)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn best_value(&self) -> f64 {
        (0..self.k())
            .map(|p| self.true_value(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Black-box environment: an arbitrary vector of per-program means.
#[derive(Debug, Clone)]
pub struct BlackBoxInstance {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

impl BlackBoxInstance {
    pub fn best_value(&self) -> f64 {
        self.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PolicyResult {
    pub recommendation: usize,
    pub simple_regret: f64,
    pub evaluations_used: u64,
}

fn noise(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    }
}

/// Estimate-then-commit: pull each basis program n times, average into an
/// estimate of the weight vector, commit to the program with the largest
/// estimated value.
pub fn run_etc_linear(
    instance: &LinearInstance,
    n_per_basis: u64,
    rng: &mut impl Rng,
) -> PolicyResult {
    let mut w_hat = vec![0.0; instance.d];
    for (i, w) in w_hat.iter_mut().enumerate() {
        let mut acc = 0.0;
        for _ in 0..n_per_basis {
            acc += instance.true_value(i) + noise(instance.sigma, rng);
        }
        *w = acc / n_per_basis as f64;
    }
    let recommendation = (0..instance.k())
        .max_by(|&a, &b| {
            let va: f64 = instance.features[a].iter().zip(&w_hat).map(|(x, w)| x * w).sum();
            let vb: f64 = instance.features[b].iter().zip(&w_hat).map(|(x, w)| x * w).sum();
            va.partial_cmp(&vb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    PolicyResult {
        recommendation,
        simple_regret: instance.best_value() - instance.true_value(recommendation),
        evaluations_used: n_per_basis * instance.d as u64,
    }
}

/// Structure-free baseline: split the budget as evenly as possible across
/// arms (remainder to the lowest indices), commit to the empirical argmax.
pub fn run_blackbox_uniform(
    instance: &BlackBoxInstance,
    budget: u64,
    rng: &mut impl Rng,
) -> Result<PolicyResult> {
    let k = instance.mu.len() as u64;
    if budget < k {
        return Err(Error::Config(format!("budget {budget} < K {k}")));
    }
    let base = budget / k;
    let remainder = (budget % k) as usize;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, &mu) in instance.mu.iter().enumerate() {
        let pulls = base + if i < remainder { 1 } else { 0 };
        let mut acc = 0.0;
        for _ in 0..pulls {
            acc += mu + noise(instance.sigma, rng);
        }
        let mean = acc / pulls as f64;
        if mean > best.0 {
            best = (mean, i);
        }
    }
    Ok(PolicyResult {
        recommendation: best.1,
        simple_regret: instance.best_value() - instance.mu[best.1],
        evaluations_used: budget,
    })
}

/// Per-pull allocation of a uniform split, exposed for tests.
pub fn uniform_split(budget: u64, k: u64) -> Vec<u64> {
    let base = budget / k;
    let remainder = (budget % k) as usize;
    (0..k as usize)
        .map(|i| base + if i < remainder { 1 } else { 0 })
        .collect()
}

/// The hard best-arm family: base instance has arm 1 at 0 and all others at
/// -2eps; alternative i flips arm i to +2eps. `alt_index` is 1-based per the
/// arm numbering; 0 selects the base instance.
pub fn hard_instance(k: usize, epsilon: f64, sigma: f64, alt_index: usize) -> Result<BlackBoxInstance> {
    if k < 2 {
        return Err(Error::Config("hard family needs K >= 2".into()));
    }
    if alt_index != 0 && !(2..=k).contains(&alt_index) {
        return Err(Error::Config(format!(
            "alt_index {alt_index} out of range 2..={k}"
        )));
    }
    let mut mu = vec![-2.0 * epsilon; k];
    mu[0] = 0.0;
    if alt_index != 0 {
        mu[alt_index - 1] = 2.0 * epsilon;
    }
    Ok(BlackBoxInstance { mu, sigma })
}

/// Per-pull KL divergence between the base and alternative hard instances at
/// the flipped arm (Gaussian, equal variance).
pub fn hard_family_kl_per_pull(epsilon: f64, sigma: f64) -> f64 {
    (4.0 * epsilon).powi(2) / (2.0 * sigma * sigma)
}

/// The theorem's per-basis pull count: n = ceil(2 (sigma/eps)^2 ln(2K/delta)).
pub fn etc_pulls_per_basis(sigma: f64, epsilon: f64, k: usize, delta: f64) -> u64 {
    (2.0 * (sigma / epsilon).powi(2) * (2.0 * k as f64 / delta).ln()).ceil() as u64
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub success_rate: f64,
    pub mean_regret: f64,
    pub trials: u64,
}

/// Run `trials` independent ETC trials on fresh random linear instances and
/// report the rate of simple regret <= threshold. Trial i uses seed
/// base_seed + i, so results are reproducible at any parallelism.
pub fn etc_success_rate(
    d: usize,
    k: usize,
    sigma: f64,
    n_per_basis: u64,
    regret_threshold: f64,
    trials: u64,
    base_seed: u64,
) -> Result<TrialSummary> {
    let mut successes = 0u64;
    let mut regret_sum = 0.0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed + t);
        let instance = LinearInstance::random(d, k, sigma, &mut rng)?;
        let result = run_etc_linear(&instance, n_per_basis, &mut rng);
        if result.simple_regret <= regret_threshold {
            successes += 1;
        }
        regret_sum += result.simple_regret;
    }
    Ok(TrialSummary {
        success_rate: successes as f64 / trials as f64,
        mean_regret: regret_sum / trials as f64,
        trials,
    })
}

/// Run `trials` uniform-allocation trials on the given hard instance and
/// report the rate of simple regret <= threshold.
pub fn blackbox_success_rate(
    instance: &BlackBoxInstance,
    budget: u64,
    regret_threshold: f64,
    trials: u64,
    base_seed: u64,
) -> Result<TrialSummary> {
    let mut successes = 0u64;
    let mut regret_sum = 0.0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed + t);
        let result = run_blackbox_uniform(instance, budget, &mut rng)?;
        if result.simple_regret <= regret_threshold {
            successes += 1;
        }
        regret_sum += result.simple_regret;
    }
    Ok(TrialSummary {
        success_rate: successes as f64 / trials as f64,
        mean_regret: regret_sum / trials as f64,
        trials,
    })
}

/// Smallest uniform-allocation budget (by doubling then bisection) at which
/// the hard base instance is solved with the given success rate.
pub fn blackbox_required_budget(
    k: usize,
    epsilon: f64,
    sigma: f64,
    target_rate: f64,
    regret_threshold: f64,
    trials: u64,
    base_seed: u64,
) -> Result<u64> {
    let instance = hard_instance(k, epsilon, sigma, 0)?;
    let rate_at = |budget: u64| -> Result<f64> {
        Ok(blackbox_success_rate(&instance, budget, regret_threshold, trials, base_seed)?
            .success_rate)
    };
    let mut hi = k as u64;
    while rate_at(hi)? < target_rate {
        hi *= 2;
        if hi > 100_000_000 {
            return Err(Error::Config("required budget search diverged".into()));
        }
    }
    let mut lo = hi / 2;
    while hi - lo > hi / 20 + 1 {
        let mid = (lo + hi) / 2;
        if rate_at(mid)? >= target_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

// ── Non-identifiability barrier ──────────────────────────────────────────

/// Two-hypothesis, two-program barrier environment. Source observations are
/// N(0, sigma^2) for every program under both hypotheses; target values are
/// flipped between the hypotheses with margin delta.
#[derive(Debug, Clone)]
pub struct BarrierEnv {
    pub delta: f64,
    pub sigma: f64,
}

impl BarrierEnv {
    pub fn source_sample(&self, _program: usize, rng: &mut impl Rng) -> f64 {
        noise(self.sigma.max(1e-12), rng)
    }

    /// Target value of `program` under hypothesis `theta` (0 or 1).
    pub fn target_value(&self, program: usize, theta: usize) -> f64 {
        // Program 0 is optimal under theta 0, program 1 under theta 1.
        if program == theta {
            self.delta
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierPolicy {
    /// Commits to a uniformly random program.
    Uniform,
    /// Commits to the program with the higher empirical source mean.
    Greedy,
    /// Maintains a two-point posterior over the hypotheses with the
    /// finite-hypothesis Bayes update and commits to the program with the
    /// highest posterior-expected target value.
    PosteriorGreedy,
}

impl BarrierPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BarrierPolicy::Uniform => "uniform",
            BarrierPolicy::Greedy => "greedy",
            BarrierPolicy::PosteriorGreedy => "posterior_greedy",
        }
    }
}

/// Gaussian likelihood used by the posterior-greedy policy. The source
/// observation model is hypothesis-independent, so both hypotheses share it.
fn source_likelihood(env: &BarrierEnv, y: f64) -> f64 {
    let s = env.sigma.max(1e-12);
    (-y * y / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// One source-only interaction episode: returns the committed program and,
/// for the posterior policy, the posterior trajectory on hypothesis 0.
pub fn barrier_commit(
    env: &BarrierEnv,
    policy: BarrierPolicy,
    budget: u64,
    rng: &mut impl Rng,
) -> (usize, Vec<f64>) {
    let mut sums = [0.0f64; 2];
    let mut counts = [0u64; 2];
    let mut belief = [0.5f64, 0.5f64];
    let mut trajectory = Vec::new();
    for t in 0..budget {
        let program = (t % 2) as usize;
        let y = env.source_sample(program, rng);
        sums[program] += y;
        counts[program] += 1;
        if policy == BarrierPolicy::PosteriorGreedy {
            // Finite-hypothesis Bayes update; the likelihoods coincide by
            // construction, so the belief is a fixed point.
            let l0 = source_likelihood(env, y);
            let l1 = source_likelihood(env, y);
            let z = belief[0] * l0 + belief[1] * l1;
            belief = [belief[0] * l0 / z, belief[1] * l1 / z];
            trajectory.push(belief[0]);
        }
    }
    let commit = match policy {
        BarrierPolicy::Uniform => rng.gen_range(0..2usize),
        BarrierPolicy::Greedy => {
            let mean = |i: usize| {
                if counts[i] == 0 {
                    0.0
                } else {
                    sums[i] / counts[i] as f64
                }
            };
            if mean(0) >= mean(1) {
                0
            } else {
                1
            }
        }
        BarrierPolicy::PosteriorGreedy => {
            // Posterior-expected target value per program.
            let ev = |p: usize| {
                belief[0] * env.target_value(p, 0) + belief[1] * env.target_value(p, 1)
            };
            if ev(0) >= ev(1) {
                0
            } else {
                1
            }
        }
    };
    (commit, trajectory)
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierResult {
    pub policy: &'static str,
    pub mean_regret_theta0: f64,
    pub mean_regret_theta1: f64,
    pub max_mean_regret: f64,
    pub trials: u64,
}

/// Run the barrier experiment: each policy interacts only with the source
/// for `budget` rounds, commits, and is scored against both hypotheses'
/// target environments.
pub fn barrier_experiment(
    delta_margin: f64,
    budget: u64,
    trials: u64,
    policies: &[BarrierPolicy],
    base_seed: u64,
) -> Result<Vec<BarrierResult>> {
    if delta_margin <= 0.0 {
        return Err(Error::Config("delta_margin must be > 0".into()));
    }
    let env = BarrierEnv {
        delta: delta_margin,
        sigma: 1.0,
    };
    let mut results = Vec::new();
    for &policy in policies {
        let mut regret = [0.0f64; 2];
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed + t);
            let (commit, _) = barrier_commit(&env, policy, budget, &mut rng);
            for theta in 0..2 {
                let best = (0..2)
                    .map(|p| env.target_value(p, theta))
                    .fold(f64::NEG_INFINITY, f64::max);
                regret[theta] += best - env.target_value(commit, theta);
            }
        }
        let mean0 = regret[0] / trials as f64;
        let mean1 = regret[1] / trials as f64;
        results.push(BarrierResult {
            policy: policy.name(),
            mean_regret_theta0: mean0,
            mean_regret_theta1: mean1,
            max_mean_regret: mean0.max(mean1),
            trials,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_etc_recovers_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let instance = LinearInstance::random(3, 10, 0.0, &mut rng).unwrap();
        let result = run_etc_linear(&instance, 1, &mut rng);
        assert_eq!(result.simple_regret, 0.0);
        assert_eq!(result.evaluations_used, 3);
    }

    #[test]
    fn hand_instance_inner_products() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let instance = LinearInstance {
            d: 2,
            features: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]],
            w_star: vec![1.0, 0.0],
            sigma: 0.0,
        };
        assert_eq!(instance.true_value(0), 1.0);
        assert_eq!(instance.true_value(1), 0.0);
        assert!((instance.true_value(2) - s).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let result = run_etc_linear(&instance, 1, &mut rng);
        assert_eq!(result.recommendation, 0);
    }

    #[test]
    fn noiseless_uniform_recovers() {
        let instance = BlackBoxInstance {
            mu: vec![0.1, 0.9, 0.3],
            sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let result = run_blackbox_uniform(&instance, 9, &mut rng).unwrap();
        assert_eq!(result.recommendation, 1);
        assert_eq!(result.simple_regret, 0.0);
    }

    #[test]
    fn uniform_split_remainder_to_low_indices() {
        assert_eq!(uniform_split(10, 3), vec![4, 3, 3]);
    }

    #[test]
    fn budget_below_k_rejected() {
        let instance = BlackBoxInstance { mu: vec![0.0; 5], sigma: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(run_blackbox_uniform(&instance, 4, &mut rng).is_err());
    }

    #[test]
    fn hard_instance_shapes() {
        let base = hard_instance(3, 0.1, 1.0, 0).unwrap();
        assert_eq!(base.mu, vec![0.0, -0.2, -0.2]);
        let alt = hard_instance(3, 0.1, 1.0, 2).unwrap();
        assert_eq!(alt.mu, vec![0.0, 0.2, -0.2]);
        assert!(hard_instance(3, 0.1, 1.0, 4).is_err());
        assert!(hard_instance(3, 0.1, 1.0, 1).is_err());
    }

    #[test]
    fn hard_family_kl_value() {
        assert!((hard_family_kl_per_pull(0.1, 1.0) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn posterior_stays_at_half() {
        let env = BarrierEnv { delta: 0.4, sigma: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, trajectory) = barrier_commit(&env, BarrierPolicy::PosteriorGreedy, 50, &mut rng);
        assert_eq!(trajectory.len(), 50);
        for b in trajectory {
            assert_eq!(b, 0.5);
        }
    }

    #[test]
    fn barrier_bound_holds_for_all_policies() {
        let results = barrier_experiment(
            0.4,
            20,
            400,
            &[
                BarrierPolicy::Uniform,
                BarrierPolicy::Greedy,
                BarrierPolicy::PosteriorGreedy,
            ],
            11,
        )
        .unwrap();
        for r in &results {
            // Delta/2 minus Monte-Carlo slack.
            assert!(
                r.max_mean_regret >= 0.2 - 3.0 * (0.25f64 / 400.0).sqrt() * 0.4,
                "{}: {}",
                r.policy,
                r.max_mean_regret
            );
            // Regret accounting: the two means sum to Delta times the trials
            // split, so their sum is exactly Delta.
            assert!((r.mean_regret_theta0 + r.mean_regret_theta1 - 0.4).abs() < 1e-12);
        }
    }
}
