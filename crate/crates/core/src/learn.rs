//! Learning synchronization rates against an unknown performance function.
//!
//! The learner only sees one noisy performance value per slot for whichever
//! policy it tries out. [`stochastic_greedy`] builds its policy one unit at a
//! time: each iteration samples `σ` pairs that can still grow, tries each
//! augmented policy for `τ` consecutive slots, and commits the pair with the
//! largest estimated gain. Training takes `τ + σ·τ·B` slots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syncmodel::{pair_at, pair_count, SyncPolicy, SystemModel};

/// Source of per-slot performance observations.
///
/// Each call advances the environment by one slot. Implementations may
/// reject slot indices that are not strictly sequential.
pub trait Oracle {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> Result<f64>;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> Result<f64> {
        (**self).try_out(policy, slot)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> Result<f64> {
        (**self).try_out(policy, slot)
    }
}

/// Oracles whose mean performance is known, used to measure how faithfully
/// observed gains track true gains.
pub trait GroundTruth {
    /// Mean performance `Ψ̂(x)`.
    fn true_value(&self, policy: &SyncPolicy) -> f64;

    /// The value the oracle would have reported for `policy` in `slot`, under
    /// that slot's noise realisation.
    fn slot_value(&self, policy: &SyncPolicy, slot: u64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LearnerConfig {
    pub controllers: usize,
    /// Candidate pairs sampled per iteration.
    pub sigma: usize,
    /// Slots per try-out.
    pub tau: u64,
    /// Unit increments to place (pair costs are normalized to one).
    pub budget: u64,
    pub max_rate: u32,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let pairs = pair_count(self.controllers);
        if self.controllers < 2 {
            return Err(Error::invalid("learner needs at least 2 controllers"));
        }
        if self.sigma == 0 || self.sigma > pairs {
            return Err(Error::invalid(format!("sigma {} must lie in [1, {pairs}]", self.sigma)));
        }
        if self.tau == 0 {
            return Err(Error::invalid("tau must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("budget must be >= 1"));
        }
        if self.max_rate == 0 {
            return Err(Error::invalid("max rate must be >= 1"));
        }
        let capacity = pairs as u64 * u64::from(self.max_rate);
        if self.budget > capacity {
            return Err(Error::BudgetExhaustsRates {
                budget: self.budget,
                capacity,
            });
        }
        Ok(())
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.controllers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TryOut {
    pub slot: u64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub pair: usize,
    pub source: usize,
    pub target: usize,
    /// Mean of the candidate's try-outs, `Ψ̂(x̂′)`.
    pub estimate: f64,
    /// `D(x̂, x̂′) = Ψ̂(x̂′) − Ψ̂(x̂)`.
    pub gain: f64,
    pub tries: Vec<TryOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iteration {
    /// 1-based.
    pub index: u64,
    /// `Ψ̂(x̂)` the candidates were compared against.
    pub baseline: f64,
    pub candidates: Vec<Candidate>,
    /// Position of the committed candidate in `candidates`.
    pub winner: usize,
    /// How many fewer than `σ` eligible pairs were available.
    pub shortfall: usize,
}

impl Iteration {
    pub fn winner(&self) -> &Candidate {
        &self.candidates[self.winner]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerRun {
    pub config: LearnerConfig,
    pub final_policy: SyncPolicy,
    /// `Ψ̂(0)` from the first `τ` slots.
    pub baseline_estimate: f64,
    pub baseline_tries: Vec<TryOut>,
    pub iterations: Vec<Iteration>,
    pub slots_used: u64,
}

impl LearnerRun {
    /// Policies the run held before each iteration, plus the final one.
    pub fn policy_path(&self) -> Vec<SyncPolicy> {
        let mut x = SyncPolicy::zeros(self.config.controllers);
        let mut path = vec![x.clone()];
        for it in &self.iterations {
            x.increment(it.winner().pair);
            path.push(x.clone());
        }
        path
    }

    /// Every observation in slot order: `(slot, policy tried, psi)`.
    pub fn slot_trace(&self) -> Vec<(u64, SyncPolicy, f64)> {
        let path = self.policy_path();
        let mut out: Vec<_> = self
            .baseline_tries
            .iter()
            .map(|t| (t.slot, path[0].clone(), t.psi))
            .collect();
        for (it, base) in self.iterations.iter().zip(&path) {
            for c in &it.candidates {
                let mut x = base.clone();
                x.increment(c.pair);
                out.extend(c.tries.iter().map(|t| (t.slot, x.clone(), t.psi)));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Total training slots, `τ + σ·τ·B`.
pub fn training_time(sigma: u64, tau: u64, budget: u64) -> u64 {
    tau + sigma * tau * budget
}

#[derive(Clone, Copy)]
enum Sampling {
    Random,
    FullScan,
}

/// Run the stochastic greedy learner against `oracle`.
pub fn stochastic_greedy<O: Oracle + ?Sized>(config: &LearnerConfig, oracle: &mut O) -> Result<LearnerRun> {
    run_greedy(config, oracle, Sampling::Random)
}

/// Greedy that evaluates every eligible pair each iteration, in pair order.
/// `config.sigma` is ignored.
pub fn full_greedy<O: Oracle + ?Sized>(config: &LearnerConfig, oracle: &mut O) -> Result<LearnerRun> {
    let config = LearnerConfig {
        sigma: config.pair_count().max(1),
        ..*config
    };
    run_greedy(&config, oracle, Sampling::FullScan)
}

fn run_greedy<O: Oracle + ?Sized>(config: &LearnerConfig, oracle: &mut O, sampling: Sampling) -> Result<LearnerRun> {
    config.validate()?;
    let c = config.controllers;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut slot = 0u64;
    let mut try_policy = |x: &SyncPolicy, slot: &mut u64| -> Result<Vec<TryOut>> {
        (0..config.tau)
            .map(|_| {
                *slot += 1;
                oracle.try_out(x, *slot).map(|psi| TryOut { slot: *slot, psi })
            })
            .collect()
    };

    let mut x = SyncPolicy::zeros(c);
    let baseline_tries = try_policy(&x, &mut slot)?;
    let baseline_estimate = mean_psi(&baseline_tries);
    let mut current = baseline_estimate;

    let mut iterations = Vec::with_capacity(config.budget as usize);
    for k in 1..=config.budget {
        let eligible: Vec<usize> = (0..pair_count(c)).filter(|&p| x.rate_at(p) < config.max_rate).collect();
        if eligible.is_empty() {
            // unreachable after validate(), kept for hand-built configs
            return Err(Error::BudgetExhaustsRates {
                budget: config.budget,
                capacity: pair_count(c) as u64 * u64::from(config.max_rate),
            });
        }
        let drawn: Vec<usize> = match sampling {
            Sampling::FullScan => eligible.clone(),
            Sampling::Random => {
                let n = config.sigma.min(eligible.len());
                rand::seq::index::sample(&mut rng, eligible.len(), n)
                    .into_iter()
                    .map(|i| eligible[i])
                    .collect()
            }
        };
        let shortfall = config.sigma.saturating_sub(drawn.len());

        let mut candidates = Vec::with_capacity(drawn.len());
        for pair in drawn {
            let mut trial = x.clone();
            trial.increment(pair);
            let tries = try_policy(&trial, &mut slot)?;
            let estimate = mean_psi(&tries);
            let (source, target) = pair_at(c, pair);
            candidates.push(Candidate {
                pair,
                source,
                target,
                estimate,
                gain: estimate - current,
                tries,
            });
        }
        // first maximum in draw order wins
        let winner = candidates.iter().enumerate().fold(
            0,
            |best, (idx, cand)| {
                if cand.gain > candidates[best].gain {
                    idx
                } else {
                    best
                }
            },
        );
        x.increment(candidates[winner].pair);
        let baseline = current;
        current = candidates[winner].estimate;
        iterations.push(Iteration {
            index: k,
            baseline,
            candidates,
            winner,
            shortfall,
        });
    }

    Ok(LearnerRun {
        config: *config,
        final_policy: x,
        baseline_estimate,
        baseline_tries,
        iterations,
        slots_used: slot,
    })
}

fn mean_psi(tries: &[TryOut]) -> f64 {
    tries.iter().map(|t| t.psi).sum::<f64>() / tries.len() as f64
}

/// Baseline that gives every pair the same rate, `min(R, ⌊B / Σ b_ij⌋)`.
pub fn homogeneous_policy(model: &SystemModel) -> SyncPolicy {
    let per_unit: u64 = model.pair_costs().iter().sum();
    let rate = (model.budget() / per_unit).min(u64::from(model.max_rate()));
    SyncPolicy::uniform(model.controllers(), rate as u32)
}

/// Homogeneous baseline under unit pair costs.
pub fn homogeneous_unit_policy(controllers: usize, budget: u64, max_rate: u32) -> SyncPolicy {
    let rate = (budget / pair_count(controllers) as u64).min(u64::from(max_rate));
    SyncPolicy::uniform(controllers, rate as u32)
}

/// How the success probability of the high-probability bound is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityForm {
    /// `1 − e^{−γBτ/2}`.
    #[default]
    Statement,
    /// `1 − e^{−γμBτ/2}`, the form the Chernoff argument yields.
    WithMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub epsilon: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl BoundParams {
    pub fn new(controllers: usize, budget: u64, max_rate: u32, sigma: usize, mu: f64, gamma: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::invalid(format!("mu {mu} must lie in (0, 1]")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma {gamma} must lie in (0, 1)")));
        }
        Ok(Self {
            epsilon: sampling_epsilon(controllers, budget, max_rate, sigma),
            mu,
            gamma,
        })
    }
}

/// `ε = e^{−σB/(C(C−1)R)}`.
pub fn sampling_epsilon(controllers: usize, budget: u64, max_rate: u32, sigma: usize) -> f64 {
    let ground = pair_count(controllers) as f64 * f64::from(max_rate);
    (-(sigma as f64) * budget as f64 / ground).exp()
}

/// Expected approximation factor `1 − e^{−(1−ε)μ}`.
pub fn expected_bound(controllers: usize, budget: u64, max_rate: u32, sigma: usize, mu: f64) -> f64 {
    let eps = sampling_epsilon(controllers, budget, max_rate, sigma);
    1.0 - (-(1.0 - eps) * mu).exp()
}

/// High-probability factor `1 − e^{−(1−ε)(1−γ)μ}` and the probability with
/// which it holds.
#[allow(clippy::too_many_arguments)]
pub fn high_prob_bound(
    controllers: usize,
    budget: u64,
    max_rate: u32,
    sigma: usize,
    tau: u64,
    mu: f64,
    gamma: f64,
    form: ProbabilityForm,
) -> (f64, f64) {
    let eps = sampling_epsilon(controllers, budget, max_rate, sigma);
    let factor = 1.0 - (-(1.0 - eps) * (1.0 - gamma) * mu).exp();
    let exponent = gamma * budget as f64 * tau as f64 / 2.0;
    let probability = match form {
        ProbabilityForm::Statement => 1.0 - (-exponent).exp(),
        ProbabilityForm::WithMu => 1.0 - (-exponent * mu).exp(),
    };
    (factor, probability)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuEstimate {
    /// Mean of per-try-out ratios clamped to `[0, 1]`.
    pub mu: f64,
    pub unclamped: f64,
    pub samples: usize,
}

/// Empirical ratio of observed to true marginal gain over the committed
/// try-outs of a run.
///
/// For the winner of iteration `k` and each of its try-out slots `t`, the
/// observed gain is `Ψ_t(x̂′) − Ψ_t(x̂)` (the baseline evaluated under the
/// same slot's noise) and the true gain is `Ψ̂(x̂′) − Ψ̂(x̂)`. Try-outs with a
/// non-positive true gain are skipped.
pub fn measure_mu<T: GroundTruth + ?Sized>(run: &LearnerRun, truth: &T) -> Result<MuEstimate> {
    let path = run.policy_path();
    let mut clamped = 0.0;
    let mut raw = 0.0;
    let mut n = 0usize;
    for (it, before) in run.iterations.iter().zip(&path) {
        let win = it.winner();
        let mut after = before.clone();
        after.increment(win.pair);
        let true_gain = truth.true_value(&after) - truth.true_value(before);
        if true_gain <= 0.0 {
            continue;
        }
        for t in &win.tries {
            let observed = t.psi - truth.slot_value(before, t.slot);
            let ratio = observed / true_gain;
            raw += ratio;
            clamped += ratio.clamp(0.0, 1.0);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMu);
    }
    Ok(MuEstimate {
        mu: clamped / n as f64,
        unclamped: raw / n as f64,
        samples: n,
    })
}
