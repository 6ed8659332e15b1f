//! Synthetic performance oracles with a known mean, for checking the
//! learner's approximation guarantees against brute-forced optima.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::learn::{GroundTruth, Oracle};
use crate::syncmodel::{pair_count, SyncPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `Σ_p c_p · x_p`.
    Modular { weights: Vec<f64> },
    /// `Σ_p a_p · (1 − β_p^{x_p})`, geometric diminishing returns.
    Coverage { scale: Vec<f64>, decay: Vec<f64> },
}

/// Per-slot multiplicative noise on the observed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseLaw {
    None,
    Scale { factor: f64 },
    Uniform { low: f64, high: f64 },
}

impl NoiseLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::None => 1.0,
            NoiseLaw::Scale { factor: k } => k,
            NoiseLaw::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseLaw::None => true,
            NoiseLaw::Scale { factor: k } => k.is_finite() && k >= 0.0,
            NoiseLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && 0.0 <= low && low <= high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad noise law {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    controllers: usize,
    kind: SyntheticKind,
    noise: NoiseLaw,
    seed: u64,
    next_slot: u64,
}

impl SyntheticOracle {
    pub fn new(kind: SyntheticKind, noise: NoiseLaw, seed: u64) -> Result<Self> {
        noise.validate()?;
        let n = match &kind {
            SyntheticKind::Modular { weights } => {
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::invalid("modular weights must be finite and >= 0"));
                }
                weights.len()
            }
            SyntheticKind::Coverage { scale, decay } => {
                if scale.len() != decay.len() {
                    return Err(Error::invalid("coverage scale and decay lengths differ"));
                }
                if scale.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return Err(Error::invalid("coverage scales must be finite and >= 0"));
                }
                if decay.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                    return Err(Error::invalid("coverage decays must lie in (0, 1)"));
                }
                scale.len()
            }
        };
        let controllers = (2..=n + 1)
            .find(|&c| pair_count(c) == n)
            .ok_or_else(|| Error::invalid(format!("{n} coefficients is not C(C-1) for any C")))?;
        Ok(Self {
            controllers,
            kind,
            noise,
            seed,
            next_slot: 1,
        })
    }

    pub fn modular(weights: Vec<f64>, noise: NoiseLaw, seed: u64) -> Result<Self> {
        Self::new(SyntheticKind::Modular { weights }, noise, seed)
    }

    pub fn coverage(scale: Vec<f64>, decay: Vec<f64>, noise: NoiseLaw, seed: u64) -> Result<Self> {
        Self::new(SyntheticKind::Coverage { scale, decay }, noise, seed)
    }

    pub fn controllers(&self) -> usize {
        self.controllers
    }

    pub fn noise(&self) -> NoiseLaw {
        self.noise
    }

    /// Noise factor applied in `slot`.
    pub fn noise_at(&self, slot: u64) -> f64 {
        match self.noise {
            NoiseLaw::None => 1.0,
            NoiseLaw::Scale { factor: k } => k,
            NoiseLaw::Uniform { low, high } => {
                let u: f64 = stream_rng(self.seed, Stream::Noise, slot).random();
                low + (high - low) * u
            }
        }
    }

    /// Best policy with `Σ x ≤ budget`, `x ≤ max_rate`, by enumeration.
    pub fn brute_force_optimum(&self, budget: u64, max_rate: u32) -> Result<(SyncPolicy, f64)> {
        let n = pair_count(self.controllers);
        let combos = (u128::from(max_rate) + 1).saturating_pow(n as u32);
        if combos > crate::mck::DEFAULT_BRUTE_FORCE_CAP {
            return Err(Error::InstanceTooLarge {
                size: combos,
                cap: crate::mck::DEFAULT_BRUTE_FORCE_CAP,
            });
        }
        let mut x = vec![0u32; n];
        let mut best = (
            SyncPolicy::zeros(self.controllers),
            self.true_value(&SyncPolicy::zeros(self.controllers)),
        );
        loop {
            let total: u64 = x.iter().map(|&v| u64::from(v)).sum();
            if total <= budget {
                let p = SyncPolicy::from_rates(self.controllers, x.clone())?;
                let v = self.true_value(&p);
                if v > best.1 {
                    best = (p, v);
                }
            }
            let mut k = 0;
            loop {
                if k == n {
                    return Ok(best);
                }
                x[k] += 1;
                if x[k] <= max_rate {
                    break;
                }
                x[k] = 0;
                k += 1;
            }
        }
    }
}

impl GroundTruth for SyntheticOracle {
    fn true_value(&self, policy: &SyncPolicy) -> f64 {
        let x = policy.rates();
        match &self.kind {
            SyntheticKind::Modular { weights } => x.iter().zip(weights).map(|(&r, c)| f64::from(r) * c).sum(),
            SyntheticKind::Coverage { scale, decay } => x
                .iter()
                .zip(scale.iter().zip(decay))
                .map(|(&r, (a, b))| a * (1.0 - b.powi(r as i32)))
                .sum(),
        }
    }

    fn slot_value(&self, policy: &SyncPolicy, slot: u64) -> f64 {
        self.noise_at(slot) * self.true_value(policy)
    }
}

impl Oracle for SyntheticOracle {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> Result<f64> {
        if slot != self.next_slot {
            return Err(Error::ContractViolation(format!(
                "expected slot {}, got {slot}",
                self.next_slot
            )));
        }
        if policy.controllers() != self.controllers {
            return Err(Error::invalid("policy does not match oracle dimensions"));
        }
        self.next_slot += 1;
        Ok(self.slot_value(policy, slot))
    }
}

pub fn synthetic_oracle(kind: SyntheticKind, noise: NoiseLaw, seed: u64) -> Result<SyntheticOracle> {
    SyntheticOracle::new(kind, noise, seed)
}
