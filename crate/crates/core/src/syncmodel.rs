//! Analytic synchronization model: policies, resource budgets and the
//! consistency level of a set of eventually-consistent controllers.
//!
//! Ordered controller pairs `(i, j)`, `i != j`, are stored densely in
//! row-major order: all pairs with source `0` first, then source `1`, and so
//! on, skipping the diagonal. Every algorithm in the crate enumerates pairs in
//! this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of ordered pairs among `controllers` controllers.
pub fn pair_count(controllers: usize) -> usize {
    controllers * controllers.saturating_sub(1)
}

/// Dense index of the ordered pair `(i, j)`.
pub fn pair_index(controllers: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < controllers && j < controllers);
    i * (controllers - 1) + if j < i { j } else { j - 1 }
}

/// Inverse of [`pair_index`].
pub fn pair_at(controllers: usize, index: usize) -> (usize, usize) {
    let i = index / (controllers - 1);
    let r = index % (controllers - 1);
    (i, if r < i { r } else { r + 1 })
}

/// Iterate over all ordered pairs in storage order.
pub fn pairs(controllers: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..pair_count(controllers)).map(move |k| pair_at(controllers, k))
}

/// Everything the consistency objective needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemModel {
    controllers: usize,
    change_rates: Vec<f64>,
    slot_seconds: f64,
    pair_costs: Vec<u64>,
    budget: u64,
    max_rate: u32,
}

impl SystemModel {
    /// `pair_costs` is indexed by [`pair_index`] and must have one entry per
    /// ordered pair.
    pub fn new(
        change_rates: Vec<f64>,
        slot_seconds: f64,
        pair_costs: Vec<u64>,
        budget: u64,
        max_rate: u32,
    ) -> Result<Self> {
        let controllers = change_rates.len();
        if controllers < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 controllers, got {controllers}"
            )));
        }
        if let Some(bad) = change_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::invalid(format!("change rate {bad} must be finite and >= 0")));
        }
        if !(slot_seconds.is_finite() && slot_seconds > 0.0) {
            return Err(Error::invalid(format!("slot length {slot_seconds} must be > 0")));
        }
        if pair_costs.len() != pair_count(controllers) {
            return Err(Error::invalid(format!(
                "expected {} pair costs, got {}",
                pair_count(controllers),
                pair_costs.len()
            )));
        }
        if pair_costs.contains(&0) {
            return Err(Error::invalid("pair costs must be >= 1"));
        }
        if max_rate == 0 {
            return Err(Error::invalid("max rate must be >= 1"));
        }
        Ok(Self {
            controllers,
            change_rates,
            slot_seconds,
            pair_costs,
            budget,
            max_rate,
        })
    }

    /// Model where every ordered pair costs `cost`.
    pub fn with_uniform_cost(
        change_rates: Vec<f64>,
        slot_seconds: f64,
        cost: u64,
        budget: u64,
        max_rate: u32,
    ) -> Result<Self> {
        let n = pair_count(change_rates.len());
        Self::new(change_rates, slot_seconds, vec![cost; n], budget, max_rate)
    }

    pub fn controllers(&self) -> usize {
        self.controllers
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.controllers)
    }

    pub fn change_rates(&self) -> &[f64] {
        &self.change_rates
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_seconds
    }

    pub fn pair_costs(&self) -> &[u64] {
        &self.pair_costs
    }

    pub fn cost(&self, i: usize, j: usize) -> u64 {
        self.pair_costs[pair_index(self.controllers, i, j)]
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn max_rate(&self) -> u32 {
        self.max_rate
    }

    /// Same model with a different budget.
    pub fn with_budget(&self, budget: u64) -> Self {
        Self { budget, ..self.clone() }
    }

    /// `λ_i · s` for the source controller of every pair.
    fn exposure(&self, i: usize) -> f64 {
        self.change_rates[i] * self.slot_seconds
    }

    /// Consistency level with no extra messages: `Σ_i Σ_{j≠i} e^{-λ_i s}`.
    pub fn baseline_omega(&self) -> f64 {
        pairs(self.controllers).map(|(i, _)| (-self.exposure(i)).exp()).sum()
    }

    pub(crate) fn check_policy(&self, policy: &SyncPolicy) -> Result<()> {
        if policy.controllers != self.controllers {
            return Err(Error::invalid(format!(
                "policy covers {} controllers, model has {}",
                policy.controllers, self.controllers
            )));
        }
        if let Some(k) = policy.rates.iter().position(|&x| x > self.max_rate) {
            let (i, j) = pair_at(self.controllers, k);
            return Err(Error::invalid(format!(
                "rate {} on pair ({i},{j}) exceeds max rate {}",
                policy.rates[k], self.max_rate
            )));
        }
        Ok(())
    }
}

/// Extra synchronization messages per slot for each ordered pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyncPolicy {
    controllers: usize,
    rates: Vec<u32>,
}

impl SyncPolicy {
    pub fn zeros(controllers: usize) -> Self {
        Self::uniform(controllers, 0)
    }

    pub fn uniform(controllers: usize, rate: u32) -> Self {
        Self {
            controllers,
            rates: vec![rate; pair_count(controllers)],
        }
    }

    /// Build from a dense rate vector in pair storage order.
    pub fn from_rates(controllers: usize, rates: Vec<u32>) -> Result<Self> {
        if controllers < 2 {
            return Err(Error::invalid("need at least 2 controllers"));
        }
        if rates.len() != pair_count(controllers) {
            return Err(Error::invalid(format!(
                "expected {} pair rates, got {}",
                pair_count(controllers),
                rates.len()
            )));
        }
        Ok(Self { controllers, rates })
    }

    pub fn controllers(&self) -> usize {
        self.controllers
    }

    pub fn rates(&self) -> &[u32] {
        &self.rates
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.rates[pair_index(self.controllers, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, rate: u32) {
        let k = pair_index(self.controllers, i, j);
        self.rates[k] = rate;
    }

    pub fn rate_at(&self, pair: usize) -> u32 {
        self.rates[pair]
    }

    pub fn increment(&mut self, pair: usize) {
        self.rates[pair] += 1;
    }

    /// `Σ x_ij`, the policy cost under unit pair costs.
    pub fn total_rate(&self) -> u64 {
        self.rates.iter().map(|&x| u64::from(x)).sum()
    }

    /// Stable 64-bit fingerprint (FNV-1a over the rate vector), used to tag
    /// trace rows.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in (self.controllers as u64)
            .to_le_bytes()
            .into_iter()
            .chain(self.rates.iter().flat_map(|r| r.to_le_bytes()))
        {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub omega: f64,
    /// Probability that each ordered pair is consistent at slot end, in pair
    /// storage order.
    pub per_pair: Vec<f64>,
}

/// Probability that `j`'s view of `i` is still current at slot end when `i`
/// changes state at Poisson rate `rate` and `extra` messages are spread
/// uniformly over a slot of `slot_seconds`.
pub fn pair_consistency_prob(rate: f64, slot_seconds: f64, extra: u32) -> Result<f64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::invalid(format!("change rate {rate} must be >= 0")));
    }
    if !(slot_seconds.is_finite() && slot_seconds > 0.0) {
        return Err(Error::invalid(format!("slot length {slot_seconds} must be > 0")));
    }
    Ok(consistency_term(rate * slot_seconds, extra))
}

#[inline]
pub(crate) fn consistency_term(exposure: f64, extra: u32) -> f64 {
    (-exposure / (f64::from(extra) + 1.0)).exp()
}

/// Expected number of consistent ordered pairs under `policy`.
pub fn consistency_level(model: &SystemModel, policy: &SyncPolicy) -> Result<ConsistencyReport> {
    model.check_policy(policy)?;
    let per_pair: Vec<f64> = pairs(model.controllers)
        .zip(&policy.rates)
        .map(|((i, _), &x)| consistency_term(model.exposure(i), x))
        .collect();
    Ok(ConsistencyReport {
        omega: per_pair.iter().sum(),
        per_pair,
    })
}

/// Resource units consumed by `policy`: `Σ x_ij b_ij`.
pub fn policy_cost(model: &SystemModel, policy: &SyncPolicy) -> Result<u64> {
    model.check_policy(policy)?;
    Ok(policy
        .rates
        .iter()
        .zip(&model.pair_costs)
        .map(|(&x, &b)| u64::from(x) * b)
        .sum())
}

pub fn is_feasible(model: &SystemModel, policy: &SyncPolicy) -> Result<bool> {
    Ok(policy_cost(model, policy)? <= model.budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn two_controller(exposure: f64) -> SystemModel {
        SystemModel::with_uniform_cost(vec![exposure, exposure], 1.0, 1, 10, 4).unwrap()
    }

    #[test]
    fn pair_indexing_round_trips() {
        for c in 2..7 {
            let all: Vec<_> = pairs(c).collect();
            assert_eq!(all.len(), c * (c - 1));
            for (k, &(i, j)) in all.iter().enumerate() {
                assert_ne!(i, j);
                assert_eq!(pair_index(c, i, j), k);
            }
            // row-major
            assert!(all.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn pair_prob_examples() {
        assert_eq!(pair_consistency_prob(0.0, 30.0, 0).unwrap(), 1.0);
        assert!((pair_consistency_prob(LN_2, 1.0, 0).unwrap() - 0.5).abs() < 1e-12);
        assert!((pair_consistency_prob(LN_2, 1.0, 1).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((pair_consistency_prob(1.0, 1.0, 0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn pair_prob_rejects_bad_inputs() {
        assert!(matches!(
            pair_consistency_prob(-0.1, 1.0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(pair_consistency_prob(0.1, 0.0, 0).is_err());
        assert!(pair_consistency_prob(0.1, -3.0, 0).is_err());
        assert!(pair_consistency_prob(f64::NAN, 1.0, 0).is_err());
    }

    #[test]
    fn consistency_level_examples() {
        let m = SystemModel::with_uniform_cost(vec![0.0, 0.0], 30.0, 1, 5, 3).unwrap();
        let p = SyncPolicy::from_rates(2, vec![3, 1]).unwrap();
        assert_eq!(consistency_level(&m, &p).unwrap().omega, 2.0);

        let m = two_controller(LN_2);
        let r = consistency_level(&m, &SyncPolicy::zeros(2)).unwrap();
        assert!((r.omega - 1.0).abs() < 1e-12);

        let mut p = SyncPolicy::zeros(2);
        p.set(0, 1, 1);
        let r = consistency_level(&m, &p).unwrap();
        assert!((r.omega - (0.5f64.sqrt() + 0.5)).abs() < 1e-12);
        assert!((r.omega - 1.20711).abs() < 1e-5);
    }

    #[test]
    fn consistency_level_rejects_mismatched_policy() {
        let m = two_controller(1.0);
        assert!(consistency_level(&m, &SyncPolicy::zeros(3)).is_err());
        assert!(consistency_level(&m, &SyncPolicy::uniform(2, 5)).is_err());
        assert!(SyncPolicy::from_rates(2, vec![1, 2, 3]).is_err());
    }

    #[test]
    fn policy_cost_examples() {
        let m = SystemModel::with_uniform_cost(vec![0.1; 3], 1.0, 1, 100, 5).unwrap();
        assert_eq!(policy_cost(&m, &SyncPolicy::zeros(3)).unwrap(), 0);
        assert_eq!(policy_cost(&m, &SyncPolicy::uniform(3, 3)).unwrap(), 18);

        let m = SystemModel::new(vec![0.1, 0.1], 1.0, vec![2, 5], 6, 3).unwrap();
        let p = SyncPolicy::uniform(2, 1);
        assert_eq!(policy_cost(&m, &p).unwrap(), 7);
        assert!(!is_feasible(&m, &p).unwrap());
    }

    #[test]
    fn large_exposure_gains_are_not_concave() {
        // a = 10: the second extra message is worth more than the first.
        let g0 = pair_consistency_prob(10.0, 1.0, 1).unwrap() - pair_consistency_prob(10.0, 1.0, 0).unwrap();
        let g1 = pair_consistency_prob(10.0, 1.0, 2).unwrap() - pair_consistency_prob(10.0, 1.0, 1).unwrap();
        assert!(g1 > g0);
    }

    #[test]
    fn model_validation() {
        assert!(SystemModel::with_uniform_cost(vec![0.1], 1.0, 1, 1, 1).is_err());
        assert!(SystemModel::with_uniform_cost(vec![0.1, -0.1], 1.0, 1, 1, 1).is_err());
        assert!(SystemModel::with_uniform_cost(vec![0.1, 0.1], 0.0, 1, 1, 1).is_err());
        assert!(SystemModel::with_uniform_cost(vec![0.1, 0.1], 1.0, 0, 1, 1).is_err());
        assert!(SystemModel::with_uniform_cost(vec![0.1, 0.1], 1.0, 1, 1, 0).is_err());
        assert!(SystemModel::new(vec![0.1, 0.1], 1.0, vec![1], 1, 1).is_err());
    }

    fn model_and_policy() -> impl Strategy<Value = (SystemModel, SyncPolicy)> {
        (2usize..5, 1u32..6).prop_flat_map(|(c, r)| {
            (
                prop::collection::vec(0.0f64..2.0, c),
                0.5f64..40.0,
                prop::collection::vec(0..=r, pair_count(c)),
            )
                .prop_map(move |(rates, s, x)| {
                    let m = SystemModel::with_uniform_cost(rates, s, 1, 0, r).unwrap();
                    (m, SyncPolicy::from_rates(c, x).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn omega_is_sum_and_bounded((m, p) in model_and_policy()) {
            let r = consistency_level(&m, &p).unwrap();
            let sum: f64 = r.per_pair.iter().sum();
            prop_assert!((r.omega - sum).abs() <= 1e-12);
            let n = m.pair_count() as f64;
            let max_exposure = m.change_rates().iter().cloned().fold(0.0, f64::max) * m.slot_seconds();
            prop_assert!(r.omega <= n + 1e-12);
            prop_assert!(r.omega >= n * (-max_exposure).exp() - 1e-12);
            prop_assert!(r.per_pair.iter().all(|&q| q > 0.0 && q <= 1.0));
        }

        #[test]
        fn omega_monotone_and_separable((m, p) in model_and_policy(), pick in any::<prop::sample::Index>()) {
            let k = pick.index(m.pair_count());
            if p.rate_at(k) < m.max_rate() {
                let mut q = p.clone();
                q.increment(k);
                let a = consistency_level(&m, &p).unwrap();
                let b = consistency_level(&m, &q).unwrap();
                prop_assert!(b.omega >= a.omega);
                for idx in 0..m.pair_count() {
                    if idx != k {
                        prop_assert_eq!(a.per_pair[idx], b.per_pair[idx]);
                    }
                }
            }
        }

        // e^{-a/(l+1)} is concave in l only where a <= 2(l+1); with a <= 2 that
        // covers every l >= 0.
        #[test]
        fn per_coordinate_diminishing_returns(exposure in 0.001f64..=2.0, s in 0.5f64..60.0, r in 2u32..20) {
            let rate = exposure / s;
            let gains: Vec<f64> = (0..r)
                .map(|l| pair_consistency_prob(rate, s, l + 1).unwrap() - pair_consistency_prob(rate, s, l).unwrap())
                .collect();
            prop_assert!(gains.iter().all(|&g| g > 0.0));
            prop_assert!(gains.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
    }
}
