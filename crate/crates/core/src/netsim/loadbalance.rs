use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, SlotMetrics, SlotOutcome, Stream, Tally, WorldState};
use crate::error::{Error, Result};
use crate::syncmodel::pair_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum WorkLaw {
    Constant { amount: f64 },
    Exponential { mean: f64 },
}

impl Default for WorkLaw {
    fn default() -> Self {
        WorkLaw::Constant { amount: 1.0 }
    }
}

impl WorkLaw {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            WorkLaw::Constant { amount } => amount,
            WorkLaw::Exponential { mean } => -mean * (1.0 - rng.random::<f64>()).ln(),
        }
    }
}

/// Two controllers, each owning one switch and one server. Every new flow
/// goes to whichever server its controller believes is less loaded; ties stay
/// local.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadBalanceScenario {
    /// Flow arrival rate per switch, flows per second (at most 1).
    pub arrival_rates: [f64; 2],
    pub work: WorkLaw,
    pub slot_seconds: u32,
    /// Random stream feeding each switch's arrivals. `[0, 1]` gives
    /// independent switches, `[0, 0]` identical arrival patterns.
    pub arrival_streams: [u64; 2],
}

impl LoadBalanceScenario {
    pub fn new(arrival_rates: [f64; 2], slot_seconds: u32) -> Self {
        Self {
            arrival_rates,
            work: WorkLaw::default(),
            slot_seconds,
            arrival_streams: [0, 1],
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.arrival_rates.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::invalid(format!(
                "arrival rates {:?} must lie in (0, 1] flows per tick",
                self.arrival_rates
            )));
        }
        let ok = match self.work {
            WorkLaw::Constant { amount } => amount > 0.0 && amount.is_finite(),
            WorkLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
        };
        if !ok {
            return Err(Error::invalid("work amounts must be positive"));
        }
        if self.slot_seconds == 0 {
            return Err(Error::invalid("slot length must be >= 1 tick"));
        }
        if self.arrival_streams.iter().any(|&s| s > 1) {
            return Err(Error::invalid("arrival streams must be 0 or 1"));
        }
        Ok(())
    }

    pub(crate) fn dynamics(&self, state: &mut WorldState, offset: u32, tally: &mut Tally) {
        if offset == 0 {
            state.loads.iter_mut().for_each(|l| *l = 0.0);
        }
        for switch in 0..2 {
            let stream = self.arrival_streams[switch];
            let mut rng = stream_rng(state.seed, Stream::Flows, state.clock * 2 + stream);
            if rng.random::<f64>() < self.arrival_rates[switch] {
                tally.pending[switch].push(self.work.sample(&mut rng));
            }
        }
    }

    pub(crate) fn assign_tick(&self, state: &mut WorldState, tally: &mut Tally) {
        // both controllers decide on the same snapshot
        let targets: [usize; 2] = std::array::from_fn(|own| {
            let other = 1 - own;
            let seen_other = state.views[pair_index(2, other, own)].load;
            if state.loads[own] <= seen_other {
                own
            } else {
                other
            }
        });
        for (switch, &target) in targets.iter().enumerate() {
            for work in tally.pending[switch].drain(..) {
                state.loads[target] += work;
            }
        }
    }

    pub(crate) fn outcome(state: &WorldState) -> SlotOutcome {
        let throughput = [state.loads[0], state.loads[1]];
        SlotOutcome {
            psi: -rmse(throughput),
            metrics: SlotMetrics::LoadBalance { throughput },
        }
    }
}

/// Root-mean-square deviation of the two throughputs from their mean.
pub(crate) fn rmse(t: [f64; 2]) -> f64 {
    let m = 0.5 * (t[0] + t[1]);
    (((t[0] - m).powi(2) + (t[1] - m).powi(2)) / 2.0).sqrt()
}
