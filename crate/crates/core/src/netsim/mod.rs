//! Slotted simulator of eventually-consistent controllers.
//!
//! Time advances in 1 s ticks; a slot is `s` ticks. Each tick runs three
//! phases in order:
//!
//! 1. environment dynamics (link flips, flow arrivals),
//! 2. delivery of synchronization messages scheduled for this tick,
//! 3. application logic on each controller's current view.
//!
//! Every ordered pair `(i, j)` gets a mandatory message at the first tick of
//! the slot plus `x_ij` extra messages at offsets `⌈s·m/(x_ij+1)⌉`,
//! `m = 1..x_ij`. A message from `i` to `j` copies the current ground truth of
//! `i`'s domain into `j`'s view.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, entity, tick)`,
//! so the environment evolves identically whatever policy is applied.

mod loadbalance;
mod routing;
pub mod synthetic;
mod topology;
pub mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::Oracle;
use crate::syncmodel::{pair_count, SyncPolicy};

pub use loadbalance::{LoadBalanceScenario, WorkLaw};
pub use routing::{route_packet, PacketOutcome, RoutingMetric, RoutingScenario};
pub use synthetic::{synthetic_oracle, NoiseLaw, SyntheticKind, SyntheticOracle};
pub use topology::{Topology, TopologyDoc};

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Links = 1,
    Packets = 2,
    Flows = 3,
    Noise = 4,
}

/// Independent generator for one entity kind at one counter value.
pub(crate) fn stream_rng(seed: u64, stream: Stream, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) | (counter & ((1 << 56) - 1)));
    rng
}

/// Tick offsets within a slot at which pair messages are delivered.
pub fn sync_offsets(slot_seconds: u32, extra: u32) -> Vec<u32> {
    let s = u64::from(slot_seconds);
    let parts = u64::from(extra) + 1;
    std::iter::once(0)
        .chain((1..=u64::from(extra)).map(|m| (s * m).div_ceil(parts).min(s - 1) as u32))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Routing(RoutingScenario),
    LoadBalance(LoadBalanceScenario),
}

impl Scenario {
    pub fn controllers(&self) -> usize {
        match self {
            Scenario::Routing(r) => r.topology.controllers(),
            Scenario::LoadBalance(_) => 2,
        }
    }

    pub fn slot_seconds(&self) -> u32 {
        match self {
            Scenario::Routing(r) => r.slot_seconds,
            Scenario::LoadBalance(l) => l.slot_seconds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Routing(r) => r.validate(),
            Scenario::LoadBalance(l) => l.validate(),
        }
    }

    /// Fresh world: all links up, servers idle, every view synced.
    pub fn initial_state(&self, seed: u64) -> WorldState {
        let c = self.controllers();
        let edges = match self {
            Scenario::Routing(r) => r.topology.edge_count(),
            Scenario::LoadBalance(_) => 0,
        };
        let link_up = vec![true; edges];
        WorldState {
            seed,
            clock: 0,
            views: vec![
                RemoteView {
                    links: link_up.clone(),
                    load: 0.0,
                    synced_at: 0,
                };
                pair_count(c)
            ],
            link_up,
            loads: vec![0.0; c],
        }
    }
}

/// What controller `j` last heard about controller `i`'s domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemoteView {
    /// Snapshot of every link; only links owned by `i` are read.
    pub links: Vec<bool>,
    pub load: f64,
    /// Global tick of the last delivered message.
    pub synced_at: u64,
}

/// Ground truth plus every controller's remote views.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    seed: u64,
    /// Ticks simulated so far.
    clock: u64,
    link_up: Vec<bool>,
    loads: Vec<f64>,
    /// Indexed by ordered pair `(i, j)`: `j`'s view of `i`.
    views: Vec<RemoteView>,
}

impl WorldState {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn link_up(&self) -> &[bool] {
        &self.link_up
    }

    pub fn server_loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn view(&self, pair: usize) -> &RemoteView {
        &self.views[pair]
    }

    /// Overwrite every link's true state and resynchronize all views.
    pub fn force_links(&mut self, up: bool) {
        self.link_up.iter_mut().for_each(|l| *l = up);
        for v in &mut self.views {
            v.links.clone_from(&self.link_up);
        }
    }

    fn deliver(&mut self, pair: usize, source: usize) {
        let tick = self.clock;
        let view = &mut self.views[pair];
        view.links.clone_from(&self.link_up);
        view.load = self.loads[source];
        view.synced_at = tick;
    }
}

/// Per-slot measurements behind `Ψ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotMetrics {
    Routing { packets: u64, delivered: u64, optimal: u64 },
    LoadBalance { throughput: [f64; 2] },
}

impl SlotMetrics {
    pub fn components(&self) -> String {
        match self {
            SlotMetrics::Routing {
                packets,
                delivered,
                optimal,
            } => format!("packets={packets};delivered={delivered};optimal={optimal}"),
            SlotMetrics::LoadBalance { throughput } => {
                format!("throughput_0={};throughput_1={}", throughput[0], throughput[1])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotOutcome {
    pub psi: f64,
    pub metrics: SlotMetrics,
}

/// State visible to a tick observer after the application phase.
pub struct TickView<'a> {
    pub slot: u64,
    pub offset: u32,
    /// Global tick index (0-based).
    pub tick: u64,
    pub state: &'a WorldState,
}

/// Simulate slot `t` (1-based) under `policy`.
pub fn run_slot(
    scenario: &Scenario,
    state: &WorldState,
    policy: &SyncPolicy,
    slot: u64,
) -> Result<(SlotOutcome, WorldState)> {
    run_slot_observed(scenario, state, policy, slot, |_| {})
}

/// [`run_slot`] with a callback after every tick.
pub fn run_slot_observed(
    scenario: &Scenario,
    state: &WorldState,
    policy: &SyncPolicy,
    slot: u64,
    mut observe: impl FnMut(&TickView<'_>),
) -> Result<(SlotOutcome, WorldState)> {
    let c = scenario.controllers();
    if policy.controllers() != c {
        return Err(Error::invalid(format!(
            "policy covers {} controllers, scenario has {c}",
            policy.controllers()
        )));
    }
    let s = scenario.slot_seconds();
    if slot == 0 || state.clock != (slot - 1) * u64::from(s) {
        return Err(Error::ContractViolation(format!(
            "slot {slot} requested but world is at tick {}",
            state.clock
        )));
    }
    let schedule = message_schedule(c, s, policy);
    let mut next = state.clone();
    let mut tally = Tally::default();
    for offset in 0..s {
        match scenario {
            Scenario::Routing(r) => r.dynamics(&mut next),
            Scenario::LoadBalance(l) => l.dynamics(&mut next, offset, &mut tally),
        }
        for &(pair, source) in &schedule[offset as usize] {
            next.deliver(pair, source);
        }
        match scenario {
            Scenario::Routing(r) => r.route_tick(&next, &mut tally),
            Scenario::LoadBalance(l) => l.assign_tick(&mut next, &mut tally),
        }
        observe(&TickView {
            slot,
            offset,
            tick: next.clock,
            state: &next,
        });
        next.clock += 1;
    }
    let outcome = match scenario {
        Scenario::Routing(r) => r.outcome(&tally),
        Scenario::LoadBalance(_) => LoadBalanceScenario::outcome(&next),
    };
    Ok((outcome, next))
}

#[derive(Default)]
pub(crate) struct Tally {
    packets: u64,
    delivered: u64,
    optimal: u64,
    /// Flows waiting for assignment this tick, per switch.
    pending: [Vec<f64>; 2],
}

/// `(pair, source controller)` deliveries for each tick offset.
fn message_schedule(controllers: usize, slot_seconds: u32, policy: &SyncPolicy) -> Vec<Vec<(usize, usize)>> {
    let mut schedule = vec![Vec::new(); slot_seconds as usize];
    for pair in 0..pair_count(controllers) {
        let (source, _) = crate::syncmodel::pair_at(controllers, pair);
        let mut offsets = sync_offsets(slot_seconds, policy.rate_at(pair));
        offsets.dedup();
        for o in offsets {
            schedule[o as usize].push((pair, source));
        }
    }
    schedule
}

/// Stateful oracle over one simulated world.
#[derive(Debug, Clone)]
pub struct SimOracle {
    scenario: Scenario,
    state: WorldState,
    next_slot: u64,
    history: Vec<(u64, u64, SlotOutcome)>,
}

impl SimOracle {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let state = scenario.initial_state(seed);
        Ok(Self {
            scenario,
            state,
            next_slot: 1,
            history: Vec::new(),
        })
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// `(slot, policy fingerprint, outcome)` for every slot run so far.
    pub fn history(&self) -> &[(u64, u64, SlotOutcome)] {
        &self.history
    }
}

impl Oracle for SimOracle {
    fn try_out(&mut self, policy: &SyncPolicy, slot: u64) -> Result<f64> {
        if slot != self.next_slot {
            return Err(Error::ContractViolation(format!(
                "expected slot {}, got {slot}",
                self.next_slot
            )));
        }
        let (outcome, next) = run_slot(&self.scenario, &self.state, policy, slot)?;
        self.state = next;
        self.next_slot += 1;
        self.history.push((slot, policy.fingerprint(), outcome));
        Ok(outcome.psi)
    }
}

pub fn as_oracle(scenario: &Scenario, seed: u64) -> Result<SimOracle> {
    SimOracle::new(scenario.clone(), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub mean: f64,
    /// Sample standard deviation of the per-seed means.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub per_seed: Vec<f64>,
}

impl PolicyEvaluation {
    pub fn from_samples(per_seed: Vec<f64>) -> Self {
        let (mean, stddev) = mean_and_stddev(&per_seed);
        let min = per_seed.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = per_seed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean,
            stddev,
            min,
            max,
            per_seed,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.stddev / (self.per_seed.len() as f64).sqrt()
    }
}

pub fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Run `policy` for `slots` slots in one fresh world per seed.
pub fn evaluate_policy(
    scenario: &Scenario,
    policy: &SyncPolicy,
    slots: u64,
    seeds: &[u64],
) -> Result<PolicyEvaluation> {
    if slots == 0 {
        return Err(Error::invalid("evaluation needs at least one slot"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("evaluation needs at least one seed"));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let mut oracle = as_oracle(scenario, seed)?;
            let mut total = 0.0;
            for t in 1..=slots {
                total += oracle.try_out(policy, t)?;
            }
            Ok(total / slots as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PolicyEvaluation::from_samples(per_seed))
}
