use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, SlotMetrics, SlotOutcome, Stream, Tally, Topology, WorldState};
use crate::error::{Error, Result};
use crate::syncmodel::pair_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMetric {
    /// Fraction of packets whose path had no failed link.
    #[default]
    Delivered,
    /// Fraction delivered along a path as short as the true shortest path.
    Optimal,
}

/// Shortest-hop routing where each packet's source controller routes on its
/// own live domain plus stale views of the others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingScenario {
    pub topology: Topology,
    /// Per-tick probability that each link flips state.
    pub flip_prob: f64,
    pub packets_per_tick: u32,
    pub slot_seconds: u32,
    pub metric: RoutingMetric,
}

impl RoutingScenario {
    pub fn new(topology: Topology, slot_seconds: u32, metric: RoutingMetric) -> Self {
        Self {
            topology,
            flip_prob: 0.05,
            packets_per_tick: 4,
            slot_seconds,
            metric,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid(format!(
                "flip probability {} outside [0, 1]",
                self.flip_prob
            )));
        }
        if self.packets_per_tick == 0 {
            return Err(Error::invalid("packets per tick must be >= 1"));
        }
        if self.slot_seconds == 0 {
            return Err(Error::invalid("slot length must be >= 1 tick"));
        }
        Ok(())
    }

    pub(crate) fn dynamics(&self, state: &mut WorldState) {
        if self.flip_prob == 0.0 {
            return;
        }
        let mut rng = stream_rng(state.seed, Stream::Links, state.clock);
        for link in &mut state.link_up {
            if rng.random::<f64>() < self.flip_prob {
                *link = !*link;
            }
        }
    }

    /// Links as seen by `controller`: its own links live, the rest from the
    /// owning controller's last message.
    pub fn composite_view(&self, state: &WorldState, controller: usize) -> Vec<bool> {
        let topo = &self.topology;
        let c = topo.controllers();
        (0..topo.edge_count())
            .map(|e| {
                let owner = topo.edge_owner(e);
                if owner == controller {
                    state.link_up[e]
                } else {
                    state.views[pair_index(c, owner, controller)].links[e]
                }
            })
            .collect()
    }

    pub(crate) fn route_tick(&self, state: &WorldState, tally: &mut Tally) {
        let topo = &self.topology;
        let n = topo.node_count();
        let mut views: Vec<Option<Vec<bool>>> = vec![None; topo.controllers()];
        let mut rng = stream_rng(state.seed, Stream::Packets, state.clock);
        for _ in 0..self.packets_per_tick {
            let src = rng.random_range(0..n);
            let mut dst = rng.random_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            let ctrl = topo.domain_of(src);
            let view = views[ctrl].get_or_insert_with(|| self.composite_view(state, ctrl));
            let out = route_packet(topo, view, &state.link_up, src, dst);
            tally.packets += 1;
            tally.delivered += u64::from(out.delivered);
            tally.optimal += u64::from(out.optimal);
        }
    }

    pub(crate) fn outcome(&self, tally: &Tally) -> SlotOutcome {
        let hits = match self.metric {
            RoutingMetric::Delivered => tally.delivered,
            RoutingMetric::Optimal => tally.optimal,
        };
        SlotOutcome {
            psi: hits as f64 / tally.packets as f64,
            metrics: SlotMetrics::Routing {
                packets: tally.packets,
                delivered: tally.delivered,
                optimal: tally.optimal,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketOutcome {
    pub delivered: bool,
    pub optimal: bool,
}

/// Route one packet on `view` and judge it against `truth`.
pub fn route_packet(topo: &Topology, view: &[bool], truth: &[bool], src: usize, dst: usize) -> PacketOutcome {
    let delivered_len = topo
        .shortest_path(view, src, dst)
        .filter(|path| path.iter().all(|&e| truth[e]))
        .map(|path| path.len());
    match delivered_len {
        None => PacketOutcome {
            delivered: false,
            optimal: false,
        },
        Some(len) => PacketOutcome {
            delivered: true,
            optimal: topo.hop_distance(truth, src, dst) == Some(len),
        },
    }
}
