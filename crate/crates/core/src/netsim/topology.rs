use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected data-plane graph partitioned into controller domains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    domain_of: Vec<usize>,
    controllers: usize,
    edge_owner: Vec<usize>,
    /// `(neighbor, edge)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Serialized form used in config documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub domain_of: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = Error;

    fn try_from(doc: TopologyDoc) -> Result<Self> {
        Topology::new(doc.domain_of, doc.edges)
    }
}

impl Topology {
    /// `domain_of[v]` is the controller managing node `v`; controllers are
    /// numbered `0..C` and each must own at least one node.
    pub fn new(domain_of: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let node_count = domain_of.len();
        if node_count < 2 {
            return Err(Error::invalid("topology needs at least 2 nodes"));
        }
        let controllers = domain_of.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; controllers];
        for &d in &domain_of {
            sizes[d] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("controller {empty} has an empty domain")));
        }
        if controllers < 2 {
            return Err(Error::invalid("topology needs at least 2 domains"));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(Error::invalid(format!("edge ({u},{v}) references a missing node")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            let e = (u.min(v), u.max(v));
            if normalized.contains(&e) {
                return Err(Error::invalid(format!("duplicate edge ({u},{v})")));
            }
            normalized.push(e);
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (k, &(u, v)) in normalized.iter().enumerate() {
            adjacency[u].push((v, k));
            adjacency[v].push((u, k));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let edge_owner = normalized
            .iter()
            .map(|&(u, v)| domain_of[u].min(domain_of[v]))
            .collect();
        let topo = Self {
            node_count,
            edges: normalized,
            domain_of,
            controllers,
            edge_owner,
            adjacency,
        };
        if !topo.is_connected(&vec![true; topo.edges.len()]) {
            return Err(Error::invalid("topology is not connected with all links up"));
        }
        Ok(topo)
    }

    /// Random connected topology with contiguous domains of the given sizes.
    ///
    /// Each domain gets a random spanning tree plus extra internal links with
    /// probability `p_intra`; domains are chained to a random earlier domain
    /// and get extra cross links with probability `p_inter`.
    pub fn random(domain_sizes: &[usize], p_intra: f64, p_inter: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain_of: Vec<usize> = domain_sizes
            .iter()
            .enumerate()
            .flat_map(|(d, &n)| std::iter::repeat_n(d, n))
            .collect();
        let n = domain_of.len();
        let members: Vec<Vec<usize>> = (0..domain_sizes.len())
            .map(|d| (0..n).filter(|&v| domain_of[v] == d).collect())
            .collect();
        let mut edges = Vec::new();
        for nodes in &members {
            for (k, &v) in nodes.iter().enumerate().skip(1) {
                let u = nodes[rng.random_range(0..k)];
                edges.push((u, v));
            }
        }
        for d in 1..members.len() {
            let other = rng.random_range(0..d);
            let u = members[other][rng.random_range(0..members[other].len())];
            let v = members[d][rng.random_range(0..members[d].len())];
            edges.push((u, v));
        }
        for u in 0..n {
            for v in u + 1..n {
                if edges.contains(&(u, v)) {
                    continue;
                }
                let p = if domain_of[u] == domain_of[v] { p_intra } else { p_inter };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Self::new(domain_of, edges)
    }

    /// The 16-node, 3-controller network used by the shipped presets.
    pub fn preset16() -> Self {
        Self::random(&[8, 5, 3], 0.3, 0.08, 16).expect("preset topology is valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn controllers(&self) -> usize {
        self.controllers
    }

    pub fn domain_of(&self, node: usize) -> usize {
        self.domain_of[node]
    }

    /// Controller whose view is authoritative for `edge`: the domain of both
    /// endpoints, or the lower-indexed one for boundary links.
    pub fn edge_owner(&self, edge: usize) -> usize {
        self.edge_owner[edge]
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.controllers];
        for &d in &self.domain_of {
            sizes[d] += 1;
        }
        sizes
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            domain_of: self.domain_of.clone(),
            edges: self.edges.clone(),
        }
    }

    fn is_connected(&self, up: &[bool]) -> bool {
        (1..self.node_count).all(|v| self.hop_distance(up, 0, v).is_some())
    }

    /// Breadth-first shortest path over links marked up, as a list of edge
    /// indices. Neighbors are expanded lowest index first, so ties resolve
    /// deterministically.
    pub fn shortest_path(&self, up: &[bool], src: usize, dst: usize) -> Option<Vec<usize>> {
        let parent = self.bfs(up, src, Some(dst));
        if src != dst && parent[dst].is_none() {
            return None;
        }
        let mut path = Vec::new();
        let mut v = dst;
        while v != src {
            let (prev, edge) = parent[v].expect("reached node has a parent");
            path.push(edge);
            v = prev;
        }
        path.reverse();
        Some(path)
    }

    pub fn hop_distance(&self, up: &[bool], src: usize, dst: usize) -> Option<usize> {
        self.shortest_path(up, src, dst).map(|p| p.len())
    }

    fn bfs(&self, up: &[bool], src: usize, stop: Option<usize>) -> Vec<Option<(usize, usize)>> {
        let mut parent = vec![None; self.node_count];
        let mut seen = vec![false; self.node_count];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if Some(u) == stop {
                break;
            }
            for &(v, e) in &self.adjacency[u] {
                if up[e] && !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, e));
                    queue.push_back(v);
                }
            }
        }
        parent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shape() {
        let t = Topology::preset16();
        assert_eq!(t.node_count(), 16);
        assert_eq!(t.controllers(), 3);
        assert_eq!(t.domain_sizes(), vec![8, 5, 3]);
        assert_eq!(t.domain_sizes().iter().sum::<usize>(), 16);
        assert!(t.edge_count() >= 15);
        // boundary links exist between every domain and some other domain
        for d in 0..3 {
            assert!(t
                .edges()
                .iter()
                .any(|&(u, v)| (t.domain_of(u) == d) != (t.domain_of(v) == d)));
        }
        assert_eq!(Topology::preset16(), t);
    }

    #[test]
    fn ownership_goes_to_lower_controller() {
        let t = Topology::new(vec![0, 0, 1, 1], vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(t.edge_owner(0), 0);
        assert_eq!(t.edge_owner(1), 0);
        assert_eq!(t.edge_owner(2), 1);
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(Topology::new(vec![0, 0, 1, 1], vec![(0, 1), (2, 3)]).is_err());
        assert!(Topology::new(vec![0, 2, 2], vec![(0, 1), (1, 2)]).is_err());
        assert!(Topology::new(vec![0, 0], vec![(0, 1)]).is_err());
        assert!(Topology::new(vec![0, 1], vec![(0, 0)]).is_err());
        assert!(Topology::new(vec![0, 1], vec![(0, 1), (1, 0)]).is_err());
        assert!(Topology::new(vec![0, 1], vec![(0, 5)]).is_err());
    }

    #[test]
    fn shortest_path_prefers_low_neighbors() {
        // square 0-1-3, 0-2-3: two 2-hop paths, via node 1 wins
        let t = Topology::new(vec![0, 0, 1, 1], vec![(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let up = vec![true; 4];
        let p = t.shortest_path(&up, 0, 3).unwrap();
        assert_eq!(p, vec![0, 2]);
        let mut down = up.clone();
        down[0] = false;
        assert_eq!(t.shortest_path(&down, 0, 3).unwrap(), vec![1, 3]);
        assert_eq!(t.shortest_path(&[false; 4], 0, 3), None);
        assert_eq!(t.hop_distance(&up, 2, 2), Some(0));
    }
}
