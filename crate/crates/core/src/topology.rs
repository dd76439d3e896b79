//! Network structures and per-trial partner sampling.
//!
//! Two fixed graphs are supported: a spatially-embedded ring lattice where
//! every node is linked to the nodes one and two steps away on either side
//! (degree 4), and a homogeneously-mixed complete graph. On every trial the
//! players are paired by a perfect matching drawn from the graph's edges.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Ring offsets used by the spatial lattice.
pub const RING_OFFSETS: [usize; 2] = [1, 2];

const MATCHING_RESTARTS: usize = 1000;
const BACKTRACK_BUDGET: usize = 20_000;
/// Pair-swap proposals per node applied after the greedy construction.
const SWAP_SWEEPS_PER_NODE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    SpatialRing,
    HomogeneousComplete,
}

impl StructureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureKind::SpatialRing => "spatial_ring",
            StructureKind::HomogeneousComplete => "homogeneous_complete",
        }
    }

    /// Indicator used as the `Spatial` regression predictor.
    pub fn spatial_indicator(self) -> f64 {
        match self {
            StructureKind::SpatialRing => 1.0,
            StructureKind::HomogeneousComplete => 0.0,
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spatial_ring" | "spatial" | "ring" => Ok(StructureKind::SpatialRing),
            "homogeneous_complete" | "homogeneous" | "complete" => {
                Ok(StructureKind::HomogeneousComplete)
            }
            other => Err(Error::InvalidConfig(format!("unknown structure `{other}`"))),
        }
    }
}

/// A fixed, undirected, unweighted interaction graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: StructureKind,
    adjacency: Vec<Vec<NodeId>>,
}

impl Topology {
    pub fn build(kind: StructureKind, n: usize) -> Result<Self> {
        match kind {
            StructureKind::SpatialRing => Self::ring(n),
            StructureKind::HomogeneousComplete => Self::complete(n),
        }
    }

    /// Circulant ring lattice with offsets ±1 and ±2.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 6 {
            return Err(Error::InvalidConfig(format!(
                "spatial ring needs at least 6 nodes, got {n}"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "node count must be even, got {n}"
            )));
        }
        let adjacency = (0..n)
            .map(|i| {
                let mut nbrs: Vec<NodeId> = RING_OFFSETS
                    .iter()
                    .flat_map(|&d| [(i + d) % n, (i + n - d) % n])
                    .collect();
                nbrs.sort_unstable();
                nbrs.dedup();
                nbrs
            })
            .collect();
        Ok(Topology {
            kind: StructureKind::SpatialRing,
            adjacency,
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "complete graph needs an even node count >= 2, got {n}"
            )));
        }
        let adjacency = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect();
        Ok(Topology {
            kind: StructureKind::HomogeneousComplete,
            adjacency,
        })
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighborhood size: 4 for the ring, n - 1 for the complete graph.
    pub fn k(&self) -> usize {
        self.adjacency.first().map_or(0, Vec::len)
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        a < self.n() && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Breadth-first distances from `source`; `None` marks unreachable nodes.
    pub fn distances_from(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest geodesic distance between any two nodes.
    pub fn diameter(&self) -> Result<usize> {
        let mut best = 0;
        for s in 0..self.n() {
            for d in self.distances_from(s) {
                match d {
                    Some(d) => best = best.max(d),
                    None => {
                        return Err(Error::InvalidConfig("topology is disconnected".into()))
                    }
                }
            }
        }
        Ok(best)
    }

    /// Draw a random perfect matching over the graph's edges.
    ///
    /// A randomized greedy pass (shuffled node order, random neighbor choice,
    /// backtracking on dead ends, restarted with a fresh shuffle when the
    /// budget runs out) finds an initial matching. It is then mixed with
    /// local swap moves: pick a node `a` with partner `b`, a neighbor `c != b`
    /// of `a` with partner `d`, and rewire to `(a, c), (b, d)` if `b`-`d` is an
    /// edge. On regular graphs the move is symmetric, so the uniform
    /// distribution over perfect matchings is invariant and the greedy pass's
    /// bias toward particular edge offsets washes out.
    pub fn sample_matching<R: Rng + ?Sized>(&self, trial: u32, rng: &mut R) -> Result<Matching> {
        let n = self.n();
        if n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "node count must be even, got {n}"
            )));
        }
        for _ in 0..MATCHING_RESTARTS {
            let mut order: Vec<NodeId> = (0..n).collect();
            order.shuffle(rng);
            let mut partner: Vec<Option<NodeId>> = vec![None; n];
            let mut budget = BACKTRACK_BUDGET;
            if self.extend_matching(&order, &mut partner, &mut budget, rng) {
                let mut partner: Vec<NodeId> = partner.into_iter().flatten().collect();
                self.mix_partners(&mut partner, rng);
                let pairs = order
                    .iter()
                    .filter(|&&i| i < partner[i])
                    .map(|&i| (i, partner[i]))
                    .collect();
                return Ok(Matching { trial, pairs });
            }
        }
        Err(Error::MatchingFailure {
            trial,
            restarts: MATCHING_RESTARTS,
        })
    }

    fn mix_partners<R: Rng + ?Sized>(&self, partner: &mut [NodeId], rng: &mut R) {
        let n = self.n();
        if n < 4 || self.k() < 2 {
            return;
        }
        for _ in 0..SWAP_SWEEPS_PER_NODE * n {
            let a = rng.random_range(0..n);
            let b = partner[a];
            let nbrs = &self.adjacency[a];
            let c = loop {
                let c = nbrs[rng.random_range(0..nbrs.len())];
                if c != b {
                    break c;
                }
            };
            let d = partner[c];
            if self.has_edge(b, d) {
                partner[a] = c;
                partner[c] = a;
                partner[b] = d;
                partner[d] = b;
            }
        }
    }

    fn extend_matching<R: Rng + ?Sized>(
        &self,
        order: &[NodeId],
        partner: &mut [Option<NodeId>],
        budget: &mut usize,
        rng: &mut R,
    ) -> bool {
        let Some(&u) = order.iter().find(|&&v| partner[v].is_none()) else {
            return true;
        };
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let mut candidates: Vec<NodeId> = self.adjacency[u]
            .iter()
            .copied()
            .filter(|&v| partner[v].is_none())
            .collect();
        candidates.shuffle(rng);
        for v in candidates {
            partner[u] = Some(v);
            partner[v] = Some(u);
            if self.extend_matching(order, partner, budget, rng) {
                return true;
            }
            partner[u] = None;
            partner[v] = None;
            if *budget == 0 {
                return false;
            }
        }
        false
    }

    pub fn to_edge_list(&self) -> EdgeList {
        EdgeList {
            kind: self.kind,
            n: self.n(),
            edges: self
                .edges()
                .into_iter()
                .map(|(i, j)| format!("{i} {j}"))
                .collect(),
        }
    }
}

/// Plain edge-list record used for logging and UI rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub kind: StructureKind,
    pub n: usize,
    pub edges: Vec<String>,
}

impl TryFrom<&EdgeList> for Topology {
    type Error = Error;

    fn try_from(list: &EdgeList) -> Result<Self> {
        let topo = Topology::build(list.kind, list.n)?;
        let mut parsed = Vec::with_capacity(list.edges.len());
        for e in &list.edges {
            let mut it = e.split_whitespace().map(str::parse::<NodeId>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => parsed.push((i.min(j), i.max(j))),
                _ => return Err(Error::InvalidConfig(format!("bad edge `{e}`"))),
            }
        }
        parsed.sort_unstable();
        if parsed != topo.edges() {
            return Err(Error::InvalidConfig(format!(
                "edge list does not describe a {} graph on {} nodes",
                list.kind, list.n
            )));
        }
        Ok(topo)
    }
}

/// One trial's pairing of every node with exactly one neighbor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub trial: u32,
    pub pairs: Vec<(NodeId, NodeId)>,
}

impl Matching {
    /// Partner lookup table indexed by node.
    pub fn partners(&self, n: usize) -> Vec<Option<NodeId>> {
        let mut out = vec![None; n];
        for &(a, b) in &self.pairs {
            if a < n && b < n {
                out[a] = Some(b);
                out[b] = Some(a);
            }
        }
        out
    }

    /// Checks coverage (every node exactly once) and edge membership.
    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let n = topo.n();
        let mut seen = vec![false; n];
        for &(a, b) in &self.pairs {
            if a >= n || b >= n || !topo.has_edge(a, b) {
                return Err(Error::Protocol(format!(
                    "pair ({a}, {b}) is not an edge of the topology"
                )));
            }
            for v in [a, b] {
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Protocol(format!("node {v} matched twice")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Protocol(format!("node {missing} left unmatched")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent eccentricity oracle: repeated relaxation over the edge list
    /// (Floyd-Warshall), sharing nothing with the BFS in `distances_from`.
    fn floyd_diameter(t: &Topology) -> usize {
        let n = t.n();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for (i, j) in t.edges() {
            d[i][j] = 1;
            d[j][i] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d.iter().flatten().copied().max().unwrap()
    }

    /// Exhaustively enumerates all perfect matchings of small graphs.
    fn all_matchings(t: &Topology) -> Vec<Vec<(NodeId, NodeId)>> {
        fn rec(
            t: &Topology,
            used: &mut Vec<bool>,
            cur: &mut Vec<(NodeId, NodeId)>,
            out: &mut Vec<Vec<(NodeId, NodeId)>>,
        ) {
            let Some(u) = used.iter().position(|x| !x) else {
                let mut m = cur.clone();
                m.sort_unstable();
                out.push(m);
                return;
            };
            used[u] = true;
            for &v in t.neighbors(u) {
                if !used[v] {
                    used[v] = true;
                    cur.push((u.min(v), u.max(v)));
                    rec(t, used, cur, out);
                    cur.pop();
                    used[v] = false;
                }
            }
            used[u] = false;
        }
        let mut out = Vec::new();
        rec(t, &mut vec![false; t.n()], &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn ring_neighbors_of_zero() {
        let t = Topology::ring(10).unwrap();
        assert_eq!(t.neighbors(0), &[1, 2, 8, 9]);
        assert_eq!(t.k(), 4);
    }

    #[test]
    fn ring_degree_four_and_symmetric() {
        let t = Topology::ring(20).unwrap();
        for i in 0..20 {
            assert_eq!(t.neighbors(i).len(), 4);
            assert!(!t.neighbors(i).contains(&i));
            for &j in t.neighbors(i) {
                assert!(t.has_edge(j, i));
            }
        }
    }

    #[test]
    fn ring_rejects_small_or_odd() {
        assert!(matches!(Topology::ring(5), Err(Error::InvalidConfig(_))));
        assert!(matches!(Topology::ring(4), Err(Error::InvalidConfig(_))));
        assert!(matches!(Topology::ring(11), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn complete_graph_shapes() {
        let t = Topology::complete(20).unwrap();
        assert!((0..20).all(|i| t.neighbors(i).len() == 19));
        let t2 = Topology::complete(2).unwrap();
        assert_eq!(t2.edges(), vec![(0, 1)]);
        assert!(Topology::complete(7).is_err());
        assert!(Topology::complete(0).is_err());
    }

    #[test]
    fn diameters_match_oracle() {
        assert_eq!(Topology::complete(20).unwrap().diameter().unwrap(), 1);
        let r10 = Topology::ring(10).unwrap();
        let r20 = Topology::ring(20).unwrap();
        assert_eq!(floyd_diameter(&r10), 3);
        assert_eq!(floyd_diameter(&r20), 5);
        assert_eq!(r10.diameter().unwrap(), 3);
        assert_eq!(r20.diameter().unwrap(), 5);
    }

    #[test]
    fn diameter_properties() {
        for n in (2..=30).step_by(2) {
            assert_eq!(Topology::complete(n).unwrap().diameter().unwrap(), 1);
        }
        let mut prev = 0;
        for n in (6..=40).step_by(2) {
            let t = Topology::ring(n).unwrap();
            let d = t.diameter().unwrap();
            assert_eq!(d, floyd_diameter(&t));
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn complete_two_has_single_matching() {
        let t = Topology::complete(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = t.sample_matching(1, &mut rng).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
    }

    #[test]
    fn sampled_matchings_are_enumerated_matchings() {
        for t in [
            Topology::ring(6).unwrap(),
            Topology::ring(8).unwrap(),
            Topology::ring(10).unwrap(),
            Topology::complete(6).unwrap(),
        ] {
            let all = all_matchings(&t);
            assert!(!all.is_empty());
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for trial in 0..200 {
                let m = t.sample_matching(trial, &mut rng).unwrap();
                m.validate(&t).unwrap();
                assert_eq!(m.pairs.len(), t.n() / 2);
                let mut sorted = m.pairs.clone();
                sorted.sort_unstable();
                assert!(all.contains(&sorted));
            }
        }
    }

    #[test]
    fn sampler_is_close_to_uniform_over_matchings() {
        for n in [8, 10] {
            let t = Topology::ring(n).unwrap();
            let all = all_matchings(&t);
            let mut freq = vec![0usize; all.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let draws = 20_000;
            for trial in 0..draws {
                let mut m = t.sample_matching(trial, &mut rng).unwrap().pairs;
                m.sort_unstable();
                freq[all.iter().position(|x| *x == m).unwrap()] += 1;
            }
            let expected = draws as f64 / all.len() as f64;
            for &f in &freq {
                // ~5 binomial standard deviations
                assert!((f as f64 - expected).abs() < 5.0 * expected.sqrt(), "n={n}: {freq:?}");
            }
        }
    }

    #[test]
    fn matching_is_deterministic() {
        let t = Topology::ring(20).unwrap();
        let a = t.sample_matching(3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = t.sample_matching(3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_list_round_trip() {
        let t = Topology::ring(10).unwrap();
        let list = t.to_edge_list();
        assert_eq!(list.edges.len(), 20);
        assert_eq!(list.edges[0], "0 1");
        assert_eq!(Topology::try_from(&list).unwrap(), t);
        let mut bad = list.clone();
        bad.edges.pop();
        assert!(Topology::try_from(&bad).is_err());
    }

    #[test]
    fn structure_kind_parses() {
        assert_eq!("ring".parse::<StructureKind>().unwrap(), StructureKind::SpatialRing);
        assert_eq!(
            "homogeneous_complete".parse::<StructureKind>().unwrap(),
            StructureKind::HomogeneousComplete
        );
        assert!("star".parse::<StructureKind>().is_err());
    }
}
