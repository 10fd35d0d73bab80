//! Oriented cycles, acceptance weights α and assumption checks.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};

/// An unbased oriented cycle, stored as its lexicographically minimal
/// rotation. A cycle of length 2 is a backtrack.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrientedCycle {
    nodes: Vec<NodeId>,
}

fn min_rotation(nodes: &[NodeId]) -> Vec<NodeId> {
    let k = nodes.len();
    let best = (0..k)
        .min_by(|&a, &b| {
            (0..k)
                .map(|i| nodes[(a + i) % k])
                .cmp((0..k).map(|i| nodes[(b + i) % k]))
        })
        .unwrap_or(0);
    (0..k).map(|i| nodes[(best + i) % k]).collect()
}

impl OrientedCycle {
    /// Canonicalize one period of a cycle (without repeating the first node).
    pub fn new(nodes: &[NodeId]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(format!("cycle needs at least 2 nodes, got {nodes:?}")));
        }
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("cycle {nodes:?} repeats a node")));
        }
        Ok(Self { nodes: min_rotation(nodes) })
    }

    /// Same as [`OrientedCycle::new`] but also checks adjacency in `g`.
    pub fn in_graph(g: &ConnectionGraph, nodes: &[NodeId]) -> Result<Self> {
        let c = Self::new(nodes)?;
        for i in 0..c.len() {
            let (x, y) = (c.nodes[i], c.nodes[(i + 1) % c.len()]);
            if y >= g.node_count() || x >= g.node_count() || !g.is_adjacent(x, y) {
                return Err(Error::NotAdjacent(x, y));
            }
        }
        Ok(c)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_backtrack(&self) -> bool {
        self.nodes.len() == 2
    }

    pub fn contains(&self, x: NodeId) -> bool {
        self.nodes.contains(&x)
    }

    /// Successor of `x` along the orientation.
    pub fn next_after(&self, x: NodeId) -> Option<NodeId> {
        let i = self.nodes.iter().position(|&y| y == x)?;
        Some(self.nodes[(i + 1) % self.nodes.len()])
    }

    pub fn reversed(&self) -> Self {
        let mut r = self.nodes.clone();
        r.reverse();
        Self { nodes: min_rotation(&r) }
    }

    /// The node sequence closed up: `x0, x1, …, x_{k-1}, x0`.
    pub fn closed(&self) -> Vec<NodeId> {
        let mut v = self.nodes.clone();
        v.push(self.nodes[0]);
        v
    }

    pub fn mask(&self) -> u64 {
        self.nodes.iter().fold(0u64, |m, &x| m | (1u64 << x))
    }

    pub fn shares_node(&self, other: &OrientedCycle) -> bool {
        self.nodes.iter().any(|x| other.nodes.contains(x))
    }

    /// θ(c), the signed angle sum around the cycle.
    pub fn angle(&self, g: &ConnectionGraph) -> Result<f64> {
        g.path_angle(&self.closed())
    }

    pub fn probability(&self, g: &ConnectionGraph) -> Result<f64> {
        g.path_probability(&self.closed())
    }
}

impl fmt::Display for OrientedCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// The acceptance probability α on oriented cycles.
#[derive(Clone, Debug, PartialEq)]
pub enum CycleWeight {
    /// α(c) = 1 − cos θ(c).
    Determinantal,
    /// Table keyed by canonical cycle; missing cycles have α = 0.
    Explicit(BTreeMap<OrientedCycle, f64>),
}

#[derive(Serialize, Deserialize)]
struct AlphaEntry {
    nodes: Vec<NodeId>,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct AlphaFile {
    cycles: Vec<AlphaEntry>,
}

impl CycleWeight {
    pub fn explicit<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (OrientedCycle, f64)>,
    {
        let mut table = BTreeMap::new();
        for (c, a) in entries {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!("alpha({c}) = {a} is outside [0, 1]")));
            }
            table.insert(c, a);
        }
        Ok(CycleWeight::Explicit(table))
    }

    /// Explicit weights with the same value on every cycle of `cycles`.
    pub fn constant(cycles: &[OrientedCycle], a: f64) -> Result<Self> {
        Self::explicit(cycles.iter().map(|c| (c.clone(), a)))
    }

    /// Read `{"cycles": [{"nodes": [..], "alpha": a}, ..]}`.
    pub fn from_json<R: Read>(g: &ConnectionGraph, reader: R) -> Result<Self> {
        let file: AlphaFile = serde_json::from_reader(reader)?;
        let mut entries = Vec::with_capacity(file.cycles.len());
        for e in file.cycles {
            entries.push((OrientedCycle::in_graph(g, &e.nodes)?, e.alpha));
        }
        Self::explicit(entries)
    }

    pub fn is_determinantal(&self) -> bool {
        matches!(self, CycleWeight::Determinantal)
    }

    pub fn alpha(&self, g: &ConnectionGraph, c: &OrientedCycle) -> f64 {
        match self {
            CycleWeight::Determinantal => 1.0 - cycle_angle(g, c.nodes()).cos(),
            CycleWeight::Explicit(t) => t.get(c).copied().unwrap_or(0.0),
        }
    }

    /// α of the cycle `nodes[0] → … → nodes[k-1] → nodes[0]`, given in any
    /// rotation. Nodes must be consecutive neighbours.
    pub fn alpha_of_path(&self, g: &ConnectionGraph, nodes: &[NodeId]) -> f64 {
        match self {
            CycleWeight::Determinantal => 1.0 - cycle_angle(g, nodes).cos(),
            CycleWeight::Explicit(t) => t
                .get(&OrientedCycle { nodes: min_rotation(nodes) })
                .copied()
                .unwrap_or(0.0),
        }
    }
}

fn cycle_angle(g: &ConnectionGraph, nodes: &[NodeId]) -> f64 {
    let k = nodes.len();
    (0..k)
        .map(|i| g.signed_angle(nodes[i], nodes[(i + 1) % k]).expect("cycle nodes must be adjacent"))
        .sum()
}

/// Every oriented cycle of `g`: one canonical backtrack per edge and both
/// orientations of each simple cycle of length ≥ 3 (up to `max_len` nodes).
pub fn enumerate_oriented_cycles(g: &ConnectionGraph, max_len: Option<usize>) -> Vec<OrientedCycle> {
    let n = g.node_count();
    let max_len = max_len.unwrap_or(n).min(n);
    let mut out: Vec<OrientedCycle> = g
        .edges()
        .iter()
        .map(|e| OrientedCycle { nodes: vec![e.u, e.v] })
        .collect();
    let mut on_path = vec![false; n];
    let mut path = Vec::with_capacity(n);
    for s in 0..n {
        path.clear();
        path.push(s);
        on_path[s] = true;
        extend(g, s, max_len, &mut path, &mut on_path, &mut out);
        on_path[s] = false;
    }
    out.sort();
    out
}

fn extend(
    g: &ConnectionGraph,
    s: NodeId,
    max_len: usize,
    path: &mut Vec<NodeId>,
    on_path: &mut [bool],
    out: &mut Vec<OrientedCycle>,
) {
    let x = *path.last().unwrap();
    for a in g.neighbors(x) {
        let y = a.to;
        if y == s && path.len() >= 3 {
            // s is the minimum, so this rotation is already canonical.
            out.push(OrientedCycle { nodes: path.clone() });
        } else if y > s && !on_path[y] && path.len() < max_len {
            on_path[y] = true;
            path.push(y);
            extend(g, s, max_len, path, on_path, out);
            path.pop();
            on_path[y] = false;
        }
    }
}

/// Fundamental cycles of a BFS spanning tree rooted at 0, one orientation each.
pub fn fundamental_cycles(g: &ConnectionGraph) -> Vec<OrientedCycle> {
    let n = g.node_count();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut queue = VecDeque::from([0]);
    parent[0] = 0;
    while let Some(x) = queue.pop_front() {
        for a in g.neighbors(x) {
            if parent[a.to] == usize::MAX {
                parent[a.to] = x;
                depth[a.to] = depth[x] + 1;
                queue.push_back(a.to);
            }
        }
    }
    let mut out = Vec::new();
    for e in g.edges() {
        if parent[e.v] == e.u || parent[e.u] == e.v {
            continue;
        }
        let (mut a, mut b) = (e.u, e.v);
        let mut left = vec![a];
        let mut right = vec![b];
        while a != b {
            if depth[a] >= depth[b] {
                a = parent[a];
                left.push(a);
            } else {
                b = parent[b];
                right.push(b);
            }
        }
        // left ends at the common ancestor; walk u → lca → v → u.
        right.pop();
        right.reverse();
        left.extend(right);
        out.push(OrientedCycle { nodes: min_rotation(&left) });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    /// Every simple cycle was checked.
    Exhaustive,
    /// Fundamental cycle basis plus simple cycles of bounded length.
    BestEffort { max_cycle_len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub nontrivial_connection: bool,
    pub nontrivial_sign_flipped: bool,
    pub weakly_inconsistent: bool,
    pub nontrivial_weights: bool,
    pub level: CheckLevel,
    pub cycles_checked: usize,
}

impl AssumptionReport {
    /// Non-trivial connection, also after a sign flip, and weak inconsistency.
    pub fn determinantal_ok(&self) -> bool {
        self.nontrivial_connection && self.nontrivial_sign_flipped && self.weakly_inconsistent
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    /// Full enumeration when `n` is at most this.
    pub enumeration_limit: usize,
    /// Length bound for the best-effort pass.
    pub max_cycle_len: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { enumeration_limit: 10, max_cycle_len: 3 }
    }
}

pub fn validate_assumptions(g: &ConnectionGraph, a: &CycleWeight, opts: ValidationOptions) -> AssumptionReport {
    let (cycles, level) = if g.node_count() <= opts.enumeration_limit {
        (enumerate_oriented_cycles(g, None), CheckLevel::Exhaustive)
    } else {
        let mut cs = fundamental_cycles(g);
        cs.extend(enumerate_oriented_cycles(g, Some(opts.max_cycle_len)));
        cs.sort();
        cs.dedup();
        (cs, CheckLevel::BestEffort { max_cycle_len: opts.max_cycle_len })
    };
    const TOL: f64 = 1e-12;
    let mut report = AssumptionReport {
        nontrivial_connection: false,
        nontrivial_sign_flipped: false,
        weakly_inconsistent: true,
        nontrivial_weights: false,
        level,
        cycles_checked: cycles.len(),
    };
    for c in &cycles {
        let theta = cycle_angle(g, c.nodes());
        let cos = theta.cos();
        if (1.0 - cos).abs() > TOL {
            report.nontrivial_connection = true;
        }
        let flipped = if c.len() % 2 == 0 { 1.0 } else { -1.0 };
        if (cos - flipped).abs() > TOL {
            report.nontrivial_sign_flipped = true;
        }
        if cos < -TOL {
            report.weakly_inconsistent = false;
        }
        if let CycleWeight::Determinantal = a {
            if 1.0 - cos > TOL {
                report.nontrivial_weights = true;
            }
        }
    }
    if let CycleWeight::Explicit(t) = a {
        report.nontrivial_weights = t.values().any(|&v| v > 0.0);
    }
    report
}
