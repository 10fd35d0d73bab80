//! Based and unbased loops, chronological loop erasure, loop measures and the
//! random split of a based loop into unbased loops.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::{CycleWeight, OrientedCycle};
use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};

/// A closed walk `x0, x1, …, x_k = x0`; the trivial loop is the single node `[x0]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasedLoop {
    nodes: Vec<NodeId>,
}

impl BasedLoop {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self> {
        match nodes.len() {
            0 => return Err(Error::InvalidArgument("empty loop".into())),
            2 => return Err(Error::InvalidArgument(format!("{nodes:?} is not a loop"))),
            _ => {}
        }
        if nodes[0] != nodes[nodes.len() - 1] {
            return Err(Error::InvalidArgument(format!("loop {nodes:?} does not return to its base")));
        }
        if nodes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("loop {nodes:?} stays put")));
        }
        Ok(Self { nodes })
    }

    pub fn trivial(x: NodeId) -> Self {
        Self { nodes: vec![x] }
    }

    pub(crate) fn from_walk(nodes: Vec<NodeId>) -> Self {
        debug_assert!(nodes.len() == 1 || nodes.first() == nodes.last());
        Self { nodes }
    }

    /// Check adjacency of consecutive nodes in `g`.
    pub fn in_graph(self, g: &ConnectionGraph) -> Result<Self> {
        g.path_probability(&self.nodes)?;
        Ok(self)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn base(&self) -> NodeId {
        self.nodes[0]
    }

    /// Number of steps |γ|.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_trivial(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn is_empty(&self) -> bool {
        self.is_trivial()
    }

    /// d(γ): number of returns to the base.
    pub fn returns(&self) -> usize {
        self.nodes[1..].iter().filter(|&&x| x == self.base()).count()
    }

    pub fn concat(&self, other: &BasedLoop) -> Result<BasedLoop> {
        if self.base() != other.base() {
            return Err(Error::InvalidArgument("loops have different bases".into()));
        }
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes[1..]);
        Ok(BasedLoop { nodes })
    }

    pub fn pow(&self, m: usize) -> BasedLoop {
        let mut nodes = vec![self.base()];
        for _ in 0..m {
            nodes.extend_from_slice(&self.nodes[1..]);
        }
        BasedLoop { nodes }
    }

    /// First-return decomposition into d(γ) excursions.
    pub fn excursions(&self) -> Vec<BasedLoop> {
        let x = self.base();
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.nodes.len() {
            if self.nodes[i] == x {
                out.push(BasedLoop { nodes: self.nodes[start..=i].to_vec() });
                start = i;
            }
        }
        out
    }

    /// q(γ): product of transition probabilities.
    pub fn probability(&self, g: &ConnectionGraph) -> Result<f64> {
        g.path_probability(&self.nodes)
    }

    pub fn forget_base(&self) -> UnbasedLoop {
        UnbasedLoop::from_based(self)
    }
}

/// Chronological loop erasure of γ: the cycles popped in order of closure.
pub fn erase_cycles(gamma: &BasedLoop) -> Vec<OrientedCycle> {
    let mut path: Vec<NodeId> = Vec::new();
    let mut out = Vec::new();
    for &x in gamma.nodes() {
        if let Some(j) = path.iter().position(|&y| y == x) {
            out.push(OrientedCycle::new(&path[j..]).expect("path is self-avoiding"));
            path.truncate(j + 1);
        } else {
            path.push(x);
        }
    }
    out
}

/// The based loop measure μ_α(γ) = q(γ) Π (1 − α(c)) over the erased cycles.
pub fn loop_measure(g: &ConnectionGraph, a: &CycleWeight, gamma: &BasedLoop) -> Result<f64> {
    if gamma.is_trivial() {
        return Ok(1.0);
    }
    let mut m = gamma.probability(g)?;
    for c in erase_cycles(gamma) {
        m *= 1.0 - a.alpha(g, &c);
    }
    Ok(m)
}

/// An unbased loop: the shift-equivalence class of a non-trivial based loop.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnbasedLoop {
    /// Lexicographically minimal rotation of one traversal (without closing node).
    pub canonical: Vec<NodeId>,
    pub multiplicity: usize,
}

impl UnbasedLoop {
    fn from_based(gamma: &BasedLoop) -> Self {
        let seq = &gamma.nodes[..gamma.nodes.len() - 1];
        let k = seq.len();
        let r = least_rotation(seq);
        let canonical: Vec<NodeId> = seq[r..].iter().chain(&seq[..r]).copied().collect();
        Self { canonical, multiplicity: k / primitive_period(seq) }
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    /// N: number of distinct based representatives.
    pub fn representatives(&self) -> usize {
        self.len() / self.multiplicity
    }

    /// Number of visits to `x` along one traversal.
    pub fn visits(&self, x: NodeId) -> usize {
        self.canonical.iter().filter(|&&y| y == x).count()
    }

    /// #_{[γ],x} = N · d_x / |γ|, the representatives based at `x`.
    pub fn representatives_at(&self, x: NodeId) -> usize {
        self.representatives() * self.visits(x) / self.len()
    }

    pub fn to_based(&self) -> BasedLoop {
        let mut nodes = self.canonical.clone();
        nodes.push(self.canonical[0]);
        BasedLoop { nodes }
    }
}

/// Start of the lexicographically least rotation (Booth's algorithm).
fn least_rotation(s: &[NodeId]) -> usize {
    let n = s.len() as isize;
    let at = |i: isize| s[(i % n) as usize];
    let mut f: Vec<isize> = vec![-1; 2 * s.len()];
    let mut k: isize = 0;
    for j in 1..2 * n {
        let sj = at(j);
        let mut i = f[(j - k - 1) as usize];
        while i != -1 && sj != at(k + i + 1) {
            if sj < at(k + i + 1) {
                k = j - i - 1;
            }
            i = f[i as usize];
        }
        if i == -1 && sj != at(k + i + 1) {
            if sj < at(k) {
                k = j;
            }
            f[(j - k) as usize] = -1;
        } else {
            f[(j - k) as usize] = i + 1;
        }
    }
    (k % n) as usize
}

/// Smallest p dividing |s| with s invariant under rotation by p.
fn primitive_period(s: &[NodeId]) -> usize {
    let n = s.len();
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut j = pi[i - 1];
        while j > 0 && s[i] != s[j] {
            j = pi[j - 1];
        }
        if s[i] == s[j] {
            j += 1;
        }
        pi[i] = j;
    }
    let p = n - pi.last().copied().unwrap_or(0);
    if n % p == 0 {
        p
    } else {
        n
    }
}

/// m_α([γ]) = μ_α(γ) / mult(γ).
pub fn unbased_measure(g: &ConnectionGraph, a: &CycleWeight, l: &UnbasedLoop) -> Result<f64> {
    Ok(loop_measure(g, a, &l.to_based())? / l.multiplicity as f64)
}

/// Ordered block sizes of a uniformly shuffled Chinese-restaurant partition of
/// `{1..n}`; P(M = (m_1..m_k)) = 1 / (k! Π m_i).
pub fn split_composition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut tables: Vec<usize> = Vec::new();
    for i in 0..n {
        // Customer i+1 opens a table with probability 1/(i+1).
        let u = rng.gen_range(0..=i);
        if u == i {
            tables.push(1);
        } else {
            let mut acc = 0;
            for t in tables.iter_mut() {
                acc += *t;
                if u < acc {
                    *t += 1;
                    break;
                }
            }
        }
    }
    tables.shuffle(rng);
    tables
}

pub fn composition_probability(m: &[usize]) -> f64 {
    let k_fact: f64 = (1..=m.len()).map(|i| i as f64).product();
    1.0 / (k_fact * m.iter().map(|&x| x as f64).product::<f64>())
}

/// Split γ into its excursions, regroup consecutive excursions by a random
/// composition of d(γ), and forget the bases.
pub fn random_split<R: Rng + ?Sized>(gamma: &BasedLoop, rng: &mut R) -> Vec<UnbasedLoop> {
    if gamma.is_trivial() {
        return Vec::new();
    }
    let exc = gamma.excursions();
    let sizes = split_composition(exc.len(), rng);
    let mut out = Vec::with_capacity(sizes.len());
    let mut i = 0;
    for s in sizes {
        let mut nodes = vec![gamma.base()];
        for e in &exc[i..i + s] {
            nodes.extend_from_slice(&e.nodes[1..]);
        }
        i += s;
        out.push(BasedLoop { nodes }.forget_base());
    }
    out
}

/// Counts of unbased loop classes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LoopClassCounts {
    pub counts: BTreeMap<UnbasedLoop, u64>,
}

impl LoopClassCounts {
    pub fn add_all<I: IntoIterator<Item = UnbasedLoop>>(&mut self, loops: I) {
        for l in loops {
            *self.counts.entry(l).or_insert(0) += 1;
        }
    }

    pub fn get(&self, l: &UnbasedLoop) -> u64 {
        self.counts.get(l).copied().unwrap_or(0)
    }

    /// Σ length × count.
    pub fn total_length(&self) -> u64 {
        self.counts.iter().map(|(l, c)| l.len() as u64 * c).sum()
    }

    /// CSV with columns `class,length,count`; the class is the canonical node
    /// sequence joined by `-`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "class,length,count")?;
        for (l, c) in &self.counts {
            let class: Vec<String> = l.canonical.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{},{}", class.join("-"), l.len(), c)?;
        }
        Ok(())
    }
}
