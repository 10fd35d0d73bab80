//! Heaps of cycles: trivial-heap alternating sums, the generic Green function
//! and MGF, pyramids and their bijection with based loops.

use std::collections::HashMap;

use serde::Serialize;

use crate::cycle::{enumerate_oriented_cycles, CycleWeight, OrientedCycle};
use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};
use crate::loops::{erase_cycles, BasedLoop};
use crate::spectral::{TLawMode, TLawReport};

pub const DEFAULT_ENUMERATION_LIMIT: usize = 12;

/// All oriented cycles of a small graph, indexed by their smallest node.
#[derive(Clone, Debug)]
pub struct CycleCatalog {
    n: usize,
    cycles: Vec<OrientedCycle>,
    masks: Vec<u64>,
    by_min: Vec<Vec<usize>>,
}

impl CycleCatalog {
    pub fn new(g: &ConnectionGraph, limit: usize) -> Result<Self> {
        let n = g.node_count();
        if n > limit || n > 64 {
            return Err(Error::LimitExceeded(format!("{n} nodes exceeds the enumeration limit {limit}")));
        }
        let cycles = enumerate_oriented_cycles(g, None);
        let masks: Vec<u64> = cycles.iter().map(|c| c.mask()).collect();
        let mut by_min = vec![Vec::new(); n];
        for (i, c) in cycles.iter().enumerate() {
            by_min[c.nodes()[0]].push(i);
        }
        Ok(Self { n, cycles, masks, by_min })
    }

    pub fn cycles(&self) -> &[OrientedCycle] {
        &self.cycles
    }

    pub fn index_of(&self, c: &OrientedCycle) -> Option<usize> {
        self.cycles.binary_search(c).ok()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// t^{|c|} μ_α(c) with μ_α(c) = q(c)(1 − α(c)), for every catalogued cycle.
    pub fn weights(&self, g: &ConnectionGraph, a: &CycleWeight, t: f64) -> Vec<f64> {
        self.cycles
            .iter()
            .map(|c| {
                let q = c.probability(g).expect("catalogued cycles are in the graph");
                t.powi(c.len() as i32) * q * (1.0 - a.alpha(g, c))
            })
            .collect()
    }

    pub fn full_mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    /// Σ over sets C of pairwise disjoint cycles inside `allowed` of
    /// (−1)^{|C|} Π_{c∈C} w(c).
    pub fn alternating_sum(&self, weights: &[f64], allowed: u64) -> f64 {
        let mut memo = HashMap::new();
        self.alt(weights, allowed, &mut memo)
    }

    fn alt(&self, w: &[f64], avail: u64, memo: &mut HashMap<u64, f64>) -> f64 {
        if avail == 0 {
            return 1.0;
        }
        if let Some(&v) = memo.get(&avail) {
            return v;
        }
        let v = avail.trailing_zeros() as usize;
        let rest = avail & !(1u64 << v);
        let mut total = self.alt(w, rest, memo);
        for &i in &self.by_min[v] {
            let m = self.masks[i];
            if m & avail == m && w[i] != 0.0 {
                total -= w[i] * self.alt(w, avail & !m, memo);
            }
        }
        memo.insert(avail, total);
        total
    }

    /// Alternating sum with weights `t^{|c|} base[c]`, with its first two
    /// derivatives in `t`.
    fn alternating_jet(&self, base: &[f64], t: f64, allowed: u64) -> Jet {
        let w: Vec<Jet> = self
            .cycles
            .iter()
            .zip(base)
            .map(|(c, &b)| {
                let k = c.len() as i32;
                let kf = k as f64;
                Jet { v: b * t.powi(k), d1: b * kf * t.powi(k - 1), d2: b * kf * (kf - 1.0) * t.powi(k - 2) }
            })
            .collect();
        let mut memo = HashMap::new();
        self.alt_jet(&w, allowed, &mut memo)
    }

    fn alt_jet(&self, w: &[Jet], avail: u64, memo: &mut HashMap<u64, Jet>) -> Jet {
        if avail == 0 {
            return Jet { v: 1.0, d1: 0.0, d2: 0.0 };
        }
        if let Some(&v) = memo.get(&avail) {
            return v;
        }
        let v = avail.trailing_zeros() as usize;
        let mut total = self.alt_jet(w, avail & !(1u64 << v), memo);
        for &i in &self.by_min[v] {
            let m = self.masks[i];
            if m & avail == m && w[i].v != 0.0 {
                total = total.sub(w[i].mul(self.alt_jet(w, avail & !m, memo)));
            }
        }
        memo.insert(avail, total);
        total
    }
}

/// A value with first and second derivatives.
#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    d1: f64,
    d2: f64,
}

impl Jet {
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d1: self.d1 * o.v + self.v * o.d1, d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2 }
    }

    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }
}

fn mask_without(catalog: &CycleCatalog, avoid: &[NodeId]) -> Result<u64> {
    let mut m = catalog.full_mask();
    for &x in avoid {
        if x >= catalog.node_count() {
            return Err(Error::InvalidArgument(format!("node {x} out of range")));
        }
        m &= !(1u64 << x);
    }
    Ok(m)
}

/// Z_triv(S, t): alternating sum over trivial heaps with pieces inside S = V ∖ avoid.
pub fn trivial_heap_sum(g: &ConnectionGraph, a: &CycleWeight, t: f64, avoid: &[NodeId]) -> Result<f64> {
    let cat = CycleCatalog::new(g, DEFAULT_ENUMERATION_LIMIT)?;
    Ok(cat.alternating_sum(&cat.weights(g, a, t), mask_without(&cat, avoid)?))
}

/// G_α(t, x, x; avoid) = Z_triv(S ∖ {x}, t) / Z_triv(S, t).
pub fn green_generic(g: &ConnectionGraph, a: &CycleWeight, t: f64, x: NodeId, avoid: &[NodeId]) -> Result<f64> {
    if avoid.contains(&x) {
        return Err(Error::InvalidArgument(format!("node {x} is in the avoided set")));
    }
    let cat = CycleCatalog::new(g, DEFAULT_ENUMERATION_LIMIT)?;
    let w = cat.weights(g, a, t);
    let s = mask_without(&cat, avoid)?;
    let den = cat.alternating_sum(&w, s);
    if den.abs() < 1e-300 {
        return Err(Error::Singular(format!("trivial-heap sum vanishes on V∖{avoid:?}")));
    }
    Ok(cat.alternating_sum(&w, s & !(1u64 << x)) / den)
}

/// E[t^T] = tⁿ Z_triv(V, 1) / Z_triv(V, t), for t in (0, 1].
pub fn mgf_generic(g: &ConnectionGraph, a: &CycleWeight, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let cat = CycleCatalog::new(g, DEFAULT_ENUMERATION_LIMIT)?;
    let full = cat.full_mask();
    let z1 = cat.alternating_sum(&cat.weights(g, a, 1.0), full);
    if z1.abs() < 1e-300 {
        return Err(Error::Assumption("normalization Z_triv(V, 1) is 0".into()));
    }
    grid.iter()
        .map(|&t| {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!("generic mgf needs t in (0, 1], got {t}")));
            }
            let zt = cat.alternating_sum(&cat.weights(g, a, t), full);
            Ok((t, t.powi(g.node_count() as i32) * z1 / zt))
        })
        .collect()
}

/// Exact mean and variance of T for arbitrary α from derivatives of Z_triv(V, t) at t = 1.
pub fn tlaw_generic(g: &ConnectionGraph, a: &CycleWeight, grid: &[f64]) -> Result<TLawReport> {
    let cat = CycleCatalog::new(g, DEFAULT_ENUMERATION_LIMIT)?;
    let base = cat.weights(g, a, 1.0);
    let z = cat.alternating_jet(&base, 1.0, cat.full_mask());
    if z.v.abs() < 1e-300 {
        return Err(Error::Assumption("normalization Z_triv(V, 1) is 0".into()));
    }
    // log E[t^T] = n log t − log Z(t) + const; differentiate in s = log t.
    let l1 = z.d1 / z.v;
    let l2 = z.d2 / z.v - l1 * l1;
    let mean = g.node_count() as f64 - l1;
    let variance = -(l1 + l2);
    Ok(TLawReport { mode: TLawMode::Crsf, mean, variance, parity: None, mgf: mgf_generic(g, a, grid)? })
}

/// A piece of a heap: a cycle at a level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Piece {
    pub level: u32,
    pub cycle: OrientedCycle,
}

/// A heap of cycles in canonical form: each level is the longest-chain depth
/// of its piece, and pieces are sorted by (level, cycle).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct CycleHeap {
    pieces: Vec<Piece>,
}

impl CycleHeap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from labelled pieces; concurrent pieces must carry distinct levels.
    pub fn from_labelled(mut labelled: Vec<(OrientedCycle, u32)>) -> Result<Self> {
        for i in 0..labelled.len() {
            for j in i + 1..labelled.len() {
                if labelled[i].1 == labelled[j].1 && labelled[i].0.shares_node(&labelled[j].0) {
                    return Err(Error::InvalidArgument(format!(
                        "concurrent pieces {} and {} share level {}",
                        labelled[i].0, labelled[j].0, labelled[i].1
                    )));
                }
            }
        }
        labelled.sort_by_key(|p| p.1);
        let mut h = Self::new();
        for (c, _) in labelled {
            h.push(c);
        }
        Ok(h)
    }

    /// Place a piece on top of everything it touches.
    pub fn push(&mut self, c: OrientedCycle) {
        let level = 1 + self
            .pieces
            .iter()
            .filter(|p| p.cycle.shares_node(&c))
            .map(|p| p.level)
            .max()
            .unwrap_or(0);
        let piece = Piece { level, cycle: c };
        let at = self.pieces.partition_point(|p| p < &piece);
        self.pieces.insert(at, piece);
    }

    /// `self ∘ top`: `top` placed above `self`.
    pub fn compose(&self, top: &CycleHeap) -> CycleHeap {
        let mut h = self.clone();
        for p in &top.pieces {
            h.push(p.cycle.clone());
        }
        h
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// n_e(H): total number of edges over pieces.
    pub fn edge_count(&self) -> usize {
        self.pieces.iter().map(|p| p.cycle.len()).sum()
    }

    pub fn weight<F: Fn(&OrientedCycle) -> f64>(&self, w: F) -> f64 {
        self.pieces.iter().map(|p| w(&p.cycle)).product()
    }

    /// Indices of pieces with no concurrent piece above them.
    pub fn maximal(&self) -> Vec<usize> {
        (0..self.pieces.len())
            .filter(|&i| {
                !self.pieces.iter().any(|q| q.level > self.pieces[i].level && q.cycle.shares_node(&self.pieces[i].cycle))
            })
            .collect()
    }

    pub fn is_pyramid(&self) -> bool {
        self.maximal().len() == 1
    }

    /// Indices of all pieces ⪯ piece `i`.
    pub fn down_closure(&self, i: usize) -> Vec<usize> {
        let mut keep = vec![false; self.pieces.len()];
        keep[i] = true;
        for j in (0..self.pieces.len()).rev() {
            if !keep[j] {
                continue;
            }
            for k in 0..j {
                if !keep[k]
                    && self.pieces[k].level < self.pieces[j].level
                    && self.pieces[k].cycle.shares_node(&self.pieces[j].cycle)
                {
                    keep[k] = true;
                }
            }
        }
        (0..self.pieces.len()).filter(|&k| keep[k]).collect()
    }

    fn subheap(&self, idx: &[usize]) -> CycleHeap {
        let mut h = CycleHeap::new();
        for &i in idx {
            h.push(self.pieces[i].cycle.clone());
        }
        h
    }

    fn without(&self, idx: &[usize]) -> CycleHeap {
        let mut drop = vec![false; self.pieces.len()];
        for &i in idx {
            drop[i] = true;
        }
        let keep: Vec<usize> = (0..self.pieces.len()).filter(|&i| !drop[i]).collect();
        self.subheap(&keep)
    }
}

/// Chronological labelling of the cycles erased from γ. For a non-trivial
/// loop the result is a pyramid whose maximal piece contains the base.
pub fn pyramid_from_loop(gamma: &BasedLoop) -> CycleHeap {
    let mut h = CycleHeap::new();
    for c in erase_cycles(gamma) {
        h.push(c);
    }
    h
}

/// Rebuild the loop based at `x` from a pyramid whose maximal piece contains `x`.
pub fn loop_from_pyramid(p: &CycleHeap, x: NodeId) -> Result<BasedLoop> {
    if p.is_empty() {
        return Ok(BasedLoop::trivial(x));
    }
    let top = p.maximal();
    if top.len() != 1 || !p.pieces[top[0]].cycle.contains(x) {
        return Err(Error::InvalidArgument(format!("heap is not a pyramid with {x} in its maximal piece")));
    }
    let pieces = p.pieces();
    let mut consumed = vec![false; pieces.len()];
    let mut remaining = pieces.len();
    let mut path = vec![x];
    let mut walk = vec![x];
    let budget = p.edge_count();
    while remaining > 0 {
        if walk.len() > budget + 1 {
            return Err(Error::Internal("pyramid walk overran its edge count".into()));
        }
        let cur = *path.last().unwrap();
        let next = (0..pieces.len())
            .filter(|&i| !consumed[i] && pieces[i].cycle.contains(cur))
            .min_by_key(|&i| pieces[i].level)
            .and_then(|i| pieces[i].cycle.next_after(cur))
            .ok_or_else(|| Error::InvalidArgument(format!("walk is stuck at node {cur}")))?;
        walk.push(next);
        if let Some(j) = path.iter().position(|&z| z == next) {
            let closed = OrientedCycle::new(&path[j..])?;
            let i = (0..pieces.len())
                .filter(|&i| !consumed[i] && pieces[i].cycle == closed)
                .min_by_key(|&i| pieces[i].level)
                .ok_or_else(|| Error::InvalidArgument(format!("cycle {closed} is not in the pyramid")))?;
            consumed[i] = true;
            remaining -= 1;
            path.truncate(j + 1);
        } else {
            path.push(next);
        }
    }
    if path != [x] {
        return Err(Error::Internal("pyramid walk did not return to its base".into()));
    }
    BasedLoop::new(walk)
}

/// Split `h` into pyramids P_{x_1}, …, P_{x_{n−1}} (`None` for empty) along `ordering`.
pub fn decompose_heap(h: &CycleHeap, ordering: &[NodeId]) -> Vec<Option<CycleHeap>> {
    let mut rest = h.clone();
    let mut out = Vec::with_capacity(ordering.len().saturating_sub(1));
    for &x in ordering.iter().take(ordering.len().saturating_sub(1)) {
        let top = (0..rest.len())
            .filter(|&i| rest.pieces[i].cycle.contains(x))
            .max_by_key(|&i| rest.pieces[i].level);
        match top {
            None => out.push(None),
            Some(i) => {
                let idx = rest.down_closure(i);
                out.push(Some(rest.subheap(&idx)));
                rest = rest.without(&idx);
            }
        }
    }
    debug_assert!(rest.is_empty());
    out
}

pub fn recompose_heap(parts: &[Option<CycleHeap>]) -> CycleHeap {
    parts.iter().flatten().fold(CycleHeap::new(), |acc, p| acc.compose(p))
}

/// Heap generating function truncated at weight `eps`, built layer by layer
/// in Cartier–Foata form. Weights must lie in `[0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeapSeries {
    /// Σ_H w(H), including the empty heap.
    pub total: f64,
    /// Σ_P w(P) / |P| over pyramids.
    pub pyramid_sum: f64,
    pub heaps: usize,
}

pub fn heap_series(catalog: &CycleCatalog, weights: &[f64], eps: f64) -> HeapSeries {
    let live: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut layers_cache: Vec<(Vec<usize>, f64, u64)> = Vec::new();
    trivial_heaps(catalog, weights, &live, 0, 0, &mut Vec::new(), 1.0, &mut layers_cache);
    let mut series = HeapSeries { total: 1.0, pyramid_sum: 0.0, heaps: 1 };
    let mut stack: Vec<Vec<usize>> = Vec::new();
    for (layer, w, _) in &layers_cache {
        if *w >= eps {
            stack.push(layer.clone());
            extend_heaps(catalog, &layers_cache, *w, eps, &mut stack, &mut series);
            stack.pop();
        }
    }
    series
}

#[allow(clippy::too_many_arguments)]
fn trivial_heaps(
    cat: &CycleCatalog,
    w: &[f64],
    live: &[usize],
    from: usize,
    used: u64,
    cur: &mut Vec<usize>,
    weight: f64,
    out: &mut Vec<(Vec<usize>, f64, u64)>,
) {
    for k in from..live.len() {
        let i = live[k];
        if cat.masks[i] & used == 0 {
            cur.push(i);
            let wt = weight * w[i];
            out.push((cur.clone(), wt, used | cat.masks[i]));
            trivial_heaps(cat, w, live, k + 1, used | cat.masks[i], cur, wt, out);
            cur.pop();
        }
    }
}

fn extend_heaps(
    cat: &CycleCatalog,
    layers: &[(Vec<usize>, f64, u64)],
    weight: f64,
    eps: f64,
    stack: &mut Vec<Vec<usize>>,
    series: &mut HeapSeries,
) {
    series.total += weight;
    series.heaps += 1;
    let mut h = CycleHeap::new();
    for layer in stack.iter() {
        for &i in layer {
            h.push(cat.cycles[i].clone());
        }
    }
    if h.is_pyramid() {
        series.pyramid_sum += weight / h.len() as f64;
    }
    let prev = stack.last().unwrap().clone();
    for (layer, w, _) in layers {
        let wt = weight * w;
        if wt < eps {
            continue;
        }
        // Every piece of the new layer must rest on the previous one.
        let supported = layer
            .iter()
            .all(|&i| prev.iter().any(|&j| cat.masks[i] & cat.masks[j] != 0));
        if supported {
            stack.push(layer.clone());
            extend_heaps(cat, layers, wt, eps, stack, series);
            stack.pop();
        }
    }
}
