//! Partial rejection sampling of oriented CRSFs.
//!
//! Each node picks a neighbour and each oriented cycle c carries a coin b_c
//! with P(b_c = 1) = α(c). The constraint for c fails when c is a cycle of the
//! successor map and b_c = 0. Violated constraints always have disjoint scopes,
//! so resampling the σ-minimal one until none fails samples exactly.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::cycle::{CycleWeight, OrientedCycle};
use crate::cyclepop::{successor_cycles, SamplerRng};
use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};
use crate::heaps::{CycleCatalog, CycleHeap, DEFAULT_ENUMERATION_LIMIT};

/// Priority σ among constraints; the minimal violated constraint is resampled.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintOrder {
    Lexicographic,
    ReverseLexicographic,
    /// Explicit ranks; unranked cycles come after all ranked ones, lexicographically.
    Ranked(BTreeMap<OrientedCycle, usize>),
}

impl ConstraintOrder {
    fn pick<'c>(&self, violated: &'c [OrientedCycle]) -> &'c OrientedCycle {
        match self {
            ConstraintOrder::Lexicographic => violated.iter().min().unwrap(),
            ConstraintOrder::ReverseLexicographic => violated.iter().max().unwrap(),
            ConstraintOrder::Ranked(r) => violated
                .iter()
                .min_by_key(|c| (r.get(*c).copied().unwrap_or(usize::MAX), *c))
                .unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrsConfig {
    pub seed: u64,
    pub order: ConstraintOrder,
    pub max_resamples: Option<u64>,
}

impl Default for PrsConfig {
    fn default() -> Self {
        Self { seed: 0, order: ConstraintOrder::Lexicographic, max_resamples: Some(100_000_000) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrsTrace {
    pub successor: Vec<NodeId>,
    pub cycles: Vec<OrientedCycle>,
    /// Number of resamplings per constraint.
    pub resample_counts: BTreeMap<OrientedCycle, u64>,
    pub total_resamples: u64,
    /// Resampled constraints in chronological order.
    pub events: Vec<OrientedCycle>,
}

impl PrsTrace {
    /// Heap of resampled scopes, built by chronological labelling.
    pub fn heap(&self) -> CycleHeap {
        let mut h = CycleHeap::new();
        for c in &self.events {
            h.push(c.clone());
        }
        h
    }

    /// CSV with columns `constraint_id,cycle_length,resample_count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "constraint_id,cycle_length,resample_count")?;
        for (c, n) in &self.resample_counts {
            let id: Vec<String> = c.nodes().iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{},{}", id.join("-"), c.len(), n)?;
        }
        Ok(())
    }
}

fn draw_successor<R: Rng>(g: &ConnectionGraph, x: NodeId, rng: &mut R) -> NodeId {
    let u = rng.gen::<f64>() * g.degree(x);
    g.pick_neighbor(x, u)
}

pub fn prs_run(g: &ConnectionGraph, a: &CycleWeight, cfg: &PrsConfig) -> Result<PrsTrace> {
    let n = g.node_count();
    let mut rng = SamplerRng::seed_from_u64(cfg.seed);
    let cap = cfg.max_resamples.unwrap_or(u64::MAX);
    let mut v: Vec<NodeId> = (0..n).map(|x| draw_successor(g, x, &mut rng)).collect();
    // Coins are drawn on first inspection; an uninspected coin is independent
    // of everything else, so this matches drawing them all up front.
    let mut coins: HashMap<OrientedCycle, bool> = HashMap::new();
    let mut trace = PrsTrace {
        successor: Vec::new(),
        cycles: Vec::new(),
        resample_counts: BTreeMap::new(),
        total_resamples: 0,
        events: Vec::new(),
    };
    loop {
        let cycles = successor_cycles(&v);
        let mut violated = Vec::new();
        for c in &cycles {
            let b = *coins.entry(c.clone()).or_insert_with(|| rng.gen::<f64>() < a.alpha(g, c));
            if !b {
                violated.push(c.clone());
            }
        }
        if violated.is_empty() {
            trace.successor = v;
            trace.cycles = cycles;
            return Ok(trace);
        }
        let mut seen = vec![false; n];
        for c in &violated {
            for &x in c.nodes() {
                if std::mem::replace(&mut seen[x], true) {
                    return Err(Error::Internal(format!("violated scopes overlap at node {x}")));
                }
            }
        }
        if trace.total_resamples >= cap {
            return Err(Error::StepCapExceeded(cap));
        }
        let c = cfg.order.pick(&violated).clone();
        for &x in c.nodes() {
            v[x] = draw_successor(g, x, &mut rng);
        }
        coins.remove(&c);
        *trace.resample_counts.entry(c.clone()).or_insert(0) += 1;
        trace.total_resamples += 1;
        trace.events.push(c);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrsExactStats {
    /// P(Φ): probability that the product measure satisfies every constraint.
    pub p_valid: f64,
    /// E[resamplings of c] = P(bad = {c}) / P(Φ).
    pub expected_per_cycle: BTreeMap<OrientedCycle, f64>,
    /// P(|bad| = 1) / P(Φ).
    pub expected_total: f64,
}

/// Exact resampling statistics by enumerating successor maps; coins are
/// summed out analytically.
pub fn resample_stats_exact(g: &ConnectionGraph, a: &CycleWeight, max_maps: u64) -> Result<PrsExactStats> {
    let n = g.node_count();
    let support: f64 = (0..n).map(|x| g.neighbors(x).len() as f64).product();
    if support > max_maps as f64 {
        return Err(Error::LimitExceeded(format!("{support} successor maps exceeds {max_maps}")));
    }
    let mut p_valid = 0.0;
    let mut single: BTreeMap<OrientedCycle, f64> = BTreeMap::new();
    for_each_successor_map(g, |v, p| {
        let cycles = successor_cycles(v);
        let alphas: Vec<f64> = cycles.iter().map(|c| a.alpha(g, c)).collect();
        let all: f64 = alphas.iter().product();
        p_valid += p * all;
        for (i, c) in cycles.iter().enumerate() {
            let others: f64 = alphas.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x).product();
            *single.entry(c.clone()).or_insert(0.0) += p * (1.0 - alphas[i]) * others;
        }
    });
    if p_valid <= 0.0 {
        return Err(Error::Assumption("no valid assignment has positive probability".into()));
    }
    let expected_per_cycle: BTreeMap<_, _> = single.into_iter().map(|(c, s)| (c, s / p_valid)).collect();
    let expected_total = expected_per_cycle.values().sum();
    Ok(PrsExactStats { p_valid, expected_per_cycle, expected_total })
}

/// Visit every total successor map with its product probability Π p_{x v(x)}.
pub fn for_each_successor_map<F: FnMut(&[NodeId], f64)>(g: &ConnectionGraph, mut f: F) {
    let n = g.node_count();
    let mut idx = vec![0usize; n];
    let mut v: Vec<NodeId> = (0..n).map(|x| g.neighbors(x)[0].to).collect();
    loop {
        let p: f64 = (0..n).map(|x| g.neighbors(x)[idx[x]].weight / g.degree(x)).product();
        f(&v, p);
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            idx[k] += 1;
            if idx[k] < g.neighbors(k).len() {
                v[k] = g.neighbors(k)[idx[k]].to;
                break;
            }
            idx[k] = 0;
            v[k] = g.neighbors(k)[0].to;
            k += 1;
        }
    }
}

/// E[Π_c t_c^{N_c}] = Z_triv(w) / Z_triv(w · t) with w(c) = q(c)(1 − α(c)).
pub fn resample_mgf_exact<F: Fn(&OrientedCycle) -> f64>(g: &ConnectionGraph, a: &CycleWeight, t: F) -> Result<f64> {
    let cat = CycleCatalog::new(g, DEFAULT_ENUMERATION_LIMIT)?;
    let w = cat.weights(g, a, 1.0);
    let wt: Vec<f64> = cat.cycles().iter().zip(&w).map(|(c, x)| x * t(c)).collect();
    let full = cat.full_mask();
    let den = cat.alternating_sum(&wt, full);
    if den.abs() < 1e-300 {
        return Err(Error::Singular("trivial-heap sum vanishes".into()));
    }
    Ok(cat.alternating_sum(&w, full) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn two_node(a: f64) -> (ConnectionGraph, CycleWeight) {
        let g = ConnectionGraph::new(2, [(0, 1, 1.0, 0.0)]).unwrap();
        (g, CycleWeight::explicit([(OrientedCycle::new(&[0, 1]).unwrap(), a)]).unwrap())
    }

    #[test]
    fn two_node_expectation() {
        for a in [0.1, 0.5, 0.9, 1.0] {
            let (g, w) = two_node(a);
            let s = resample_stats_exact(&g, &w, 1000).unwrap();
            assert!((s.expected_total - (1.0 - a) / a).abs() < 1e-12);
            assert!((s.p_valid - a).abs() < 1e-15);
        }
    }

    #[test]
    fn mgf_matches_geometric() {
        let (g, w) = two_node(0.4);
        let t = 0.6;
        let m = resample_mgf_exact(&g, &w, |_| t).unwrap();
        assert!((m - 0.4 / (1.0 - 0.6 * t)).abs() < 1e-12);
    }

    #[test]
    fn k3_runs_are_valid() {
        let g = ConnectionGraph::new(3, [(0, 1, 1.0, FRAC_PI_2), (1, 2, 1.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap();
        for seed in 0..100 {
            let cfg = PrsConfig { seed, ..PrsConfig::default() };
            let tr = prs_run(&g, &CycleWeight::Determinantal, &cfg).unwrap();
            assert_eq!(tr.cycles.len(), 1);
            assert_eq!(tr.cycles[0].len(), 3);
            assert_eq!(tr.events.len() as u64, tr.total_resamples);
            assert_eq!(tr.heap().len(), tr.events.len());
        }
    }

    #[test]
    fn enumeration_visits_every_map() {
        let g = ConnectionGraph::new(3, [(0, 1, 1.0, 0.0), (1, 2, 2.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap();
        let mut count = 0;
        let mut mass = 0.0;
        for_each_successor_map(&g, |_, p| {
            count += 1;
            mass += p;
        });
        assert_eq!(count, 8);
        assert!((mass - 1.0).abs() < 1e-15);
    }
}
