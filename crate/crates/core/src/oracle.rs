//! Brute-force enumeration of oriented CRSFs and rooted MTSFs, the
//! determinantal identities they satisfy, and a Pearson goodness-of-fit test.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::cycle::{CycleWeight, OrientedCycle};
use crate::cyclepop::successor_cycles;
use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};
use crate::heaps::{green_generic, mgf_generic, trivial_heap_sum};
use crate::prs::for_each_successor_map;
use crate::spectral::{det, green_det, principal_minor_det, real_part, submatrix, tlaw, SpectralBundle, TLawMode};

pub use crate::cyclepop::stages_decompose;

pub const DEFAULT_MAX_MAPS: u64 = 5_000_000;

/// A finite measure on outcomes of type `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ensemble<K> {
    pub items: Vec<(K, f64)>,
    pub total: f64,
}

impl<K: Clone + Eq + Hash> Ensemble<K> {
    fn from_items(items: Vec<(K, f64)>) -> Self {
        let total = items.iter().map(|(_, w)| w).sum();
        Self { items, total }
    }

    /// True when the total mass vanishes, e.g. when every α is 0.
    pub fn is_degenerate(&self) -> bool {
        self.total <= 0.0
    }

    /// Outcomes with positive weight and their probabilities.
    pub fn law(&self) -> Vec<(K, f64)> {
        self.items
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(k, w)| (k.clone(), w / self.total))
            .collect()
    }

    pub fn probability_where<F: Fn(&K) -> bool>(&self, pred: F) -> f64 {
        self.items.iter().filter(|(k, _)| pred(k)).map(|(_, w)| w).sum::<f64>() / self.total
    }
}

fn check_support(g: &ConnectionGraph, extra: usize, max_maps: u64) -> Result<()> {
    let support: f64 = (0..g.node_count()).map(|x| (g.neighbors(x).len() + extra) as f64).product();
    if support > max_maps as f64 {
        return Err(Error::LimitExceeded(format!("{support} successor maps exceeds {max_maps}")));
    }
    Ok(())
}

/// Every total successor map with weight Π p_{x v(x)} · Π_c α(c).
pub fn enumerate_oriented_crsfs(g: &ConnectionGraph, a: &CycleWeight, max_maps: u64) -> Result<Ensemble<Vec<NodeId>>> {
    check_support(g, 0, max_maps)?;
    let mut items = Vec::new();
    for_each_successor_map(g, |v, p| {
        let w: f64 = successor_cycles(v).iter().map(|c| a.alpha(g, c)).product();
        items.push((v.to_vec(), p * w));
    });
    Ok(Ensemble::from_items(items))
}

/// Successor maps on the graph with an auxiliary root (`None`), weighted by
/// Π (w or q)/(deg + q) · Π_c α(c).
pub fn enumerate_rooted_mtsfs(
    g: &ConnectionGraph,
    a: &CycleWeight,
    q: f64,
    max_maps: u64,
) -> Result<Ensemble<Vec<Option<NodeId>>>> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must be positive")));
    }
    check_support(g, 1, max_maps)?;
    let n = g.node_count();
    let mut items = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let v: Vec<Option<NodeId>> = (0..n)
            .map(|x| (idx[x] < g.neighbors(x).len()).then(|| g.neighbors(x)[idx[x]].to))
            .collect();
        let mut p = 1.0;
        for x in 0..n {
            let num = match v[x] {
                Some(_) => g.neighbors(x)[idx[x]].weight,
                None => q,
            };
            p *= num / (g.degree(x) + q);
        }
        let w: f64 = partial_successor_cycles(&v).iter().map(|c| a.alpha(g, c)).product();
        items.push((v, p * w));
        let mut k = 0;
        loop {
            if k == n {
                return Ok(Ensemble::from_items(items));
            }
            idx[k] += 1;
            if idx[k] <= g.neighbors(k).len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Cycles of a partial successor map (`None` = root).
pub fn partial_successor_cycles(v: &[Option<NodeId>]) -> Vec<OrientedCycle> {
    let n = v.len();
    let mut state = vec![0u8; n];
    let mut out = Vec::new();
    for s in 0..n {
        let mut trail = Vec::new();
        let mut x = s;
        loop {
            if state[x] != 0 {
                break;
            }
            state[x] = 1;
            trail.push(x);
            match v[x] {
                Some(y) => x = y,
                None => break,
            }
        }
        if state[x] == 1 && v[x].is_some() {
            if let Some(j) = trail.iter().position(|&z| z == x) {
                out.push(OrientedCycle::new(&trail[j..]).expect("functional graph cycle"));
            }
        }
        for &z in &trail {
            state[z] = 2;
        }
    }
    out.sort();
    out
}

/// Undirected edge multiset of a successor map, as sorted (low, high) pairs.
pub fn undirected_edges(v: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    let mut e: Vec<_> = v.iter().enumerate().map(|(x, &y)| (x.min(y), x.max(y))).collect();
    e.sort_unstable();
    e
}

/// Merge orientations: each unoriented CRSF with weight Π w_e Π 2(1 − cos θ(c)).
pub fn unoriented_crsfs(g: &ConnectionGraph, max_maps: u64) -> Result<Ensemble<Vec<(NodeId, NodeId)>>> {
    check_support(g, 0, max_maps)?;
    let mut merged: BTreeMap<Vec<(NodeId, NodeId)>, f64> = BTreeMap::new();
    let a = CycleWeight::Determinantal;
    for_each_successor_map(g, |v, _| {
        let w: f64 = (0..v.len()).map(|x| g.weight(x, v[x]).unwrap()).product::<f64>()
            * successor_cycles(v).iter().map(|c| a.alpha(g, c)).product::<f64>();
        if w > 0.0 {
            *merged.entry(undirected_edges(v)).or_insert(0.0) += w;
        }
    });
    Ok(Ensemble::from_items(merged.into_iter().collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub rel_err: f64,
    pub pass: bool,
}

impl IdentityCheck {
    pub fn new(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        let rel_err = (value - expected).abs() / expected.abs().max(1e-300);
        Self { name: name.into(), value, expected, rel_err, pass: rel_err <= tol }
    }
}

/// Sum-over-forests identities for determinantal weights, plus the generic
/// mass identity for `a`.
pub fn check_normalizations(g: &ConnectionGraph, a: &CycleWeight, qs: &[f64], tol: f64) -> Result<Vec<IdentityCheck>> {
    let b = SpectralBundle::new(g);
    let det_delta = real_part(det(&b.magnetic), "det Δ")?;
    let det_a = CycleWeight::Determinantal;
    let mut out = Vec::new();

    let mut oriented = 0.0;
    for_each_successor_map(g, |v, _| {
        let w: f64 = (0..v.len()).map(|x| g.weight(x, v[x]).unwrap()).product::<f64>()
            * successor_cycles(v).iter().map(|c| det_a.alpha(g, c)).product::<f64>();
        oriented += w;
    });
    out.push(IdentityCheck::new("oriented CRSF sum = det Δ", oriented, det_delta, tol));

    let unoriented = unoriented_crsfs(g, DEFAULT_MAX_MAPS)?;
    let direct: f64 = unoriented.items.iter().map(|(edges, _)| unoriented_weight(g, edges)).sum();
    out.push(IdentityCheck::new("unoriented CRSF sum = det Δ", direct, det_delta, tol));

    for &q in qs {
        let mut shifted = b.magnetic.clone();
        for i in 0..g.node_count() {
            shifted[(i, i)] += Complex64::from(q);
        }
        let expected = real_part(det(&shifted), "det(Δ + qI)")?;
        let ens = enumerate_rooted_mtsfs(g, &det_a, q, DEFAULT_MAX_MAPS)?;
        // Undo the (deg + q) normalization to get Π (w or q) Π α.
        let scale: f64 = (0..g.node_count()).map(|x| g.degree(x) + q).product();
        out.push(IdentityCheck::new(format!("rooted MTSF sum = det(Δ + {q}I)"), ens.total * scale, expected, tol));
    }

    let generic = enumerate_oriented_crsfs(g, a, DEFAULT_MAX_MAPS)?;
    let z = trivial_heap_sum(g, a, 1.0, &[])?;
    out.push(IdentityCheck::new("CRSF mass / Z_triv(V, 1) = 1", generic.total / z, 1.0, tol));
    Ok(out)
}

/// Heap-based engines against the determinantal ones, pointwise on `grid` ⊂ (0, 1]:
/// Green functions at every node, the MGF of T, and Z_triv(V, t) = det(I − tΠ).
pub fn check_cross_engines(g: &ConnectionGraph, grid: &[f64], tol: f64) -> Result<Vec<IdentityCheck>> {
    let a = CycleWeight::Determinantal;
    let pi = SpectralBundle::new(g).connection_transition;
    let n = g.node_count();
    let mut out = Vec::new();
    for &t in grid {
        let mut m = pi.clone() * Complex64::from(-t);
        for i in 0..n {
            m[(i, i)] += Complex64::from(1.0);
        }
        let d = real_part(det(&m), "det(I − tΠ)")?;
        out.push(IdentityCheck::new(format!("Z_triv(V, {t}) = det(I − {t}Π)"), trivial_heap_sum(g, &a, t, &[])?, d, tol));
        for x in 0..n {
            out.push(IdentityCheck::new(
                format!("green_generic({t}, {x}) = green_det"),
                green_generic(g, &a, t, x, &[])?,
                green_det(g, t, x, &[])?,
                tol,
            ));
        }
    }
    let generic = mgf_generic(g, &a, grid)?;
    let spectral = tlaw(g, TLawMode::Crsf, grid)?.mgf;
    for ((t, x), (_, y)) in generic.into_iter().zip(spectral) {
        out.push(IdentityCheck::new(format!("mgf_generic({t}) = spectral mgf"), x, y, tol));
    }
    Ok(out)
}

/// Π w_e Π_c 2(1 − cos θ(c)) for an unoriented CRSF given by its edges.
fn unoriented_weight(g: &ConnectionGraph, edges: &[(NodeId, NodeId)]) -> f64 {
    let n = g.node_count();
    let mut w: f64 = edges.iter().map(|&(x, y)| g.weight(x, y).unwrap()).product();
    // Peel leaves; what remains is a disjoint union of cycles.
    let mut deg = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for &(x, y) in edges {
        deg[x] += 1;
        deg[y] += 1;
        adj[x].push(y);
        adj[y].push(x);
    }
    let mut alive = vec![true; n];
    let mut stack: Vec<NodeId> = (0..n).filter(|&x| deg[x] == 1).collect();
    while let Some(x) = stack.pop() {
        alive[x] = false;
        for &y in &adj[x] {
            if alive[y] {
                deg[y] -= 1;
                if deg[y] == 1 {
                    stack.push(y);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    for s in 0..n {
        if !alive[s] || seen[s] {
            continue;
        }
        let mut cyc = vec![s];
        seen[s] = true;
        let mut prev = usize::MAX;
        let mut x = s;
        loop {
            let next = adj[x].iter().copied().find(|&y| alive[y] && y != prev && !seen[y]);
            match next {
                Some(y) => {
                    seen[y] = true;
                    cyc.push(y);
                    prev = x;
                    x = y;
                }
                None => break,
            }
        }
        if cyc.len() < 3 {
            return 0.0;
        }
        let c = OrientedCycle::new(&cyc).expect("cycle");
        w *= 2.0 * CycleWeight::Determinantal.alpha(g, &c);
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncidenceCheck {
    pub enumerated: f64,
    pub formula: f64,
    pub abs_err: f64,
}

/// P(C ⊆ cycles of the CRSF) against ν(C) det((Δ⁻¹)_{nodes(C)}).
pub fn check_incidence(g: &ConnectionGraph, cycles: &[OrientedCycle]) -> Result<IncidenceCheck> {
    for (i, c) in cycles.iter().enumerate() {
        OrientedCycle::in_graph(g, c.nodes())?;
        if cycles[..i].iter().any(|d| d.shares_node(c)) {
            return Err(Error::InvalidArgument("cycles must be vertex-disjoint".into()));
        }
    }
    let ens = enumerate_oriented_crsfs(g, &CycleWeight::Determinantal, DEFAULT_MAX_MAPS)?;
    let enumerated = ens.probability_where(|v| {
        let cs = successor_cycles(v);
        cycles.iter().all(|c| cs.contains(c) || cs.contains(&c.reversed()))
    });
    let b = SpectralBundle::new(g);
    let inv = b.magnetic.clone().lu().try_inverse().ok_or_else(|| Error::Singular("Δ".into()))?;
    let mut nodes = Vec::new();
    let mut nu = 1.0;
    for c in cycles {
        nodes.extend_from_slice(c.nodes());
        let closed = c.closed();
        for w in closed.windows(2) {
            nu *= g.weight(w[0], w[1]).unwrap();
        }
        nu *= 2.0 * CycleWeight::Determinantal.alpha(g, c);
    }
    let formula = nu * real_part(det(&submatrix(&inv, &nodes)), "incidence minor")?;
    Ok(IncidenceCheck { enumerated, formula, abs_err: (enumerated - formula).abs() })
}

/// Edge-node incidence matrix B with Δ = B*B: row e = (u, v) is √w (e_u − φ_uv e_v).
pub fn incidence_matrix(g: &ConnectionGraph) -> DMatrix<Complex64> {
    let mut b = DMatrix::from_element(g.edge_count(), g.node_count(), Complex64::new(0.0, 0.0));
    for (i, e) in g.edges().iter().enumerate() {
        let s = e.weight.sqrt();
        let phi = g.phase(e.u, e.v).unwrap();
        b[(i, e.u)] = Complex64::from(s);
        b[(i, e.v)] = -phi * s;
    }
    b
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelCheck {
    pub subsets_checked: usize,
    pub max_abs_err: f64,
}

/// P(S ⊆ edges) = det K_S with K = B Δ⁻¹ B*, for all edge sets |S| ≤ `max_size`.
pub fn check_determinantal_kernel(g: &ConnectionGraph, max_size: usize) -> Result<KernelCheck> {
    let ens = unoriented_crsfs(g, DEFAULT_MAX_MAPS)?;
    let b = incidence_matrix(g);
    let delta = SpectralBundle::new(g).magnetic;
    let inv = delta.lu().try_inverse().ok_or_else(|| Error::Singular("Δ".into()))?;
    let k = &b * inv * b.adjoint();
    let edges: Vec<(NodeId, NodeId)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
    let m = edges.len();
    let mut subsets_checked = 0;
    let mut max_abs_err: f64 = 0.0;
    let mut subset = Vec::new();
    fn rec(
        from: usize,
        m: usize,
        max_size: usize,
        subset: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if !subset.is_empty() {
            visit(subset)?;
        }
        if subset.len() == max_size {
            return Ok(());
        }
        for i in from..m {
            subset.push(i);
            rec(i + 1, m, max_size, subset, visit)?;
            subset.pop();
        }
        Ok(())
    }
    rec(0, m, max_size, &mut subset, &mut |s: &[usize]| {
        let p = ens.probability_where(|es| s.iter().all(|&i| es.binary_search(&edges[i]).is_ok()));
        let d = real_part(det(&submatrix(&k, s)), "kernel minor")?;
        max_abs_err = max_abs_err.max((p - d).abs());
        subsets_checked += 1;
        Ok(())
    })?;
    Ok(KernelCheck { subsets_checked, max_abs_err })
}

/// det of the principal minor of Δ on `keep`, as a real number.
pub fn magnetic_minor(g: &ConnectionGraph, removed: &[NodeId]) -> Result<f64> {
    real_part(principal_minor_det(&SpectralBundle::new(g).magnetic, removed), "minor")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub categories: usize,
    /// Observations that fell on zero-probability outcomes.
    pub out_of_support: u64,
}

impl GofResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Pearson chi-square test of `observed` against `probs`; categories with
/// expected count below 5 are pooled.
pub fn gof_test(observed: &[u64], probs: &[f64]) -> Result<GofResult> {
    if observed.len() != probs.len() {
        return Err(Error::InvalidArgument("observed and expected lengths differ".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let nf = total as f64;
    let out_of_support: u64 = observed.iter().zip(probs).filter(|(_, &p)| p <= 0.0).map(|(o, _)| o).sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            continue;
        }
        let e = p * nf;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            bins.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        if pooled.1 < 5.0 && !bins.is_empty() {
            let (i, _) = bins
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .unwrap();
            let (o, e) = bins.remove(i);
            pooled.0 += o;
            pooled.1 += e;
        }
        bins.push(pooled);
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if out_of_support > 0 {
        0.0
    } else if dof == 0 || statistic <= 0.0 {
        1.0
    } else {
        gamma_ur(dof as f64 / 2.0, statistic / 2.0)
    };
    Ok(GofResult { statistic, dof, p_value, categories: bins.len(), out_of_support })
}

/// Tally samples against an exact law; unknown outcomes are counted apart.
pub fn tally<K: Eq + Hash>(law: &[(K, f64)], samples: impl IntoIterator<Item = K>) -> (Vec<u64>, Vec<f64>) {
    let index: HashMap<&K, usize> = law.iter().enumerate().map(|(i, (k, _))| (k, i)).collect();
    let mut counts = vec![0u64; law.len() + 1];
    for s in samples {
        match index.get(&s) {
            Some(&i) => counts[i] += 1,
            None => counts[law.len()] += 1,
        }
    }
    let mut probs: Vec<f64> = law.iter().map(|(_, p)| *p).collect();
    probs.push(0.0);
    (counts, probs)
}
