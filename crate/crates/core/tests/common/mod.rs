#![allow(dead_code)]

use std::path::PathBuf;

use crsf_forge::cycle::{validate_assumptions, ValidationOptions};
use crsf_forge::{ConnectionGraph, CycleWeight};
use num_complex::Complex64;
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> ConnectionGraph {
    ConnectionGraph::load(fixture_path(name)).unwrap()
}

pub fn two_node(a: f64) -> (ConnectionGraph, CycleWeight) {
    let g = fixture("two_node.edges");
    let c = crsf_forge::OrientedCycle::new(&[0, 1]).unwrap();
    (g, CycleWeight::explicit([(c, a)]).unwrap())
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..n {
        if m[0][j] == Complex64::new(0.0, 0.0) {
            continue;
        }
        let minor: Vec<Vec<Complex64>> =
            m[1..].iter().map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect()).collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += m[0][j] * sign * cofactor_det(&minor);
    }
    total
}

/// Π = D⁻¹(W ⊙ Φ) assembled from edge data, with Φ_xy = exp(−i θ_xy).
pub fn pi_matrix(g: &ConnectionGraph) -> Vec<Vec<Complex64>> {
    let n = g.node_count();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for e in g.edges() {
        let d = Complex64::from_polar(1.0, -e.theta);
        m[e.u][e.v] = d * e.weight / g.degree(e.u);
        m[e.v][e.u] = d.conj() * e.weight / g.degree(e.v);
    }
    m
}

/// Δ = D − W ⊙ Φ assembled from edge data.
pub fn magnetic(g: &ConnectionGraph, shift: f64) -> Vec<Vec<Complex64>> {
    let n = g.node_count();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for x in 0..n {
        m[x][x] = Complex64::from(g.degree(x) + shift);
    }
    for e in g.edges() {
        let d = Complex64::from_polar(1.0, -e.theta);
        m[e.u][e.v] = -d * e.weight;
        m[e.v][e.u] = -d.conj() * e.weight;
    }
    m
}

/// Coefficients c_k of det(I − tΠ) = Σ c_k t^k, by interpolation at k + 1 points.
pub fn char_poly(pi: &[Vec<Complex64>]) -> Vec<f64> {
    let n = pi.len();
    let ts: Vec<f64> = (0..=n).map(|k| k as f64 * 0.5 - 1.0).collect();
    let vals: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let m: Vec<Vec<Complex64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { Complex64::from(1.0) } else { Complex64::from(0.0) } - pi[i][j] * t).collect())
                .collect();
            cofactor_det(&m).re
        })
        .collect();
    // Newton divided differences, then expand to monomial coefficients.
    let mut dd = vals.clone();
    for k in 1..=n {
        for i in (k..=n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (ts[i] - ts[i - k]);
        }
    }
    let mut coef = vec![0.0; n + 1];
    for k in (0..=n).rev() {
        // coef ← coef·(t − ts[k]) + dd[k]
        let mut next = vec![0.0; n + 1];
        for i in 0..n {
            next[i + 1] += coef[i];
            next[i] -= coef[i] * ts[k];
        }
        next[0] += dd[k];
        coef = next;
    }
    coef
}

pub fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * t + x)
}

/// Mean, variance and parity of T with E[t^T] = tⁿ p(1) / p(t), p the polynomial `c`.
pub fn law_from_poly(n: usize, c: &[f64]) -> (f64, f64, f64) {
    let p = |t| poly_eval(c, t);
    let d1: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, &x)| k as f64 * x).collect();
    let d2: Vec<f64> = d1.iter().enumerate().skip(1).map(|(k, &x)| k as f64 * x).collect();
    let (p0, p1, p2) = (p(1.0), poly_eval(&d1, 1.0), poly_eval(&d2, 1.0));
    let mean = n as f64 - p1 / p0;
    let var = -(p1 / p0 + p2 / p0 - (p1 / p0) * (p1 / p0));
    let parity = if n % 2 == 0 { 1.0 } else { -1.0 } * p0 / p(-1.0);
    (mean, var, parity)
}

/// Random connected graph with `n` nodes passing `determinantal_ok` for
/// determinantal weights, drawn by rejection.
pub fn random_assumption_graph<R: Rng>(rng: &mut R, n: usize) -> ConnectionGraph {
    loop {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < 0.6 {
                    edges.push((u, v, rng.gen_range(0.5..2.0), rng.gen_range(-0.6..0.6)));
                }
            }
        }
        let Ok(g) = ConnectionGraph::new(n, edges) else { continue };
        let r = validate_assumptions(&g, &CycleWeight::Determinantal, ValidationOptions::default());
        if r.determinantal_ok() {
            return g;
        }
    }
}
