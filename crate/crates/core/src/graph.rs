//! Weighted undirected graphs carrying a U(1)-connection.
//!
//! Each undirected edge stores one angle ϑ for its low-id → high-id
//! orientation. The opposite orientation carries −ϑ mod 2π, so the phases
//! φ_xy = exp(−iϑ(xy)) satisfy φ_yx = conj(φ_xy) by construction.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Wrap an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
    /// Angle of the `u → v` orientation, with `u < v`.
    pub theta: f64,
}

/// One outgoing half-edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub to: NodeId,
    pub weight: f64,
    /// ϑ of this orientation, in `[0, 2π)`.
    pub theta: f64,
}

impl Arc {
    pub fn phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, -self.theta)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    node_count: usize,
    edges: Vec<Edge>,
}

#[derive(Clone, Debug)]
pub struct ConnectionGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Arc>>,
    cumulative: Vec<Vec<f64>>,
    degrees: Vec<f64>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl ConnectionGraph {
    /// Build a graph from `(u, v, w, theta)` tuples, where `theta` is the
    /// angle of the `u → v` orientation as given.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, f64, f64)>,
    {
        let mut b = Builder::new(n)?;
        for (u, v, w, theta) in edges {
            b.add(u, v, w, theta).map_err(|msg| Error::InvalidGraph(msg))?;
        }
        b.finish()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, x: NodeId) -> &[Arc] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: NodeId) -> f64 {
        self.degrees[x]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn edge_index(&self, x: NodeId, y: NodeId) -> Option<usize> {
        let key = if x < y { (x, y) } else { (y, x) };
        self.index.get(&key).copied()
    }

    pub fn is_adjacent(&self, x: NodeId, y: NodeId) -> bool {
        self.edge_index(x, y).is_some()
    }

    pub fn weight(&self, x: NodeId, y: NodeId) -> Option<f64> {
        self.edge_index(x, y).map(|i| self.edges[i].weight)
    }

    /// ϑ(xy) in `[0, 2π)`.
    pub fn angle(&self, x: NodeId, y: NodeId) -> Option<f64> {
        self.edge_index(x, y).map(|i| {
            let e = &self.edges[i];
            if e.u == x {
                e.theta
            } else {
                normalize_angle(-e.theta)
            }
        })
    }

    /// ±ϑ of the reference orientation, so that `signed_angle(x, y) +
    /// signed_angle(y, x) == 0` exactly.
    pub fn signed_angle(&self, x: NodeId, y: NodeId) -> Option<f64> {
        self.edge_index(x, y).map(|i| {
            let e = &self.edges[i];
            if e.u == x {
                e.theta
            } else {
                -e.theta
            }
        })
    }

    pub fn phase(&self, x: NodeId, y: NodeId) -> Option<Complex64> {
        self.angle(x, y).map(|t| Complex64::from_polar(1.0, -t))
    }

    /// p_xy = w_xy / deg(x), or 0 for non-adjacent pairs.
    pub fn transition(&self, x: NodeId, y: NodeId) -> f64 {
        self.weight(x, y).map_or(0.0, |w| w / self.degrees[x])
    }

    /// Draw a neighbour of `x` with probability proportional to the weight,
    /// given `u` uniform in `[0, deg(x))`.
    pub(crate) fn pick_neighbor(&self, x: NodeId, u: f64) -> NodeId {
        let cum = &self.cumulative[x];
        let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.adjacency[x][i].to
    }

    /// Sum of signed angles along a path, not reduced mod 2π.
    pub fn path_angle(&self, path: &[NodeId]) -> Result<f64> {
        let mut total = 0.0;
        for w in path.windows(2) {
            total += self.signed_angle(w[0], w[1]).ok_or(Error::NotAdjacent(w[0], w[1]))?;
        }
        Ok(total)
    }

    /// Product of the edge phases along `path`, evaluated as exp(−i Σϑ).
    pub fn holonomy(&self, path: &[NodeId]) -> Result<Complex64> {
        let theta = self.path_angle(path)?;
        if theta == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(Complex64::from_polar(1.0, -theta))
    }

    /// Product of transition probabilities along `path`.
    pub fn path_probability(&self, path: &[NodeId]) -> Result<f64> {
        let mut q = 1.0;
        for w in path.windows(2) {
            if !self.is_adjacent(w[0], w[1]) {
                return Err(Error::NotAdjacent(w[0], w[1]));
            }
            q *= self.transition(w[0], w[1]);
        }
        Ok(q)
    }

    pub fn from_edge_list<R: Read>(reader: R) -> Result<Self> {
        let mut builder: Option<Builder> = None;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            match builder.as_mut() {
                None => {
                    let n: usize = content
                        .parse()
                        .map_err(|_| parse_err(format!("expected node count, got {content:?}")))?;
                    builder = Some(Builder::new(n).map_err(|e| parse_err(e.to_string()))?);
                }
                Some(b) => {
                    let fields: Vec<&str> = content.split_whitespace().collect();
                    if fields.len() != 4 {
                        return Err(parse_err(format!(
                            "expected `u v w theta`, got {} fields",
                            fields.len()
                        )));
                    }
                    let u: NodeId = fields[0]
                        .parse()
                        .map_err(|_| parse_err(format!("bad node id {:?}", fields[0])))?;
                    let v: NodeId = fields[1]
                        .parse()
                        .map_err(|_| parse_err(format!("bad node id {:?}", fields[1])))?;
                    let w: f64 = fields[2]
                        .parse()
                        .map_err(|_| parse_err(format!("bad weight {:?}", fields[2])))?;
                    let theta: f64 = fields[3]
                        .parse()
                        .map_err(|_| parse_err(format!("bad angle {:?}", fields[3])))?;
                    b.add(u, v, w, theta).map_err(parse_err)?;
                }
            }
        }
        builder
            .ok_or_else(|| Error::Parse { line: 0, msg: "empty graph file".into() })?
            .finish()
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let file: GraphFile = serde_json::from_reader(reader)?;
        let mut b = Builder::new(file.node_count)?;
        for (i, e) in file.edges.iter().enumerate() {
            b.add(e.u, e.v, e.weight, e.theta)
                .map_err(|msg| Error::InvalidGraph(format!("edge #{i}: {msg}")))?;
        }
        b.finish()
    }

    /// Load by extension: `.json` is JSON, anything else is an edge list.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(f)
        } else {
            Self::from_edge_list(f)
        }
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.n)?;
        for e in &self.edges {
            writeln!(w, "{} {} {} {}", e.u, e.v, e.weight, e.theta)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphFile {
            node_count: self.n,
            edges: self.edges.clone(),
        })?)
    }

    /// Copy of the graph with every angle replaced by `f(edge)`.
    pub fn with_angles<F: Fn(&Edge) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(self.n, self.edges.iter().map(|e| (e.u, e.v, e.weight, f(e))))
    }
}

struct Builder {
    n: usize,
    edges: Vec<Edge>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl Builder {
    fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        Ok(Self { n, edges: Vec::new(), index: HashMap::new() })
    }

    fn add(&mut self, u: NodeId, v: NodeId, w: f64, theta: f64) -> std::result::Result<(), String> {
        if u >= self.n || v >= self.n {
            return Err(format!("node id out of range in edge ({u}, {v}) for n = {}", self.n));
        }
        if u == v {
            return Err(format!("self-loop at node {u}"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(format!("nonpositive weight {w} on edge ({u}, {v})"));
        }
        if !theta.is_finite() {
            return Err(format!("non-finite angle on edge ({u}, {v})"));
        }
        let (a, b, t) = if u < v { (u, v, theta) } else { (v, u, -theta) };
        if self.index.contains_key(&(a, b)) {
            return Err(format!("duplicate edge ({u}, {v})"));
        }
        self.index.insert((a, b), self.edges.len());
        self.edges.push(Edge { u: a, v: b, weight: w, theta: normalize_angle(t) });
        Ok(())
    }

    fn finish(self) -> Result<ConnectionGraph> {
        let n = self.n;
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            adjacency[e.u].push(Arc { to: e.v, weight: e.weight, theta: e.theta });
            adjacency[e.v].push(Arc { to: e.u, weight: e.weight, theta: normalize_angle(-e.theta) });
        }
        for arcs in adjacency.iter_mut() {
            arcs.sort_by_key(|a| a.to);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for a in &adjacency[x] {
                if !seen[a.to] {
                    seen[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGraph(format!("graph is disconnected (node {x} unreachable from 0)")));
        }
        let degrees: Vec<f64> = adjacency.iter().map(|a| a.iter().map(|x| x.weight).sum()).collect();
        let cumulative = adjacency
            .iter()
            .map(|arcs| {
                let mut acc = 0.0;
                arcs.iter()
                    .map(|a| {
                        acc += a.weight;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(ConnectionGraph {
            n,
            edges: self.edges,
            adjacency,
            cumulative,
            degrees,
            index: self.index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn smallest_graph() {
        let g = ConnectionGraph::from_edge_list("2\n0 1 1.0 0.0".as_bytes()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degree(0), 1.0);
        assert_eq!(g.degree(1), 1.0);
    }

    #[test]
    fn reverse_angle_is_negated() {
        let src = "3\n# triangle\n0 1 1 0\n1 2 1 1.5707963267948966\n0 2 1 0\n";
        let g = ConnectionGraph::from_edge_list(src.as_bytes()).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 2.0));
        assert!((g.angle(2, 1).unwrap() - 3.0 * FRAC_PI_2).abs() < 1e-15);
        let p = g.phase(1, 2).unwrap() * g.phase(2, 1).unwrap();
        assert!((p - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_lines_with_line_numbers() {
        let err = ConnectionGraph::from_edge_list("2\n1 1 1.0 0.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ConnectionGraph::from_edge_list("3\n0 1 1 0\n1 0 1 0\n1 2 1 0".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ConnectionGraph::from_edge_list("2\n\n0 1 -1 0".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ConnectionGraph::from_edge_list("3\n0 1 1 0".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)), "{err}");
    }

    #[test]
    fn holonomy_of_backtrack_and_triangle() {
        let g = ConnectionGraph::new(3, [(0, 1, 1.0, FRAC_PI_2), (1, 2, 1.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap();
        assert_eq!(g.holonomy(&[0, 1, 0]).unwrap(), Complex64::new(1.0, 0.0));
        let fwd = g.holonomy(&[0, 1, 2, 0]).unwrap();
        let bwd = g.holonomy(&[0, 2, 1, 0]).unwrap();
        assert!((fwd - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((bwd - fwd.conj()).norm() < 1e-12);
        assert!(matches!(g.holonomy(&[0, 1, 0, 2, 2]), Err(Error::NotAdjacent(2, 2))));
    }

    #[test]
    fn json_round_trip() {
        let g = ConnectionGraph::new(3, [(0, 1, 2.0, 0.3), (2, 1, 1.0, 0.1)]).unwrap();
        let h = ConnectionGraph::from_json(g.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(g.edges(), h.edges());
    }
}
