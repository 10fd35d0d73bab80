//! Magnetic Laplacian, transition matrices and closed-form running-time laws.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};

pub type CMatrix = DMatrix<Complex64>;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Truncate a mathematically real quantity, rejecting a large imaginary part.
/// Rounding in near-singular solves grows with the condition number, so the
/// bound is loose; assembly bugs give imaginary parts of order |re|.
pub fn real_part(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() <= 1e-6 * (1.0 + z.re.abs()) {
        Ok(z.re)
    } else {
        Err(Error::Internal(format!("{what} should be real but is {z}")))
    }
}

#[derive(Clone, Debug)]
pub struct SpectralBundle {
    pub degree: CMatrix,
    /// W ⊙ Φ
    pub phase_adjacency: CMatrix,
    /// Δ = D − W ⊙ Φ
    pub magnetic: CMatrix,
    /// Λ = D − W
    pub combinatorial: CMatrix,
    /// P = D⁻¹ W
    pub transition: CMatrix,
    /// Π = D⁻¹ (W ⊙ Φ)
    pub connection_transition: CMatrix,
}

impl SpectralBundle {
    pub fn new(g: &ConnectionGraph) -> Self {
        let n = g.node_count();
        let mut degree = CMatrix::zeros(n, n);
        let mut wphi = CMatrix::zeros(n, n);
        let mut w = CMatrix::zeros(n, n);
        for x in 0..n {
            degree[(x, x)] = Complex64::from(g.degree(x));
            for a in g.neighbors(x) {
                w[(x, a.to)] = Complex64::from(a.weight);
                wphi[(x, a.to)] = a.phase() * a.weight;
            }
        }
        let mut transition = w.clone();
        let mut pi = wphi.clone();
        for x in 0..n {
            let d = g.degree(x);
            transition.row_mut(x).iter_mut().for_each(|v| *v /= d);
            pi.row_mut(x).iter_mut().for_each(|v| *v /= d);
        }
        Self {
            magnetic: &degree - &wphi,
            combinatorial: &degree - &w,
            degree,
            phase_adjacency: wphi,
            transition,
            connection_transition: pi,
        }
    }
}

/// Rows and columns `keep` of `m`, in that order.
pub fn submatrix(m: &CMatrix, keep: &[usize]) -> CMatrix {
    CMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])])
}

fn complement(n: usize, removed: &[NodeId]) -> Vec<usize> {
    let mut drop = vec![false; n];
    for &r in removed {
        drop[r] = true;
    }
    (0..n).filter(|&i| !drop[i]).collect()
}

pub fn det(m: &CMatrix) -> Complex64 {
    if m.nrows() == 0 {
        return ONE;
    }
    m.clone().lu().determinant()
}

/// det of `m` with the rows and columns in `removed` deleted.
pub fn principal_minor_det(m: &CMatrix, removed: &[NodeId]) -> Complex64 {
    det(&submatrix(m, &complement(m.nrows(), removed)))
}

fn identity_minus(t: f64, m: &CMatrix) -> CMatrix {
    let mut a = m * Complex64::from(-t);
    for i in 0..a.nrows() {
        a[(i, i)] += ONE;
    }
    a
}

fn inverse(m: &CMatrix, what: &str) -> Result<CMatrix> {
    m.clone()
        .lu()
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// ((I − tΠ_S)⁻¹)_xx with S = V ∖ avoid.
pub fn green_det(g: &ConnectionGraph, t: f64, x: NodeId, avoid: &[NodeId]) -> Result<f64> {
    if avoid.contains(&x) {
        return Err(Error::InvalidArgument(format!("node {x} is in the avoided set")));
    }
    if x >= g.node_count() {
        return Err(Error::InvalidArgument(format!("node {x} out of range")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must lie in (0, 1]")));
    }
    let keep = complement(g.node_count(), avoid);
    let pos = keep.iter().position(|&k| k == x).unwrap();
    let pi = SpectralBundle::new(g).connection_transition;
    let a = identity_minus(t, &submatrix(&pi, &keep));
    let mut e = DVector::from_element(keep.len(), ZERO);
    e[pos] = ONE;
    let lu = a.lu();
    let d = lu.determinant();
    if d.norm() < 1e-13 {
        return Err(Error::Singular(format!("I − tΠ on V∖{avoid:?} has determinant {d}")));
    }
    let sol = lu.solve(&e).ok_or_else(|| Error::Singular("green function system".into()))?;
    real_part(sol[pos], "Green function")
}

/// Π_i G(1, x_i, x_i; {x_1..x_{i-1}}) over an ordering of all nodes.
pub fn telescoping_green_product(g: &ConnectionGraph, ordering: &[NodeId]) -> Result<f64> {
    let mut prod = 1.0;
    for (i, &x) in ordering.iter().enumerate() {
        prod *= green_det(g, 1.0, x, &ordering[..i])?;
    }
    Ok(prod)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TLawMode {
    Crsf,
    Mtsf { q: f64 },
    Tree { root: NodeId },
    Forest { q: f64 },
}

impl fmt::Display for TLawMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TLawMode::Crsf => write!(f, "crsf"),
            TLawMode::Mtsf { q } => write!(f, "mtsf(q={q})"),
            TLawMode::Tree { root } => write!(f, "tree(root={root})"),
            TLawMode::Forest { q } => write!(f, "forest(q={q})"),
        }
    }
}

impl Serialize for TLawMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Analytic law of the number of walk steps.
#[derive(Clone, Debug, Serialize)]
pub struct TLawReport {
    pub mode: TLawMode,
    pub mean: f64,
    pub variance: f64,
    /// E[(−1)^T]; only available for determinantal weights.
    pub parity: Option<f64>,
    /// (t, E[t^T]) pairs.
    pub mgf: Vec<(f64, f64)>,
}

impl TLawReport {
    pub fn sd(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

pub fn default_mgf_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Law of T when the walk on `k` transient states has substochastic kernel `m`:
/// E[t^T] = t^k det(I − M) / det(I − tM).
fn law_from_kernel(mode: TLawMode, m: &CMatrix, grid: &[f64]) -> Result<TLawReport> {
    let k = m.nrows();
    let i_minus = identity_minus(1.0, m);
    let det_minus = det(&i_minus);
    if det_minus.norm() < 1e-300 {
        return Err(Error::Singular(format!("det(I − M) = {det_minus} for {mode}")));
    }
    let a = m * inverse(&i_minus, "I − M")?;
    let tr_a = real_part(a.trace(), "Tr A")?;
    let tr_a2 = real_part((&a * &a).trace(), "Tr A²")?;
    let det_plus = det(&identity_minus(-1.0, m));
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let parity = real_part(det_minus / det_plus * sign, "parity")?;
    let mut mgf = Vec::with_capacity(grid.len());
    for &t in grid {
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("mgf grid point {t} outside [-1, 1]")));
        }
        let d = det(&identity_minus(t, m));
        let v = real_part(Complex64::from(t.powi(k as i32)) * det_minus / d, "mgf")?;
        mgf.push((t, v));
    }
    Ok(TLawReport { mode, mean: k as f64 + tr_a, variance: tr_a + tr_a2, parity: Some(parity), mgf })
}

/// Eigenvalues of the Hermitian matrix D^{-1/2} (W⊙Φ) D^{-1/2}, which is similar to Π.
pub fn normalized_spectrum(g: &ConnectionGraph) -> Vec<f64> {
    let n = g.node_count();
    let b = SpectralBundle::new(g);
    let s: Vec<f64> = g.degrees().iter().map(|d| d.sqrt()).collect();
    let h = CMatrix::from_fn(n, n, |i, j| b.phase_adjacency[(i, j)] / (s[i] * s[j]));
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of the normalized magnetic Laplacian I − D^{-1/2}(W⊙Φ)D^{-1/2}.
pub fn lambda_min(g: &ConnectionGraph) -> f64 {
    1.0 - normalized_spectrum(g).last().copied().unwrap_or(0.0)
}

/// Eigenvalues of Π computed from a general (non-Hermitian) Schur form.
pub fn pi_eigenvalues(g: &ConnectionGraph) -> Result<Vec<Complex64>> {
    let pi = SpectralBundle::new(g).connection_transition;
    let schur = nalgebra::linalg::Schur::try_new(pi, 1e-14, 10_000)
        .ok_or_else(|| Error::Internal("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Law of T for CyclePopping with determinantal weights.
pub fn tlaw_crsf(g: &ConnectionGraph, grid: &[f64]) -> Result<TLawReport> {
    let spec = normalized_spectrum(g);
    let (lo, hi) = (spec[0], spec[spec.len() - 1]);
    if hi >= 1.0 - 1e-12 {
        return Err(Error::Assumption(format!(
            "connection is trivial (largest eigenvalue of Π is {hi})"
        )));
    }
    if lo <= -1.0 + 1e-12 {
        return Err(Error::Assumption(format!(
            "sign-flipped connection is trivial (smallest eigenvalue of Π is {lo})"
        )));
    }
    let pi = SpectralBundle::new(g).connection_transition;
    law_from_kernel(TLawMode::Crsf, &pi, grid)
}

/// Law of T for the tree, forest, MTSF and CRSF samplers.
pub fn tlaw(g: &ConnectionGraph, mode: TLawMode, grid: &[f64]) -> Result<TLawReport> {
    let n = g.node_count();
    let b = SpectralBundle::new(g);
    let shifted = |adj: &CMatrix, q: f64| -> Result<CMatrix> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!("q = {q} must be positive")));
        }
        let mut m = adj.clone();
        for x in 0..n {
            let d = g.degree(x) + q;
            m.row_mut(x).iter_mut().for_each(|v| *v /= d);
        }
        Ok(m)
    };
    match mode {
        TLawMode::Crsf => tlaw_crsf(g, grid),
        TLawMode::Tree { root } => {
            if root >= n {
                return Err(Error::InvalidArgument(format!("root {root} out of range")));
            }
            let keep = complement(n, &[root]);
            law_from_kernel(mode, &submatrix(&b.transition, &keep), grid)
        }
        TLawMode::Forest { q } => {
            let w = &b.degree - &b.combinatorial;
            law_from_kernel(mode, &shifted(&w, q)?, grid)
        }
        TLawMode::Mtsf { q } => law_from_kernel(mode, &shifted(&b.phase_adjacency, q)?, grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn k3() -> ConnectionGraph {
        ConnectionGraph::new(3, [(0, 1, 1.0, FRAC_PI_2), (1, 2, 1.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap()
    }

    #[test]
    fn minors() {
        let b = SpectralBundle::new(&k3());
        assert!((principal_minor_det(&b.magnetic, &[]) - Complex64::from(2.0)).norm() < 1e-12);
        assert!(principal_minor_det(&b.combinatorial, &[]).norm() < 1e-12);
        assert_eq!(principal_minor_det(&b.magnetic, &[0, 1, 2]), ONE);
        for x in 0..3 {
            assert_eq!(b.connection_transition[(x, x)], ZERO);
        }
    }

    #[test]
    fn green_values() {
        let g = k3();
        assert!((green_det(&g, 1.0, 0, &[1, 2]).unwrap() - 1.0).abs() < 1e-12);
        assert!((green_det(&g, 1.0, 2, &[]).unwrap() - 3.0).abs() < 1e-12);
        assert!((green_det(&g, 1e-9, 1, &[]).unwrap() - 1.0).abs() < 1e-8);
        let trivial = g.with_angles(|_| 0.0).unwrap();
        assert!(matches!(green_det(&trivial, 1.0, 0, &[]), Err(Error::Singular(_))));
    }

    #[test]
    fn k3_law() {
        let r = tlaw_crsf(&k3(), &[0.5, 1.0]).unwrap();
        assert!((r.mean - 9.0).abs() < 1e-12);
        assert!((r.parity.unwrap() + 1.0).abs() < 1e-12);
        assert!((r.mgf[1].1 - 1.0).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["mode"], "crsf");
        assert_eq!(json["mgf"][0][0], 0.5);
    }

    #[test]
    fn tree_paths() {
        let p2 = ConnectionGraph::new(2, [(0, 1, 1.0, 0.0)]).unwrap();
        let r = tlaw(&p2, TLawMode::Tree { root: 1 }, &[]).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-12);
        let p3 = ConnectionGraph::new(3, [(0, 1, 1.0, 0.0), (1, 2, 1.0, 0.0)]).unwrap();
        let r = tlaw(&p3, TLawMode::Tree { root: 2 }, &[]).unwrap();
        assert!((r.mean - 4.0).abs() < 1e-12);
        assert!(tlaw(&p3, TLawMode::Tree { root: 3 }, &[]).is_err());
        assert!(tlaw(&p3, TLawMode::Forest { q: 0.0 }, &[]).is_err());
    }

    #[test]
    fn mtsf_large_q_tends_to_n() {
        let r = tlaw(&k3(), TLawMode::Mtsf { q: 1e9 }, &[]).unwrap();
        assert!((r.mean - 3.0).abs() < 1e-6);
    }

    #[test]
    fn trivial_connection_is_rejected() {
        let g = k3().with_angles(|_| 0.0).unwrap();
        assert!(matches!(tlaw_crsf(&g, &[]), Err(Error::Assumption(_))));
    }
}
