//! Python bindings. Weights are passed as `alpha`: `None` selects
//! α(c) = 1 − cos θ(c), otherwise a list of `(nodes, value)` pairs.

use crsf_forge::cyclepop::{self, WalkConfig};
use crsf_forge::oracle;
use crsf_forge::prs::{self, ConstraintOrder, PrsConfig};
use crsf_forge::spectral::{self, TLawMode, TLawReport};
use crsf_forge::{heaps, CycleWeight, NodeId, OrientedCycle};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: crsf_forge::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn weight(alpha: Option<Vec<(Vec<NodeId>, f64)>>) -> PyResult<CycleWeight> {
    match alpha {
        None => Ok(CycleWeight::Determinantal),
        Some(entries) => {
            let cycles = entries
                .into_iter()
                .map(|(nodes, a)| OrientedCycle::new(&nodes).map(|c| (c, a)))
                .collect::<crsf_forge::Result<Vec<_>>>()
                .map_err(err)?;
            CycleWeight::explicit(cycles).map_err(err)
        }
    }
}

fn cycle_lists(cs: &[OrientedCycle]) -> Vec<Vec<NodeId>> {
    cs.iter().map(|c| c.nodes().to_vec()).collect()
}

#[pyclass(name = "ConnectionGraph", frozen)]
struct PyGraph {
    inner: crsf_forge::ConnectionGraph,
}

#[pymethods]
impl PyGraph {
    /// `edges` holds `(u, v, weight, theta)` tuples.
    #[new]
    fn new(n: usize, edges: Vec<(NodeId, NodeId, f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: crsf_forge::ConnectionGraph::new(n, edges).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: crsf_forge::ConnectionGraph::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<Self> {
        Ok(Self { inner: crsf_forge::ConnectionGraph::from_edge_list(text.as_bytes()).map_err(err)? })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(NodeId, NodeId, f64, f64)> {
        self.inner.edges().iter().map(|e| (e.u, e.v, e.weight, e.theta)).collect()
    }

    fn degree(&self, x: NodeId) -> PyResult<f64> {
        if x >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {x} out of range")));
        }
        Ok(self.inner.degree(x))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("ConnectionGraph(n={}, m={})", self.inner.node_count(), self.inner.edge_count())
    }
}

fn law_dict<'py>(py: Python<'py>, r: &TLawReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mode", r.mode.to_string())?;
    d.set_item("mean", r.mean)?;
    d.set_item("variance", r.variance)?;
    d.set_item("parity", r.parity)?;
    d.set_item("mgf", r.mgf.clone())?;
    Ok(d)
}

/// Analytic law of the number of walk steps T.
#[pyfunction]
#[pyo3(signature = (g, mode = "crsf", q = None, root = 0, grid = None, alpha = None))]
fn tlaw<'py>(
    py: Python<'py>,
    g: &PyGraph,
    mode: &str,
    q: Option<f64>,
    root: NodeId,
    grid: Option<Vec<f64>>,
    alpha: Option<Vec<(Vec<NodeId>, f64)>>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = grid.unwrap_or_else(spectral::default_mgf_grid);
    let need_q = || q.ok_or_else(|| PyValueError::new_err(format!("mode {mode} needs q")));
    let report = if alpha.is_some() {
        if mode != "crsf" {
            return Err(PyValueError::new_err("explicit weights support mode 'crsf' only"));
        }
        heaps::tlaw_generic(&g.inner, &weight(alpha)?, &grid).map_err(err)?
    } else {
        let m = match mode {
            "crsf" => TLawMode::Crsf,
            "mtsf" => TLawMode::Mtsf { q: need_q()? },
            "forest" => TLawMode::Forest { q: need_q()? },
            "tree" => TLawMode::Tree { root },
            _ => return Err(PyValueError::new_err(format!("unknown mode {mode}"))),
        };
        spectral::tlaw(&g.inner, m, &grid).map_err(err)?
    };
    law_dict(py, &report)
}

/// One oriented CRSF drawn by CyclePopping.
#[pyfunction]
#[pyo3(signature = (g, seed = 0, ordering = None, alpha = None))]
fn sample_crsf<'py>(
    py: Python<'py>,
    g: &PyGraph,
    seed: u64,
    ordering: Option<Vec<NodeId>>,
    alpha: Option<Vec<(Vec<NodeId>, f64)>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = WalkConfig { seed, ordering, ..WalkConfig::default() };
    let f = cyclepop::sample_crsf(&g.inner, &weight(alpha)?, &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("successor", f.successor)?;
    d.set_item("cycles", cycle_lists(&f.cycles))?;
    d.set_item("steps_taken", f.steps_taken)?;
    d.set_item("stages", f.stages)?;
    Ok(d)
}

/// One rooted MTSF; roots have successor `None`.
#[pyfunction]
#[pyo3(signature = (g, q, seed = 0, ordering = None, alpha = None))]
fn sample_mtsf<'py>(
    py: Python<'py>,
    g: &PyGraph,
    q: f64,
    seed: u64,
    ordering: Option<Vec<NodeId>>,
    alpha: Option<Vec<(Vec<NodeId>, f64)>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = WalkConfig { seed, ordering, q, ..WalkConfig::default() };
    let f = cyclepop::sample_mtsf(&g.inner, &weight(alpha)?, &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("successor", f.successor)?;
    d.set_item("roots", f.roots)?;
    d.set_item("cycles", cycle_lists(&f.cycles))?;
    d.set_item("steps_taken", f.steps_taken)?;
    d.set_item("stages", f.stages)?;
    Ok(d)
}

/// Partial rejection sampling; `order` is "lex" or "revlex".
#[pyfunction]
#[pyo3(signature = (g, seed = 0, order = "lex", alpha = None))]
fn prs_run<'py>(
    py: Python<'py>,
    g: &PyGraph,
    seed: u64,
    order: &str,
    alpha: Option<Vec<(Vec<NodeId>, f64)>>,
) -> PyResult<Bound<'py, PyDict>> {
    let order = match order {
        "lex" => ConstraintOrder::Lexicographic,
        "revlex" => ConstraintOrder::ReverseLexicographic,
        _ => return Err(PyValueError::new_err(format!("unknown order {order}"))),
    };
    let t = prs::prs_run(&g.inner, &weight(alpha)?, &PrsConfig { seed, order, ..PrsConfig::default() }).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("successor", t.successor)?;
    d.set_item("cycles", cycle_lists(&t.cycles))?;
    d.set_item("total_resamples", t.total_resamples)?;
    d.set_item(
        "resample_counts",
        t.resample_counts.iter().map(|(c, k)| (c.nodes().to_vec(), *k)).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Expected number of PRS resamplings, computed by enumeration.
#[pyfunction]
#[pyo3(signature = (g, alpha = None, max_maps = 1_000_000))]
fn prs_expected_resamples(g: &PyGraph, alpha: Option<Vec<(Vec<NodeId>, f64)>>, max_maps: u64) -> PyResult<f64> {
    Ok(prs::resample_stats_exact(&g.inner, &weight(alpha)?, max_maps).map_err(err)?.expected_total)
}

/// Green function G_t(x, x) of the walk killed on `avoid`.
#[pyfunction]
#[pyo3(signature = (g, x, avoid = Vec::new(), t = 1.0, alpha = None))]
fn green(g: &PyGraph, x: NodeId, avoid: Vec<NodeId>, t: f64, alpha: Option<Vec<(Vec<NodeId>, f64)>>) -> PyResult<f64> {
    match alpha {
        None => spectral::green_det(&g.inner, t, x, &avoid),
        Some(_) => heaps::green_generic(&g.inner, &weight(alpha)?, t, x, &avoid),
    }
    .map_err(err)
}

/// Eigenvalues of the connection transition matrix as `(re, im)` pairs.
#[pyfunction]
fn pi_eigenvalues(g: &PyGraph) -> PyResult<Vec<(f64, f64)>> {
    Ok(spectral::pi_eigenvalues(&g.inner).map_err(err)?.into_iter().map(|z| (z.re, z.im)).collect())
}

/// Normalization and cross-engine identities; returns `(name, rel_err, pass)`.
#[pyfunction]
#[pyo3(signature = (g, qs = vec![0.1, 1.0], tol = 1e-9))]
fn verify_identities(g: &PyGraph, qs: Vec<f64>, tol: f64) -> PyResult<Vec<(String, f64, bool)>> {
    let mut checks = oracle::check_normalizations(&g.inner, &CycleWeight::Determinantal, &qs, tol).map_err(err)?;
    checks.extend(oracle::check_cross_engines(&g.inner, &spectral::default_mgf_grid(), tol).map_err(err)?);
    Ok(checks.into_iter().map(|c| (c.name, c.rel_err, c.pass)).collect())
}

/// Pearson chi-square test; returns `(statistic, dof, p_value)`.
#[pyfunction]
fn gof_test(observed: Vec<u64>, probs: Vec<f64>) -> PyResult<(f64, usize, f64)> {
    let r = oracle::gof_test(&observed, &probs).map_err(err)?;
    Ok((r.statistic, r.dof, r.p_value))
}

#[pymodule]
fn crsf_forge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(tlaw, m)?)?;
    m.add_function(wrap_pyfunction!(sample_crsf, m)?)?;
    m.add_function(wrap_pyfunction!(sample_mtsf, m)?)?;
    m.add_function(wrap_pyfunction!(prs_run, m)?)?;
    m.add_function(wrap_pyfunction!(prs_expected_resamples, m)?)?;
    m.add_function(wrap_pyfunction!(green, m)?)?;
    m.add_function(wrap_pyfunction!(pi_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(verify_identities, m)?)?;
    m.add_function(wrap_pyfunction!(gof_test, m)?)?;
    Ok(())
}
