//! Erdős–Rényi graphs with one noisy edge, and the harness comparing analytic
//! and empirical running-time statistics across noise levels.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::CycleWeight;
use crate::cyclepop::{sample_crsf, sample_mtsf, WalkConfig};
use crate::error::{Error, Result};
use crate::graph::ConnectionGraph;
use crate::spectral::{tlaw, TLawMode};

const CONNECT_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EruSpec {
    pub n: usize,
    pub p: f64,
    pub eta: f64,
    pub seed: u64,
}

/// Draw ER_u(n, p, η): G(n, p) conditioned on connectivity, with one uniform
/// edge carrying angle ηπ/2. The topology depends only on `n`, `p`, `seed`.
pub fn gen_eru(spec: &EruSpec) -> Result<ConnectionGraph> {
    let EruSpec { n, p, eta, seed } = *spec;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} must be at least 2")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONNECT_RETRIES {
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    pairs.push((u, v));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let noisy = rng.gen_range(0..pairs.len());
        let edges = pairs
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| (u, v, 1.0, if i == noisy { eta * FRAC_PI_2 } else { 0.0 }));
        match ConnectionGraph::new(n, edges) {
            Ok(g) => return Ok(g),
            Err(Error::InvalidGraph(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidArgument(format!(
        "no connected G({n}, {p}) after {CONNECT_RETRIES} attempts"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Crsf,
    Mtsf { q: f64 },
}

impl ExperimentMode {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentMode::Crsf => "crsf",
            ExperimentMode::Mtsf { .. } => "mtsf",
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            ExperimentMode::Crsf => 0.0,
            ExperimentMode::Mtsf { q } => *q,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: f64,
    pub etas: Vec<f64>,
    pub reps: usize,
    pub mode: ExperimentMode,
    pub seed: u64,
    /// Reuse one topology and noisy edge for every η.
    pub freeze_topology: bool,
    /// Worker threads; all available cores when `None`.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub eta: f64,
    pub mode: String,
    pub q: f64,
    pub reps: usize,
    pub analytic_mean: f64,
    pub analytic_sd: f64,
    pub empirical_mean: f64,
    pub empirical_sd: f64,
    pub wall_ms: u128,
    /// Set when the empirical sd is degenerate (a single replicate).
    pub degenerate: bool,
    pub error: Option<String>,
}

impl ExperimentRow {
    pub fn empirical_var(&self) -> f64 {
        self.empirical_sd * self.empirical_sd
    }

    pub fn analytic_var(&self) -> f64 {
        self.analytic_sd * self.analytic_sd
    }
}

/// Seed of the topology used at grid position `i`.
pub fn topology_seed(seed: u64, i: usize) -> u64 {
    // SplitMix64 step, so neighbouring indices give unrelated streams.
    let mut z = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample mean and unbiased sd; the sd of a single value is 0.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_row(cfg: &ExperimentConfig, i: usize, eta: f64) -> Result<ExperimentRow> {
    let start = Instant::now();
    let topo = if cfg.freeze_topology { topology_seed(cfg.seed, 0) } else { topology_seed(cfg.seed, i) };
    let g = gen_eru(&EruSpec { n: cfg.n, p: cfg.p, eta, seed: topo })?;
    let law_mode = match cfg.mode {
        ExperimentMode::Crsf => TLawMode::Crsf,
        ExperimentMode::Mtsf { q } => TLawMode::Mtsf { q },
    };
    let law = tlaw(&g, law_mode, &[])?;
    let a = CycleWeight::Determinantal;
    let steps: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let wc = WalkConfig { seed: cfg.seed ^ r as u64, q: cfg.mode.q(), ..WalkConfig::default() };
            match cfg.mode {
                ExperimentMode::Crsf => sample_crsf(&g, &a, &wc).map(|f| f.steps_taken as f64),
                ExperimentMode::Mtsf { .. } => sample_mtsf(&g, &a, &wc).map(|f| f.steps_taken as f64),
            }
        })
        .collect::<Result<_>>()?;
    let (empirical_mean, empirical_sd) = mean_sd(&steps);
    Ok(ExperimentRow {
        eta,
        mode: cfg.mode.name().to_string(),
        q: cfg.mode.q(),
        reps: cfg.reps,
        analytic_mean: law.mean,
        analytic_sd: law.sd(),
        empirical_mean,
        empirical_sd,
        wall_ms: start.elapsed().as_millis(),
        degenerate: cfg.reps < 2,
        error: None,
    })
}

/// One row per η; a failing row is recorded with its error and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        Ok(cfg
            .etas
            .iter()
            .enumerate()
            .map(|(i, &eta)| {
                run_row(cfg, i, eta).unwrap_or_else(|e| ExperimentRow {
                    eta,
                    mode: cfg.mode.name().to_string(),
                    q: cfg.mode.q(),
                    reps: cfg.reps,
                    analytic_mean: f64::NAN,
                    analytic_sd: f64::NAN,
                    empirical_mean: f64::NAN,
                    empirical_sd: f64::NAN,
                    wall_ms: 0,
                    degenerate: cfg.reps < 2,
                    error: Some(e.to_string()),
                })
            })
            .collect())
    })
}

pub const CSV_HEADER: &str = "eta,mode,q,reps,analytic_mean,analytic_sd,empirical_mean,empirical_sd,wall_ms";

pub fn write_csv<W: Write>(rows: &[ExperimentRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.eta, r.mode, r.q, r.reps, r.analytic_mean, r.analytic_sd, r.empirical_mean, r.empirical_sd, r.wall_ms
        )?;
    }
    Ok(())
}

/// Parse `start:stop:step` into an inclusive grid.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidArgument(format!("expected start:stop:step, got {s:?}"));
    if parts.len() == 1 {
        return Ok(vec![parts[0].trim().parse().map_err(|_| bad())?]);
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Round to the step's precision so 0.1 increments print cleanly.
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Mean of T against η for both curves, with ±1 sd error bars.
pub fn render_svg(rows: &[ExperimentRow]) -> String {
    let ok: Vec<&ExperimentRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if ok.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let xmin = ok.iter().map(|r| r.eta).fold(f64::INFINITY, f64::min);
    let xmax = ok.iter().map(|r| r.eta).fold(f64::NEG_INFINITY, f64::max);
    let ymin = ok
        .iter()
        .map(|r| (r.analytic_mean - r.analytic_sd).min(r.empirical_mean - r.empirical_sd))
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let ymax = ok
        .iter()
        .map(|r| (r.analytic_mean + r.analytic_sd).max(r.empirical_mean + r.empirical_sd))
        .fold(f64::NEG_INFINITY, f64::max);
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin).max(1e-12) * (h - 2.0 * pad);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">eta</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(svg, r#"<text x="5" y="{}" font-size="12">{ymax:.0}</text>"#, pad);
    let _ = writeln!(svg, r#"<text x="5" y="{}" font-size="12">{ymin:.0}</text>"#, h - pad);
    let curves: [(&str, fn(&ExperimentRow) -> (f64, f64)); 2] = [
        ("red", |r| (r.analytic_mean, r.analytic_sd)),
        ("blue", |r| (r.empirical_mean, r.empirical_sd)),
    ];
    for (color, f) in curves {
        let pts: Vec<String> = ok.iter().map(|r| format!("{:.2},{:.2}", sx(r.eta), sy(f(r).0))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, pts.join(" "));
        for r in &ok {
            let (m, s) = f(r);
            let x = sx(r.eta);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                sy(m - s),
                sy(m + s)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_has_one_noisy_edge() {
        let g = gen_eru(&EruSpec { n: 4, p: 1.0, eta: 1.0, seed: 3 }).unwrap();
        assert_eq!(g.edge_count(), 6);
        let noisy: Vec<_> = g.edges().iter().filter(|e| e.theta != 0.0).collect();
        assert_eq!(noisy.len(), 1);
        assert!((noisy[0].theta - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn topology_ignores_eta() {
        let a = gen_eru(&EruSpec { n: 30, p: 0.3, eta: 0.5, seed: 11 }).unwrap();
        let b = gen_eru(&EruSpec { n: 30, p: 0.3, eta: 1.0, seed: 11 }).unwrap();
        let ends = |g: &ConnectionGraph| g.edges().iter().map(|e| (e.u, e.v)).collect::<Vec<_>>();
        assert_eq!(ends(&a), ends(&b));
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0.5:1.0:0.1").unwrap(), vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(parse_range("0.7").unwrap(), vec![0.7]);
        assert!(parse_range("1:0:0.1").is_err());
    }

    #[test]
    fn single_replicate_is_flagged() {
        let cfg = ExperimentConfig {
            n: 6,
            p: 0.8,
            etas: vec![1.0],
            reps: 1,
            mode: ExperimentMode::Crsf,
            seed: 1,
            freeze_topology: false,
            jobs: Some(1),
        };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows[0].empirical_sd, 0.0);
        assert!(rows[0].degenerate);
        let mut csv = Vec::new();
        write_csv(&rows, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with(CSV_HEADER));
        assert!(render_svg(&rows).contains("polyline"));
    }
}
