//! Command-line front end.
//!
//! Seed derivation: replicate `i` of `sample` and `experiment` uses
//! `seed ^ i`; `verify` draws its Monte Carlo runs from `seed ^ i` as well,
//! offset per suite; experiment topologies use [`topology_seed`].

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cycle::{enumerate_oriented_cycles, validate_assumptions, CycleWeight, ValidationOptions};
use crate::cyclepop::{sample_crsf, sample_mtsf, sample_rooted_tree, trace_walk, WalkConfig};
use crate::error::{Error, Result};
use crate::experiment::{parse_range, render_svg, run_experiment, write_csv, ExperimentConfig, ExperimentMode};
use crate::graph::{ConnectionGraph, NodeId};
use crate::heaps::tlaw_generic;
use crate::oracle::{
    check_cross_engines, check_determinantal_kernel, check_incidence, check_normalizations, enumerate_oriented_crsfs,
    gof_test, tally, IdentityCheck, DEFAULT_MAX_MAPS,
};
use crate::prs::{prs_run, resample_stats_exact, ConstraintOrder, PrsConfig};
use crate::spectral::{default_mgf_grid, pi_eigenvalues, tlaw, TLawMode};

/// Exit status for a failed verification suite.
pub const EXIT_VERIFY_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "crsf-forge", version, about = "Cycle-popping samplers for cycle-rooted spanning forests")]
pub struct Cli {
    /// Master seed for all randomness.
    #[arg(long, global = true, env = "CRSF_FORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw CRSFs, rooted MTSFs or rooted spanning trees as JSON.
    Sample(SampleArgs),
    /// Exact law of the number of walk steps.
    Tlaw(TlawArgs),
    /// Run oracle suites against a small graph.
    Verify(VerifyArgs),
    /// Partial rejection sampling run with resampling counts.
    Prs(PrsArgs),
    /// Experiments on random graphs.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Edge list (`n` then `u v w theta` lines) or `.json` graph.
    #[arg(long)]
    pub graph: PathBuf,
    /// `det` for α(c) = 1 − cos θ(c), or a JSON file of explicit cycle weights.
    #[arg(long, default_value = "det")]
    pub alpha: String,
}

impl GraphArgs {
    fn load(&self) -> Result<(ConnectionGraph, CycleWeight)> {
        let g = ConnectionGraph::load(&self.graph)?;
        let a = if self.alpha == "det" {
            CycleWeight::Determinantal
        } else {
            CycleWeight::from_json(&g, File::open(&self.alpha)?)?
        };
        Ok((g, a))
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum SampleMode {
    Crsf,
    Mtsf,
    Tree,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value = "crsf")]
    pub mode: SampleMode,
    /// Auxiliary-root rate for `mtsf`.
    #[arg(long)]
    pub q: Option<f64>,
    /// Root for `tree`.
    #[arg(long)]
    pub root: Option<NodeId>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Comma-separated start-node ordering.
    #[arg(long, value_delimiter = ',')]
    pub ordering: Option<Vec<NodeId>>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// JSON output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one line per walk step of the first sample.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum LawMode {
    Crsf,
    Mtsf,
    Tree,
    Forest,
}

#[derive(Args, Debug)]
pub struct TlawArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value = "crsf")]
    pub mode: LawMode,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub root: Option<NodeId>,
    /// MGF evaluation points, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Suite {
    Normalization,
    Cross,
    Incidence,
    Kernel,
    Spectrum,
    Gof,
    All,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Monte Carlo runs per goodness-of-fit test.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Relative tolerance of the exact identities.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Rejection level of the goodness-of-fit tests.
    #[arg(long, default_value_t = 1e-3)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Order {
    Lex,
    Revlex,
}

#[derive(Args, Debug)]
pub struct PrsArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value = "lex")]
    pub order: Order,
    /// Also report exact expected resampling counts (small graphs).
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCommand {
    /// Erdős–Rényi graphs with one noisy edge: analytic versus empirical E[T] and sd[T].
    Eru(EruArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum EruMode {
    Crsf,
    Mtsf,
}

#[derive(Args, Debug)]
pub struct EruArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// Noise grid `start:stop:step`.
    #[arg(long, default_value = "0.5:1.0:0.1")]
    pub eta: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, value_enum, default_value = "crsf")]
    pub mode: EruMode,
    #[arg(long, default_value_t = 5e-3)]
    pub q: f64,
    #[arg(long)]
    pub freeze_topology: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Parse `argv` and run; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    eprintln!("seed: {}", cli.seed);
    match &cli.command {
        Command::Sample(a) => cmd_sample(cli.seed, a).map(|_| 0),
        Command::Tlaw(a) => cmd_tlaw(a).map(|_| 0),
        Command::Verify(a) => cmd_verify(cli.seed, a),
        Command::Prs(a) => cmd_prs(cli.seed, a).map(|_| 0),
        Command::Experiment(ExperimentCommand::Eru(a)) => cmd_eru(cli.seed, a).map(|_| 0),
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str, mode: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required for mode {mode}")))
}

fn cmd_sample(seed: u64, a: &SampleArgs) -> Result<()> {
    let (g, alpha) = a.graph.load()?;
    let mut samples = Vec::with_capacity(a.count);
    let base = WalkConfig {
        seed,
        ordering: a.ordering.clone(),
        max_steps: a.max_steps.or(WalkConfig::default().max_steps),
        q: 0.0,
    };
    let q = match a.mode {
        SampleMode::Mtsf => required(a.q, "q", "mtsf")?,
        _ => 0.0,
    };
    for i in 0..a.count {
        let cfg = WalkConfig { seed: seed ^ i as u64, q, ..base.clone() };
        let v = match a.mode {
            SampleMode::Crsf => serde_json::to_value(sample_crsf(&g, &alpha, &cfg)?)?,
            SampleMode::Mtsf => serde_json::to_value(sample_mtsf(&g, &alpha, &cfg)?)?,
            SampleMode::Tree => serde_json::to_value(sample_rooted_tree(&g, required(a.root, "root", "tree")?, &cfg)?)?,
        };
        samples.push(v);
    }
    if let Some(path) = &a.trace {
        if a.mode == SampleMode::Tree {
            return Err(Error::InvalidArgument("--trace is available for crsf and mtsf".into()));
        }
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,from,to,event")?;
        for s in trace_walk(&g, &alpha, &WalkConfig { q, ..base.clone() })? {
            let to = s.to.map_or("root".to_string(), |t| t.to_string());
            let ev = serde_json::to_value(s.event)?;
            writeln!(w, "{},{},{},{}", s.step, s.from, to, ev.as_str().unwrap_or_default())?;
        }
        w.flush()?;
    }
    let mode = match a.mode {
        SampleMode::Crsf => "crsf",
        SampleMode::Mtsf => "mtsf",
        SampleMode::Tree => "tree",
    };
    emit_json(&a.out, &json!({ "seed": seed, "mode": mode, "q": q, "samples": samples }))
}

fn cmd_tlaw(a: &TlawArgs) -> Result<()> {
    let (g, alpha) = a.graph.load()?;
    let grid = a.grid.clone().unwrap_or_else(default_mgf_grid);
    let report = match a.mode {
        LawMode::Crsf if !alpha.is_determinantal() => tlaw_generic(&g, &alpha, &grid)?,
        LawMode::Crsf => tlaw(&g, TLawMode::Crsf, &grid)?,
        LawMode::Mtsf => tlaw(&g, TLawMode::Mtsf { q: required(a.q, "q", "mtsf")? }, &grid)?,
        LawMode::Forest => tlaw(&g, TLawMode::Forest { q: required(a.q, "q", "forest")? }, &grid)?,
        LawMode::Tree => tlaw(&g, TLawMode::Tree { root: required(a.root, "root", "tree")? }, &grid)?,
    };
    emit_json(&a.out, &report)
}

#[derive(Serialize)]
struct CheckLine {
    suite: &'static str,
    name: String,
    pass: bool,
    detail: Value,
}

fn identity_lines(suite: &'static str, checks: Vec<IdentityCheck>) -> Vec<CheckLine> {
    checks
        .into_iter()
        .map(|c| CheckLine { suite, name: c.name.clone(), pass: c.pass, detail: serde_json::to_value(&c).unwrap() })
        .collect()
}

fn skipped(suite: &'static str, why: &str) -> CheckLine {
    CheckLine { suite, name: "skipped".into(), pass: true, detail: json!({ "reason": why }) }
}

fn cmd_verify(seed: u64, a: &VerifyArgs) -> Result<i32> {
    let (g, alpha) = a.graph.load()?;
    let want = |s: Suite| a.suite == Suite::All || a.suite == s;
    let det_only = "needs determinantal weights";
    let report = validate_assumptions(&g, &alpha, ValidationOptions::default());
    let det_ok = alpha.is_determinantal() && report.determinantal_ok();
    let mut lines = Vec::new();

    if want(Suite::Normalization) {
        lines.extend(identity_lines("normalization", check_normalizations(&g, &alpha, &[0.1, 1.0], a.tol)?));
    }
    if want(Suite::Cross) {
        if det_ok {
            lines.extend(identity_lines("cross", check_cross_engines(&g, &[0.25, 0.5, 0.75, 1.0], a.tol)?));
        } else {
            lines.push(skipped("cross", det_only));
        }
    }
    if want(Suite::Incidence) {
        if det_ok {
            for c in enumerate_oriented_cycles(&g, None).into_iter().filter(|c| !c.is_backtrack()) {
                let r = check_incidence(&g, std::slice::from_ref(&c))?;
                lines.push(CheckLine {
                    suite: "incidence",
                    name: format!("P({c} in CRSF)"),
                    pass: r.abs_err <= 1e-8,
                    detail: serde_json::to_value(&r)?,
                });
            }
        } else {
            lines.push(skipped("incidence", det_only));
        }
    }
    if want(Suite::Kernel) {
        if det_ok {
            let r = check_determinantal_kernel(&g, 3)?;
            lines.push(CheckLine {
                suite: "kernel",
                name: "P(S ⊆ edges) = det K_S, |S| ≤ 3".into(),
                pass: r.max_abs_err <= 1e-8,
                detail: serde_json::to_value(&r)?,
            });
        } else {
            lines.push(skipped("kernel", det_only));
        }
    }
    if want(Suite::Spectrum) {
        if det_ok {
            let ev = pi_eigenvalues(&g)?;
            let max_im = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            let max_abs = ev.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            lines.push(CheckLine {
                suite: "spectrum",
                name: "eigenvalues of Π real and inside (−1, 1)".into(),
                pass: max_im <= 1e-9 && max_abs < 1.0,
                detail: json!({ "max_abs_imag": max_im, "max_abs_real": max_abs }),
            });
        } else {
            lines.push(skipped("spectrum", det_only));
        }
    }
    if want(Suite::Gof) {
        lines.extend(gof_lines(&g, &alpha, seed, a.samples, a.level)?);
    }

    let pass = lines.iter().all(|l| l.pass);
    emit_json(&a.out, &json!({ "seed": seed, "suite": format!("{:?}", a.suite).to_lowercase(), "pass": pass, "checks": lines }))?;
    Ok(if pass { 0 } else { EXIT_VERIFY_FAILED })
}

fn gof_lines(g: &ConnectionGraph, alpha: &CycleWeight, seed: u64, samples: usize, level: f64) -> Result<Vec<CheckLine>> {
    let law = enumerate_oriented_crsfs(g, alpha, DEFAULT_MAX_MAPS)?.law();
    let n = g.node_count();
    let reversed: Vec<NodeId> = (0..n).rev().collect();
    let mut lines = Vec::new();
    let mut record = |name: String, draws: Vec<Vec<NodeId>>| -> Result<()> {
        let (obs, probs) = tally(&law, draws);
        let r = gof_test(&obs, &probs)?;
        lines.push(CheckLine { suite: "gof", name, pass: !r.rejects(level), detail: serde_json::to_value(&r)? });
        Ok(())
    };
    for (k, ordering) in [None, Some(reversed.clone())].into_iter().enumerate() {
        let label = if ordering.is_some() { "reversed" } else { "ascending" };
        let draws = (0..samples)
            .map(|i| {
                let cfg = WalkConfig { seed: (seed ^ i as u64).wrapping_add(k as u64 * 0x1000_0000_0000), ordering: ordering.clone(), ..WalkConfig::default() };
                sample_crsf(g, alpha, &cfg).map(|f| f.successor)
            })
            .collect::<Result<Vec<_>>>()?;
        record(format!("cyclepopping, {label} node ordering"), draws)?;
    }
    for (k, order) in [ConstraintOrder::Lexicographic, ConstraintOrder::ReverseLexicographic].into_iter().enumerate() {
        let label = if k == 0 { "lexicographic" } else { "reverse lexicographic" };
        let draws = (0..samples)
            .map(|i| {
                let cfg = PrsConfig { seed: (seed ^ i as u64).wrapping_add((k as u64 + 2) * 0x1000_0000_0000), order: order.clone(), ..PrsConfig::default() };
                prs_run(g, alpha, &cfg).map(|t| t.successor)
            })
            .collect::<Result<Vec<_>>>()?;
        record(format!("prs, {label} constraint order"), draws)?;
    }
    Ok(lines)
}

fn cmd_prs(seed: u64, a: &PrsArgs) -> Result<()> {
    let (g, alpha) = a.graph.load()?;
    let order = match a.order {
        Order::Lex => ConstraintOrder::Lexicographic,
        Order::Revlex => ConstraintOrder::ReverseLexicographic,
    };
    let trace = prs_run(&g, &alpha, &PrsConfig { seed, order, ..PrsConfig::default() })?;
    if let Some(p) = &a.trace_csv {
        write_file(p, |w| trace.write_csv(w))?;
    }
    let counts: Vec<Value> = trace
        .resample_counts
        .iter()
        .map(|(c, n)| json!({ "cycle": c, "count": n }))
        .collect();
    let mut out = json!({
        "seed": seed,
        "successor": trace.successor,
        "cycles": trace.cycles,
        "total_resamples": trace.total_resamples,
        "resample_counts": counts,
    });
    if a.exact {
        let s = resample_stats_exact(&g, &alpha, DEFAULT_MAX_MAPS)?;
        let per: Vec<Value> = s.expected_per_cycle.iter().map(|(c, e)| json!({ "cycle": c, "expected": e })).collect();
        out["exact"] = json!({ "p_valid": s.p_valid, "expected_total": s.expected_total, "expected_per_cycle": per });
    }
    emit_json(&a.out, &out)
}

fn write_file<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_eru(seed: u64, a: &EruArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        n: a.n,
        p: a.p,
        etas: parse_range(&a.eta)?,
        reps: a.reps,
        mode: match a.mode {
            EruMode::Crsf => ExperimentMode::Crsf,
            EruMode::Mtsf => ExperimentMode::Mtsf { q: a.q },
        },
        seed,
        freeze_topology: a.freeze_topology,
        jobs: a.jobs,
    };
    let rows = run_experiment(&cfg)?;
    for r in &rows {
        if let Some(e) = &r.error {
            eprintln!("eta {}: {e}", r.eta);
        } else if r.degenerate {
            eprintln!("eta {}: single replicate, empirical sd reported as 0", r.eta);
        }
    }
    let mut w = sink(&a.out)?;
    write_csv(&rows, &mut w)?;
    w.flush()?;
    if let Some(p) = &a.svg {
        std::fs::write(p, render_svg(&rows))?;
    }
    Ok(())
}
