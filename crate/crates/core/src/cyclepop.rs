//! CyclePopping: loop-erased random walks that accept each closed cycle with
//! probability α(c) and pop it otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::{CycleWeight, OrientedCycle};
use crate::error::{Error, Result};
use crate::graph::{ConnectionGraph, NodeId};
use crate::loops::BasedLoop;

pub type SamplerRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub seed: u64,
    /// Start-node priority; ascending ids when `None`.
    pub ordering: Option<Vec<NodeId>>,
    pub max_steps: Option<u64>,
    /// Rate of jumps to the auxiliary root; 0 disables it.
    pub q: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { seed: 0, ordering: None, max_steps: Some(100_000_000), q: 0.0 }
    }
}

impl WalkConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn resolve_ordering(&self, n: usize) -> Result<Vec<NodeId>> {
        match &self.ordering {
            None => Ok((0..n).collect()),
            Some(o) => {
                let mut seen = vec![false; n];
                if o.len() != n || o.iter().any(|&x| x >= n || std::mem::replace(&mut seen[x], true)) {
                    return Err(Error::InvalidArgument(format!("ordering {o:?} is not a permutation of 0..{n}")));
                }
                Ok(o.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedCrsf {
    pub successor: Vec<NodeId>,
    pub cycles: Vec<OrientedCycle>,
    pub steps_taken: u64,
    /// Nodes added at each stage, in order of addition.
    pub stages: Vec<Vec<NodeId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootedMtsf {
    /// `None` marks a root.
    pub successor: Vec<Option<NodeId>>,
    pub roots: Vec<NodeId>,
    pub cycles: Vec<OrientedCycle>,
    pub steps_taken: u64,
    pub stages: Vec<Vec<NodeId>>,
}

impl RootedMtsf {
    /// ρ(U): roots plus cycle components.
    pub fn component_count(&self) -> usize {
        self.roots.len() + self.cycles.len()
    }
}

/// One popped loop per node, in the order nodes join the structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoppedLoops {
    pub loops: Vec<BasedLoop>,
}

impl PoppedLoops {
    pub fn total_length(&self) -> usize {
        self.loops.iter().map(|l| l.len()).sum()
    }
}

struct Outcome {
    successor: Vec<Option<NodeId>>,
    roots: Vec<NodeId>,
    cycles: Vec<OrientedCycle>,
    steps: u64,
    stages: Vec<Vec<NodeId>>,
    loops: Vec<BasedLoop>,
    trace: Vec<TraceStep>,
}

/// What a single walk step did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    /// Moved to a node not yet on the path.
    Extend,
    /// Closed a cycle and erased it.
    Pop,
    /// Closed a cycle and kept it.
    Accept,
    /// Hit the current forest.
    Join,
    /// Jumped to the auxiliary root.
    Root,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    pub from: NodeId,
    /// `None` for a jump to the auxiliary root.
    pub to: Option<NodeId>,
    pub event: StepEvent,
}

struct Walker<'a> {
    g: &'a ConnectionGraph,
    alpha: &'a CycleWeight,
    q: f64,
    max_steps: u64,
    verbose: bool,
    traced: bool,
}

impl Walker<'_> {
    fn run<R: Rng>(&self, rng: &mut R, ordering: &[NodeId], preset_roots: &[NodeId]) -> Result<Outcome> {
        let n = self.g.node_count();
        let mut in_forest = vec![false; n];
        let mut out = Outcome {
            successor: vec![None; n],
            roots: Vec::new(),
            cycles: Vec::new(),
            steps: 0,
            stages: Vec::new(),
            loops: Vec::new(),
            trace: Vec::new(),
        };
        for &r in preset_roots {
            in_forest[r] = true;
        }
        let mut pos: Vec<Option<usize>> = vec![None; n];
        let mut path: Vec<NodeId> = Vec::with_capacity(n);
        // Trajectory of the current stage and arrival time of each path node.
        let mut traj: Vec<NodeId> = Vec::new();
        let mut arrival: Vec<usize> = Vec::with_capacity(n);

        for &start in ordering {
            if in_forest[start] {
                continue;
            }
            path.clear();
            path.push(start);
            pos[start] = Some(0);
            if self.verbose {
                traj.clear();
                traj.push(start);
                arrival.clear();
                arrival.push(0);
            }
            loop {
                let x = *path.last().unwrap();
                out.steps += 1;
                if out.steps > self.max_steps {
                    return Err(Error::StepCapExceeded(self.max_steps));
                }
                let deg = self.g.degree(x);
                let u = rng.gen::<f64>() * (deg + self.q);
                if u < self.q {
                    self.record(&mut out, x, None, StepEvent::Root);
                    out.roots.push(x);
                    self.commit(&path, None, &mut out, &mut in_forest, &mut pos);
                    break;
                }
                let y = self.g.pick_neighbor(x, u - self.q);
                if in_forest[y] {
                    self.record(&mut out, x, Some(y), StepEvent::Join);
                    self.commit(&path, Some(y), &mut out, &mut in_forest, &mut pos);
                    break;
                }
                if let Some(j) = pos[y] {
                    let a = self.alpha.alpha_of_path(self.g, &path[j..]);
                    if rng.gen::<f64>() < a {
                        self.record(&mut out, x, Some(y), StepEvent::Accept);
                        out.cycles.push(OrientedCycle::new(&path[j..])?);
                        self.commit(&path, Some(y), &mut out, &mut in_forest, &mut pos);
                        break;
                    }
                    self.record(&mut out, x, Some(y), StepEvent::Pop);
                    for &z in &path[j + 1..] {
                        pos[z] = None;
                    }
                    path.truncate(j + 1);
                    if self.verbose {
                        arrival.truncate(j + 1);
                        traj.push(y);
                    }
                } else {
                    self.record(&mut out, x, Some(y), StepEvent::Extend);
                    pos[y] = Some(path.len());
                    path.push(y);
                    if self.verbose {
                        arrival.push(traj.len());
                        traj.push(y);
                    }
                }
            }
            if self.verbose {
                for i in 0..path.len() {
                    let end = if i + 1 < path.len() { arrival[i + 1] - 1 } else { traj.len() - 1 };
                    out.loops.push(BasedLoop::from_walk(traj[arrival[i]..=end].to_vec()));
                }
            }
            out.stages.push(path.clone());
        }
        Ok(out)
    }

    fn record(&self, out: &mut Outcome, from: NodeId, to: Option<NodeId>, event: StepEvent) {
        if self.traced {
            out.trace.push(TraceStep { step: out.steps, from, to, event });
        }
    }

    fn commit(
        &self,
        path: &[NodeId],
        last: Option<NodeId>,
        out: &mut Outcome,
        in_forest: &mut [bool],
        pos: &mut [Option<usize>],
    ) {
        for w in path.windows(2) {
            out.successor[w[0]] = Some(w[1]);
        }
        out.successor[*path.last().unwrap()] = last;
        for &z in path {
            in_forest[z] = true;
            pos[z] = None;
        }
    }
}

fn run(
    g: &ConnectionGraph,
    a: &CycleWeight,
    cfg: &WalkConfig,
    q: f64,
    preset_roots: &[NodeId],
    verbose: bool,
    traced: bool,
) -> Result<Outcome> {
    let ordering = cfg.resolve_ordering(g.node_count())?;
    let walker = Walker { g, alpha: a, q, max_steps: cfg.max_steps.unwrap_or(u64::MAX), verbose, traced };
    let mut rng = SamplerRng::seed_from_u64(cfg.seed);
    walker.run(&mut rng, &ordering, preset_roots)
}

fn check_explicit_weights(a: &CycleWeight, q: f64) -> Result<()> {
    if let CycleWeight::Explicit(t) = a {
        if q == 0.0 && !t.values().any(|&v| v > 0.0) {
            return Err(Error::Assumption(
                "every cycle has acceptance probability 0, so CyclePopping cannot terminate".into(),
            ));
        }
    }
    Ok(())
}

fn into_crsf(o: Outcome) -> OrientedCrsf {
    OrientedCrsf {
        successor: o.successor.into_iter().map(|s| s.expect("CRSF successor map is total")).collect(),
        cycles: o.cycles,
        steps_taken: o.steps,
        stages: o.stages,
    }
}

pub fn sample_crsf(g: &ConnectionGraph, a: &CycleWeight, cfg: &WalkConfig) -> Result<OrientedCrsf> {
    check_explicit_weights(a, 0.0)?;
    Ok(into_crsf(run(g, a, cfg, 0.0, &[], false, false)?))
}

/// CyclePopping together with the popped loops Γ_1, …, Γ_n.
pub fn sample_verbose(g: &ConnectionGraph, a: &CycleWeight, cfg: &WalkConfig) -> Result<(PoppedLoops, OrientedCrsf)> {
    check_explicit_weights(a, 0.0)?;
    let mut o = run(g, a, cfg, 0.0, &[], true, false)?;
    let loops = std::mem::take(&mut o.loops);
    Ok((PoppedLoops { loops }, into_crsf(o)))
}

/// CyclePopping on the graph augmented with an auxiliary root joined to every
/// node with weight `cfg.q`.
pub fn sample_mtsf(g: &ConnectionGraph, a: &CycleWeight, cfg: &WalkConfig) -> Result<RootedMtsf> {
    if !(cfg.q > 0.0) || !cfg.q.is_finite() {
        return Err(Error::InvalidArgument(format!("q = {} must be positive", cfg.q)));
    }
    let o = run(g, a, cfg, cfg.q, &[], false, false)?;
    Ok(RootedMtsf { successor: o.successor, roots: o.roots, cycles: o.cycles, steps_taken: o.steps, stages: o.stages })
}

/// Step-by-step record of the walk run by [`sample_crsf`] (`cfg.q == 0`) or
/// [`sample_mtsf`] with the same configuration.
pub fn trace_walk(g: &ConnectionGraph, a: &CycleWeight, cfg: &WalkConfig) -> Result<Vec<TraceStep>> {
    check_explicit_weights(a, cfg.q)?;
    if cfg.q < 0.0 || !cfg.q.is_finite() {
        return Err(Error::InvalidArgument(format!("q = {} must be nonnegative", cfg.q)));
    }
    Ok(run(g, a, cfg, cfg.q, &[], false, true)?.trace)
}

/// Wilson's algorithm: a spanning tree oriented towards `root`.
pub fn sample_rooted_tree(g: &ConnectionGraph, root: NodeId, cfg: &WalkConfig) -> Result<RootedMtsf> {
    if root >= g.node_count() {
        return Err(Error::InvalidArgument(format!("root {root} out of range")));
    }
    let never = CycleWeight::Explicit(Default::default());
    let o = run(g, &never, cfg, 0.0, &[root], false, false)?;
    Ok(RootedMtsf { successor: o.successor, roots: vec![root], cycles: o.cycles, steps_taken: o.steps, stages: o.stages })
}

/// Recover the stage decomposition of a CRSF from its successor map.
pub fn stages_decompose(successor: &[NodeId], ordering: &[NodeId]) -> Vec<Vec<NodeId>> {
    let n = successor.len();
    let mut covered = vec![false; n];
    let mut stages = Vec::new();
    for &start in ordering {
        if covered[start] {
            continue;
        }
        let mut on_trail = vec![false; n];
        let mut trail = Vec::new();
        let mut x = start;
        while !covered[x] && !on_trail[x] {
            on_trail[x] = true;
            trail.push(x);
            x = successor[x];
        }
        for &z in &trail {
            covered[z] = true;
        }
        stages.push(trail);
    }
    stages
}

/// Oriented cycles of a total successor map.
pub fn successor_cycles(successor: &[NodeId]) -> Vec<OrientedCycle> {
    let n = successor.len();
    let mut state = vec![0u8; n];
    let mut out = Vec::new();
    for s in 0..n {
        if state[s] != 0 {
            continue;
        }
        let mut trail = Vec::new();
        let mut x = s;
        while state[x] == 0 {
            state[x] = 1;
            trail.push(x);
            x = successor[x];
        }
        if state[x] == 1 {
            let j = trail.iter().position(|&z| z == x).unwrap();
            out.push(OrientedCycle::new(&trail[j..]).expect("functional graph cycle"));
        }
        for &z in &trail {
            state[z] = 2;
        }
    }
    out.sort();
    out
}
