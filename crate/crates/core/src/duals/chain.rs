//! The coalescing dual chain `(C, A, B)` of the voter model on dynamical
//! percolation: walker positions with the edges currently known open and
//! known closed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::exact::{DualBits, DualChainModel, MAX_PARTITION_EDGES};
use super::walkers::{EnvMode, KnowledgeWalkers, WalkEvent, INITIAL_BIT};
use crate::ctmc::gillespie;
use crate::dynamics::RunOptions;
use crate::error::{Error, Result};
use crate::lattice::{local_connected, BallGeometry, Edge, FiniteGraph, Topology, Vertex};
use crate::randomness::{bernoulli, check_perc_params, SeedScheme, StreamKind};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMethod {
    /// Walkers with instruction manuals on a memoised environment.
    Constructive,
    /// Direct sampling from the rate table; small finite graphs only.
    Gillespie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualChainState {
    pub time: f64,
    /// Walker set `C`, sorted.
    pub walkers: Vec<Vertex>,
    /// Edges known open, sorted.
    pub open: Vec<Edge>,
    /// Edges known closed, sorted.
    pub closed: Vec<Edge>,
}

impl DualChainState {
    /// `(|C|, |A|, |B|)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.walkers.len(), self.open.len(), self.closed.len())
    }

    pub fn is_disjoint(&self) -> bool {
        self.open.iter().all(|e| self.closed.binary_search(e).is_err())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualChainRun {
    pub snapshots: Vec<DualChainState>,
    pub final_state: DualChainState,
    pub coalescence_times: Vec<f64>,
    pub events: u64,
}

fn check_initial(c0: &[Vertex], e0: &[Edge], f0: &[Edge]) -> Result<()> {
    if c0.is_empty() {
        return Err(Error::domain("the initial walker set must be nonempty"));
    }
    let e: HashSet<&Edge> = e0.iter().collect();
    if let Some(bad) = f0.iter().find(|f| e.contains(f)) {
        return Err(Error::domain(format!("E and F must be disjoint; {bad} lies in both")));
    }
    Ok(())
}

fn sorted_times(opts: &RunOptions) -> Vec<f64> {
    let mut times: Vec<f64> = opts.snapshot_times.iter().copied().filter(|t| *t <= opts.horizon).collect();
    times.sort_by(f64::total_cmp);
    times
}

/// Runs the dual chain from `(C_0, E_0, F_0)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_dual_chain(
    topology: &Topology,
    c0: &[Vertex],
    e0: &[Edge],
    f0: &[Edge],
    p: f64,
    v: f64,
    range: i32,
    opts: &RunOptions,
    method: DualMethod,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<DualChainRun> {
    check_perc_params(p, v)?;
    opts.validate()?;
    check_initial(c0, e0, f0)?;
    match method {
        DualMethod::Constructive => constructive(topology, c0, e0, f0, p, v, range, opts, seeds, replica),
        DualMethod::Gillespie => rate_table(topology, c0, e0, f0, p, v, range, opts, seeds, replica),
    }
}

fn walker_state(w: &KnowledgeWalkers) -> DualChainState {
    let mut walkers: Vec<Vertex> = (0..w.len()).filter(|&i| w.active[i]).map(|i| w.positions[i]).collect();
    walkers.sort();
    let k = w.pooled_knowledge();
    DualChainState { time: w.time, walkers, open: k.open, closed: k.closed }
}

#[allow(clippy::too_many_arguments)]
fn constructive(
    topology: &Topology,
    c0: &[Vertex],
    e0: &[Edge],
    f0: &[Edge],
    p: f64,
    v: f64,
    range: i32,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<DualChainRun> {
    let mut starts = c0.to_vec();
    starts.sort();
    starts.dedup();
    let mut w = KnowledgeWalkers::new(topology, range, p, v, &starts, EnvMode::Single, seeds, replica)?;
    for e in e0 {
        w.pin(0, *e, true, INITIAL_BIT);
    }
    for f in f0 {
        w.pin(0, *f, false, INITIAL_BIT);
    }
    let mut snapshots = Vec::new();
    let mut coalescence_times = Vec::new();
    let mut events = 0;
    let mut run_until = |w: &mut KnowledgeWalkers, until: f64| {
        while let Some(ev) = w.step(until) {
            events += 1;
            if let WalkEvent::Attempt { walker: i, moved: true, time } = ev {
                let x = w.positions[i];
                if let Some(j) = (0..w.len()).find(|&j| j != i && w.active[j] && w.positions[j] == x) {
                    let (keep, drop) = if j < i { (j, i) } else { (i, j) };
                    w.absorb(drop, keep);
                    coalescence_times.push(time);
                }
            }
        }
    };
    for s in sorted_times(opts) {
        run_until(&mut w, s);
        snapshots.push(walker_state(&w));
    }
    run_until(&mut w, opts.horizon);
    let final_state = walker_state(&w);
    Ok(DualChainRun { snapshots, final_state, coalescence_times, events })
}

fn bits_of<T: Copy>(items: &[T], index: impl Fn(&T) -> Result<usize>) -> Result<u64> {
    let mut bits = 0u64;
    for it in items {
        bits |= 1 << index(it)?;
    }
    Ok(bits)
}

fn state_of(graph: &FiniteGraph, s: &DualBits, time: f64) -> DualChainState {
    let pick = |bits: u64, n: usize| (0..n).filter(move |&k| (bits >> k) & 1 == 1);
    let mut walkers: Vec<Vertex> = pick(s.walkers, graph.n_vertices()).map(|k| graph.vertices[k]).collect();
    walkers.sort();
    let open = pick(s.open, graph.n_edges()).map(|k| graph.edges[k]).collect();
    let closed = pick(s.closed, graph.n_edges()).map(|k| graph.edges[k]).collect();
    DualChainState { time, walkers, open, closed }
}

#[allow(clippy::too_many_arguments)]
fn rate_table(
    topology: &Topology,
    c0: &[Vertex],
    e0: &[Edge],
    f0: &[Edge],
    p: f64,
    v: f64,
    range: i32,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<DualChainRun> {
    if !topology.is_finite() {
        return Err(Error::unsupported("the rate-table method needs a finite topology"));
    }
    if range < 1 {
        return Err(Error::domain("range must be at least 1"));
    }
    let graph = FiniteGraph::new(topology, range as usize)?;
    let model = DualChainModel::new(&graph, p, v)?;
    let start = DualBits {
        walkers: bits_of(c0, |x| graph.vertex_index(x))?,
        open: bits_of(e0, |e| graph.edge_idx(e))?,
        closed: bits_of(f0, |e| graph.edge_idx(e))?,
    };
    let times = sorted_times(opts);
    let mut rng = seeds.rng(StreamKind::DualChain, 0, replica);
    let mut snapshots = Vec::new();
    let mut coalescence_times = Vec::new();
    let mut events = 0u64;
    let mut prev = start;
    let mut next = 0;
    let fin = gillespie(&model, start, opts.horizon, &mut rng, |t, s| {
        while next < times.len() && times[next] < t {
            snapshots.push(state_of(&graph, &prev, times[next]));
            next += 1;
        }
        if s.walkers.count_ones() < prev.walkers.count_ones() {
            coalescence_times.push(t);
        }
        if t > 0.0 {
            events += 1;
        }
        prev = *s;
    });
    while next < times.len() {
        snapshots.push(state_of(&graph, &fin, times[next]));
        next += 1;
    }
    let final_state = state_of(&graph, &fin, opts.horizon);
    Ok(DualChainRun { snapshots, final_state, coalescence_times, events })
}

/// Number of Monte Carlo completions used when exact enumeration is refused.
pub const CONNECTION_SAMPLES: u64 = 100_000;

/// Probability that `x` connects to `y` inside `B_1(x, R)` when the edges of
/// `open` are open, those of `closed` are closed and every other ball edge
/// is open independently with probability `p`. Exact for at most
/// [`MAX_PARTITION_EDGES`] unrevealed edges, a Monte Carlo estimate above.
#[allow(clippy::too_many_arguments)]
pub fn connection_rate(
    topology: &Topology,
    x: &Vertex,
    y: &Vertex,
    open: &[Edge],
    closed: &[Edge],
    p: f64,
    range: i32,
    seeds: &SeedScheme,
) -> Result<Estimate> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p must lie in [0,1]"));
    }
    if !matches!(topology, Topology::Torus { .. } | Topology::InfiniteLattice { .. }) {
        return Err(Error::unsupported(format!("connection rates need a torus or Z^d, got {topology}")));
    }
    if range < 1 {
        return Err(Error::domain("range must be at least 1"));
    }
    if topology.distance(x, y) > range as i64 {
        return Err(Error::domain(format!("{y} lies outside B_1({x}, {range})")));
    }
    let geo = BallGeometry::new(topology.dim(), range);
    let mut edges = Vec::new();
    geo.edges_at(topology, x, &mut edges);
    let target = geo
        .offsets
        .iter()
        .position(|z| topology.displace(x, z) == *y)
        .ok_or_else(|| Error::domain(format!("{y} lies outside B_1({x}, {range})")))?;
    let mut state: Vec<Option<bool>> = edges
        .iter()
        .map(|e| {
            if open.contains(e) {
                Some(true)
            } else if closed.contains(e) {
                Some(false)
            } else {
                None
            }
        })
        .collect();
    let fresh: Vec<usize> = (0..edges.len()).filter(|&i| state[i].is_none()).collect();
    let n = geo.offsets.len();
    let mut bits = vec![false; edges.len()];
    if fresh.len() <= MAX_PARTITION_EDGES {
        let mut total = 0.0;
        for subset in 0u32..(1 << fresh.len()) {
            let mut weight = 1.0;
            for (j, &i) in fresh.iter().enumerate() {
                let o = (subset >> j) & 1 == 1;
                state[i] = Some(o);
                weight *= if o { p } else { 1.0 - p };
            }
            if weight == 0.0 {
                continue;
            }
            for (b, s) in bits.iter_mut().zip(&state) {
                *b = s.unwrap_or(false);
            }
            if local_connected(n, &geo.edges, &bits, geo.center, target) {
                total += weight;
            }
        }
        return Ok(Estimate::exact(total));
    }
    let mut rng = seeds.rng(StreamKind::Auxiliary, 0, 0);
    let mut hits = 0;
    for _ in 0..CONNECTION_SAMPLES {
        for (b, s) in bits.iter_mut().zip(&state) {
            *b = match s {
                Some(o) => *o,
                None => bernoulli(&mut rng, p),
            };
        }
        if local_connected(n, &geo.edges, &bits, geo.center, target) {
            hits += 1;
        }
    }
    Ok(Estimate::proportion(hits, CONNECTION_SAMPLES))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn revealed_edges_are_disjoint_and_walkers_shrink() {
        let t = Topology::lattice(2);
        let c0 = [Vertex::ORIGIN, Vertex::axis(0, 1), Vertex::axis(1, 1)];
        let e0 = [Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1))];
        let opts = RunOptions::until(20.0).with_snapshots((1..20).map(f64::from).collect());
        for rep in 0..20 {
            let run = simulate_dual_chain(
                &t,
                &c0,
                &e0,
                &[],
                0.6,
                1.0,
                1,
                &opts,
                DualMethod::Constructive,
                &SeedScheme::new(1),
                rep,
            )
            .unwrap();
            let mut last = 3;
            for s in &run.snapshots {
                assert!(s.is_disjoint());
                assert!(s.walkers.len() <= last);
                last = s.walkers.len();
            }
        }
    }

    #[test]
    fn overlapping_initial_knowledge_is_rejected() {
        let t = Topology::lattice(1);
        let e = Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1));
        let r = simulate_dual_chain(
            &t,
            &[Vertex::ORIGIN],
            &[e],
            &[e],
            0.5,
            1.0,
            1,
            &RunOptions::until(1.0),
            DualMethod::Constructive,
            &SeedScheme::new(1),
            0,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn rate_table_runs_on_a_path() {
        let t = Topology::Path { n: 3 };
        let run = simulate_dual_chain(
            &t,
            &[Vertex::new(&[1])],
            &[],
            &[],
            0.5,
            1.0,
            1,
            &RunOptions::until(5.0),
            DualMethod::Gillespie,
            &SeedScheme::new(2),
            0,
        )
        .unwrap();
        assert_eq!(run.final_state.walkers.len(), 1);
    }
}
