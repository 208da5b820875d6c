//! Forward event-driven simulation of the opinion dynamics on finite graphs:
//! the range-`R` voter model, the voter model with stirring, dynamical
//! percolation and the voter model on dynamical percolation.
//!
//! Every site owns a rate-1 clock and every edge its refresh (or swap)
//! clock, each drawn from its own substream and merged in one queue. The
//! edge clocks of [`simulate_vmdyn`] are the clocks of [`simulate_dynperc`],
//! so the environment of the joint process is bit-identical to a standalone
//! run with the same seeds.

use serde::{Deserialize, Serialize};

use crate::ctmc::RateModel;
use crate::error::{Error, Result};
use crate::lattice::{FiniteGraph, Topology};
use crate::randomness::{
    bernoulli, check_perc_params, exp_sample, uniform_index, EdgeClock, EventQueue, Rng, SeedScheme, StreamKind,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteConfig(pub Vec<u8>);

impl SiteConfig {
    pub fn constant(n: usize, value: u8) -> Self {
        SiteConfig(vec![value; n])
    }

    /// Bit `i` of `bits` is the opinion of vertex `i`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        SiteConfig((0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0.iter().enumerate().fold(0, |acc, (i, v)| acc | ((*v as u64) << i))
    }

    /// `Ber(alpha)` product configuration.
    pub fn bernoulli(n: usize, alpha: f64, rng: &mut Rng) -> Self {
        SiteConfig((0..n).map(|_| bernoulli(rng, alpha) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|v| **v == 1).count()
    }

    /// Whether every vertex of `set` carries opinion 1.
    pub fn all_ones_on(&self, set: &[usize]) -> bool {
        set.iter().all(|&i| self.0[i] == 1)
    }

    pub fn is_consensus(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::domain(format!(
                "site configuration has {} entries, graph has {n} vertices",
                self.0.len()
            )));
        }
        if self.0.iter().any(|v| *v > 1) {
            return Err(Error::domain("opinions must be 0 or 1"));
        }
        Ok(())
    }
}

/// Open (`true`) or closed state per edge, indexed like [`FiniteGraph::edges`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeConfig(pub Vec<bool>);

impl EdgeConfig {
    pub fn constant(m: usize, open: bool) -> Self {
        EdgeConfig(vec![open; m])
    }

    pub fn from_bits(m: usize, bits: u64) -> Self {
        EdgeConfig((0..m).map(|i| (bits >> i) & 1 == 1).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0.iter().enumerate().fold(0, |acc, (i, v)| acc | ((*v as u64) << i))
    }

    pub fn bernoulli(m: usize, p: f64, rng: &mut Rng) -> Self {
        EdgeConfig((0..m).map(|_| bernoulli(rng, p)).collect())
    }

    pub fn open_count(&self) -> usize {
        self.0.iter().filter(|v| **v).count()
    }

    /// `zeta = 1` on `open` and `zeta = 0` on `closed`.
    pub fn matches(&self, open: &[usize], closed: &[usize]) -> bool {
        open.iter().all(|&e| self.0[e]) && closed.iter().all(|&e| !self.0[e])
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.0.len() != m {
            return Err(Error::domain(format!("edge configuration has {} entries, graph has {m} edges", self.0.len())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointState {
    pub sites: SiteConfig,
    pub edges: EdgeConfig,
}

/// What to record along a run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub horizon: f64,
    /// Snapshot times; values above the horizon are ignored.
    pub snapshot_times: Vec<f64>,
    /// Stop as soon as the site configuration is constant.
    pub stop_at_consensus: bool,
}

impl RunOptions {
    pub fn until(horizon: f64) -> Self {
        RunOptions { horizon, ..Default::default() }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn stopping_at_consensus(mut self) -> Self {
        self.stop_at_consensus = true;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::domain("horizon must be a positive finite number"));
        }
        Ok(())
    }
}

/// Result of one forward run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub snapshots: Vec<(f64, S)>,
    pub final_state: S,
    /// Time of the last processed event (or the horizon).
    pub end_time: f64,
    /// First time the sites were in consensus, if reached.
    pub consensus_time: Option<f64>,
    pub events: u64,
}

/// First consensus time of a run; `None` marks a timeout at the horizon.
pub fn consensus_time<S>(trajectory: &Trajectory<S>) -> Option<f64> {
    trajectory.consensus_time
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// A site clock rang (an attempted copy).
    Site(usize),
    /// An edge refresh or swap.
    Edge(usize),
}

#[derive(Clone, Copy)]
enum Slot {
    Site(usize),
    Edge(usize),
}

struct Recorder<S: Clone> {
    times: Vec<f64>,
    next: usize,
    out: Vec<(f64, S)>,
}

impl<S: Clone> Recorder<S> {
    fn new(opts: &RunOptions) -> Self {
        let mut times: Vec<f64> = opts.snapshot_times.iter().copied().filter(|t| *t <= opts.horizon).collect();
        times.sort_by(f64::total_cmp);
        Recorder { times, next: 0, out: Vec::new() }
    }

    /// Records every snapshot time strictly before `t`.
    fn before(&mut self, t: f64, state: &S) {
        while self.next < self.times.len() && self.times[self.next] < t {
            self.out.push((self.times[self.next], state.clone()));
            self.next += 1;
        }
    }
}

fn site_rng(seeds: &SeedScheme, graph: &FiniteGraph, i: usize, replica: u64) -> Rng {
    seeds.rng(StreamKind::SiteClock, graph.vertices[i].entity_id(), replica)
}

/// Core loop shared by the four dynamics.
fn run_loop<S: Clone>(
    opts: &RunOptions,
    state: &mut S,
    queue: &mut EventQueue<Slot>,
    consensus: impl Fn(&S) -> bool,
    mut fire: impl FnMut(Slot, f64, &mut S, &mut EventQueue<Slot>) -> Option<EventKind>,
    mut observer: impl FnMut(f64, EventKind, &S),
) -> Trajectory<S> {
    let mut rec = Recorder::new(opts);
    let mut consensus_time = if consensus(state) { Some(0.0) } else { None };
    let mut events = 0;
    let mut end_time = opts.horizon;
    if !(opts.stop_at_consensus && consensus_time.is_some()) {
        while let Some(ev) = queue.pop() {
            if ev.time > opts.horizon {
                break;
            }
            rec.before(ev.time, state);
            if let Some(kind) = fire(ev.payload, ev.time, state, queue) {
                events += 1;
                observer(ev.time, kind, state);
            }
            if consensus_time.is_none() && consensus(state) {
                consensus_time = Some(ev.time);
                if opts.stop_at_consensus {
                    end_time = ev.time;
                    break;
                }
            }
        }
    } else {
        end_time = 0.0;
    }
    rec.before(f64::INFINITY, state);
    Trajectory { snapshots: rec.out, final_state: state.clone(), end_time, consensus_time, events }
}

/// Voter model. With range 1 each vertex copies a uniform neighbour at rate
/// 1 (rate `1 / deg(x)` per pair). With range `R >= 2`, at each ring of the
/// clock at `x`, `x` copies a vertex drawn uniformly from the `|B_1(R)| - 1`
/// nonzero ball offsets; offsets missing from the graph ball are void draws,
/// which keeps the per-pair rate at `1 / (|B_1(R)| - 1)`.
pub fn simulate_voter(
    graph: &FiniteGraph,
    eta0: &SiteConfig,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<Trajectory<SiteConfig>> {
    simulate_voter_observed(graph, eta0, opts, seeds, replica, |_, _, _| {})
}

pub fn simulate_voter_observed(
    graph: &FiniteGraph,
    eta0: &SiteConfig,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
    observer: impl FnMut(f64, EventKind, &SiteConfig),
) -> Result<Trajectory<SiteConfig>> {
    opts.validate()?;
    if graph.n_vertices() == 0 {
        return Err(Error::domain("empty topology"));
    }
    eta0.validate(graph.n_vertices())?;
    let n = graph.n_vertices();
    let mut rngs: Vec<Rng> = (0..n).map(|i| site_rng(seeds, graph, i, replica)).collect();
    let mut queue = EventQueue::with_capacity(n);
    for (i, r) in rngs.iter_mut().enumerate() {
        queue.push(exp_sample(r, 1.0), StreamKind::SiteClock as u64, i as u64, Slot::Site(i));
    }
    let choices = graph.choice_count;
    let mut state = eta0.clone();
    Ok(run_loop(
        opts,
        &mut state,
        &mut queue,
        SiteConfig::is_consensus,
        |slot, t, s, q| {
            let Slot::Site(x) = slot else { unreachable!() };
            let r = &mut rngs[x];
            if let Some(y) = voter_choice(graph, x, choices, r) {
                s.0[x] = s.0[y];
            }
            q.push(t + exp_sample(r, 1.0), StreamKind::SiteClock as u64, x as u64, Slot::Site(x));
            Some(EventKind::Site(x))
        },
        observer,
    ))
}

fn voter_choice(graph: &FiniteGraph, x: usize, choices: usize, r: &mut Rng) -> Option<usize> {
    if graph.range == 1 {
        let nb = &graph.adjacency[x];
        if nb.is_empty() {
            return None;
        }
        return Some(nb[uniform_index(r, nb.len())]);
    }
    graph.ball[x].get(uniform_index(r, choices)).copied()
}

/// Voter copy targets of `x` with their common rate.
pub fn voter_targets(graph: &FiniteGraph, x: usize) -> (&[usize], f64) {
    if graph.range == 1 {
        let nb = &graph.adjacency[x];
        (nb, 1.0 / nb.len().max(1) as f64)
    } else {
        (&graph.ball[x], 1.0 / graph.choice_count as f64)
    }
}

/// Common degree of a regular graph.
pub fn regular_degree(graph: &FiniteGraph) -> Result<usize> {
    let d = graph.adjacency[0].len();
    if d == 0 || graph.adjacency.iter().any(|a| a.len() != d) {
        return Err(Error::domain(format!("{} is not a regular graph", graph.topology)));
    }
    Ok(d)
}

/// Voter model with stirring: each edge swaps its endpoint opinions at rate
/// `v / d`, and each vertex copies a uniform neighbour at rate 1.
pub fn simulate_stirring(
    graph: &FiniteGraph,
    xi0: &SiteConfig,
    v: f64,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<Trajectory<SiteConfig>> {
    simulate_stirring_observed(graph, xi0, v, opts, seeds, replica, |_, _, _| {})
}

pub fn simulate_stirring_observed(
    graph: &FiniteGraph,
    xi0: &SiteConfig,
    v: f64,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
    observer: impl FnMut(f64, EventKind, &SiteConfig),
) -> Result<Trajectory<SiteConfig>> {
    opts.validate()?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::domain("stirring speed v must be non-negative"));
    }
    let d = regular_degree(graph)?;
    xi0.validate(graph.n_vertices())?;
    let n = graph.n_vertices();
    let m = graph.n_edges();
    let mut site_rngs: Vec<Rng> = (0..n).map(|i| site_rng(seeds, graph, i, replica)).collect();
    let swap_rate = v / d as f64;
    let mut edge_rngs: Vec<Rng> = if swap_rate > 0.0 {
        graph.edges.iter().map(|e| seeds.rng(StreamKind::StirEdge, e.entity_id(), replica)).collect()
    } else {
        Vec::new()
    };
    let mut queue = EventQueue::with_capacity(n + m);
    for (i, r) in site_rngs.iter_mut().enumerate() {
        queue.push(exp_sample(r, 1.0), StreamKind::SiteClock as u64, i as u64, Slot::Site(i));
    }
    for (k, r) in edge_rngs.iter_mut().enumerate() {
        queue.push(exp_sample(r, swap_rate), StreamKind::StirEdge as u64, k as u64, Slot::Edge(k));
    }
    let mut state = xi0.clone();
    Ok(run_loop(
        opts,
        &mut state,
        &mut queue,
        SiteConfig::is_consensus,
        |slot, t, s, q| match slot {
            Slot::Site(x) => {
                let r = &mut site_rngs[x];
                let y = graph.adjacency[x][uniform_index(r, d)];
                s.0[x] = s.0[y];
                q.push(t + exp_sample(r, 1.0), StreamKind::SiteClock as u64, x as u64, Slot::Site(x));
                Some(EventKind::Site(x))
            }
            Slot::Edge(k) => {
                let (a, b) = graph.edge_ends[k];
                s.0.swap(a, b);
                let r = &mut edge_rngs[k];
                q.push(t + exp_sample(r, swap_rate), StreamKind::StirEdge as u64, k as u64, Slot::Edge(k));
                Some(EventKind::Edge(k))
            }
        },
        observer,
    ))
}

fn edge_clocks(
    graph: &FiniteGraph,
    zeta0: &EdgeConfig,
    p: f64,
    v: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> Vec<EdgeClock> {
    graph.edges.iter().zip(&zeta0.0).map(|(e, s)| EdgeClock::new(seeds, e.entity_id(), replica, p, v, *s)).collect()
}

/// Dynamical percolation: every edge refreshes at rate `v` to open with
/// probability `p`.
pub fn simulate_dynperc(
    graph: &FiniteGraph,
    zeta0: &EdgeConfig,
    p: f64,
    v: f64,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<Trajectory<EdgeConfig>> {
    opts.validate()?;
    check_perc_params(p, v)?;
    zeta0.validate(graph.n_edges())?;
    let mut clocks = edge_clocks(graph, zeta0, p, v, seeds, replica);
    let mut queue = EventQueue::with_capacity(clocks.len());
    for (k, c) in clocks.iter().enumerate() {
        queue.push(c.next_refresh, StreamKind::EdgeRefresh as u64, k as u64, Slot::Edge(k));
    }
    let mut state = zeta0.clone();
    Ok(run_loop(
        opts,
        &mut state,
        &mut queue,
        |_| false,
        |slot, _, s, q| {
            let Slot::Edge(k) = slot else { unreachable!() };
            let c = &mut clocks[k];
            c.step();
            s.0[k] = c.state;
            q.push(c.next_refresh, StreamKind::EdgeRefresh as u64, k as u64, Slot::Edge(k));
            Some(EventKind::Edge(k))
        },
        |_, _, _| {},
    ))
}

fn check_vmdyn_geometry(graph: &FiniteGraph) -> Result<()> {
    if let Topology::Torus { side, .. } = graph.topology {
        if side <= 2 * graph.range as i32 + 1 {
            return Err(Error::domain(format!(
                "torus side must exceed 2R+1 = {} so that range balls match the lattice",
                2 * graph.range + 1
            )));
        }
    }
    Ok(())
}

/// Voter model on dynamical percolation. At a ring at `x`, `y` is drawn
/// uniformly from the nonzero ball offsets and `x` copies `y` iff `x` and
/// `y` are joined by open edges inside the range ball of `x`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_vmdyn(
    graph: &FiniteGraph,
    eta0: &SiteConfig,
    zeta0: &EdgeConfig,
    p: f64,
    v: f64,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<Trajectory<JointState>> {
    simulate_vmdyn_observed(graph, eta0, zeta0, p, v, opts, seeds, replica, |_, _, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_vmdyn_observed(
    graph: &FiniteGraph,
    eta0: &SiteConfig,
    zeta0: &EdgeConfig,
    p: f64,
    v: f64,
    opts: &RunOptions,
    seeds: &SeedScheme,
    replica: u64,
    observer: impl FnMut(f64, EventKind, &JointState),
) -> Result<Trajectory<JointState>> {
    opts.validate()?;
    check_perc_params(p, v)?;
    check_vmdyn_geometry(graph)?;
    eta0.validate(graph.n_vertices())?;
    zeta0.validate(graph.n_edges())?;
    let n = graph.n_vertices();
    let mut site_rngs: Vec<Rng> = (0..n).map(|i| site_rng(seeds, graph, i, replica)).collect();
    let mut clocks = edge_clocks(graph, zeta0, p, v, seeds, replica);
    let mut queue = EventQueue::with_capacity(n + clocks.len());
    for (i, r) in site_rngs.iter_mut().enumerate() {
        queue.push(exp_sample(r, 1.0), StreamKind::SiteClock as u64, i as u64, Slot::Site(i));
    }
    for (k, c) in clocks.iter().enumerate() {
        queue.push(c.next_refresh, StreamKind::EdgeRefresh as u64, k as u64, Slot::Edge(k));
    }
    let choices = graph.choice_count;
    let mut state = JointState { sites: eta0.clone(), edges: zeta0.clone() };
    Ok(run_loop(
        opts,
        &mut state,
        &mut queue,
        |s| s.sites.is_consensus(),
        |slot, t, s, q| match slot {
            Slot::Site(x) => {
                let r = &mut site_rngs[x];
                let k = uniform_index(r, choices);
                if let Some(&y) = graph.ball[x].get(k) {
                    let edges = &s.edges.0;
                    if graph.connected_in_ball(x, y, |e| edges[e]) {
                        s.sites.0[x] = s.sites.0[y];
                    }
                }
                q.push(t + exp_sample(r, 1.0), StreamKind::SiteClock as u64, x as u64, Slot::Site(x));
                Some(EventKind::Site(x))
            }
            Slot::Edge(k) => {
                let c = &mut clocks[k];
                c.step();
                s.edges.0[k] = c.state;
                q.push(c.next_refresh, StreamKind::EdgeRefresh as u64, k as u64, Slot::Edge(k));
                Some(EventKind::Edge(k))
            }
        },
        observer,
    ))
}

/// Exact generators of the forward dynamics on bit-encoded states, used as
/// oracles for small graphs.
pub mod exact {
    use super::*;

    fn copy_bit(bits: u64, x: usize, y: usize) -> u64 {
        let b = (bits >> y) & 1;
        (bits & !(1 << x)) | (b << x)
    }

    fn swap_bits(bits: u64, a: usize, b: usize) -> u64 {
        let differ = ((bits >> a) ^ (bits >> b)) & 1;
        bits ^ (differ << a) ^ (differ << b)
    }

    /// Voter model; state bit `i` is the opinion at vertex `i`.
    pub struct VoterChain<'a> {
        pub graph: &'a FiniteGraph,
    }

    impl RateModel for VoterChain<'_> {
        type State = u64;
        fn transitions(&self, s: &u64, out: &mut Vec<(u64, f64)>) {
            for x in 0..self.graph.n_vertices() {
                let (targets, r) = voter_targets(self.graph, x);
                for &y in targets {
                    out.push((copy_bit(*s, x, y), r));
                }
            }
        }
    }

    /// Voter model with stirring at speed `v`.
    pub struct StirringChain<'a> {
        pub graph: &'a FiniteGraph,
        pub v: f64,
    }

    impl RateModel for StirringChain<'_> {
        type State = u64;
        fn transitions(&self, s: &u64, out: &mut Vec<(u64, f64)>) {
            let d = self.graph.adjacency[0].len() as f64;
            for x in 0..self.graph.n_vertices() {
                for &y in &self.graph.adjacency[x] {
                    out.push((copy_bit(*s, x, y), 1.0 / d));
                }
            }
            if self.v > 0.0 {
                for &(a, b) in &self.graph.edge_ends {
                    out.push((swap_bits(*s, a, b), self.v / d));
                }
            }
        }
    }

    /// Voter model on dynamical percolation; state `(sites, edges)`.
    pub struct VmdynChain<'a> {
        pub graph: &'a FiniteGraph,
        pub p: f64,
        pub v: f64,
    }

    impl RateModel for VmdynChain<'_> {
        type State = (u64, u64);
        fn transitions(&self, s: &(u64, u64), out: &mut Vec<((u64, u64), f64)>) {
            let (sites, edges) = *s;
            let r = 1.0 / self.graph.choice_count as f64;
            for x in 0..self.graph.n_vertices() {
                for &y in &self.graph.ball[x] {
                    if self.graph.connected_in_ball(x, y, |e| (edges >> e) & 1 == 1) {
                        out.push(((copy_bit(sites, x, y), edges), r));
                    }
                }
            }
            for k in 0..self.graph.n_edges() {
                if (edges >> k) & 1 == 1 {
                    out.push(((sites, edges & !(1 << k)), self.v * (1.0 - self.p)));
                } else {
                    out.push(((sites, edges | (1 << k)), self.v * self.p));
                }
            }
        }
    }
}
