//! Seed-deterministic Poisson streams.
//!
//! Every random quantity is drawn from a substream addressed by
//! `(master seed, stream kind, entity id, replica)`. Streams never depend on
//! the order in which they are created, which keeps lazily explored infinite
//! lattices reproducible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng as _, SeedableRng};
use rand_distr::Exp1;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{jump_offsets, Edge, Vertex};

/// Generator used for every substream.
pub type Rng = Xoshiro256PlusPlus;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream kinds. The discriminant is part of the substream key and of the
/// tie-breaking order in [`EventQueue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u64)]
pub enum StreamKind {
    SiteClock = 1,
    EdgeRefresh = 2,
    StirEdge = 3,
    Manual = 4,
    InitialSite = 5,
    InitialEdge = 6,
    Environment = 7,
    DualChain = 8,
    Coupling = 9,
    Auxiliary = 10,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedScheme {
    pub master_seed: u64,
}

impl SeedScheme {
    pub fn new(master_seed: u64) -> Self {
        SeedScheme { master_seed }
    }

    /// 64-bit seed of the substream `(kind, entity, replica)`.
    pub fn stream_seed(&self, kind: StreamKind, entity: u64, replica: u64) -> u64 {
        let mut h = mix64(self.master_seed);
        h = mix64(h ^ kind as u64);
        h = mix64(h ^ entity);
        mix64(h ^ replica.rotate_left(32))
    }

    pub fn rng(&self, kind: StreamKind, entity: u64, replica: u64) -> Rng {
        Rng::seed_from_u64(self.stream_seed(kind, entity, replica))
    }

    /// A scheme whose streams are independent of this one, used to give
    /// sub-experiments their own randomness.
    pub fn derive(&self, label: u64) -> SeedScheme {
        SeedScheme { master_seed: mix64(self.master_seed ^ mix64(label ^ 0x5eed)) }
    }
}

/// `Exp(rate)` sample.
#[inline]
pub fn exp_sample(rng: &mut Rng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// `Ber(p)` sample; exact at `p = 0` and `p = 1`.
#[inline]
pub fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

#[inline]
pub fn uniform_index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

#[inline]
pub fn uniform01(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    Ok(())
}

/// Validates a dynamical-percolation parameter pair.
pub fn check_perc_params(p: f64, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p must lie in [0,1]"));
    }
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain("speed v must be positive and finite"));
    }
    Ok(())
}

/// Lazy instruction manual: rate-1 attempt times with marks uniform on the
/// nonzero offsets of the range ball. Marks are indices into
/// [`jump_offsets`]`(d, range)`.
#[derive(Clone, Debug)]
pub struct ManualStream {
    rng: Rng,
    time: f64,
    n_marks: usize,
}

impl ManualStream {
    pub fn new(seeds: &SeedScheme, walker_id: u64, replica: u64, n_marks: usize) -> Self {
        ManualStream { rng: seeds.rng(StreamKind::Manual, walker_id, replica), time: 0.0, n_marks }
    }

    /// From an already derived generator.
    pub fn from_rng(rng: Rng, n_marks: usize) -> Self {
        ManualStream { rng, time: 0.0, n_marks }
    }

    /// Moves the clock to `t`; by memorylessness the next attempt is
    /// `t + Exp(1)`.
    pub fn resume_at(&mut self, t: f64) {
        self.time = t;
    }

    /// Next `(time, mark index)`.
    #[inline]
    pub fn next_event(&mut self) -> (f64, usize) {
        self.time += exp_sample(&mut self.rng, 1.0);
        (self.time, uniform_index(&mut self.rng, self.n_marks))
    }
}

/// Materialised instruction manual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionManual {
    pub range: i32,
    pub dim: usize,
    pub horizon: f64,
    /// `(time, displacement)` in increasing time order.
    pub events: Vec<(f64, Vertex)>,
}

/// Attempt times of a walker on `[0, horizon]` with their displacements.
/// Longer horizons extend the list without changing its prefix.
pub fn manual_events(
    seeds: &SeedScheme,
    walker_id: u64,
    replica: u64,
    range: i32,
    dim: usize,
    horizon: f64,
) -> Result<InstructionManual> {
    check_horizon(horizon)?;
    if range < 1 || dim == 0 || dim > crate::lattice::MAX_DIM {
        return Err(Error::domain("range must be at least 1 and dimension in 1..=4"));
    }
    let jumps = jump_offsets(dim, range);
    let mut stream = ManualStream::new(seeds, walker_id, replica, jumps.len());
    let mut events = Vec::new();
    loop {
        let (t, k) = stream.next_event();
        if t > horizon {
            break;
        }
        events.push((t, jumps[k]));
    }
    Ok(InstructionManual { range, dim, horizon, events })
}

/// Refresh times and marks of one edge on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeUpdateStream {
    pub edge: Edge,
    pub p: f64,
    pub v: f64,
    pub horizon: f64,
    /// `(time, new state)`, `true` meaning open.
    pub events: Vec<(f64, bool)>,
}

pub fn edge_stream(
    seeds: &SeedScheme,
    edge: &Edge,
    replica: u64,
    p: f64,
    v: f64,
    horizon: f64,
) -> Result<EdgeUpdateStream> {
    check_perc_params(p, v)?;
    check_horizon(horizon)?;
    let mut clock = EdgeClock::new(seeds, edge.entity_id(), replica, p, v, false);
    let mut events = Vec::new();
    while clock.next_refresh <= horizon {
        clock.step();
        events.push((clock.last_refresh, clock.state));
    }
    Ok(EdgeUpdateStream { edge: *edge, p, v, horizon, events })
}

/// Per-edge refresh clock advanced on demand.
#[derive(Clone, Debug)]
pub struct EdgeClock {
    rng: Rng,
    p: f64,
    v: f64,
    /// State after the most recent refresh (or the initial state).
    pub state: bool,
    /// Time of the most recent refresh, `0` before the first one.
    pub last_refresh: f64,
    /// Time of the next refresh.
    pub next_refresh: f64,
    /// Number of refreshes applied so far.
    pub refreshes: u64,
}

impl EdgeClock {
    pub fn new(seeds: &SeedScheme, edge_id: u64, replica: u64, p: f64, v: f64, initial: bool) -> Self {
        let mut rng = seeds.rng(StreamKind::EdgeRefresh, edge_id, replica);
        let next_refresh = exp_sample(&mut rng, v);
        EdgeClock { rng, p, v, state: initial, last_refresh: 0.0, next_refresh, refreshes: 0 }
    }

    /// Applies the next refresh.
    #[inline]
    pub fn step(&mut self) {
        self.last_refresh = self.next_refresh;
        self.state = bernoulli(&mut self.rng, self.p);
        self.next_refresh += exp_sample(&mut self.rng, self.v);
        self.refreshes += 1;
    }

    /// State at time `t`; `t` must not decrease between calls.
    #[inline]
    pub fn state_at(&mut self, t: f64) -> bool {
        while self.next_refresh <= t {
            self.step();
        }
        self.state
    }
}

/// Initial state of an edge drawn from `Ber(p)`, from its own substream.
pub fn initial_edge_state(seeds: &SeedScheme, edge_id: u64, replica: u64, p: f64) -> bool {
    bernoulli(&mut seeds.rng(StreamKind::InitialEdge, edge_id, replica), p)
}

/// Dynamical percolation on a lazily explored edge set, realised through
/// the per-edge graphical construction. Edges of `pinned` start in the given
/// state; all others start from `Ber(p)`.
#[derive(Clone, Debug)]
pub struct LazyEdgeField {
    seeds: SeedScheme,
    replica: u64,
    p: f64,
    v: f64,
    pinned: HashMap<Edge, bool>,
    clocks: HashMap<Edge, EdgeClock>,
}

impl LazyEdgeField {
    pub fn new(seeds: SeedScheme, replica: u64, p: f64, v: f64, pinned: HashMap<Edge, bool>) -> Result<Self> {
        check_perc_params(p, v)?;
        Ok(LazyEdgeField { seeds, replica, p, v, pinned, clocks: HashMap::new() })
    }

    fn clock(&mut self, e: &Edge) -> &mut EdgeClock {
        let (seeds, replica, p, v) = (self.seeds, self.replica, self.p, self.v);
        let pinned = &self.pinned;
        self.clocks.entry(*e).or_insert_with(|| {
            let id = e.entity_id();
            let initial = match pinned.get(e) {
                Some(s) => *s,
                None => initial_edge_state(&seeds, id, replica, p),
            };
            EdgeClock::new(&seeds, id, replica, p, v, initial)
        })
    }

    /// State of `e` at time `t`. Per edge, query times must not decrease.
    pub fn state_at(&mut self, e: &Edge, t: f64) -> bool {
        self.clock(e).state_at(t)
    }

    /// First refresh time of `e` strictly after `t`.
    pub fn next_refresh_after(&mut self, e: &Edge, t: f64) -> f64 {
        let c = self.clock(e);
        c.state_at(t);
        c.next_refresh
    }

    pub fn materialised(&self) -> usize {
        self.clocks.len()
    }
}

/// Entry of an [`EventQueue`].
#[derive(Clone, Copy, Debug)]
pub struct QueuedEvent<P> {
    pub time: f64,
    pub tag: u64,
    pub id: u64,
    pub payload: P,
}

impl<P> PartialEq for QueuedEvent<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for QueuedEvent<P> {}

impl<P> PartialOrd for QueuedEvent<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for QueuedEvent<P> {
    // reversed so that the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.tag.cmp(&self.tag)).then_with(|| other.id.cmp(&self.id))
    }
}

/// Time-ordered queue; ties broken by `(tag, id)`.
#[derive(Clone, Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<QueuedEvent<P>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new() }
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        EventQueue { heap: BinaryHeap::with_capacity(n) }
    }

    #[inline]
    pub fn push(&mut self, time: f64, tag: u64, id: u64, payload: P) {
        self.heap.push(QueuedEvent { time, tag, id, payload });
    }

    #[inline]
    pub fn pop(&mut self) -> Option<QueuedEvent<P>> {
        self.heap.pop()
    }

    #[inline]
    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn clear(&mut self) {
        self.heap.clear();
    }
}

/// Merges time-sorted streams `(tag, id, times)` into one globally sorted
/// list of `(time, tag, id)`.
pub fn merged_queue(streams: &[(u64, u64, Vec<f64>)]) -> Vec<(f64, u64, u64)> {
    let mut q = EventQueue::with_capacity(streams.len());
    for (s, (tag, id, times)) in streams.iter().enumerate() {
        if let Some(t) = times.first() {
            q.push(*t, *tag, *id, (s, 0usize));
        }
    }
    let mut out = Vec::new();
    while let Some(ev) = q.pop() {
        out.push((ev.time, ev.tag, ev.id));
        let (s, k) = ev.payload;
        let (tag, id, times) = &streams[s];
        if let Some(t) = times.get(k + 1) {
            q.push(*t, *tag, *id, (s, k + 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let s = SeedScheme::new(42);
        let a = manual_events(&s, 3, 0, 1, 2, 50.0).unwrap();
        let b = manual_events(&s, 3, 0, 1, 2, 50.0).unwrap();
        assert_eq!(a, b);
        let c = manual_events(&s, 4, 0, 1, 2, 50.0).unwrap();
        assert_ne!(a.events, c.events);
        let d = manual_events(&s, 3, 1, 1, 2, 50.0).unwrap();
        assert_ne!(a.events, d.events);
    }

    #[test]
    fn manual_prefix_is_stable() {
        let s = SeedScheme::new(7);
        let short = manual_events(&s, 1, 0, 2, 2, 10.0).unwrap();
        let long = manual_events(&s, 1, 0, 2, 2, 40.0).unwrap();
        assert_eq!(&long.events[..short.events.len()], &short.events[..]);
        assert!(long.events[short.events.len()].0 > 10.0);
    }

    #[test]
    fn manual_rejects_bad_horizon() {
        let s = SeedScheme::new(1);
        assert!(matches!(manual_events(&s, 0, 0, 1, 1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(manual_events(&s, 0, 0, 1, 1, -2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn manual_marks_lie_in_ball() {
        let s = SeedScheme::new(9);
        let m = manual_events(&s, 0, 0, 2, 3, 100.0).unwrap();
        assert!(!m.events.is_empty());
        for w in m.events.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
        for (_, z) in &m.events {
            assert!((1..=2).contains(&z.l1_norm()));
        }
    }

    #[test]
    fn edge_stream_extremes() {
        let s = SeedScheme::new(5);
        let e = Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1));
        let open = edge_stream(&s, &e, 0, 1.0, 2.0, 20.0).unwrap();
        assert!(!open.events.is_empty());
        assert!(open.events.iter().all(|(_, st)| *st));
        let closed = edge_stream(&s, &e, 0, 0.0, 2.0, 20.0).unwrap();
        assert!(closed.events.iter().all(|(_, st)| !*st));
        // the refresh times do not depend on p
        let a: Vec<f64> = open.events.iter().map(|x| x.0).collect();
        let b: Vec<f64> = closed.events.iter().map(|x| x.0).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_stream_rejects_bad_parameters() {
        let s = SeedScheme::new(5);
        let e = Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1));
        assert!(edge_stream(&s, &e, 0, 1.5, 1.0, 1.0).is_err());
        assert!(edge_stream(&s, &e, 0, 0.5, 0.0, 1.0).is_err());
        assert!(edge_stream(&s, &e, 0, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn lazy_field_is_order_independent() {
        let s = SeedScheme::new(11);
        let edges: Vec<Edge> = (0..20).map(|i| Edge::new(Vertex::new(&[i]), Vertex::new(&[i + 1]))).collect();
        let mut f1 = LazyEdgeField::new(s, 0, 0.4, 1.5, HashMap::new()).unwrap();
        let mut f2 = LazyEdgeField::new(s, 0, 0.4, 1.5, HashMap::new()).unwrap();
        let times = [0.0, 0.7, 3.2, 9.9];
        let mut a = Vec::new();
        for t in times {
            for e in &edges {
                a.push((*e, t, f1.state_at(e, t)));
            }
        }
        let mut b = Vec::new();
        for e in edges.iter().rev() {
            for t in times {
                b.push((*e, t, f2.state_at(e, t)));
            }
        }
        b.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        a.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        assert_eq!(a, b);
    }

    #[test]
    fn pinned_edges_hold_until_refresh() {
        let s = SeedScheme::new(3);
        let e = Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1));
        let mut f = LazyEdgeField::new(s, 0, 0.0, 1.0, HashMap::from([(e, true)])).unwrap();
        let first = f.next_refresh_after(&e, 0.0);
        assert!(f.state_at(&e, first * 0.5));
        assert!(!f.state_at(&e, first));
    }

    #[test]
    fn queue_orders_by_time_then_tag_then_id() {
        let merged = merged_queue(&[(1, 5, vec![2.0]), (1, 3, vec![1.0, 2.0]), (0, 9, vec![2.0])]);
        assert_eq!(merged, vec![(1.0, 1, 3), (2.0, 0, 9), (2.0, 1, 3), (2.0, 1, 5)]);
    }
}
