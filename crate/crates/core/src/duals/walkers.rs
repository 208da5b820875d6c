//! Random walks on dynamical percolation with revealed knowledge.
//!
//! Every walker follows its own instruction manual. At an attempt from `x`
//! all edges of the range ball around `x` are revealed (and become known to
//! that walker) and the walker moves to `x + m` iff the two are connected
//! inside the ball. Known edges are forgotten at their refresh.

use serde::{Deserialize, Serialize};

use super::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::{local_connected, BallGeometry, Edge, Topology, Vertex};
use crate::randomness::{check_perc_params, ManualStream, SeedScheme, StreamKind};

/// Owner bit of initial (pinned) knowledge.
pub const INITIAL_BIT: u32 = 1 << 31;

/// Largest number of walkers a system can hold.
pub const MAX_WALKERS: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// One environment shared by all walkers.
    Single,
    /// An independent environment per walker.
    Separate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WalkEvent {
    Attempt { walker: usize, time: f64, moved: bool },
    Forget { env: usize, time: f64 },
}

impl WalkEvent {
    pub fn time(&self) -> f64 {
        match self {
            WalkEvent::Attempt { time, .. } | WalkEvent::Forget { time, .. } => *time,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeWalkers {
    pub topology: Topology,
    pub geometry: BallGeometry,
    pub mode: EnvMode,
    pub positions: Vec<Vertex>,
    /// Walkers that still move; an absorbed walker stops.
    pub active: Vec<bool>,
    pub attempts: Vec<u64>,
    pub envs: Vec<Environment>,
    pub time: f64,
    manuals: Vec<ManualStream>,
    next: Vec<(f64, usize)>,
    ball: Vec<Edge>,
    open: Vec<bool>,
    forgotten: Vec<(Edge, u32)>,
}

impl KnowledgeWalkers {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topology: &Topology,
        range: i32,
        p: f64,
        v: f64,
        starts: &[Vertex],
        mode: EnvMode,
        seeds: &SeedScheme,
        replica: u64,
    ) -> Result<Self> {
        check_perc_params(p, v)?;
        topology.validate()?;
        if !matches!(topology, Topology::Torus { .. } | Topology::InfiniteLattice { .. }) {
            return Err(Error::unsupported(format!(
                "walks on dynamical percolation need a torus or Z^d, got {topology}"
            )));
        }
        if range < 1 {
            return Err(Error::domain("range must be at least 1"));
        }
        if let Topology::Torus { side, .. } = topology {
            if *side <= 2 * range + 1 {
                return Err(Error::domain(format!(
                    "torus side {side} must exceed 2R+1 = {} for lattice ball geometry",
                    2 * range + 1
                )));
            }
        }
        if starts.is_empty() || starts.len() > MAX_WALKERS {
            return Err(Error::domain(format!("need between 1 and {MAX_WALKERS} walkers")));
        }
        if let Some(x) = starts.iter().find(|x| !topology.contains(x)) {
            return Err(Error::domain(format!("{x} is not a vertex of {topology}")));
        }
        let geometry = BallGeometry::new(topology.dim(), range);
        let n_env = match mode {
            EnvMode::Single => 1,
            EnvMode::Separate => starts.len(),
        };
        let envs =
            (0..n_env).map(|k| Environment::new(p, v, seeds.rng(StreamKind::Environment, k as u64, replica))).collect();
        let mut manuals: Vec<ManualStream> =
            (0..starts.len()).map(|i| ManualStream::new(seeds, i as u64, replica, geometry.jump_count())).collect();
        let next = manuals.iter_mut().map(|m| m.next_event()).collect();
        Ok(KnowledgeWalkers {
            topology: topology.clone(),
            geometry,
            mode,
            positions: starts.to_vec(),
            active: vec![true; starts.len()],
            attempts: vec![0; starts.len()],
            envs,
            time: 0.0,
            manuals,
            next,
            ball: Vec::new(),
            open: Vec::new(),
            forgotten: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn env_of(&self, walker: usize) -> usize {
        match self.mode {
            EnvMode::Single => 0,
            EnvMode::Separate => walker,
        }
    }

    pub fn bit(walker: usize) -> u32 {
        1 << walker
    }

    /// Fixes the state of `e` at the current time in environment `env`.
    pub fn pin(&mut self, env: usize, e: Edge, open: bool, mask: u32) {
        let t = self.time;
        self.envs[env].pin(e, open, t, mask);
    }

    /// Next event time, if any.
    fn next_time(&self) -> (f64, Option<usize>, Option<usize>) {
        let mut best = (f64::INFINITY, None, None);
        for (i, &(t, _)) in self.next.iter().enumerate() {
            if self.active[i] && t < best.0 {
                best = (t, Some(i), None);
            }
        }
        for (k, env) in self.envs.iter().enumerate() {
            if let Some(t) = env.next_forget() {
                if t < best.0 {
                    best = (t, None, Some(k));
                }
            }
        }
        best
    }

    /// Time of the next event (infinite when nothing can happen).
    pub fn next_event_time(&self) -> f64 {
        self.next_time().0
    }

    /// Performs the next event if it happens by `horizon`; otherwise moves
    /// the clock to `horizon` and returns `None`.
    pub fn step(&mut self, horizon: f64) -> Option<WalkEvent> {
        let (t, walker, env) = self.next_time();
        if t > horizon {
            self.time = self.time.max(horizon);
            return None;
        }
        self.time = t;
        if let Some(k) = env {
            self.forgotten.clear();
            let mut out = std::mem::take(&mut self.forgotten);
            self.envs[k].advance(t, &mut out);
            self.forgotten = out;
            return Some(WalkEvent::Forget { env: k, time: t });
        }
        let i = walker.expect("an attempt or a forget");
        let moved = self.attempt(i, t);
        Some(WalkEvent::Attempt { walker: i, time: t, moved })
    }

    /// Edges forgotten by the last forget event.
    pub fn last_forgotten(&self) -> &[(Edge, u32)] {
        &self.forgotten
    }

    fn attempt(&mut self, i: usize, t: f64) -> bool {
        let mark = self.next[i].1;
        self.next[i] = self.manuals[i].next_event();
        self.attempts[i] += 1;
        let k = self.env_of(i);
        let x = self.positions[i];
        let g = &self.geometry;
        g.edges_at(&self.topology, &x, &mut self.ball);
        self.open.clear();
        let env = &mut self.envs[k];
        for e in &self.ball {
            self.open.push(env.reveal(e, t, Self::bit(i)));
        }
        let target = g.jump_target[mark];
        if local_connected(g.offsets.len(), &g.edges, &self.open, g.center, target) {
            self.positions[i] = self.topology.displace(&x, &g.jumps[mark]);
            true
        } else {
            false
        }
    }

    /// Restarts every clock at time `t` with fresh attempt times.
    pub fn resume_at(&mut self, t: f64) {
        self.time = t;
        for (m, n) in self.manuals.iter_mut().zip(self.next.iter_mut()) {
            m.resume_at(t);
            *n = m.next_event();
        }
    }

    /// Stops walker `drop` and hands its knowledge to walker `keep`.
    pub fn absorb(&mut self, drop: usize, keep: usize) {
        self.active[drop] = false;
        let k = self.env_of(drop);
        self.envs[k].transfer(Self::bit(drop), Self::bit(keep));
    }

    /// Distance from `x` to the nearest edge known to `owner`.
    pub fn distance_to_knowledge(&self, x: &Vertex, owner: usize) -> i64 {
        let bit = Self::bit(owner);
        self.envs[self.env_of(owner)]
            .known()
            .filter(|(_, m)| m & bit != 0)
            .map(|(e, _)| self.topology.distance_to_edge(x, e))
            .min()
            .unwrap_or(i64::MAX)
    }

    /// `min(|X_i - X_j|, d(X_i, K_j), d(X_j, K_i))`: the proximity of two
    /// walkers to each other and to each other's knowledge.
    pub fn proximity(&self, i: usize, j: usize) -> i64 {
        let (xi, xj) = (self.positions[i], self.positions[j]);
        self.topology.distance(&xi, &xj).min(self.distance_to_knowledge(&xi, j)).min(self.distance_to_knowledge(&xj, i))
    }

    /// Known edges of `owner` split into open and closed.
    pub fn knowledge(&self, owner: usize) -> RevealedKnowledge {
        RevealedKnowledge::from_env(&self.envs[self.env_of(owner)], Self::bit(owner))
    }

    /// Union of the knowledge of all walkers (and initial knowledge).
    pub fn pooled_knowledge(&self) -> RevealedKnowledge {
        let mut all = RevealedKnowledge::default();
        for env in &self.envs {
            let k = RevealedKnowledge::from_env(env, u32::MAX);
            all.open.extend(k.open);
            all.closed.extend(k.closed);
        }
        all.open.sort();
        all.open.dedup();
        all.closed.sort();
        all.closed.dedup();
        all
    }

    pub fn knows_nothing(&self) -> bool {
        self.envs.iter().all(|e| e.known_count() == 0)
    }
}

/// Revealed sets: edges known open and edges known closed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedKnowledge {
    pub open: Vec<Edge>,
    pub closed: Vec<Edge>,
}

impl RevealedKnowledge {
    pub fn from_env(env: &Environment, mask: u32) -> Self {
        let mut k = RevealedKnowledge::default();
        for rec in env.snapshot(mask) {
            if rec.open {
                k.open.push(rec.edge);
            } else {
                k.closed.push(rec.edge);
            }
        }
        k
    }

    pub fn len(&self) -> usize {
        self.open.len() + self.closed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_disjoint(&self) -> bool {
        self.open.iter().all(|e| self.closed.binary_search(e).is_err())
    }
}

/// One recorded step of a walker system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkRecord {
    pub time: f64,
    pub positions: Vec<Vertex>,
    /// `|E ∪ F|` of each walker.
    pub known: Vec<usize>,
    /// Size of the pooled knowledge.
    pub pooled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkTrajectory {
    pub records: Vec<WalkRecord>,
    pub final_knowledge: Vec<RevealedKnowledge>,
    pub final_pooled: RevealedKnowledge,
}

/// Walkers sharing one environment started from `Ber(p)` off the pinned
/// edges; a record is written after every event.
#[allow(clippy::too_many_arguments)]
pub fn simulate_walkers_single_env(
    topology: &Topology,
    starts: &[Vertex],
    pinned: &[(Edge, bool)],
    p: f64,
    v: f64,
    range: i32,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<WalkTrajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    let mut w = KnowledgeWalkers::new(topology, range, p, v, starts, EnvMode::Single, seeds, replica)?;
    for &(e, open) in pinned {
        w.pin(0, e, open, 0);
    }
    let record = |w: &KnowledgeWalkers| WalkRecord {
        time: w.time,
        positions: w.positions.clone(),
        known: (0..w.len()).map(|i| w.envs[0].snapshot(KnowledgeWalkers::bit(i)).len()).collect(),
        pooled: w.envs[0].known_count(),
    };
    let mut records = vec![record(&w)];
    while w.step(horizon).is_some() {
        records.push(record(&w));
    }
    let final_knowledge = (0..w.len()).map(|i| w.knowledge(i)).collect();
    let final_pooled = w.pooled_knowledge();
    Ok(WalkTrajectory { records, final_knowledge, final_pooled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_attempt_reveals_the_whole_ball() {
        let t = Topology::lattice(2);
        let seeds = SeedScheme::new(4);
        let mut w = KnowledgeWalkers::new(&t, 2, 0.5, 1.0, &[Vertex::ORIGIN], EnvMode::Single, &seeds, 0).unwrap();
        let ev = w.step(100.0).unwrap();
        assert!(matches!(ev, WalkEvent::Attempt { .. }));
        assert_eq!(w.knowledge(0).len(), 16);
    }

    #[test]
    fn knowledge_empties_without_attempts() {
        let t = Topology::lattice(3);
        let seeds = SeedScheme::new(5);
        let mut w = KnowledgeWalkers::new(&t, 1, 0.5, 50.0, &[Vertex::ORIGIN], EnvMode::Single, &seeds, 0).unwrap();
        w.step(100.0);
        let mut emptied = false;
        while let Some(ev) = w.step(100.0) {
            if matches!(ev, WalkEvent::Attempt { .. }) {
                break;
            }
            if w.knows_nothing() {
                emptied = true;
            }
        }
        assert!(emptied);
    }

    #[test]
    fn closed_environment_blocks_every_move() {
        let t = Topology::lattice(1);
        let seeds = SeedScheme::new(6);
        let mut w = KnowledgeWalkers::new(&t, 1, 0.0, 1.0, &[Vertex::ORIGIN], EnvMode::Single, &seeds, 0).unwrap();
        while let Some(ev) = w.step(50.0) {
            if let WalkEvent::Attempt { moved, .. } = ev {
                assert!(!moved);
            }
        }
        assert_eq!(w.positions[0], Vertex::ORIGIN);
    }

    #[test]
    fn small_torus_is_rejected() {
        let seeds = SeedScheme::new(1);
        let r =
            KnowledgeWalkers::new(&Topology::torus(2, 5), 2, 0.5, 1.0, &[Vertex::ORIGIN], EnvMode::Single, &seeds, 0);
        assert!(r.is_err());
    }
}
