//! Couplings behind the duality arguments and their break-time functionals:
//! coalescing against independent walkers, single against separate
//! environments, and the martingale identity of a coupled pair of chains.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::ctmc::{gillespie, RateModel};
use crate::duals::coalescing::{simulate_coalescing, simulate_coalescing_observed, CoalescingRun, WalkOptions};
use crate::duals::env::Environment;
use crate::duals::exact::{mismatch_rate, CoupledChain};
use crate::duals::space::{phi_count, WalkSpace};
use crate::duals::walkers::{EnvMode, KnowledgeWalkers};
use crate::error::{Error, Result};
use crate::lattice::{Edge, Topology, Vertex};
use crate::randomness::{SeedScheme, StreamKind};
use crate::replicas;
use crate::stats::{pooled_se, Estimate, MeanAcc};

/// Number of topology edges with both endpoints in `set`.
pub fn phi_edge_count(set: &[Vertex], topology: &Topology) -> usize {
    let mut count = 0;
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            if a != b && topology.are_adjacent(a, b) {
                count += 1;
            }
        }
    }
    count
}

/// Coalescing walks run together with the independent walks they are built
/// from; containment is certified after every event.
pub fn couple_coalescing_independent<S: WalkSpace>(
    space: &S,
    a0: &[S::V],
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<CoalescingRun<S::V>> {
    simulate_coalescing(space, a0, &WalkOptions::until(horizon).certified(), seeds, replica)
}

/// A probability of an "ever" event truncated at a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedEstimate {
    pub estimate: Estimate,
    pub horizon: f64,
    /// The event was only observed on `[0, horizon]`.
    pub truncated: bool,
}

/// Minimum replica count for [`estimate_g`].
pub const MIN_G_REPLICAS: u64 = 1000;

/// `P(some coalescence by the horizon)` for walkers started from `a0`.
pub fn estimate_g<S: WalkSpace>(
    space: &S,
    a0: &[S::V],
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<TruncatedEstimate> {
    if n < MIN_G_REPLICAS {
        return Err(Error::domain(format!("estimate_g needs at least {MIN_G_REPLICAS} replicas")));
    }
    let opts = WalkOptions::until(horizon).stop_at_first_coalescence();
    let hits = replicas::try_run(n, |r| {
        simulate_coalescing(space, a0, &opts, seeds, r).map(|run| run.first_coalescence().is_some())
    })?;
    let k = hits.iter().filter(|h| **h).count() as u64;
    Ok(TruncatedEstimate { estimate: Estimate::proportion(k, n), horizon, truncated: true })
}

/// Proximity functionals of two walkers: for each level `l` the first time
/// `D <= l` and the time spent with `D <= l`, where `D` is the distance
/// between the walkers or from one walker to the other's knowledge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityRun {
    pub levels: Vec<i64>,
    /// First hitting time of `{D <= l}` within the horizon.
    pub first_hit: Vec<Option<f64>>,
    /// Time in `{D <= l}` during `[0, horizon]`.
    pub occupation: Vec<f64>,
    /// Time in `{D <= l}` during `(horizon, horizon + extra]`.
    pub occupation_extra: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct PairSetup<'a> {
    pub topology: &'a Topology,
    pub x: Vertex,
    pub y: Vertex,
    pub p: f64,
    pub v: f64,
    pub range: i32,
}

impl PairSetup<'_> {
    fn walkers(&self, mode: EnvMode, seeds: &SeedScheme, replica: u64) -> Result<KnowledgeWalkers> {
        KnowledgeWalkers::new(self.topology, self.range, self.p, self.v, &[self.x, self.y], mode, seeds, replica)
    }
}

pub fn proximity_run(
    setup: &PairSetup,
    levels: &[i64],
    horizon: f64,
    extra: f64,
    mode: EnvMode,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<ProximityRun> {
    let mut w = setup.walkers(mode, seeds, replica)?;
    let mut run = ProximityRun {
        levels: levels.to_vec(),
        first_hit: vec![None; levels.len()],
        occupation: vec![0.0; levels.len()],
        occupation_extra: vec![0.0; levels.len()],
    };
    let end = horizon + extra;
    let mut last = 0.0;
    let mut d = w.proximity(0, 1);
    let mark = |run: &mut ProximityRun, t: f64, d: i64| {
        for (k, &l) in levels.iter().enumerate() {
            if d <= l && run.first_hit[k].is_none() && t <= horizon {
                run.first_hit[k] = Some(t);
            }
        }
    };
    let occupy = |run: &mut ProximityRun, from: f64, to: f64, d: i64| {
        for (k, &l) in levels.iter().enumerate() {
            if d <= l {
                run.occupation[k] += (to.min(horizon) - from).max(0.0);
                run.occupation_extra[k] += (to - from.max(horizon)).max(0.0);
            }
        }
    };
    mark(&mut run, 0.0, d);
    while let Some(ev) = w.step(end) {
        let t = ev.time();
        occupy(&mut run, last, t, d);
        last = t;
        d = w.proximity(0, 1);
        mark(&mut run, t, d);
    }
    occupy(&mut run, last, end, d);
    Ok(run)
}

/// `f_l` (hit probability) and `g_l` (mean occupation) on separate
/// environments, with `g_l` also integrated over one extra time unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgEstimate {
    pub level: i64,
    pub f: Estimate,
    pub g: Estimate,
    /// `g_l` integrated up to `horizon + 1`.
    pub g_extended: Estimate,
    pub horizon: f64,
}

pub fn estimate_f_g(
    setup: &PairSetup,
    levels: &[i64],
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<Vec<FgEstimate>> {
    let runs = replicas::try_run(n, |r| proximity_run(setup, levels, horizon, 1.0, EnvMode::Separate, seeds, r))?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let hits = runs.iter().filter(|r| r.first_hit[k].is_some()).count() as u64;
            let g = MeanAcc::from_iter(runs.iter().map(|r| r.occupation[k]));
            let ge = MeanAcc::from_iter(runs.iter().map(|r| r.occupation[k] + r.occupation_extra[k]));
            FgEstimate { level, f: Estimate::proportion(hits, n), g: g.estimate(), g_extended: ge.estimate(), horizon }
        })
        .collect())
}

/// One run of the single/separate environment coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSeparateRun {
    /// Entrance time into `{D <= R}`.
    pub tau_b: Option<f64>,
    /// First time the two chains differ.
    pub break_time: Option<f64>,
    /// Time in `{D <= 2R}` during `[0, horizon]` on the separate side.
    pub occupation_2r: f64,
    pub single_final: Vec<Vertex>,
    pub separate_final: Vec<Vertex>,
}

type KnowledgeView = Vec<(Edge, bool, u32)>;

fn view(envs: &[Environment]) -> KnowledgeView {
    let mut all: FxHashMap<Edge, (bool, u32, bool)> = FxHashMap::default();
    for env in envs {
        for k in env.snapshot(u32::MAX) {
            let entry = all.entry(k.edge).or_insert((k.open, 0, false));
            entry.1 |= k.mask;
            entry.2 |= entry.0 != k.open;
        }
    }
    let mut out: Vec<(Edge, bool, u32)> =
        all.into_iter().map(|(e, (open, mask, conflict))| (e, open, if conflict { u32::MAX } else { mask })).collect();
    out.sort_by_key(|x| x.0);
    out
}

fn same_state(a: &KnowledgeWalkers, b: &KnowledgeWalkers) -> bool {
    a.positions == b.positions && view(&a.envs) == view(&b.envs)
}

/// Label separating the single-environment randomness after the split.
const SPLIT_LABEL: u64 = 0x5e9a_7a7e;

/// Runs the separate-environment pair `Y` and the single-environment pair
/// `X` together: `X = Y` until `Y` enters `{D <= R}`, after which `X`
/// continues in one environment built from the knowledge of both walkers,
/// with independent randomness.
pub fn couple_single_separate(
    setup: &PairSetup,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<SingleSeparateRun> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    let r = setup.range as i64;
    let mut y = setup.walkers(EnvMode::Separate, seeds, replica)?;
    let mut d = y.proximity(0, 1);
    let mut last = 0.0;
    let mut occupation = 0.0;
    let mut tau_b = (d <= r).then_some(0.0);
    while tau_b.is_none() {
        let Some(ev) = y.step(horizon) else { break };
        let t = ev.time();
        if d <= 2 * r {
            occupation += t - last;
        }
        last = t;
        d = y.proximity(0, 1);
        if d <= r {
            tau_b = Some(t);
        }
    }
    let mut break_time = None;
    let mut x_final = None;
    if let Some(tb) = tau_b {
        let split = seeds.derive(SPLIT_LABEL);
        let mut x = setup.walkers(EnvMode::Single, &split, replica)?;
        x.positions = y.positions.clone();
        let mut env = Environment::new(setup.p, setup.v, seeds.rng(StreamKind::Coupling, 0, replica));
        let mut merged: FxHashMap<Edge, crate::duals::env::KnownEdge> = FxHashMap::default();
        for e in &y.envs {
            for k in e.snapshot(u32::MAX) {
                merged.entry(k.edge).and_modify(|m| m.mask |= k.mask).or_insert(k);
            }
        }
        let mut known: Vec<_> = merged.into_values().collect();
        known.sort_by_key(|k| k.edge);
        for k in known {
            env.insert_known(k);
        }
        x.envs[0] = env;
        x.resume_at(tb);
        loop {
            let (tx, ty) = (x.next_event_time(), y.next_event_time());
            let t = tx.min(ty);
            if t > horizon {
                break;
            }
            if ty <= tx {
                y.step(horizon);
                if d <= 2 * r {
                    occupation += t - last;
                }
                last = t;
                d = y.proximity(0, 1);
            }
            if tx <= ty {
                x.step(horizon);
            }
            if break_time.is_none() && !same_state(&x, &y) {
                break_time = Some(t);
            }
        }
        x_final = Some(x.positions.clone());
    }
    while let Some(ev) = y.step(horizon) {
        let t = ev.time();
        if d <= 2 * r {
            occupation += t - last;
        }
        last = t;
        d = y.proximity(0, 1);
    }
    if d <= 2 * r {
        occupation += horizon - last;
    }
    let separate_final = y.positions.clone();
    Ok(SingleSeparateRun {
        tau_b,
        break_time,
        occupation_2r: occupation,
        single_final: x_final.unwrap_or_else(|| separate_final.clone()),
        separate_final,
    })
}

/// Both sides of a finite-horizon martingale identity
/// `P(tau <= T) = E int_0^{min(tau, T)} (rate into the break) ds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Exact `P(tau <= T)` when the coupled chain was small enough.
    pub exact_lhs: Option<f64>,
    pub diff: f64,
    pub pooled_se: f64,
    /// `|lhs - rhs| <= 3` pooled standard errors.
    pub within: bool,
    pub horizon: f64,
    pub n: u64,
}

impl MartingaleCheck {
    fn from_samples(hits: &[bool], integrals: &[f64], exact_lhs: Option<f64>, horizon: f64) -> Self {
        let n = hits.len() as u64;
        let k = hits.iter().filter(|h| **h).count() as u64;
        let lhs = Estimate::proportion(k, n);
        let rhs = MeanAcc::from_iter(integrals.iter().copied()).estimate();
        let diff = lhs.mean - rhs.mean;
        let se = pooled_se(lhs.se, rhs.se);
        MartingaleCheck { lhs, rhs, exact_lhs, diff, pooled_se: se, within: diff.abs() <= 3.0 * se, horizon, n }
    }
}

struct UntilBroken<'a, M>(&'a M);

impl<S: Clone, M: RateModel<State = (S, S, bool)>> RateModel for UntilBroken<'_, M>
where
    (S, S, bool): Clone + Eq + std::hash::Hash + Ord,
{
    type State = (S, S, bool);
    fn transitions(&self, s: &Self::State, out: &mut Vec<(Self::State, f64)>) {
        if !s.2 {
            self.0.transitions(s, out);
        }
    }
}

/// One run of the coupled chain `(W, Z, I)` from `(z0, z0, 0)`: the break
/// time and the integrated mismatch rate up to `min(tau, T)`.
pub fn coupled_chain_run<S, M1, M2>(
    left: &M1,
    right: &M2,
    z0: &S,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> (Option<f64>, f64)
where
    S: Clone + Eq + std::hash::Hash + Ord,
    M1: RateModel<State = S>,
    M2: RateModel<State = S>,
{
    let chain = CoupledChain { left, right };
    let stopped = UntilBroken(&chain);
    let mut rng = seeds.rng(StreamKind::Coupling, 1, replica);
    let mut integral = 0.0;
    let mut last = (0.0, 0.0);
    let mut tau = None;
    gillespie(&stopped, (z0.clone(), z0.clone(), false), horizon, &mut rng, |t, s| {
        integral += last.1 * (t - last.0);
        if s.2 {
            tau = Some(t);
            last = (t, 0.0);
        } else {
            last = (t, mismatch_rate(left, right, &s.0));
        }
    });
    if tau.is_none() {
        integral += last.1 * (horizon - last.0);
    }
    (tau, integral)
}

/// Martingale identity for the coupling of two rate models started from
/// `z0`; the exact left side is added when the coupled chain has at most
/// `crate::ctmc::MAX_STATES` states.
pub fn martingale_identity_check<S, M1, M2>(
    left: &M1,
    right: &M2,
    z0: &S,
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<MartingaleCheck>
where
    S: Clone + Eq + std::hash::Hash + Ord + Send + Sync,
    M1: RateModel<State = S> + Sync,
    M2: RateModel<State = S> + Sync,
{
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    let runs = replicas::run(n, |r| coupled_chain_run(left, right, z0, horizon, seeds, r));
    let hits: Vec<bool> = runs.iter().map(|r| r.0.is_some()).collect();
    let integrals: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let chain = CoupledChain { left, right };
    let exact = crate::ctmc::hitting_probability(
        &chain,
        &(z0.clone(), z0.clone(), false),
        |s| s.2,
        horizon,
        crate::ctmc::MAX_STATES,
    )
    .ok();
    Ok(MartingaleCheck::from_samples(&hits, &integrals, exact, horizon))
}

/// Collision identity for independent walkers jumping at rate `1 + v` on a
/// `degree`-regular graph: `P(tau_coll <= T)` against
/// `E int_0^{min(tau_coll, T)} 2 (1 + v) Phi(X_s) / degree ds`.
pub fn collision_identity_check<S: WalkSpace>(
    space: &S,
    a0: &[S::V],
    v: f64,
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<MartingaleCheck> {
    let mut nb = Vec::new();
    space.neighbors(&a0[0], &mut nb);
    let degree = nb.len() as f64;
    let rate = 1.0 + v;
    let opts = WalkOptions::until(horizon).with_rate(rate).stop_at_first_coalescence();
    let runs = replicas::try_run(n, |r| {
        let mut integral = 0.0;
        let mut last = (0.0, 2.0 * rate * phi_count(space, a0) as f64 / degree);
        let run = simulate_coalescing_observed(space, a0, &opts, seeds, r, |t, sys| {
            integral += last.1 * (t - last.0);
            last = (t, 2.0 * rate * phi_count(space, &sys.positions) as f64 / degree);
        })?;
        let tau = run.first_collision;
        if tau.is_none() {
            integral += last.1 * (horizon - last.0);
        }
        Ok((tau.is_some(), integral))
    })?;
    let hits: Vec<bool> = runs.iter().map(|r| r.0).collect();
    let integrals: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok(MartingaleCheck::from_samples(&hits, &integrals, None, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duals::exact::{IndependentWalkersChain, StirringSetChain};
    use crate::duals::space::LatticeSpace;
    use crate::lattice::FiniteGraph;

    #[test]
    fn phi_of_adjacent_pair_is_one() {
        let t = Topology::lattice(2);
        assert_eq!(phi_edge_count(&[Vertex::ORIGIN], &t), 0);
        assert_eq!(phi_edge_count(&[Vertex::ORIGIN, Vertex::axis(1, 1)], &t), 1);
    }

    #[test]
    fn identical_models_never_break() {
        let g = FiniteGraph::new(&Topology::cycle(6), 1).unwrap();
        let a = StirringSetChain { graph: &g, v: 1.0 };
        let c = martingale_identity_check(&a, &a, &vec![0, 2], 5.0, 200, &SeedScheme::new(1)).unwrap();
        assert_eq!(c.lhs.mean, 0.0);
        assert_eq!(c.rhs.mean, 0.0);
    }

    #[test]
    fn stirring_break_is_a_coalescence_or_a_collision() {
        let g = FiniteGraph::new(&Topology::cycle(6), 1).unwrap();
        let a = StirringSetChain { graph: &g, v: 1.0 };
        let b = IndependentWalkersChain { graph: &g, rate: 2.0 };
        let chain = CoupledChain { left: &a, right: &b };
        let stopped = UntilBroken(&chain);
        for rep in 0..200 {
            let mut rng = SeedScheme::new(2).rng(StreamKind::Coupling, 1, rep);
            let end = gillespie(&stopped, (vec![0, 2], vec![0, 2], false), 10.0, &mut rng, |_, _| {});
            if end.2 {
                let coalesced = end.0.len() < 2;
                let collided = end.1.windows(2).any(|w| w[0] == w[1]);
                assert!(coalesced || collided);
            }
        }
    }

    #[test]
    fn coupling_from_far_apart_rarely_breaks() {
        let t = Topology::lattice(3);
        let setup = PairSetup { topology: &t, x: Vertex::ORIGIN, y: Vertex::axis(0, 60), p: 0.5, v: 1.0, range: 1 };
        for rep in 0..20 {
            let run = couple_single_separate(&setup, 5.0, &SeedScheme::new(3), rep).unwrap();
            assert!(run.break_time.is_none());
            assert_eq!(run.single_final, run.separate_final);
        }
    }

    #[test]
    fn coinciding_starts_enter_immediately() {
        let t = Topology::lattice(2);
        let setup = PairSetup { topology: &t, x: Vertex::ORIGIN, y: Vertex::ORIGIN, p: 0.5, v: 1.0, range: 1 };
        let run = couple_single_separate(&setup, 5.0, &SeedScheme::new(3), 0).unwrap();
        assert_eq!(run.tau_b, Some(0.0));
    }

    #[test]
    fn g_of_a_singleton_is_zero() {
        let s = LatticeSpace::new(&Topology::lattice(3), 1).unwrap();
        let g = estimate_g(&s, &[Vertex::ORIGIN], 10.0, 1000, &SeedScheme::new(1)).unwrap();
        assert_eq!(g.estimate.mean, 0.0);
    }
}
