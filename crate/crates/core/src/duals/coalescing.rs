//! Coalescing random walks built from independent walkers: every label runs
//! its own rate-`lambda` walk from its own substream, and the coalescing
//! system is the set of live labels. This is the natural coupling in which
//! the coalescing set is always contained in the independent positions.

use serde::{Deserialize, Serialize};

use super::space::WalkSpace;
use super::WalkerSystem;
use crate::error::{Error, Result};
use crate::randomness::{exp_sample, EventQueue, Rng, SeedScheme, StreamKind};

#[derive(Clone, Debug)]
pub struct WalkOptions {
    pub horizon: f64,
    /// Jump rate of each walker.
    pub jump_rate: f64,
    /// Stop at the first coalescence.
    pub stop_at_first_coalescence: bool,
    /// Check the containment of the coalescing set in the independent
    /// positions after every event.
    pub certify: bool,
}

impl WalkOptions {
    pub fn until(horizon: f64) -> Self {
        WalkOptions { horizon, jump_rate: 1.0, stop_at_first_coalescence: false, certify: false }
    }

    pub fn certified(mut self) -> Self {
        self.certify = true;
        self
    }

    pub fn stop_at_first_coalescence(mut self) -> Self {
        self.stop_at_first_coalescence = true;
        self
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.jump_rate = rate;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescingRun<V> {
    /// Live positions at the end of the run, sorted.
    pub final_set: Vec<V>,
    /// Independent position of every label at the end of the run.
    pub independent: Vec<V>,
    pub coalescence_times: Vec<f64>,
    /// First time two independent walkers occupied the same vertex.
    pub first_collision: Option<f64>,
    pub end_time: f64,
    pub events: u64,
    /// Events after which some coalescing position was not an independent
    /// position.
    pub containment_violations: u64,
}

impl<V> CoalescingRun<V> {
    pub fn first_coalescence(&self) -> Option<f64> {
        self.coalescence_times.first().copied()
    }
}

pub(crate) fn walker_rng(seeds: &SeedScheme, label: usize, replica: u64) -> Rng {
    seeds.rng(StreamKind::Manual, label as u64, replica)
}

/// Coalescing random walks from `starts` (labels in the given order).
pub fn simulate_coalescing<S: WalkSpace>(
    space: &S,
    starts: &[S::V],
    opts: &WalkOptions,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<CoalescingRun<S::V>> {
    simulate_coalescing_observed(space, starts, opts, seeds, replica, |_, _| {})
}

/// As [`simulate_coalescing`], calling `observer` after every event.
pub fn simulate_coalescing_observed<S: WalkSpace>(
    space: &S,
    starts: &[S::V],
    opts: &WalkOptions,
    seeds: &SeedScheme,
    replica: u64,
    mut observer: impl FnMut(f64, &WalkerSystem<S::V>),
) -> Result<CoalescingRun<S::V>> {
    if starts.is_empty() {
        return Err(Error::domain("the initial walker set must be nonempty"));
    }
    if !(opts.horizon > 0.0) || !opts.horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    if !(opts.jump_rate > 0.0) {
        return Err(Error::domain("jump rate must be positive"));
    }
    let mut sys = WalkerSystem::new(starts);
    let mut coalescence_times = Vec::new();
    let mut first_collision = None;
    for i in 0..starts.len() {
        if starts[..i].contains(&starts[i]) {
            first_collision = Some(0.0);
            coalescence_times.push(0.0);
        }
    }
    let mut rngs: Vec<Rng> = (0..starts.len()).map(|i| walker_rng(seeds, i, replica)).collect();
    let mut queue = EventQueue::with_capacity(starts.len());
    for (i, r) in rngs.iter_mut().enumerate() {
        queue.push(exp_sample(r, opts.jump_rate), StreamKind::Manual as u64, i as u64, i);
    }
    let mut events = 0;
    let mut violations = 0;
    let mut end_time = opts.horizon;
    while let Some(ev) = queue.pop() {
        if ev.time > opts.horizon {
            break;
        }
        let i = ev.payload;
        let r = &mut rngs[i];
        if let Some(y) = space.step(&sys.positions[i], r) {
            sys.positions[i] = y;
            if first_collision.is_none() && (0..sys.len()).any(|j| j != i && sys.positions[j] == y) {
                first_collision = Some(ev.time);
            }
            if sys.settle(i).is_some() {
                coalescence_times.push(ev.time);
            }
        }
        queue.push(ev.time + exp_sample(r, opts.jump_rate), StreamKind::Manual as u64, i as u64, i);
        events += 1;
        if opts.certify && !contained(&sys) {
            violations += 1;
        }
        observer(ev.time, &sys);
        if opts.stop_at_first_coalescence && !coalescence_times.is_empty() {
            end_time = ev.time;
            break;
        }
    }
    let mut final_set = sys.live_positions();
    final_set.sort();
    Ok(CoalescingRun {
        final_set,
        independent: sys.positions.clone(),
        coalescence_times,
        first_collision,
        end_time,
        events,
        containment_violations: violations,
    })
}

/// Every coalescing position is the position of some independent walker.
pub fn contained<V: Copy + PartialEq>(sys: &WalkerSystem<V>) -> bool {
    (0..sys.len()).all(|i| sys.positions.contains(&sys.coalesced_position(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duals::space::LatticeSpace;
    use crate::lattice::{Topology, Vertex};

    #[test]
    fn single_walker_never_coalesces() {
        let s = LatticeSpace::new(&Topology::lattice(2), 1).unwrap();
        let run =
            simulate_coalescing(&s, &[Vertex::ORIGIN], &WalkOptions::until(50.0), &SeedScheme::new(1), 0).unwrap();
        assert_eq!(run.final_set.len(), 1);
        assert!(run.coalescence_times.is_empty());
        assert!(run.events > 10);
    }

    #[test]
    fn empty_start_is_rejected() {
        let s = LatticeSpace::new(&Topology::lattice(2), 1).unwrap();
        assert!(simulate_coalescing(&s, &[], &WalkOptions::until(1.0), &SeedScheme::new(1), 0).is_err());
    }

    #[test]
    fn live_set_is_contained_in_independent_positions() {
        let s = LatticeSpace::new(&Topology::cycle(5), 1).unwrap();
        let starts: Vec<Vertex> = (0..4).map(|i| Vertex::new(&[i])).collect();
        for rep in 0..200 {
            let run = simulate_coalescing(&s, &starts, &WalkOptions::until(20.0).certified(), &SeedScheme::new(3), rep)
                .unwrap();
            assert_eq!(run.containment_violations, 0);
            assert!(run.final_set.iter().all(|v| run.independent.contains(v)));
        }
    }
}
