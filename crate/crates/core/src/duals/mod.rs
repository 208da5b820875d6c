//! Dual processes: coalescing random walks, coalescing-stirring set walkers,
//! random walks on dynamical percolation with their revealed knowledge, the
//! coalescing dual chain `(C, A, B)` and regeneration times.

pub mod chain;
pub mod coalescing;
pub mod env;
pub mod exact;
pub mod flow;
pub mod regeneration;
pub mod space;
pub mod stirring;
pub mod tree;
pub mod walkers;

pub use chain::{connection_rate, simulate_dual_chain, DualChainState, DualMethod};
pub use coalescing::{simulate_coalescing, CoalescingRun};
pub use env::Environment;
pub use flow::rw_flow;
pub use regeneration::{detect_regenerations, RegenerationRecord};
pub use stirring::{simulate_coalescing_stirring, stirring_set_walk, StirringRun};
pub use tree::tree_branch_measure;
pub use walkers::{simulate_walkers_single_env, KnowledgeWalkers};

use serde::{Deserialize, Serialize};

/// Labelled walkers with union-find coalescence. Every label keeps its own
/// (independent) position; a label that coalesced follows its survivor in
/// the coalescing view. The survivor of a merge is the smaller label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerSystem<V> {
    /// Independent position of every label.
    pub positions: Vec<V>,
    /// Union-find parent; `parent[i] == i` for live labels.
    pub parent: Vec<usize>,
}

impl<V: Copy + PartialEq> WalkerSystem<V> {
    /// Labels start at `starts`; coinciding starts merge immediately.
    pub fn new(starts: &[V]) -> Self {
        let mut sys = WalkerSystem { positions: starts.to_vec(), parent: (0..starts.len()).collect() };
        for j in 0..starts.len() {
            sys.settle(j);
        }
        sys
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    pub fn is_live(&self, i: usize) -> bool {
        self.parent[i] == i
    }

    pub fn live(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_live(i))
    }

    pub fn live_count(&self) -> usize {
        self.live().count()
    }

    /// Position of label `i` in the coalescing view.
    pub fn coalesced_position(&self, i: usize) -> V {
        self.positions[self.find(i)]
    }

    /// Positions of the live labels, in label order.
    pub fn live_positions(&self) -> Vec<V> {
        self.live().map(|i| self.positions[i]).collect()
    }

    /// Checks whether live label `j` now shares its position with another
    /// live label; if so the larger label is absorbed into the smaller.
    /// Returns `(survivor, absorbed)`.
    pub fn settle(&mut self, j: usize) -> Option<(usize, usize)> {
        if !self.is_live(j) {
            return None;
        }
        let pos = self.positions[j];
        let other = (0..self.len()).find(|&i| i != j && self.is_live(i) && self.positions[i] == pos)?;
        let (keep, drop) = if other < j { (other, j) } else { (j, other) };
        self.parent[drop] = keep;
        Some((keep, drop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_label_survives() {
        let mut w = WalkerSystem::new(&[5, 7, 9]);
        w.positions[2] = 7;
        assert_eq!(w.settle(2), Some((1, 2)));
        w.positions[0] = 7;
        assert_eq!(w.settle(0), Some((0, 1)));
        assert_eq!(w.find(2), 0);
        assert_eq!(w.live_count(), 1);
        assert_eq!(w.coalesced_position(2), 7);
    }

    #[test]
    fn coinciding_starts_merge() {
        let w = WalkerSystem::new(&[1, 1, 2]);
        assert_eq!(w.live_positions(), vec![1, 2]);
    }
}
