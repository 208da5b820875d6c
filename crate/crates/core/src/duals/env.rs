//! Memoised dynamical-percolation environment on a lattice or torus.
//!
//! An edge without a record is in its stationary state: `Ber(p)` and
//! independent of everything observed. A record keeps an observed state and
//! the time of the edge's next refresh; by memorylessness a fresh record is
//! created on the first query and dropped once its refresh time passes.
//! Known edges carry a bitmask of owners (walkers) and are forgotten, in
//! time order, exactly at their refresh.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::lattice::Edge;
use crate::randomness::{bernoulli, exp_sample, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Record {
    open: bool,
    refresh: f64,
}

#[derive(Clone, Copy, Debug)]
struct Due(f64, Edge);

impl PartialEq for Due {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| self.1.cmp(&other.1))
    }
}

/// A known edge: observed state, next refresh and owner mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownEdge {
    pub edge: Edge,
    pub open: bool,
    pub refresh: f64,
    pub mask: u32,
}

#[derive(Clone, Debug)]
pub struct Environment {
    p: f64,
    v: f64,
    rng: Rng,
    records: FxHashMap<Edge, Record>,
    known: FxHashMap<Edge, u32>,
    due: BinaryHeap<Reverse<Due>>,
    prune_at: usize,
}

impl Environment {
    pub fn new(p: f64, v: f64, rng: Rng) -> Self {
        Environment {
            p,
            v,
            rng,
            records: FxHashMap::default(),
            known: FxHashMap::default(),
            due: BinaryHeap::new(),
            prune_at: 1024,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Fixes the state of `e` at time `t` (which must be the current time)
    /// until its next refresh, owned by `mask`.
    pub fn pin(&mut self, e: Edge, open: bool, t: f64, mask: u32) {
        let refresh = t + exp_sample(&mut self.rng, self.v);
        self.records.insert(e, Record { open, refresh });
        self.known.remove(&e);
        if mask != 0 {
            self.known.insert(e, mask);
            self.due.push(Reverse(Due(refresh, e)));
        }
    }

    /// Inserts a record with a given refresh time (used to rebuild one
    /// environment from another).
    pub fn insert_known(&mut self, k: KnownEdge) {
        self.records.insert(k.edge, Record { open: k.open, refresh: k.refresh });
        if k.mask != 0 {
            let previous = self.known.insert(k.edge, k.mask);
            if previous.is_none() {
                self.due.push(Reverse(Due(k.refresh, k.edge)));
            }
        }
    }

    /// Time of the next forgetting of a known edge.
    pub fn next_forget(&self) -> Option<f64> {
        self.due.peek().map(|Reverse(d)| d.0)
    }

    /// Forgets every known edge whose refresh is at or before `t`; the
    /// forgotten edges are appended to `out` with their masks.
    pub fn advance(&mut self, t: f64, out: &mut Vec<(Edge, u32)>) {
        while let Some(Reverse(Due(time, e))) = self.due.peek().copied() {
            if time > t {
                break;
            }
            self.due.pop();
            let current = self.records.get(&e).is_some_and(|r| r.refresh == time);
            if !current {
                continue;
            }
            if let Some(mask) = self.known.remove(&e) {
                self.records.remove(&e);
                out.push((e, mask));
            }
        }
    }

    /// State of `e` at time `t`. Queries must be made in nondecreasing time
    /// and after [`Environment::advance`] to `t`.
    #[inline]
    pub fn query(&mut self, e: &Edge, t: f64) -> bool {
        if let Some(r) = self.records.get(e) {
            if r.refresh > t {
                return r.open;
            }
        }
        let open = bernoulli(&mut self.rng, self.p);
        let refresh = t + exp_sample(&mut self.rng, self.v);
        self.records.insert(*e, Record { open, refresh });
        if self.records.len() > self.prune_at {
            self.prune(t);
        }
        open
    }

    /// Queries `e` and adds `mask` to its owners.
    #[inline]
    pub fn reveal(&mut self, e: &Edge, t: f64, mask: u32) -> bool {
        let open = self.query(e, t);
        match self.known.get_mut(e) {
            Some(m) => *m |= mask,
            None => {
                self.known.insert(*e, mask);
                let refresh = self.records[e].refresh;
                self.due.push(Reverse(Due(refresh, *e)));
            }
        }
        open
    }

    fn prune(&mut self, t: f64) {
        let known = &self.known;
        self.records.retain(|e, r| r.refresh > t || known.contains_key(e));
        self.prune_at = (2 * self.records.len()).max(1024);
    }

    pub fn mask_of(&self, e: &Edge) -> u32 {
        self.known.get(e).copied().unwrap_or(0)
    }

    /// Known edges with their owners, in no particular order.
    pub fn known(&self) -> impl Iterator<Item = (&Edge, u32)> {
        self.known.iter().map(|(e, m)| (e, *m))
    }

    pub fn known_count(&self) -> usize {
        self.known.len()
    }

    /// Whether no edge owned by any bit of `mask` is known.
    pub fn knows_nothing(&self, mask: u32) -> bool {
        self.known.values().all(|m| m & mask == 0)
    }

    /// Known edges owned by `mask`, sorted by edge.
    pub fn snapshot(&self, mask: u32) -> Vec<KnownEdge> {
        let mut out: Vec<KnownEdge> = self
            .known
            .iter()
            .filter(|(_, m)| **m & mask != 0)
            .map(|(e, m)| {
                let r = self.records[e];
                KnownEdge { edge: *e, open: r.open, refresh: r.refresh, mask: *m & mask }
            })
            .collect();
        out.sort_by_key(|k| k.edge);
        out
    }

    /// Replaces owner bits `from` by `to` on every known edge.
    pub fn transfer(&mut self, from: u32, to: u32) {
        for m in self.known.values_mut() {
            if *m & from != 0 {
                *m = (*m & !from) | to;
            }
        }
    }

    /// Removes owner bits `bits`; an edge left without owners is no longer
    /// known but keeps its observed state until its refresh.
    pub fn disown(&mut self, bits: u32) {
        self.known.retain(|_, m| {
            *m &= !bits;
            *m != 0
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Vertex;
    use crate::randomness::{SeedScheme, StreamKind};

    fn env(p: f64, v: f64, rep: u64) -> Environment {
        Environment::new(p, v, SeedScheme::new(9).rng(StreamKind::Environment, 0, rep))
    }

    fn e0() -> Edge {
        Edge::new(Vertex::ORIGIN, Vertex::axis(0, 1))
    }

    #[test]
    fn observed_state_persists_until_refresh() {
        let mut en = env(0.5, 1.0, 0);
        let s = en.reveal(&e0(), 0.0, 1);
        let r = en.next_forget().unwrap();
        assert_eq!(en.query(&e0(), r * 0.99), s);
        let mut out = Vec::new();
        en.advance(r, &mut out);
        assert_eq!(out, vec![(e0(), 1)]);
        assert!(en.knows_nothing(u32::MAX));
    }

    #[test]
    fn pinned_edges_are_known_until_refresh() {
        let mut en = env(0.0, 1.0, 1);
        en.pin(e0(), true, 0.0, 1 << 31);
        let r = en.next_forget().unwrap();
        assert!(en.query(&e0(), r / 2.0));
        let mut out = Vec::new();
        en.advance(r, &mut out);
        assert!(!en.query(&e0(), r));
    }

    #[test]
    fn stationary_density() {
        let mut open = 0;
        let mut en = env(0.3, 2.0, 2);
        for k in 0..20000 {
            let t = k as f64;
            if en.query(&e0(), t) {
                open += 1;
            }
        }
        let f = open as f64 / 20000.0;
        assert!((f - 0.3).abs() < 0.02, "{f}");
    }

    #[test]
    fn transfer_and_disown() {
        let mut en = env(0.5, 1.0, 3);
        en.reveal(&e0(), 0.0, 0b10);
        en.transfer(0b10, 0b01);
        assert_eq!(en.mask_of(&e0()), 0b01);
        en.disown(0b01);
        assert_eq!(en.known_count(), 0);
    }
}
