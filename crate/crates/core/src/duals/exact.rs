//! Exact generators of the dual processes on small finite graphs, for use
//! with [`crate::ctmc`].

use crate::ctmc::RateModel;
use crate::dynamics::voter_targets;
use crate::error::{Error, Result};
use crate::lattice::FiniteGraph;

/// Sorted vertex list; repeated entries allowed for independent walkers.
pub type Multiset = Vec<usize>;

fn moved(set: &[usize], i: usize, y: usize) -> Multiset {
    let mut out = set.to_vec();
    out[i] = y;
    out.sort_unstable();
    out
}

fn removed(set: &[usize], i: usize) -> Multiset {
    let mut out = set.to_vec();
    out.remove(i);
    out
}

/// Coalescing random walks dual to the voter model on `graph`.
pub struct CoalescingChain<'a> {
    pub graph: &'a FiniteGraph,
}

impl RateModel for CoalescingChain<'_> {
    type State = Multiset;
    fn transitions(&self, s: &Multiset, out: &mut Vec<(Multiset, f64)>) {
        for (i, &x) in s.iter().enumerate() {
            let (targets, r) = voter_targets(self.graph, x);
            for &y in targets {
                let dest = if s.contains(&y) { removed(s, i) } else { moved(s, i, y) };
                out.push((dest, r));
            }
        }
    }
}

/// Coalescing-stirring set walker: a walker moves to a vacant neighbour at
/// rate `(1 + v) / d` and is removed at rate `1 / d` per occupied neighbour.
pub struct StirringSetChain<'a> {
    pub graph: &'a FiniteGraph,
    pub v: f64,
}

impl RateModel for StirringSetChain<'_> {
    type State = Multiset;
    fn transitions(&self, s: &Multiset, out: &mut Vec<(Multiset, f64)>) {
        for (i, &x) in s.iter().enumerate() {
            let nb = &self.graph.adjacency[x];
            let d = nb.len() as f64;
            for &y in nb {
                if s.contains(&y) {
                    out.push((removed(s, i), 1.0 / d));
                } else {
                    out.push((moved(s, i, y), (1.0 + self.v) / d));
                }
            }
        }
    }
}

/// Independent walkers jumping at `rate` to uniform neighbours, as a
/// multiset of positions.
pub struct IndependentWalkersChain<'a> {
    pub graph: &'a FiniteGraph,
    pub rate: f64,
}

impl RateModel for IndependentWalkersChain<'_> {
    type State = Multiset;
    fn transitions(&self, s: &Multiset, out: &mut Vec<(Multiset, f64)>) {
        for (i, &x) in s.iter().enumerate() {
            if i > 0 && s[i - 1] == x {
                // Walkers at the same vertex are exchangeable; count them once
                // with multiplicity.
                continue;
            }
            let mult = s.iter().filter(|&&z| z == x).count() as f64;
            let (targets, r) = voter_targets(self.graph, x);
            for &y in targets {
                out.push((moved(s, i, y), mult * r * self.rate));
            }
        }
    }
}

/// Two independent rate-1 walkers as an ordered pair.
pub struct PairChain<'a> {
    pub graph: &'a FiniteGraph,
}

impl RateModel for PairChain<'_> {
    type State = (usize, usize);
    fn transitions(&self, s: &(usize, usize), out: &mut Vec<((usize, usize), f64)>) {
        let (a, b) = *s;
        let (ta, ra) = voter_targets(self.graph, a);
        out.extend(ta.iter().map(|&y| ((y, b), ra)));
        let (tb, rb) = voter_targets(self.graph, b);
        out.extend(tb.iter().map(|&y| ((a, y), rb)));
    }
}

/// Coupled chain `(W, Z, I)` of two rate models on a common state space:
/// joint moves where the rates agree, a break otherwise.
pub struct CoupledChain<'a, M1, M2> {
    pub left: &'a M1,
    pub right: &'a M2,
}

/// Outgoing rates of `model` from `s`, merged by destination.
pub fn rate_table<M: RateModel>(model: &M, s: &M::State) -> Vec<(M::State, f64)> {
    let mut raw = Vec::new();
    model.transitions(s, &mut raw);
    raw.retain(|(d, r)| *r > 0.0 && d != s);
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<(M::State, f64)> = Vec::with_capacity(raw.len());
    for (d, r) in raw {
        match merged.last_mut() {
            Some(last) if last.0 == d => last.1 += r,
            _ => merged.push((d, r)),
        }
    }
    merged
}

fn rate_in<S: Ord>(table: &[(S, f64)], s: &S) -> f64 {
    table.binary_search_by(|x| x.0.cmp(s)).map(|i| table[i].1).unwrap_or(0.0)
}

/// Total rate `sum_b (r1 + r2) 1{r1 != r2}` out of `s`.
pub fn mismatch_rate<S, M1, M2>(left: &M1, right: &M2, s: &S) -> f64
where
    S: Clone + Eq + std::hash::Hash + Ord,
    M1: RateModel<State = S>,
    M2: RateModel<State = S>,
{
    let l = rate_table(left, s);
    let r = rate_table(right, s);
    let mut total = 0.0;
    for (d, a) in &l {
        let b = rate_in(&r, d);
        if *a != b {
            total += a + b;
        }
    }
    for (d, b) in &r {
        if rate_in(&l, d) == 0.0 {
            total += b;
        }
    }
    total
}

impl<S, M1, M2> RateModel for CoupledChain<'_, M1, M2>
where
    S: Clone + Eq + std::hash::Hash + Ord,
    M1: RateModel<State = S>,
    M2: RateModel<State = S>,
{
    type State = (S, S, bool);
    fn transitions(&self, s: &(S, S, bool), out: &mut Vec<((S, S, bool), f64)>) {
        let (w, z, broken) = s;
        if *broken {
            for (d, r) in rate_table(self.left, w) {
                out.push(((d, z.clone(), true), r));
            }
            for (d, r) in rate_table(self.right, z) {
                out.push(((w.clone(), d, true), r));
            }
            return;
        }
        let l = rate_table(self.left, w);
        let r = rate_table(self.right, w);
        for (d, a) in &l {
            let b = rate_in(&r, d);
            if *a == b {
                out.push(((d.clone(), d.clone(), false), *a));
            } else {
                out.push(((d.clone(), w.clone(), true), *a));
                if b > 0.0 {
                    out.push(((w.clone(), d.clone(), true), b));
                }
            }
        }
        for (d, b) in &r {
            if rate_in(&l, d) == 0.0 {
                out.push(((w.clone(), d.clone(), true), *b));
            }
        }
    }
}

/// State `(C, E, F)` of the dual chain on a finite graph: bit sets over
/// vertex and edge indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualBits {
    pub walkers: u64,
    pub open: u64,
    pub closed: u64,
}

/// Largest number of unrevealed ball edges the rate table enumerates.
pub const MAX_PARTITION_EDGES: usize = 20;

/// Rate table of the coalescing dual chain `(C, A, B)`.
pub struct DualChainModel<'a> {
    pub graph: &'a FiniteGraph,
    pub p: f64,
    pub v: f64,
}

impl<'a> DualChainModel<'a> {
    pub fn new(graph: &'a FiniteGraph, p: f64, v: f64) -> Result<Self> {
        crate::randomness::check_perc_params(p, v)?;
        if graph.n_vertices() > 64 || graph.n_edges() > 64 {
            return Err(Error::refused("the dual rate table holds at most 64 vertices and 64 edges"));
        }
        let widest = graph.ball_edges.iter().map(Vec::len).max().unwrap_or(0);
        if widest > MAX_PARTITION_EDGES {
            return Err(Error::refused(format!(
                "{widest} ball edges exceed the partition limit of {MAX_PARTITION_EDGES}"
            )));
        }
        Ok(DualChainModel { graph, p, v })
    }
}

impl RateModel for DualChainModel<'_> {
    type State = DualBits;
    fn transitions(&self, s: &DualBits, out: &mut Vec<(DualBits, f64)>) {
        let g = self.graph;
        let known = s.open | s.closed;
        let per_target = 1.0 / g.choice_count as f64;
        for x in 0..g.n_vertices() {
            if (s.walkers >> x) & 1 == 0 {
                continue;
            }
            let fresh: Vec<usize> = g.ball_edges[x].iter().copied().filter(|&k| (known >> k) & 1 == 0).collect();
            for subset in 0u32..(1 << fresh.len()) {
                let mut open = s.open;
                let mut closed = s.closed;
                let mut weight = 1.0;
                for (j, &k) in fresh.iter().enumerate() {
                    if (subset >> j) & 1 == 1 {
                        open |= 1 << k;
                        weight *= self.p;
                    } else {
                        closed |= 1 << k;
                        weight *= 1.0 - self.p;
                    }
                }
                if weight == 0.0 {
                    continue;
                }
                for &y in &g.ball[x] {
                    let walkers = if g.connected_in_ball(x, y, |k| (open >> k) & 1 == 1) {
                        (s.walkers & !(1 << x)) | (1 << y)
                    } else {
                        s.walkers
                    };
                    out.push((DualBits { walkers, open, closed }, weight * per_target));
                }
            }
        }
        for k in 0..g.n_edges() {
            if (known >> k) & 1 == 1 {
                let drop = !(1u64 << k);
                out.push((DualBits { walkers: s.walkers, open: s.open & drop, closed: s.closed & drop }, self.v));
            }
        }
    }
}

/// Sum of `p^{|E'|} (1-p)^{|F'|}` over partitions of the unrevealed ball
/// edges of `x` for which `x` and `y` connect inside the ball.
pub fn exact_connection_rate(graph: &FiniteGraph, x: usize, y: usize, open: u64, closed: u64, p: f64) -> Result<f64> {
    if x != y && graph.ball[x].binary_search(&y).is_err() {
        return Err(Error::domain("target lies outside the range ball"));
    }
    let known = open | closed;
    let fresh: Vec<usize> = graph.ball_edges[x].iter().copied().filter(|&k| (known >> k) & 1 == 0).collect();
    if fresh.len() > MAX_PARTITION_EDGES {
        return Err(Error::refused(format!("{} unrevealed edges exceed the partition limit", fresh.len())));
    }
    let mut total = 0.0;
    for subset in 0u32..(1 << fresh.len()) {
        let mut o = open;
        let mut weight = 1.0;
        for (j, &k) in fresh.iter().enumerate() {
            if (subset >> j) & 1 == 1 {
                o |= 1 << k;
                weight *= p;
            } else {
                weight *= 1.0 - p;
            }
        }
        if weight > 0.0 && graph.connected_in_ball(x, y, |k| (o >> k) & 1 == 1) {
            total += weight;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{enumerate, hitting_probability};
    use crate::lattice::Topology;

    #[test]
    fn pair_chain_on_torus_has_625_states() {
        let g = FiniteGraph::new(&Topology::torus(2, 5), 1).unwrap();
        let space = enumerate(&PairChain { graph: &g }, &[(0, 1)], 4096).unwrap();
        assert_eq!(space.len(), 625);
    }

    #[test]
    fn two_walkers_on_a_triangle_meet() {
        let g = FiniteGraph::new(&Topology::cycle(3), 1).unwrap();
        let p = hitting_probability(&PairChain { graph: &g }, &(0, 1), |s| s.0 == s.1, 50.0, 64).unwrap();
        assert!(p > 0.999);
    }

    #[test]
    fn coupled_marginals_match() {
        let g = FiniteGraph::new(&Topology::cycle(4), 1).unwrap();
        let a = StirringSetChain { graph: &g, v: 1.0 };
        let b = IndependentWalkersChain { graph: &g, rate: 2.0 };
        let c = CoupledChain { left: &a, right: &b };
        let s = (vec![0, 1], vec![0, 1], false);
        let mut out = Vec::new();
        c.transitions(&s, &mut out);
        let total: f64 = out.iter().map(|x| x.1).sum();
        let left: f64 = rate_table(&a, &s.0).iter().map(|x| x.1).sum();
        let right: f64 = rate_table(&b, &s.1).iter().map(|x| x.1).sum();
        let shared: f64 = out.iter().filter(|x| !x.0 .2).map(|x| x.1).sum();
        assert!((total - (left + right - shared)).abs() < 1e-12);
        // One edge, degree 2, v = 1: 2 (2 + v) / d.
        assert!((mismatch_rate(&a, &b, &s.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_edge_connection_rate_is_p() {
        let g = FiniteGraph::new(&Topology::cycle(5), 1).unwrap();
        let r = exact_connection_rate(&g, 0, 1, 0, 0, 0.37).unwrap();
        assert!((r - 0.37).abs() < 1e-15);
    }
}
