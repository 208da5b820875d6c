//! Walk kernels: how a single rate-1 attempt moves a walker.

use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::lattice::{jump_offsets, FiniteGraph, Topology, Vertex};
use crate::randomness::{uniform_index, Rng};

pub trait WalkSpace: Sync {
    type V: Copy + Eq + Hash + Ord + Debug + Send + Sync;

    /// Outcome of one attempted jump from `x`; `None` is a void draw.
    fn step(&self, x: &Self::V, rng: &mut Rng) -> Option<Self::V>;

    /// Graph neighbours of `x`.
    fn neighbors(&self, x: &Self::V, out: &mut Vec<Self::V>);

    /// Graph distance, used by proximity functionals.
    fn distance(&self, a: &Self::V, b: &Self::V) -> i64;
}

/// Walks on coordinate topologies. Range 1 moves to a uniform neighbour;
/// range `R >= 2` displaces by a uniform nonzero offset of `B_1(R)`.
#[derive(Clone, Debug)]
pub struct LatticeSpace {
    pub topology: Topology,
    pub range: i32,
    pub jumps: Vec<Vertex>,
    regular_lattice: bool,
}

impl LatticeSpace {
    pub fn new(topology: &Topology, range: i32) -> Result<Self> {
        topology.validate()?;
        if topology.is_tree() {
            return Err(Error::unsupported("tree walks use their own kernel"));
        }
        if range < 1 {
            return Err(Error::domain("range must be at least 1"));
        }
        let regular_lattice = matches!(topology, Topology::Torus { .. } | Topology::InfiniteLattice { .. });
        if range > 1 && !regular_lattice {
            return Err(Error::unsupported(format!("range {range} walks need a torus or Z^d, got {topology}")));
        }
        Ok(LatticeSpace {
            topology: topology.clone(),
            range,
            jumps: jump_offsets(topology.dim(), range),
            regular_lattice,
        })
    }
}

impl WalkSpace for LatticeSpace {
    type V = Vertex;

    #[inline]
    fn step(&self, x: &Vertex, rng: &mut Rng) -> Option<Vertex> {
        if self.regular_lattice {
            let z = &self.jumps[uniform_index(rng, self.jumps.len())];
            return Some(self.topology.displace(x, z));
        }
        let mut nb = Vec::with_capacity(4);
        self.topology.push_neighbors(x, &mut nb);
        if nb.is_empty() {
            return None;
        }
        Some(nb[uniform_index(rng, nb.len())])
    }

    fn neighbors(&self, x: &Vertex, out: &mut Vec<Vertex>) {
        self.topology.push_neighbors(x, out);
    }

    fn distance(&self, a: &Vertex, b: &Vertex) -> i64 {
        self.topology.distance(a, b)
    }
}

/// Walks on an indexed finite graph, matching the forward voter model:
/// range 1 picks a uniform neighbour, larger ranges pick uniformly among the
/// `|B_1(R)| - 1` ball offsets with void draws for missing ones.
#[derive(Clone, Copy, Debug)]
pub struct GraphSpace<'a> {
    pub graph: &'a FiniteGraph,
}

impl WalkSpace for GraphSpace<'_> {
    type V = usize;

    #[inline]
    fn step(&self, x: &usize, rng: &mut Rng) -> Option<usize> {
        let g = self.graph;
        if g.range == 1 {
            let nb = &g.adjacency[*x];
            if nb.is_empty() {
                return None;
            }
            return Some(nb[uniform_index(rng, nb.len())]);
        }
        g.ball[*x].get(uniform_index(rng, g.choice_count)).copied()
    }

    fn neighbors(&self, x: &usize, out: &mut Vec<usize>) {
        out.extend_from_slice(&self.graph.adjacency[*x]);
    }

    fn distance(&self, a: &usize, b: &usize) -> i64 {
        let g = self.graph;
        g.topology.distance(&g.vertices[*a], &g.vertices[*b])
    }
}

/// Number of graph edges with both endpoints in `set`.
pub fn phi_count<S: WalkSpace>(space: &S, set: &[S::V]) -> usize {
    let mut nb = Vec::new();
    let mut twice = 0;
    for a in set {
        nb.clear();
        space.neighbors(a, &mut nb);
        twice += nb.iter().filter(|w| set.contains(w)).count();
    }
    twice / 2
}
