//! Coalescing-stirring set walker on a regular finite graph.

use serde::{Deserialize, Serialize};

use super::space::{GraphSpace, WalkSpace};
use crate::dynamics::regular_degree;
use crate::error::{Error, Result};
use crate::lattice::FiniteGraph;
use crate::randomness::{exp_sample, uniform01, uniform_index, SeedScheme, StreamKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StirringRun<V = usize> {
    /// Occupied vertices at the horizon, sorted.
    pub final_set: Vec<V>,
    pub coalescence_times: Vec<f64>,
    pub events: u64,
}

/// Set walker from `a0`: a walker moves to a vacant neighbour at rate
/// `(1 + v) / d` and disappears at rate `1 / d` per occupied neighbour.
/// Each walker rings at rate `1 + v` and picks a uniform neighbour; an
/// occupied pick removes it with probability `1 / (1 + v)`.
pub fn simulate_coalescing_stirring(
    graph: &FiniteGraph,
    a0: &[usize],
    v: f64,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<StirringRun> {
    simulate_coalescing_stirring_observed(graph, a0, v, horizon, seeds, replica, |_, _| {})
}

/// As [`simulate_coalescing_stirring`]; `observe` sees the set after every
/// change together with the time.
pub fn simulate_coalescing_stirring_observed(
    graph: &FiniteGraph,
    a0: &[usize],
    v: f64,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
    observe: impl FnMut(f64, &[usize]),
) -> Result<StirringRun> {
    let d = regular_degree(graph)?;
    if let Some(x) = a0.iter().find(|&&x| x >= graph.n_vertices()) {
        return Err(Error::domain(format!("vertex index {x} out of range")));
    }
    stirring_set_walk(&GraphSpace { graph }, d, a0, v, horizon, seeds, replica, observe)
}

/// The set walker on any space whose vertices all have `degree`
/// neighbours, such as `Z^d` with `degree = 2d`.
#[allow(clippy::too_many_arguments)]
pub fn stirring_set_walk<S: WalkSpace>(
    space: &S,
    degree: usize,
    a0: &[S::V],
    v: f64,
    horizon: f64,
    seeds: &SeedScheme,
    replica: u64,
    mut observe: impl FnMut(f64, &[S::V]),
) -> Result<StirringRun<S::V>> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::domain("speed v must be nonnegative and finite"));
    }
    if a0.is_empty() {
        return Err(Error::domain("the initial walker set must be nonempty"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    if degree == 0 {
        return Err(Error::domain("the graph must have positive degree"));
    }
    let mut set = a0.to_vec();
    set.sort_unstable();
    set.dedup();
    let mut rng = seeds.rng(StreamKind::DualChain, 1, replica);
    let mut t = 0.0;
    let mut coalescence_times = Vec::new();
    let mut events = 0;
    let keep = 1.0 / (1.0 + v);
    let mut nb = Vec::with_capacity(degree);
    observe(0.0, &set);
    loop {
        t += exp_sample(&mut rng, set.len() as f64 * (1.0 + v));
        if t > horizon {
            break;
        }
        let i = uniform_index(&mut rng, set.len());
        let x = set[i];
        nb.clear();
        space.neighbors(&x, &mut nb);
        if nb.len() != degree {
            return Err(Error::domain("the walk space is not regular of the given degree"));
        }
        let y = nb[uniform_index(&mut rng, degree)];
        match set.binary_search(&y) {
            Err(_) => {
                set.remove(i);
                let at = set.binary_search(&y).unwrap_err();
                set.insert(at, y);
            }
            Ok(_) => {
                if uniform01(&mut rng) >= keep {
                    continue;
                }
                set.remove(i);
                coalescence_times.push(t);
            }
        }
        events += 1;
        observe(t, &set);
    }
    Ok(StirringRun { final_set: set, coalescence_times, events })
}
