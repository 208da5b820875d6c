//! The random-walk flow: a walker driven by its instruction manual through a
//! fixed realisation of the dynamical-percolation graphical construction.

use crate::error::{Error, Result};
use crate::lattice::{local_connected, BallGeometry, Topology, Vertex};
use crate::randomness::{InstructionManual, LazyEdgeField};

/// Path of the walker started at `x`: the start and every successful jump
/// as `(time, position)`. At a manual time with mark `m` the walker at `w`
/// moves to `w + m` iff the two are connected inside `B_1(w, R)` at that
/// time.
pub fn rw_flow(
    field: &mut LazyEdgeField,
    topology: &Topology,
    manual: &InstructionManual,
    x: &Vertex,
) -> Result<Vec<(f64, Vertex)>> {
    if !matches!(topology, Topology::Torus { .. } | Topology::InfiniteLattice { .. }) {
        return Err(Error::unsupported(format!("the flow needs a torus or Z^d, got {topology}")));
    }
    if manual.dim != topology.dim() {
        return Err(Error::domain("manual dimension differs from the topology"));
    }
    if !topology.contains(x) {
        return Err(Error::domain(format!("{x} is not a vertex of {topology}")));
    }
    let geo = BallGeometry::new(manual.dim, manual.range);
    let mut path = vec![(0.0, *x)];
    let mut w = *x;
    let mut edges = Vec::new();
    let mut open = Vec::new();
    for &(t, m) in &manual.events {
        geo.edges_at(topology, &w, &mut edges);
        open.clear();
        open.extend(edges.iter().map(|e| field.state_at(e, t)));
        let target = geo.offsets.binary_search(&m).map_err(|_| Error::contract("mark outside the range ball"))?;
        if local_connected(geo.offsets.len(), &geo.edges, &open, geo.center, target) {
            w = topology.displace(&w, &m);
            path.push((t, w));
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Edge;
    use crate::randomness::{manual_events, SeedScheme};
    use std::collections::HashMap;

    #[test]
    fn closed_ball_edge_blocks_a_long_jump() {
        let t = Topology::lattice(1);
        let v = |k| Vertex::new(&[k]);
        let pinned = HashMap::from([(Edge::new(v(0), v(1)), false), (Edge::new(v(1), v(2)), true)]);
        let mut field = LazyEdgeField::new(SeedScheme::new(1), 0, 0.5, 1e-9, pinned).unwrap();
        let manual = InstructionManual { range: 2, dim: 1, horizon: 1.0, events: vec![(0.1, v(2))] };
        let path = rw_flow(&mut field, &t, &manual, &v(0)).unwrap();
        assert_eq!(path, vec![(0.0, v(0))]);
    }

    #[test]
    fn identical_inputs_give_identical_paths() {
        let t = Topology::lattice(2);
        let seeds = SeedScheme::new(8);
        let manual = manual_events(&seeds, 0, 0, 1, 2, 50.0).unwrap();
        let run = || {
            let mut f = LazyEdgeField::new(seeds, 0, 0.5, 1.0, HashMap::new()).unwrap();
            rw_flow(&mut f, &t, &manual, &Vertex::ORIGIN).unwrap()
        };
        assert_eq!(run(), run());
    }
}
