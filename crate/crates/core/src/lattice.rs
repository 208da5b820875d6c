//! Graph topologies: finite tori, the infinite lattice, the comb, finite
//! paths and regular trees, together with L1 balls, ball edges and
//! ball-restricted connectivity.
//!
//! Coordinate topologies share the [`Vertex`] type (a fixed-width integer
//! vector, unused coordinates are zero). Trees use [`TreeVertex`], a
//! root-path label.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Vertex(pub [i32; MAX_DIM]);

impl Vertex {
    pub const ORIGIN: Vertex = Vertex([0; MAX_DIM]);

    /// Builds a vertex from up to [`MAX_DIM`] coordinates.
    pub fn new(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Vertex(c)
    }

    /// Unit vector along axis `axis`, scaled by `len`.
    pub fn axis(axis: usize, len: i32) -> Self {
        let mut c = [0; MAX_DIM];
        c[axis] = len;
        Vertex(c)
    }

    pub fn coords(&self, d: usize) -> &[i32] {
        &self.0[..d]
    }

    pub fn add(&self, other: &Vertex) -> Vertex {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
        Vertex(c)
    }

    pub fn sub(&self, other: &Vertex) -> Vertex {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0.iter()) {
            *a -= b;
        }
        Vertex(c)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| (*c as i64).abs()).sum()
    }

    /// Stable 64-bit identity used to key per-entity random streams.
    pub fn entity_id(&self) -> u64 {
        let mut h = 0x9e37_79b9_7f4a_7c15u64;
        for c in self.0 {
            h = crate::randomness::mix64(h ^ (c as u32 as u64));
        }
        h
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // trailing zero coordinates are dropped, but at least one is kept
        let last = self.0.iter().rposition(|c| *c != 0).map_or(1, |i| i + 1);
        write!(f, "(")?;
        for (i, c) in self.0[..last].iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Undirected edge with endpoints stored in lexicographic order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Edge {
    lo: Vertex,
    hi: Vertex,
}

impl Edge {
    pub fn new(a: Vertex, b: Vertex) -> Self {
        if a <= b {
            Edge { lo: a, hi: b }
        } else {
            Edge { lo: b, hi: a }
        }
    }

    pub fn endpoints(&self) -> (Vertex, Vertex) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.lo == *v || self.hi == *v
    }

    pub fn entity_id(&self) -> u64 {
        crate::randomness::mix64(self.lo.entity_id() ^ self.hi.entity_id().rotate_left(17))
    }

    /// Translates both endpoints; the caller wraps them if needed.
    pub fn shifted(&self, by: &Vertex) -> Edge {
        Edge::new(self.lo.add(by), self.hi.add(by))
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

/// Vertex of a regular tree, labelled by the child choices along the path
/// from the root. The root has `degree` children, every other vertex
/// `degree - 1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
pub struct TreeVertex(pub Vec<u8>);

impl TreeVertex {
    pub fn root() -> Self {
        TreeVertex(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// `(Z / side Z)^d`.
    Torus { d: usize, side: i32 },
    /// `Z^d`, explored lazily.
    InfiniteLattice { d: usize },
    /// `Z^2` with horizontal edges kept only on the row `y = 0`. `None`
    /// caps mean the infinite comb; otherwise `|x| <= half_width`,
    /// `|y| <= half_height`.
    Comb { half_width: Option<i32>, half_height: Option<i32> },
    /// Path graph on `0..n`.
    Path { n: i32 },
    /// Regular tree; `depth = None` is the infinite tree.
    RegularTree { degree: u32, depth: Option<u32> },
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Torus { d, side } => write!(f, "torus(d={d}, side={side})"),
            Topology::InfiniteLattice { d } => write!(f, "Z^{d}"),
            Topology::Comb { half_width, half_height } => {
                write!(f, "comb(w={half_width:?}, h={half_height:?})")
            }
            Topology::Path { n } => write!(f, "path({n})"),
            Topology::RegularTree { degree, depth } => write!(f, "tree(deg={degree}, depth={depth:?})"),
        }
    }
}

impl Topology {
    pub fn torus(d: usize, side: i32) -> Self {
        Topology::Torus { d, side }
    }

    pub fn lattice(d: usize) -> Self {
        Topology::InfiniteLattice { d }
    }

    /// The cycle `C_n`, i.e. the one-dimensional torus.
    pub fn cycle(n: i32) -> Self {
        Topology::Torus { d: 1, side: n }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Topology::Torus { d, side } => {
                if d == 0 || d > MAX_DIM {
                    return Err(Error::domain(format!("torus dimension must lie in 1..={MAX_DIM}")));
                }
                if side < 3 {
                    return Err(Error::domain("torus side must be at least 3"));
                }
            }
            Topology::InfiniteLattice { d } => {
                if d == 0 || d > MAX_DIM {
                    return Err(Error::domain(format!("lattice dimension must lie in 1..={MAX_DIM}")));
                }
            }
            Topology::Comb { half_width, half_height } => {
                if half_width.is_some_and(|w| w < 0) || half_height.is_some_and(|h| h < 0) {
                    return Err(Error::domain("comb caps must be non-negative"));
                }
                if half_width.is_some() != half_height.is_some() {
                    return Err(Error::domain("comb caps must be both set or both absent"));
                }
            }
            Topology::Path { n } => {
                if n < 1 {
                    return Err(Error::domain("path must have at least one vertex"));
                }
            }
            Topology::RegularTree { degree, .. } => {
                if degree < 2 {
                    return Err(Error::domain("regular tree degree must be at least 2"));
                }
            }
        }
        Ok(())
    }

    /// Dimension of the coordinate vectors (0 for trees).
    pub fn dim(&self) -> usize {
        match *self {
            Topology::Torus { d, .. } | Topology::InfiniteLattice { d } => d,
            Topology::Comb { .. } => 2,
            Topology::Path { .. } => 1,
            Topology::RegularTree { .. } => 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Topology::Torus { .. } | Topology::Path { .. } => true,
            Topology::InfiniteLattice { .. } => false,
            Topology::Comb { half_width, .. } => half_width.is_some(),
            Topology::RegularTree { depth, .. } => depth.is_some(),
        }
    }

    pub fn is_tree(&self) -> bool {
        matches!(self, Topology::RegularTree { .. })
    }

    /// Tori and the infinite lattice, where L1 balls are translation invariant.
    pub fn is_lattice_like(&self) -> bool {
        matches!(self, Topology::Torus { .. } | Topology::InfiniteLattice { .. })
    }

    /// Common degree if the graph is regular.
    pub fn regular_degree(&self) -> Option<usize> {
        match *self {
            Topology::Torus { d, .. } | Topology::InfiniteLattice { d } => Some(2 * d),
            Topology::RegularTree { degree, depth: None } => Some(degree as usize),
            Topology::Path { n: 2 } => Some(1),
            _ => None,
        }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        let d = self.dim();
        if v.0[d.min(MAX_DIM)..].iter().any(|c| *c != 0) && !self.is_tree() {
            return false;
        }
        match *self {
            Topology::Torus { d, side } => v.0[..d].iter().all(|c| (0..side).contains(c)),
            Topology::InfiniteLattice { .. } => true,
            Topology::Comb { half_width, half_height } => match (half_width, half_height) {
                (Some(w), Some(h)) => v.0[0].abs() <= w && v.0[1].abs() <= h,
                _ => true,
            },
            Topology::Path { n } => (0..n).contains(&v.0[0]),
            Topology::RegularTree { .. } => false,
        }
    }

    fn check_vertex(&self, v: &Vertex) -> Result<()> {
        if self.is_tree() {
            return Err(Error::unsupported("tree topologies use TreeVertex labels"));
        }
        if !self.contains(v) {
            return Err(Error::domain(format!("vertex {v} is not a vertex of {self}")));
        }
        Ok(())
    }

    /// Reduces coordinates modulo the torus side; identity elsewhere.
    #[inline]
    pub fn wrap(&self, v: Vertex) -> Vertex {
        match *self {
            Topology::Torus { d, side } => {
                let mut c = v.0;
                for x in c[..d].iter_mut() {
                    *x = x.rem_euclid(side);
                }
                Vertex(c)
            }
            _ => v,
        }
    }

    /// `v + z`, wrapped on tori.
    #[inline]
    pub fn displace(&self, v: &Vertex, z: &Vertex) -> Vertex {
        self.wrap(v.add(z))
    }

    /// L1 distance; the torus metric on tori.
    pub fn distance(&self, a: &Vertex, b: &Vertex) -> i64 {
        match *self {
            Topology::Torus { d, side } => (0..d)
                .map(|i| {
                    let diff = (a.0[i] - b.0[i]).rem_euclid(side);
                    diff.min(side - diff) as i64
                })
                .sum(),
            _ => a.sub(b).l1_norm(),
        }
    }

    /// Distance from a vertex to the nearest endpoint of an edge.
    pub fn distance_to_edge(&self, v: &Vertex, e: &Edge) -> i64 {
        let (a, b) = e.endpoints();
        self.distance(v, &a).min(self.distance(v, &b))
    }

    /// Appends the neighbours of a valid vertex to `out` (no validity check).
    pub fn push_neighbors(&self, v: &Vertex, out: &mut Vec<Vertex>) {
        match *self {
            Topology::Torus { d, side } => {
                for i in 0..d {
                    for s in [1, -1] {
                        let mut c = v.0;
                        c[i] = (c[i] + s).rem_euclid(side);
                        let w = Vertex(c);
                        if !out.contains(&w) {
                            out.push(w);
                        }
                    }
                }
            }
            Topology::InfiniteLattice { d } => {
                for i in 0..d {
                    for s in [1, -1] {
                        let mut c = v.0;
                        c[i] += s;
                        out.push(Vertex(c));
                    }
                }
            }
            Topology::Comb { half_width, half_height } => {
                let (x, y) = (v.0[0], v.0[1]);
                let w_ok = |x: i32| half_width.is_none_or(|w| x.abs() <= w);
                let h_ok = |y: i32| half_height.is_none_or(|h| y.abs() <= h);
                if y == 0 {
                    for nx in [x + 1, x - 1] {
                        if w_ok(nx) {
                            out.push(Vertex::new(&[nx, 0]));
                        }
                    }
                }
                for ny in [y + 1, y - 1] {
                    if h_ok(ny) {
                        out.push(Vertex::new(&[x, ny]));
                    }
                }
            }
            Topology::Path { n } => {
                let x = v.0[0];
                for nx in [x + 1, x - 1] {
                    if (0..n).contains(&nx) {
                        out.push(Vertex::new(&[nx]));
                    }
                }
            }
            Topology::RegularTree { .. } => {}
        }
    }

    pub fn neighbors(&self, v: &Vertex) -> Result<Vec<Vertex>> {
        self.check_vertex(v)?;
        let mut out = Vec::with_capacity(2 * self.dim());
        self.push_neighbors(v, &mut out);
        Ok(out)
    }

    pub fn are_adjacent(&self, a: &Vertex, b: &Vertex) -> bool {
        let mut nb = Vec::new();
        self.push_neighbors(a, &mut nb);
        nb.contains(b)
    }

    /// All vertices within L1 distance `r` of `x`, sorted.
    pub fn l1_ball(&self, x: &Vertex, r: i64) -> Result<Vec<Vertex>> {
        if r < 0 {
            return Err(Error::domain("ball radius must be non-negative"));
        }
        match self {
            Topology::Torus { .. } | Topology::InfiniteLattice { .. } | Topology::Path { .. } => {}
            _ => return Err(Error::unsupported(format!("L1 balls are not defined on {self}"))),
        }
        self.check_vertex(x)?;
        let offsets = ball_offsets(self.dim(), r as i32);
        let mut out: Vec<Vertex> = offsets.iter().map(|z| self.displace(x, z)).filter(|v| self.contains(v)).collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// All edges with both endpoints in `l1_ball(x, r)`, sorted.
    pub fn ball_edges(&self, x: &Vertex, r: i64) -> Result<Vec<Edge>> {
        let ball = self.l1_ball(x, r)?;
        let mut edges = Vec::new();
        let mut nb = Vec::new();
        for v in &ball {
            nb.clear();
            self.push_neighbors(v, &mut nb);
            for w in &nb {
                if v < w && ball.binary_search(w).is_ok() {
                    edges.push(Edge::new(*v, *w));
                }
            }
        }
        edges.sort();
        edges.dedup();
        Ok(edges)
    }

    /// Lists every vertex of a finite coordinate topology in sorted order.
    pub fn vertices(&self) -> Result<Vec<Vertex>> {
        let mut out = Vec::new();
        match *self {
            Topology::Torus { d, side } => {
                let total = (side as usize).pow(d as u32);
                for mut k in 0..total {
                    let mut c = [0; MAX_DIM];
                    for slot in c[..d].iter_mut().rev() {
                        *slot = (k % side as usize) as i32;
                        k /= side as usize;
                    }
                    out.push(Vertex(c));
                }
            }
            Topology::Path { n } => out.extend((0..n).map(|x| Vertex::new(&[x]))),
            Topology::Comb { half_width: Some(w), half_height: Some(h) } => {
                for x in -w..=w {
                    for y in -h..=h {
                        out.push(Vertex::new(&[x, y]));
                    }
                }
            }
            _ => return Err(Error::unsupported(format!("{self} has no finite vertex list"))),
        }
        out.sort();
        Ok(out)
    }
}

/// Offsets `z` with `|z|_1 <= r` in dimension `d`, in lexicographic order.
pub fn ball_offsets(d: usize, r: i32) -> Vec<Vertex> {
    fn rec(d: usize, axis: usize, budget: i32, cur: &mut [i32; MAX_DIM], out: &mut Vec<Vertex>) {
        if axis == d {
            out.push(Vertex(*cur));
            return;
        }
        for c in -budget..=budget {
            cur[axis] = c;
            rec(d, axis + 1, budget - c.abs(), cur, out);
        }
        cur[axis] = 0;
    }
    let mut out = Vec::new();
    rec(d, 0, r, &mut [0; MAX_DIM], &mut out);
    out
}

/// Nonzero offsets of the range-`r` ball: the displacement alphabet of a
/// range-`r` walker.
pub fn jump_offsets(d: usize, r: i32) -> Vec<Vertex> {
    ball_offsets(d, r).into_iter().filter(|z| *z != Vertex::ORIGIN).collect()
}

/// Read access to an edge configuration. `None` marks an edge that a lazy
/// configuration has not materialised.
pub trait EdgeView {
    fn is_open(&self, e: &Edge) -> Option<bool>;
}

impl EdgeView for HashMap<Edge, bool> {
    fn is_open(&self, e: &Edge) -> Option<bool> {
        self.get(e).copied()
    }
}

impl<F: Fn(&Edge) -> Option<bool>> EdgeView for F {
    fn is_open(&self, e: &Edge) -> Option<bool> {
        self(e)
    }
}

/// Whether `x` and `y` are joined by open edges using only vertices of
/// `B_1(x, r)`.
pub fn connected_in_ball<V: EdgeView + ?Sized>(
    zeta: &V,
    topology: &Topology,
    x: &Vertex,
    y: &Vertex,
    r: i64,
) -> Result<bool> {
    let ball = topology.l1_ball(x, r)?;
    if ball.binary_search(y).is_err() {
        return Err(Error::domain(format!("{y} lies outside B_1({x}, {r})")));
    }
    if x == y {
        return Ok(true);
    }
    let edges = topology.ball_edges(x, r)?;
    let mut open = Vec::with_capacity(edges.len());
    for e in &edges {
        match zeta.is_open(e) {
            Some(s) => open.push(s),
            None => {
                return Err(Error::contract(format!("edge {e} is not materialised")));
            }
        }
    }
    let idx = |v: &Vertex| ball.binary_search(v).expect("edge endpoint inside ball");
    let local: Vec<(usize, usize)> = edges
        .iter()
        .map(|e| {
            let (a, b) = e.endpoints();
            (idx(&a), idx(&b))
        })
        .collect();
    Ok(local_connected(ball.len(), &local, &open, idx(x), idx(y)))
}

/// Breadth-first search over a small local graph: vertices `0..n`, edges
/// `edges[i]` usable iff `open[i]`.
pub fn local_connected(n: usize, edges: &[(usize, usize)], open: &[bool], from: usize, to: usize) -> bool {
    if from == to {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::with_capacity(n);
    seen[from] = true;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        for (i, &(a, b)) in edges.iter().enumerate() {
            if !open[i] {
                continue;
            }
            let w = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if !seen[w] {
                if w == to {
                    return true;
                }
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

/// Translation-invariant geometry of a range-`r` ball: vertex offsets and
/// the edges among them in local indices. Works for the infinite lattice and
/// for tori with `side > 2r + 1`.
#[derive(Clone, Debug)]
pub struct BallGeometry {
    pub d: usize,
    pub range: i32,
    /// Offsets of `B_1(r)`, lexicographic; `center` indexes the origin.
    pub offsets: Vec<Vertex>,
    pub center: usize,
    /// Ball edges as pairs of offset indices, in canonical offset order.
    pub edges: Vec<(usize, usize)>,
    /// Nonzero offsets; the walker displacement alphabet.
    pub jumps: Vec<Vertex>,
    /// `jump_target[k]` is the local index of `jumps[k]`.
    pub jump_target: Vec<usize>,
}

impl BallGeometry {
    pub fn new(d: usize, range: i32) -> Self {
        let offsets = ball_offsets(d, range);
        let center = offsets.binary_search(&Vertex::ORIGIN).expect("origin in ball");
        let mut edges = Vec::new();
        for (i, a) in offsets.iter().enumerate() {
            for axis in 0..d {
                let b = a.add(&Vertex::axis(axis, 1));
                if let Ok(j) = offsets.binary_search(&b) {
                    edges.push((i, j));
                }
            }
        }
        let jumps = jump_offsets(d, range);
        let jump_target = jumps.iter().map(|z| offsets.binary_search(z).unwrap()).collect();
        BallGeometry { d, range, offsets, center, edges, jumps, jump_target }
    }

    /// Number of nonzero offsets, `|B_1(r)| - 1`.
    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// Materialises the ball edges around `x` on `topology`.
    pub fn edges_at(&self, topology: &Topology, x: &Vertex, out: &mut Vec<Edge>) {
        out.clear();
        for &(a, b) in &self.edges {
            out.push(Edge::new(topology.displace(x, &self.offsets[a]), topology.displace(x, &self.offsets[b])));
        }
    }
}

/// Index-based view of a finite topology with per-vertex range-`r` balls
/// (graph-distance balls, which coincide with L1 balls on tori and paths).
#[derive(Clone, Debug)]
pub struct FiniteGraph {
    pub topology: Topology,
    pub range: usize,
    pub vertices: Vec<Vertex>,
    pub index: HashMap<Vertex, usize>,
    pub adjacency: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    pub edge_ends: Vec<(usize, usize)>,
    pub edge_index: HashMap<Edge, usize>,
    /// `ball[v]`: vertices at graph distance `1..=range` from `v`, sorted.
    pub ball: Vec<Vec<usize>>,
    /// `ball_edges[v]`: edges with both endpoints within distance `range`.
    pub ball_edges: Vec<Vec<usize>>,
    /// Normaliser of the range-`range` choice: `|B_1(range)| - 1` in the
    /// topology's dimension.
    pub choice_count: usize,
}

impl FiniteGraph {
    pub fn new(topology: &Topology, range: usize) -> Result<Self> {
        topology.validate()?;
        if !topology.is_finite() || topology.is_tree() {
            return Err(Error::unsupported(format!("{topology} is not a finite coordinate graph")));
        }
        if range == 0 {
            return Err(Error::domain("range must be at least 1"));
        }
        let vertices = topology.vertices()?;
        let index: HashMap<Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut edges = Vec::new();
        let mut nb = Vec::new();
        for (i, v) in vertices.iter().enumerate() {
            nb.clear();
            topology.push_neighbors(v, &mut nb);
            for w in &nb {
                let j = index[w];
                adjacency[i].push(j);
                if v < w {
                    edges.push(Edge::new(*v, *w));
                }
            }
        }
        edges.sort();
        let edge_index: HashMap<Edge, usize> = edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let edge_ends = edges
            .iter()
            .map(|e| {
                let (a, b) = e.endpoints();
                (index[&a], index[&b])
            })
            .collect();
        let mut g = FiniteGraph {
            topology: topology.clone(),
            range,
            vertices,
            index,
            adjacency,
            edges,
            edge_ends,
            edge_index,
            ball: Vec::new(),
            ball_edges: Vec::new(),
            choice_count: ball_offsets(topology.dim(), range as i32).len() - 1,
        };
        let n = g.vertices.len();
        for v in 0..n {
            let dist = g.bfs_distances(v, range);
            let mut ball: Vec<usize> = (0..n).filter(|&w| w != v && dist[w] <= range).collect();
            ball.sort();
            let be: Vec<usize> = (0..g.edges.len())
                .filter(|&k| {
                    let (a, b) = g.edge_ends[k];
                    dist[a] <= range && dist[b] <= range
                })
                .collect();
            g.ball.push(ball);
            g.ball_edges.push(be);
        }
        Ok(g)
    }

    fn bfs_distances(&self, from: usize, cap: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertices.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == cap {
                continue;
            }
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_index(&self, v: &Vertex) -> Result<usize> {
        self.index
            .get(v)
            .copied()
            .ok_or_else(|| Error::domain(format!("vertex {v} is not a vertex of {}", self.topology)))
    }

    pub fn edge_idx(&self, e: &Edge) -> Result<usize> {
        self.edge_index.get(e).copied().ok_or_else(|| Error::domain(format!("{e} is not an edge of {}", self.topology)))
    }

    /// Connectivity of `x` and `y` inside the range ball of `x` using the
    /// edges for which `open(edge_index)` holds.
    pub fn connected_in_ball(&self, x: usize, y: usize, open: impl Fn(usize) -> bool) -> bool {
        if x == y {
            return true;
        }
        let be = &self.ball_edges[x];
        let mut seen: Vec<usize> = vec![x];
        let mut frontier = vec![x];
        while let Some(u) = frontier.pop() {
            for &k in be {
                if !open(k) {
                    continue;
                }
                let (a, b) = self.edge_ends[k];
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if !seen.contains(&w) {
                    if w == y {
                        return true;
                    }
                    seen.push(w);
                    frontier.push(w);
                }
            }
        }
        false
    }

    /// Number of edges with both endpoints in `set` (vertex indices).
    pub fn induced_edge_count(&self, set: &[usize]) -> usize {
        self.edge_ends.iter().filter(|(a, b)| set.contains(a) && set.contains(b)).count()
    }
}

/// Neighbours of a tree vertex; `depth_cap` truncates the tree.
pub fn tree_neighbors(degree: u32, depth_cap: Option<u32>, v: &TreeVertex) -> Vec<TreeVertex> {
    let mut out = Vec::with_capacity(degree as usize);
    if let Some((_, parent)) = v.0.split_last() {
        out.push(TreeVertex(parent.to_vec()));
    }
    let can_descend = depth_cap.is_none_or(|cap| (v.depth() as u32) < cap);
    if can_descend {
        let children = if v.0.is_empty() { degree } else { degree - 1 };
        for c in 0..children {
            let mut label = v.0.clone();
            label.push(c as u8);
            out.push(TreeVertex(label));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_ball_count(d: usize, r: i32) -> usize {
        let side = 2 * r + 1;
        let total = (side as usize).pow(d as u32);
        (0..total)
            .filter(|&k| {
                let mut k = k;
                let mut norm = 0;
                for _ in 0..d {
                    norm += ((k % side as usize) as i32 - r).abs();
                    k /= side as usize;
                }
                norm <= r
            })
            .count()
    }

    #[test]
    fn torus_neighbors_wrap() {
        let t = Topology::torus(2, 5);
        let mut nb = t.neighbors(&Vertex::new(&[0, 0])).unwrap();
        nb.sort();
        let mut want = vec![Vertex::new(&[1, 0]), Vertex::new(&[4, 0]), Vertex::new(&[0, 1]), Vertex::new(&[0, 4])];
        want.sort();
        assert_eq!(nb, want);
    }

    #[test]
    fn lattice_and_comb_neighbors() {
        let z = Topology::lattice(1);
        let mut nb = z.neighbors(&Vertex::new(&[7])).unwrap();
        nb.sort();
        assert_eq!(nb, vec![Vertex::new(&[6]), Vertex::new(&[8])]);

        let comb = Topology::Comb { half_width: None, half_height: None };
        let mut nb = comb.neighbors(&Vertex::new(&[3, 2])).unwrap();
        nb.sort();
        assert_eq!(nb, vec![Vertex::new(&[3, 1]), Vertex::new(&[3, 3])]);
        assert_eq!(comb.neighbors(&Vertex::new(&[3, 0])).unwrap().len(), 4);
    }

    #[test]
    fn invalid_vertex_rejected() {
        let t = Topology::torus(2, 5);
        assert!(matches!(t.neighbors(&Vertex::new(&[5, 0])), Err(Error::Domain(_))));
        assert!(Topology::Path { n: 3 }.neighbors(&Vertex::new(&[-1])).is_err());
    }

    #[test]
    fn ball_sizes() {
        let z2 = Topology::lattice(2);
        assert_eq!(z2.l1_ball(&Vertex::ORIGIN, 1).unwrap().len(), 5);
        assert_eq!(z2.l1_ball(&Vertex::ORIGIN, 2).unwrap().len(), 13);
        assert_eq!(Topology::lattice(3).l1_ball(&Vertex::ORIGIN, 1).unwrap().len(), 7);
        for d in 1..=4 {
            for r in 0..=4 {
                let got = Topology::lattice(d).l1_ball(&Vertex::ORIGIN, r as i64).unwrap().len();
                assert_eq!(got, brute_ball_count(d, r), "d={d} r={r}");
            }
        }
    }

    #[test]
    fn ball_edge_counts() {
        let z1 = Topology::lattice(1);
        let e = z1.ball_edges(&Vertex::ORIGIN, 1).unwrap();
        assert_eq!(
            e,
            vec![Edge::new(Vertex::new(&[-1]), Vertex::ORIGIN), Edge::new(Vertex::ORIGIN, Vertex::new(&[1]))]
        );
        let z2 = Topology::lattice(2);
        assert_eq!(z2.ball_edges(&Vertex::ORIGIN, 1).unwrap().len(), 4);
        assert_eq!(z2.ball_edges(&Vertex::ORIGIN, 2).unwrap().len(), 16);
    }

    #[test]
    fn ball_errors() {
        assert!(matches!(Topology::lattice(2).l1_ball(&Vertex::ORIGIN, -1), Err(Error::Domain(_))));
        let comb = Topology::Comb { half_width: None, half_height: None };
        assert!(matches!(comb.l1_ball(&Vertex::ORIGIN, 1), Err(Error::Unsupported(_))));
        let tree = Topology::RegularTree { degree: 3, depth: None };
        assert!(tree.l1_ball(&Vertex::ORIGIN, 1).is_err());
    }

    #[test]
    fn large_torus_matches_lattice() {
        for (d, r) in [(1, 2), (2, 2), (3, 1)] {
            let side = 2 * r + 2;
            let t = Topology::torus(d, side);
            let x = Vertex::new(&vec![1; d]);
            let zb = Topology::lattice(d).l1_ball(&Vertex::ORIGIN, r as i64).unwrap().len();
            let ze = Topology::lattice(d).ball_edges(&Vertex::ORIGIN, r as i64).unwrap().len();
            assert_eq!(t.l1_ball(&x, r as i64).unwrap().len(), zb);
            assert_eq!(t.ball_edges(&x, r as i64).unwrap().len(), ze);
        }
    }

    #[test]
    fn edge_canonical_order() {
        let a = Vertex::new(&[1, 2]);
        let b = Vertex::new(&[1, 3]);
        assert_eq!(Edge::new(a, b), Edge::new(b, a));
        assert_eq!(Edge::new(a, b).entity_id(), Edge::new(b, a).entity_id());
        assert_eq!(Edge::new(b, a).endpoints(), (a, b));
    }

    #[test]
    fn connectivity_examples() {
        let z2 = Topology::lattice(2);
        let x = Vertex::ORIGIN;
        let e1 = Vertex::axis(0, 1);
        let e2 = Vertex::axis(1, 1);
        let all_open = |_: &Edge| Some(true);
        let all_closed = |_: &Edge| Some(false);
        assert!(connected_in_ball(&all_open, &z2, &x, &e1, 1).unwrap());
        assert!(!connected_in_ball(&all_closed, &z2, &x, &e1, 1).unwrap());
        assert!(connected_in_ball(&all_closed, &z2, &x, &x, 1).unwrap());

        let open: Vec<Edge> = vec![Edge::new(x, e1), Edge::new(e1, e1.add(&e2)), Edge::new(e1.add(&e2), e2)];
        let zeta = |e: &Edge| Some(open.contains(e));
        assert!(connected_in_ball(&zeta, &z2, &x, &e2, 2).unwrap());
        assert!(!connected_in_ball(&zeta, &z2, &x, &e2, 1).unwrap());
    }

    #[test]
    fn connectivity_errors() {
        let z2 = Topology::lattice(2);
        let far = Vertex::new(&[3, 0]);
        let open = |_: &Edge| Some(true);
        assert!(matches!(connected_in_ball(&open, &z2, &Vertex::ORIGIN, &far, 1), Err(Error::Domain(_))));
        let lazy = |_: &Edge| None;
        assert!(matches!(
            connected_in_ball(&lazy, &z2, &Vertex::ORIGIN, &Vertex::axis(0, 1), 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn ball_geometry_matches_topology() {
        for (d, r) in [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1)] {
            let g = BallGeometry::new(d, r);
            let z = Topology::lattice(d);
            assert_eq!(g.offsets, z.l1_ball(&Vertex::ORIGIN, r as i64).unwrap());
            let mut e = Vec::new();
            g.edges_at(&z, &Vertex::ORIGIN, &mut e);
            e.sort();
            assert_eq!(e, z.ball_edges(&Vertex::ORIGIN, r as i64).unwrap());
            assert_eq!(g.jump_count(), g.offsets.len() - 1);
        }
    }

    #[test]
    fn finite_graph_counts() {
        let g = FiniteGraph::new(&Topology::torus(2, 5), 1).unwrap();
        assert_eq!(g.n_vertices(), 25);
        assert_eq!(g.n_edges(), 50);
        assert!(g.ball.iter().all(|b| b.len() == 4));
        assert!(g.ball_edges.iter().all(|b| b.len() == 4));
        assert_eq!(g.choice_count, 4);

        let p = FiniteGraph::new(&Topology::Path { n: 3 }, 1).unwrap();
        assert_eq!(p.n_edges(), 2);
        assert_eq!(p.ball[0], vec![1]);
        assert_eq!(p.ball[1], vec![0, 2]);
        assert_eq!(p.choice_count, 2);
    }

    #[test]
    fn tree_labels() {
        let root = TreeVertex::root();
        assert_eq!(tree_neighbors(3, None, &root).len(), 3);
        let child = TreeVertex(vec![1]);
        let nb = tree_neighbors(3, None, &child);
        assert_eq!(nb.len(), 3);
        assert_eq!(nb[0], root);
        assert_eq!(tree_neighbors(3, Some(1), &child).len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn topology() -> impl Strategy<Value = Topology> {
            prop_oneof![
                (1usize..=3, 3i32..7).prop_map(|(d, s)| Topology::torus(d, s)),
                (1usize..=4).prop_map(Topology::lattice),
                Just(Topology::Comb { half_width: None, half_height: None }),
                Just(Topology::Comb { half_width: Some(3), half_height: Some(2) }),
                (1i32..8).prop_map(|n| Topology::Path { n }),
            ]
        }

        proptest! {
            #[test]
            fn adjacency_is_symmetric(t in topology(), c in proptest::collection::vec(-3i32..7, 4)) {
                let d = t.dim();
                let v = t.wrap(Vertex::new(&c[..d]));
                prop_assume!(t.contains(&v));
                for w in t.neighbors(&v).unwrap() {
                    prop_assert!(t.neighbors(&w).unwrap().contains(&v));
                }
            }

            #[test]
            fn connectivity_monotone(mask in any::<u16>(), extra in any::<u16>(), target in 0usize..13) {
                let z = Topology::lattice(2);
                let edges = z.ball_edges(&Vertex::ORIGIN, 2).unwrap();
                let ball = z.l1_ball(&Vertex::ORIGIN, 2).unwrap();
                let y = ball[target];
                let small = |e: &Edge| Some(mask >> (edges.iter().position(|f| f == e).unwrap() % 16) & 1 == 1);
                let big = |e: &Edge| {
                    let i = edges.iter().position(|f| f == e).unwrap() % 16;
                    Some((mask | extra) >> i & 1 == 1)
                };
                let a = connected_in_ball(&small, &z, &Vertex::ORIGIN, &y, 2).unwrap();
                let b = connected_in_ball(&big, &z, &Vertex::ORIGIN, &y, 2).unwrap();
                prop_assert!(!a || b);
            }
        }
    }
}
