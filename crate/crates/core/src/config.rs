//! Experiment configuration files (TOML). Every violation is collected
//! before anything runs; unknown keys are rejected.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::duals::regeneration::RegenerationStart;
use crate::duals::walkers::EnvMode;
use crate::error::{Error, Result};
use crate::lattice::{Edge, Topology, Vertex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Duality,
    Mu,
    Collision,
    Regen,
    Mixing,
    CoupleCheck,
    Exchangeability,
    TreeMeasure,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Duality => "duality",
            ExperimentKind::Mu => "mu",
            ExperimentKind::Collision => "collision",
            ExperimentKind::Regen => "regen",
            ExperimentKind::Mixing => "mixing",
            ExperimentKind::CoupleCheck => "couple-check",
            ExperimentKind::Exchangeability => "exchangeability",
            ExperimentKind::TreeMeasure => "tree-measure",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Voter,
    Stirring,
    Dynperc,
    Vmdyn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoupleCheck {
    /// Coalescing walks inside the independent walks.
    Containment,
    /// Martingale identity of the stirring/independent coupling.
    Martingale,
    /// `P(tau_coll <= T)` against the `Phi` integral.
    Collision,
    /// Single/separate environment coupling against `2 g_{2R}`, with
    /// `f_l` and `g_l` along the distances.
    SingleSeparate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kind: ModelKind,
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default = "one_i")]
    pub range: i32,
    #[serde(default = "half")]
    pub alpha: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn one_i() -> i32 {
    1
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { kind: ModelKind::Voter, p: 0.5, v: 1.0, range: 1, alpha: 0.5 }
    }
}

pub type Coords = Vec<i32>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default)]
    pub sites: Vec<Coords>,
    #[serde(default)]
    pub open: Vec<[Coords; 2]>,
    #[serde(default)]
    pub closed: Vec<[Coords; 2]>,
    #[serde(default)]
    pub partner_sites: Vec<Coords>,
    #[serde(default)]
    pub partner_open: Vec<[Coords; 2]>,
    #[serde(default)]
    pub shifts: Vec<Coords>,
    #[serde(default)]
    pub shapes: Vec<Vec<Coords>>,
    pub x: Option<Coords>,
    pub y: Option<Coords>,
    pub level: Option<i64>,
    #[serde(default)]
    pub levels: Vec<i64>,
    #[serde(default)]
    pub distances: Vec<i64>,
    #[serde(default)]
    pub horizons: Vec<f64>,
    pub env: Option<EnvMode>,
    pub check: Option<CoupleCheck>,
    /// Child digits of a tree vertex from the root.
    pub tree_vertex: Option<Vec<u8>>,
    /// Root child spanning the branch; absent means the whole tree.
    pub branch: Option<u8>,
    pub regeneration_start: Option<RegenerationStart>,
    /// Collision on the static lattice: independent simple random walks.
    #[serde(default)]
    pub static_lattice: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Opinions per vertex in the topology's vertex order; absent means
    /// Bernoulli(alpha) per replica.
    pub eta: Option<Vec<u8>>,
    /// Edge states in canonical edge order; absent means one
    /// Bernoulli(p) draw fixed by the master seed.
    pub zeta: Option<Vec<bool>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: u64,
    pub horizon: Option<f64>,
    pub t_star: Option<f64>,
    pub window: Option<f64>,
    pub workers: Option<usize>,
    pub topology: Topology,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub query: QuerySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_seed() -> u64 {
    1
}

fn default_reps() -> u64 {
    1000
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn vertex(&self, c: &Coords) -> Vertex {
        Vertex::new(c)
    }

    pub fn vertices(&self, cs: &[Coords]) -> Vec<Vertex> {
        cs.iter().map(|c| self.vertex(c)).collect()
    }

    pub fn edges(&self, es: &[[Coords; 2]]) -> Vec<Edge> {
        es.iter()
            .map(|[a, b]| Edge::new(self.topology.wrap(Vertex::new(a)), self.topology.wrap(Vertex::new(b))))
            .collect()
    }

    /// All violations of the configuration for `kind`; empty when valid.
    /// Without a kind only the subcommand-independent rules are checked.
    pub fn violations(&self, kind: Option<ExperimentKind>) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(k), Some(kind)) = (self.experiment, kind) {
            if k != kind {
                out.push(format!("experiment = \"{}\" does not match the subcommand {}", k.name(), kind.name()));
            }
        }
        if let Err(e) = self.topology.validate() {
            out.push(e.to_string());
        }
        let m = &self.model;
        if !(0.0..=1.0).contains(&m.p) {
            out.push("p must lie in [0,1]".into());
        }
        if !(m.v >= 0.0) || !m.v.is_finite() {
            out.push("v must be nonnegative and finite".into());
        }
        if matches!(m.kind, ModelKind::Dynperc | ModelKind::Vmdyn) && !(m.v > 0.0) {
            out.push("v must be positive for dynamical percolation".into());
        }
        if !(0.0..=1.0).contains(&m.alpha) {
            out.push("alpha must lie in [0,1]".into());
        }
        if m.range < 1 {
            out.push("range must be at least 1".into());
        }
        if let Topology::Torus { side, .. } = self.topology {
            if side <= 2 * m.range + 1 && m.kind == ModelKind::Vmdyn {
                out.push(format!(
                    "torus side {side} must exceed 2R+1 = {} so that range balls match the lattice",
                    2 * m.range + 1
                ));
            }
        }
        if self.reps == 0 {
            out.push("reps must be at least 1".into());
        }
        for (name, val) in [("horizon", self.horizon), ("t_star", self.t_star)] {
            if let Some(h) = val {
                if !(h > 0.0) || !h.is_finite() {
                    out.push(format!("{name} must be positive and finite"));
                }
            }
        }
        if let Some(w) = self.window {
            if !(w >= 0.0) || !w.is_finite() {
                out.push("window must be non-negative and finite".into());
            }
        }
        if self.workers == Some(0) {
            out.push("workers must be at least 1".into());
        }
        self.check_geometry(&mut out);
        if let Some(kind) = kind.or(self.experiment) {
            self.check_needs(kind, &mut out);
        }
        out
    }

    fn check_vertex(&self, what: &str, c: &Coords, out: &mut Vec<String>) {
        if self.topology.is_tree() {
            out.push(format!("{what}: coordinates do not apply to {}", self.topology));
            return;
        }
        if c.len() != self.topology.dim() {
            out.push(format!(
                "{what}: {c:?} has {} coordinates, the topology has dimension {}",
                c.len(),
                self.topology.dim()
            ));
        } else if !self.topology.contains(&Vertex::new(c)) {
            out.push(format!("{what}: {c:?} is not a vertex of {}", self.topology));
        }
    }

    fn check_edges(&self, what: &str, es: &[[Coords; 2]], out: &mut Vec<String>) {
        for [a, b] in es {
            let before = out.len();
            self.check_vertex(what, a, out);
            self.check_vertex(what, b, out);
            if out.len() == before && !self.topology.are_adjacent(&Vertex::new(a), &Vertex::new(b)) {
                out.push(format!("{what}: {a:?} and {b:?} are not adjacent"));
            }
        }
    }

    fn check_geometry(&self, out: &mut Vec<String>) {
        if self.topology.validate().is_err() {
            return;
        }
        let q = &self.query;
        for (what, list) in [("query.sites", &q.sites), ("query.partner_sites", &q.partner_sites)] {
            for c in list {
                self.check_vertex(what, c, out);
            }
        }
        for (what, c) in [("query.x", &q.x), ("query.y", &q.y)] {
            if let Some(c) = c {
                self.check_vertex(what, c, out);
            }
        }
        for s in &q.shapes {
            for c in s {
                self.check_vertex("query.shapes", c, out);
            }
        }
        for s in &q.shifts {
            if s.len() != self.topology.dim() {
                out.push(format!("query.shifts: {s:?} does not match dimension {}", self.topology.dim()));
            }
        }
        let before = out.len();
        self.check_edges("query.open", &q.open, out);
        self.check_edges("query.closed", &q.closed, out);
        if out.len() == before {
            let open: HashSet<Edge> = self.edges(&q.open).into_iter().collect();
            if let Some(e) = self.edges(&q.closed).iter().find(|e| open.contains(e)) {
                out.push(format!("E and F must be disjoint; {e} lies in both query.open and query.closed"));
            }
        }
        self.check_edges("query.partner_open", &q.partner_open, out);
        if let Some(eta) = &self.initial.eta {
            if eta.iter().any(|v| *v > 1) {
                out.push("initial.eta: opinions must be 0 or 1".into());
            }
        }
        if let Some(l) = q.level {
            if l < 0 {
                out.push("query.level must be non-negative".into());
            }
        }
        if q.horizons.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            out.push("query.horizons must be positive and finite".into());
        }
        if q.distances.iter().any(|d| *d < 0) {
            out.push("query.distances must be non-negative".into());
        }
    }

    fn check_needs(&self, kind: ExperimentKind, out: &mut Vec<String>) {
        let q = &self.query;
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        let finite = self.topology.is_finite() && !self.topology.is_tree();
        match kind {
            ExperimentKind::Simulate => {
                need(finite, "simulate needs a finite coordinate topology");
                need(self.horizon.is_some(), "horizon is required for simulate");
            }
            ExperimentKind::Duality => {
                need(finite, "duality needs a finite coordinate topology");
                need(self.horizon.is_some(), "horizon is required for duality (the time t)");
                need(self.model.kind != ModelKind::Dynperc, "duality applies to voter, stirring or vmdyn");
            }
            ExperimentKind::Mu | ExperimentKind::Exchangeability | ExperimentKind::Mixing => {
                need(self.t_star.is_some(), "t_star is required");
                need(self.model.kind != ModelKind::Dynperc, "correlations apply to voter, stirring or vmdyn");
                if kind == ExperimentKind::Mixing {
                    need(!q.shifts.is_empty(), "query.shifts is required for mixing");
                    need(self.model.kind == ModelKind::Vmdyn, "mixing uses the vmdyn model");
                }
                if kind == ExperimentKind::Exchangeability {
                    need(!q.shapes.is_empty(), "query.shapes is required for exchangeability");
                }
            }
            ExperimentKind::Collision => {
                need(q.y.is_some() || !q.distances.is_empty(), "query.y or query.distances is required for collision");
                need(!q.horizons.is_empty() || self.horizon.is_some(), "query.horizons or horizon is required");
            }
            ExperimentKind::Regen => {
                need(q.y.is_some() || !q.distances.is_empty(), "query.y or query.distances is required for regen");
                need(self.horizon.is_some_and(|h| h >= 1.0), "horizon of at least 1 is required for regen");
            }
            ExperimentKind::CoupleCheck => {
                need(q.check.is_some(), "query.check is required for couple-check");
                need(self.horizon.is_some(), "horizon is required for couple-check");
            }
            ExperimentKind::TreeMeasure => {
                need(self.topology.is_tree(), "tree-measure needs a regular_tree topology");
                need(q.tree_vertex.is_some(), "query.tree_vertex is required for tree-measure");
                need(self.horizon.is_some(), "horizon is required for tree-measure");
            }
        }
    }

    pub fn validate(&self, kind: Option<ExperimentKind>) -> Result<()> {
        let v = self.violations(kind);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
