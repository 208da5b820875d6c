//! Duality checks: the forward event probability against the dual
//! expectation, exactly on small graphs and by Monte Carlo.

use serde::{Deserialize, Serialize};

use crate::ctmc::{enumerate, transient, RateModel, MAX_STATES};
use crate::duals::chain::{simulate_dual_chain, DualMethod};
use crate::duals::coalescing::{simulate_coalescing, WalkOptions};
use crate::duals::exact::{CoalescingChain, DualBits, DualChainModel, StirringSetChain};
use crate::duals::space::GraphSpace;
use crate::duals::stirring::simulate_coalescing_stirring;
use crate::dynamics::exact::{StirringChain, VmdynChain, VoterChain};
use crate::dynamics::{
    regular_degree, simulate_stirring, simulate_vmdyn, simulate_voter, EdgeConfig, RunOptions, SiteConfig,
};
use crate::error::{Error, Result};
use crate::lattice::{FiniteGraph, Topology};
use crate::randomness::{check_perc_params, SeedScheme, StreamKind};
use crate::replicas;
use crate::stats::{pooled_se, Estimate, MeanAcc};

use super::{DUAL_LABEL, EXACT_TOL, MC_SIGMAS};

/// Initial opinions of the forward process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSites {
    Fixed(SiteConfig),
    /// Independent opinions with `P(1) = alpha`, redrawn per replica.
    Bernoulli(f64),
}

impl InitialSites {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialSites::Fixed(s) if s.len() != n => {
                Err(Error::domain(format!("site configuration has {} entries, graph has {n} vertices", s.len())))
            }
            InitialSites::Fixed(s) if s.0.iter().any(|v| *v > 1) => Err(Error::domain("opinions must be 0 or 1")),
            InitialSites::Bernoulli(a) if !(0.0..=1.0).contains(a) => Err(Error::domain("alpha must lie in [0,1]")),
            _ => Ok(()),
        }
    }

    fn draw(&self, n: usize, seeds: &SeedScheme, replica: u64) -> SiteConfig {
        match self {
            InitialSites::Fixed(s) => s.clone(),
            InitialSites::Bernoulli(a) => {
                SiteConfig::bernoulli(n, *a, &mut seeds.rng(StreamKind::InitialSite, 0, replica))
            }
        }
    }

    /// `E[1{eta_0 = 1 on set}]` given the dual set.
    fn dual_weight(&self, set: &[usize]) -> f64 {
        match self {
            InitialSites::Fixed(s) => indicator(s.all_ones_on(set)),
            InitialSites::Bernoulli(a) => a.powi(set.len() as i32),
        }
    }

    /// Law of `eta_0` as bit-encoded states, for the exact oracles.
    fn law(&self, n: usize) -> Vec<(u64, f64)> {
        match self {
            InitialSites::Fixed(s) => vec![(s.to_bits(), 1.0)],
            InitialSites::Bernoulli(a) => (0u64..1 << n)
                .map(|b| {
                    let ones = b.count_ones() as i32;
                    (b, a.powi(ones) * (1.0 - a).powi(n as i32 - ones))
                })
                .filter(|(_, w)| *w > 0.0)
                .collect(),
        }
    }
}

/// Both sides of a duality identity, exactly and by simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub model: String,
    pub t: f64,
    pub n: u64,
    /// Forward side.
    pub lhs: Option<Estimate>,
    /// Dual side.
    pub rhs: Option<Estimate>,
    pub exact_lhs: Option<f64>,
    pub exact_rhs: Option<f64>,
    pub exact_gap: Option<f64>,
    pub mc_gap: Option<f64>,
    pub pooled_se: Option<f64>,
    pub passes: bool,
    /// Set when the identity is undefined for these parameters.
    pub excluded: Option<String>,
    pub notes: Vec<String>,
}

impl DualityReport {
    fn new(model: &str, t: f64, n: u64) -> Self {
        DualityReport {
            model: model.to_string(),
            t,
            n,
            lhs: None,
            rhs: None,
            exact_lhs: None,
            exact_rhs: None,
            exact_gap: None,
            mc_gap: None,
            pooled_se: None,
            passes: false,
            excluded: None,
            notes: Vec::new(),
        }
    }

    fn set_exact(&mut self, lhs: f64, rhs: f64) {
        self.exact_lhs = Some(lhs);
        self.exact_rhs = Some(rhs);
        self.exact_gap = Some((lhs - rhs).abs());
    }

    fn set_mc(&mut self, lhs: Estimate, rhs: Estimate) {
        self.mc_gap = Some((lhs.mean - rhs.mean).abs());
        self.pooled_se = Some(pooled_se(lhs.se, rhs.se));
        self.lhs = Some(lhs);
        self.rhs = Some(rhs);
    }

    fn finish(mut self) -> Self {
        let exact_ok = self.exact_gap.is_none_or(|g| g <= EXACT_TOL);
        let mc_ok = match (self.mc_gap, self.pooled_se) {
            (Some(g), Some(se)) => g <= MC_SIGMAS * se || g <= 1e-12,
            _ => true,
        };
        self.passes =
            self.excluded.is_none() && exact_ok && mc_ok && (self.exact_gap.is_some() || self.mc_gap.is_some());
        self
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `E f(X_t)` for the chain started from the weighted `initial` states.
fn exact_mean<M: RateModel>(
    model: &M,
    initial: &[(M::State, f64)],
    t: f64,
    f: impl Fn(&M::State) -> f64,
) -> Result<f64> {
    let starts: Vec<M::State> = initial.iter().map(|(s, _)| s.clone()).collect();
    let space = enumerate(model, &starts, MAX_STATES)?;
    let mut pi0 = vec![0.0; space.len()];
    for (s, w) in initial {
        pi0[space.index_of(s).expect("initial state enumerated")] += w;
    }
    let pi = transient(&space, &pi0, t)?;
    Ok(space.states.iter().zip(&pi).map(|(s, p)| p * f(s)).sum())
}

fn ones_on(bits: u64, set: &[usize]) -> bool {
    set.iter().all(|&i| (bits >> i) & 1 == 1)
}

fn check_common(graph: &FiniteGraph, init: &InitialSites, a: &[usize], t: f64) -> Result<Vec<usize>> {
    init.validate(graph.n_vertices())?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("t must be non-negative and finite"));
    }
    if let Some(x) = a.iter().find(|&&x| x >= graph.n_vertices()) {
        return Err(Error::domain(format!("vertex index {x} out of range")));
    }
    let mut set = a.to_vec();
    set.sort_unstable();
    set.dedup();
    Ok(set)
}

fn exact_allowed(bits: usize) -> bool {
    bits < 63 && (1usize << bits) <= MAX_STATES
}

/// Degenerate inputs where both sides are known without evolution: an
/// empty dual set, or `t = 0`.
fn trivial(report: &mut DualityReport, init: &InitialSites, a: &[usize], t: f64) -> bool {
    if a.is_empty() {
        report.set_exact(1.0, 1.0);
        report.set_mc(Estimate::exact(1.0), Estimate::exact(1.0));
        report.notes.push("empty dual set".into());
        return true;
    }
    if t == 0.0 {
        let v = match init {
            InitialSites::Fixed(s) => indicator(s.all_ones_on(a)),
            InitialSites::Bernoulli(al) => al.powi(a.len() as i32),
        };
        report.set_exact(v, v);
        report.set_mc(Estimate::exact(v), Estimate::exact(v));
        report.notes.push("t = 0".into());
        return true;
    }
    false
}

fn mc_pair(
    n: u64,
    forward: impl Fn(u64) -> Result<f64> + Sync + Send,
    dual: impl Fn(u64) -> Result<f64> + Sync + Send,
) -> Result<(Estimate, Estimate)> {
    let l = replicas::try_run(n, forward)?;
    let r = replicas::try_run(n, dual)?;
    Ok((MeanAcc::from_iter(l).estimate(), MeanAcc::from_iter(r).estimate()))
}

/// `P(eta_t = 1 on A)` against `E[1{eta_0 = 1 on A_t}]` for the voter model
/// and coalescing random walks.
pub fn duality_check_voter(
    graph: &FiniteGraph,
    init: &InitialSites,
    a: &[usize],
    t: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<DualityReport> {
    let a = check_common(graph, init, a, t)?;
    let mut report = DualityReport::new("voter", t, n);
    if trivial(&mut report, init, &a, t) {
        return Ok(report.finish());
    }
    let nv = graph.n_vertices();
    if exact_allowed(nv) {
        let lhs = exact_mean(&VoterChain { graph }, &init.law(nv), t, |s| indicator(ones_on(*s, &a)))?;
        let rhs = exact_mean(&CoalescingChain { graph }, &[(a.clone(), 1.0)], t, |s| init.dual_weight(s))?;
        report.set_exact(lhs, rhs);
    } else {
        report.notes.push("state space too large for the exact oracle".into());
    }
    if n > 0 {
        let dual_seeds = seeds.derive(DUAL_LABEL);
        let opts = RunOptions::until(t);
        let (l, r) = mc_pair(
            n,
            |r| {
                let eta0 = init.draw(nv, seeds, r);
                let tr = simulate_voter(graph, &eta0, &opts, seeds, r)?;
                Ok(indicator(tr.final_state.all_ones_on(&a)))
            },
            |r| {
                let run = simulate_coalescing(&GraphSpace { graph }, &a, &WalkOptions::until(t), &dual_seeds, r)?;
                Ok(init.dual_weight(&run.final_set))
            },
        )?;
        report.set_mc(l, r);
    }
    Ok(report.finish())
}

/// Voter model with stirring at speed `v` against the coalescing-stirring
/// set walker.
pub fn duality_check_stirring(
    graph: &FiniteGraph,
    init: &InitialSites,
    a: &[usize],
    v: f64,
    t: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<DualityReport> {
    regular_degree(graph)?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::domain("speed v must be nonnegative and finite"));
    }
    let a = check_common(graph, init, a, t)?;
    let mut report = DualityReport::new("stirring", t, n);
    if trivial(&mut report, init, &a, t) {
        return Ok(report.finish());
    }
    let nv = graph.n_vertices();
    if exact_allowed(nv) {
        let lhs = exact_mean(&StirringChain { graph, v }, &init.law(nv), t, |s| indicator(ones_on(*s, &a)))?;
        let rhs = exact_mean(&StirringSetChain { graph, v }, &[(a.clone(), 1.0)], t, |s| init.dual_weight(s))?;
        report.set_exact(lhs, rhs);
    } else {
        report.notes.push("state space too large for the exact oracle".into());
    }
    if n > 0 {
        let dual_seeds = seeds.derive(DUAL_LABEL);
        let opts = RunOptions::until(t);
        let (l, r) = mc_pair(
            n,
            |r| {
                let xi0 = init.draw(nv, seeds, r);
                let tr = simulate_stirring(graph, &xi0, v, &opts, seeds, r)?;
                Ok(indicator(tr.final_state.all_ones_on(&a)))
            },
            |r| {
                let run = simulate_coalescing_stirring(graph, &a, v, t, &dual_seeds, r)?;
                Ok(init.dual_weight(&run.final_set))
            },
        )?;
        report.set_mc(l, r);
    }
    Ok(report.finish())
}

/// Initial data `(C, E, F)` of the dynamical-percolation duality, as vertex
/// and edge indices of a finite graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualQuery {
    pub sites: Vec<usize>,
    pub open: Vec<usize>,
    pub closed: Vec<usize>,
}

/// `p^{|E| - |A|} (1-p)^{|F| - |B|}`, the weight relating the duality
/// function to the indicator of the forward event.
fn knowledge_weight(p: f64, e: usize, f: usize, a: usize, b: usize) -> f64 {
    p.powi(e as i32 - a as i32) * (1.0 - p).powi(f as i32 - b as i32)
}

/// `P(eta_t = 1 on C, zeta_t = 1 on E, zeta_t = 0 on F)` against the
/// weighted dual expectation
/// `p^{|E|}(1-p)^{|F|} E[p^{-|A_t|}(1-p)^{-|B_t|} 1{eta_0 = 1 on C_t} 1{zeta_0 = 1 on A_t, 0 on B_t}]`.
#[allow(clippy::too_many_arguments)]
pub fn duality_check_vmdyn(
    graph: &FiniteGraph,
    init: &InitialSites,
    zeta0: &EdgeConfig,
    query: &DualQuery,
    p: f64,
    v: f64,
    t: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<DualityReport> {
    check_perc_params(p, v)?;
    let c = check_common(graph, init, &query.sites, t)?;
    let m = graph.n_edges();
    if zeta0.0.len() != m {
        return Err(Error::domain(format!("edge configuration has {} entries, graph has {m} edges", zeta0.0.len())));
    }
    let mut e = query.open.clone();
    let mut f = query.closed.clone();
    for s in [&mut e, &mut f] {
        s.sort_unstable();
        s.dedup();
        if let Some(k) = s.iter().find(|&&k| k >= m) {
            return Err(Error::domain(format!("edge index {k} out of range")));
        }
    }
    if let Some(k) = e.iter().find(|k| f.binary_search(k).is_ok()) {
        return Err(Error::domain(format!("E and F must be disjoint; edge {k} lies in both")));
    }
    let mut report = DualityReport::new("vmdyn", t, n);
    if (p == 0.0 && !e.is_empty()) || (p == 1.0 && !f.is_empty()) {
        report.excluded = Some(format!("the weights p^-|A| (1-p)^-|B| are undefined at p = {p} with this E, F"));
        return Ok(report.finish());
    }
    let forward_event = |sites: &SiteConfig, edges: &EdgeConfig| sites.all_ones_on(&c) && edges.matches(&e, &f);
    if c.is_empty() || t == 0.0 {
        let v0 = match init {
            InitialSites::Fixed(s) => indicator(forward_event(s, zeta0)),
            InitialSites::Bernoulli(a) => a.powi(c.len() as i32) * indicator(zeta0.matches(&e, &f)),
        };
        if c.is_empty() && t > 0.0 {
            // With no walkers the dual only forgets; the lhs is the edge
            // marginal of the environment.
            let lhs = exact_edge_event(zeta0, &e, &f, p, v, t);
            let rhs = exact_forgetting_side(zeta0, &e, &f, p, v, t);
            report.set_exact(lhs, rhs);
            report.set_mc(Estimate::exact(lhs), Estimate::exact(rhs));
            report.notes.push("empty walker set".into());
        } else {
            report.set_exact(v0, v0);
            report.set_mc(Estimate::exact(v0), Estimate::exact(v0));
            report.notes.push("t = 0".into());
        }
        return Ok(report.finish());
    }
    let nv = graph.n_vertices();
    let zeta_bits = zeta0.to_bits();
    let dual_value = |walkers: &[usize], a: &[usize], b: &[usize]| -> f64 {
        let phi = a.iter().all(|&k| zeta0.0[k]) && b.iter().all(|&k| !zeta0.0[k]);
        if !phi {
            return 0.0;
        }
        knowledge_weight(p, e.len(), f.len(), a.len(), b.len()) * init.dual_weight(walkers)
    };
    if exact_allowed(nv + m) && m <= 64 {
        let law: Vec<((u64, u64), f64)> = init.law(nv).into_iter().map(|(s, w)| ((s, zeta_bits), w)).collect();
        let lhs = exact_mean(&VmdynChain { graph, p, v }, &law, t, |(s, z)| {
            indicator(ones_on(*s, &c) && ones_on(*z, &e) && f.iter().all(|&k| (z >> k) & 1 == 0))
        })?;
        match DualChainModel::new(graph, p, v) {
            Ok(model) => {
                let start = DualBits { walkers: to_bits(&c), open: to_bits(&e), closed: to_bits(&f) };
                let rhs = exact_mean(&model, &[(start, 1.0)], t, |s| {
                    dual_value(&from_bits(s.walkers, nv), &from_bits(s.open, m), &from_bits(s.closed, m))
                })?;
                report.set_exact(lhs, rhs);
            }
            Err(err) => report.notes.push(format!("exact dual refused: {err}")),
        }
    } else {
        report.notes.push("state space too large for the exact oracle".into());
    }
    if n > 0 {
        let method = if constructive_ok(graph) { DualMethod::Constructive } else { DualMethod::Gillespie };
        let dual_seeds = seeds.derive(DUAL_LABEL);
        let opts = RunOptions::until(t);
        let c_v: Vec<_> = c.iter().map(|&i| graph.vertices[i]).collect();
        let e_v: Vec<_> = e.iter().map(|&k| graph.edges[k]).collect();
        let f_v: Vec<_> = f.iter().map(|&k| graph.edges[k]).collect();
        let (l, r) = mc_pair(
            n,
            |r| {
                let eta0 = init.draw(nv, seeds, r);
                let tr = simulate_vmdyn(graph, &eta0, zeta0, p, v, &opts, seeds, r)?;
                Ok(indicator(forward_event(&tr.final_state.sites, &tr.final_state.edges)))
            },
            |r| {
                let run = simulate_dual_chain(
                    &graph.topology,
                    &c_v,
                    &e_v,
                    &f_v,
                    p,
                    v,
                    graph.range as i32,
                    &opts,
                    method,
                    &dual_seeds,
                    r,
                )?;
                let s = run.final_state;
                let walkers = s.walkers.iter().map(|x| graph.vertex_index(x)).collect::<Result<Vec<_>>>()?;
                let a = s.open.iter().map(|x| graph.edge_idx(x)).collect::<Result<Vec<_>>>()?;
                let b = s.closed.iter().map(|x| graph.edge_idx(x)).collect::<Result<Vec<_>>>()?;
                Ok(dual_value(&walkers, &a, &b))
            },
        )?;
        report.set_mc(l, r);
    }
    Ok(report.finish())
}

fn constructive_ok(graph: &FiniteGraph) -> bool {
    match graph.topology {
        Topology::Torus { side, .. } => side > 2 * graph.range as i32 + 1,
        _ => false,
    }
}

fn to_bits(set: &[usize]) -> u64 {
    set.iter().fold(0, |b, &i| b | 1 << i)
}

fn from_bits(bits: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| (bits >> i) & 1 == 1).collect()
}

/// `P(zeta_t = 1 on E, 0 on F)` for independent two-state edges.
fn exact_edge_event(zeta0: &EdgeConfig, e: &[usize], f: &[usize], p: f64, v: f64, t: f64) -> f64 {
    let keep = (-v * t).exp();
    let open_at = |k: usize| if zeta0.0[k] { keep + (1.0 - keep) * p } else { (1.0 - keep) * p };
    e.iter().map(|&k| open_at(k)).product::<f64>() * f.iter().map(|&k| 1.0 - open_at(k)).product::<f64>()
}

/// Dual side with no walkers: each edge of `E` (resp. `F`) is still known
/// with probability `exp(-v t)`, contributing `p^{-1} 1{zeta_0(e) open}`
/// (resp. `(1-p)^{-1} 1{closed}`), and forgotten otherwise.
fn exact_forgetting_side(zeta0: &EdgeConfig, e: &[usize], f: &[usize], p: f64, v: f64, t: f64) -> f64 {
    let keep = (-v * t).exp();
    let side = |k: usize, open: bool, q: f64| q * (keep * indicator(zeta0.0[k] == open) / q + (1.0 - keep));
    e.iter().map(|&k| side(k, true, p)).product::<f64>() * f.iter().map(|&k| side(k, false, 1.0 - p)).product::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c3() -> FiniteGraph {
        FiniteGraph::new(&Topology::cycle(3), 1).unwrap()
    }

    #[test]
    fn empty_set_gives_one() {
        let r = duality_check_voter(&c3(), &InitialSites::Bernoulli(0.3), &[], 0.5, 10, &SeedScheme::new(1)).unwrap();
        assert!(r.passes);
        assert_eq!(r.exact_lhs, Some(1.0));
    }

    #[test]
    fn exact_voter_sides_agree() {
        let init = InitialSites::Fixed(SiteConfig(vec![1, 0, 0]));
        let r = duality_check_voter(&c3(), &init, &[0, 1], 0.7, 0, &SeedScheme::new(1)).unwrap();
        assert!(r.exact_gap.unwrap() < 1e-12, "{r:?}");
        assert!(r.passes);
    }

    #[test]
    fn edge_only_query_matches_relaxation() {
        let g = FiniteGraph::new(&Topology::Path { n: 3 }, 1).unwrap();
        let z = EdgeConfig(vec![true, false]);
        let q = DualQuery { sites: vec![], open: vec![0], closed: vec![1] };
        let r = duality_check_vmdyn(&g, &InitialSites::Bernoulli(0.5), &z, &q, 0.6, 1.0, 0.5, 0, &SeedScheme::new(1))
            .unwrap();
        let keep = (-0.5f64).exp();
        let want = (keep + (1.0 - keep) * 0.6) * (1.0 - (1.0 - keep) * 0.6);
        assert!((r.exact_lhs.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn boundary_density_is_excluded() {
        let g = FiniteGraph::new(&Topology::Path { n: 3 }, 1).unwrap();
        let q = DualQuery { sites: vec![1], open: vec![], closed: vec![0] };
        let r = duality_check_vmdyn(
            &g,
            &InitialSites::Bernoulli(0.5),
            &EdgeConfig(vec![true, true]),
            &q,
            1.0,
            1.0,
            0.5,
            0,
            &SeedScheme::new(1),
        )
        .unwrap();
        assert!(r.excluded.is_some());
        assert!(!r.passes);
    }
}
