//! Correlations of the stationary measures through their duals, with
//! truncation-bias bounds, and the mixing and exchangeability checks built
//! on them.

use serde::{Deserialize, Serialize};

use crate::duals::chain::{simulate_dual_chain, DualMethod};
use crate::duals::coalescing::{simulate_coalescing, WalkOptions};
use crate::duals::space::LatticeSpace;
use crate::duals::stirring::stirring_set_walk;
use crate::dynamics::RunOptions;
use crate::error::{Error, Result};
use crate::lattice::{Edge, Topology, Vertex};
use crate::randomness::{check_perc_params, SeedScheme};
use crate::replicas;
use crate::stats::{pooled_se, Estimate, MeanAcc, Z95};

use super::MC_SIGMAS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuModel {
    Voter,
    Stirring,
    Vmdyn,
}

/// Model parameters shared by the correlation estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSetup {
    pub model: MuModel,
    pub topology: Topology,
    pub range: i32,
    /// Edge density; used by `vmdyn`.
    pub p: f64,
    /// Stirring or environment speed.
    pub v: f64,
}

impl MuSetup {
    fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.range < 1 {
            return Err(Error::domain("range must be at least 1"));
        }
        match self.model {
            MuModel::Voter => Ok(()),
            MuModel::Stirring => {
                if self.range != 1 {
                    return Err(Error::unsupported("stirring is a nearest-neighbour model; use range 1"));
                }
                if !(self.v >= 0.0) || !self.v.is_finite() {
                    return Err(Error::domain("speed v must be nonnegative and finite"));
                }
                self.topology
                    .regular_degree()
                    .map(|_| ())
                    .ok_or_else(|| Error::domain(format!("{} is not a regular graph", self.topology)))
            }
            MuModel::Vmdyn => check_perc_params(self.p, self.v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationQuery {
    pub sites: Vec<Vertex>,
    /// Initial knowledge `E`; `vmdyn` only.
    pub open: Vec<Edge>,
    /// Initial knowledge `F`; `vmdyn` only.
    pub closed: Vec<Edge>,
    pub alpha: f64,
    pub t_star: f64,
    /// Length of the continuation after `t_star` in which further
    /// coalescences are counted for the bias bound; 0 disables it.
    pub window: f64,
    pub n: u64,
}

impl CorrelationQuery {
    pub fn sites(sites: Vec<Vertex>, alpha: f64, t_star: f64, n: u64) -> Self {
        CorrelationQuery { sites, open: Vec::new(), closed: Vec::new(), alpha, t_star, window: t_star, n }
    }
}

/// Truncated estimate of `mu(C, E, F)` with its bias bound: the fraction of
/// runs that coalesced again during `(t_star, t_star + window]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub model: MuModel,
    pub alpha: f64,
    pub estimate: Estimate,
    pub bias_bound: Option<Estimate>,
    pub t_star: f64,
    pub window: f64,
    pub n: u64,
}

impl MuEstimate {
    /// Upper end of the bias bound interval, zero when none was computed.
    pub fn bias(&self) -> f64 {
        self.bias_bound.map_or(0.0, |b| b.ci_high)
    }
}

/// Walker count at `t_star` and whether a coalescence followed it.
fn dual_run(
    setup: &MuSetup,
    q: &CorrelationQuery,
    sites: &[Vertex],
    seeds: &SeedScheme,
    r: u64,
) -> Result<(usize, bool)> {
    let horizon = q.t_star + q.window;
    let times = match setup.model {
        MuModel::Voter => {
            let space = LatticeSpace::new(&setup.topology, setup.range)?;
            simulate_coalescing(&space, sites, &WalkOptions::until(horizon), seeds, r)?.coalescence_times
        }
        MuModel::Stirring => {
            let space = LatticeSpace::new(&setup.topology, 1)?;
            let degree = setup.topology.regular_degree().unwrap_or(0);
            stirring_set_walk(&space, degree, sites, setup.v, horizon, seeds, r, |_, _| {})?.coalescence_times
        }
        MuModel::Vmdyn => {
            simulate_dual_chain(
                &setup.topology,
                sites,
                &q.open,
                &q.closed,
                setup.p,
                setup.v,
                setup.range,
                &RunOptions::until(horizon),
                DualMethod::Constructive,
                seeds,
                r,
            )?
            .coalescence_times
        }
    };
    let before = times.iter().filter(|&&t| t <= q.t_star).count();
    Ok((sites.len() - before, times.len() > before))
}

fn knowledge_factor(setup: &MuSetup, q: &CorrelationQuery) -> f64 {
    match setup.model {
        MuModel::Vmdyn => {
            let p = setup.p;
            p.powi(q.open.len() as i32) * (1.0 - p).powi(q.closed.len() as i32)
        }
        _ => 1.0,
    }
}

/// `E[alpha^{|C_{t*}|}]` for the dual of `setup` started from the query,
/// times `p^{|E|}(1-p)^{|F|}` for the dynamical-percolation model.
pub fn estimate_mu_correlation(setup: &MuSetup, q: &CorrelationQuery, seeds: &SeedScheme) -> Result<MuEstimate> {
    setup.validate()?;
    if !(0.0..=1.0).contains(&q.alpha) {
        return Err(Error::domain("alpha must lie in [0,1]"));
    }
    if !(q.t_star > 0.0) || !q.t_star.is_finite() || !(q.window >= 0.0) || !q.window.is_finite() {
        return Err(Error::domain("t_star must be positive and the window non-negative"));
    }
    if setup.model != MuModel::Vmdyn && (!q.open.is_empty() || !q.closed.is_empty()) {
        return Err(Error::domain("revealed edge sets only apply to the vmdyn model"));
    }
    if let Some(e) = q.open.iter().find(|e| q.closed.contains(e)) {
        return Err(Error::domain(format!("E and F must be disjoint; {e} lies in both")));
    }
    let mut sites = q.sites.clone();
    sites.sort();
    sites.dedup();
    if let Some(x) = sites.iter().find(|x| !setup.topology.contains(x)) {
        return Err(Error::domain(format!("{x} is not a vertex of {}", setup.topology)));
    }
    let factor = knowledge_factor(setup, q);
    let base = MuEstimate {
        model: setup.model,
        alpha: q.alpha,
        estimate: Estimate::exact(factor),
        bias_bound: None,
        t_star: q.t_star,
        window: q.window,
        n: q.n,
    };
    if sites.is_empty() {
        return Ok(base);
    }
    if q.n == 0 {
        return Err(Error::domain("at least one replica is needed"));
    }
    let runs = replicas::try_run(q.n, |r| dual_run(setup, q, &sites, seeds, r))?;
    let mean = MeanAcc::from_iter(runs.iter().map(|(k, _)| factor * q.alpha.powi(*k as i32)));
    let again = runs.iter().filter(|(_, c)| *c).count() as u64;
    Ok(MuEstimate {
        estimate: mean.estimate(),
        bias_bound: (q.window > 0.0).then(|| Estimate::proportion(again, q.n)),
        ..base
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub shift: Vertex,
    pub distance: i64,
    pub joint: Estimate,
    pub left: Estimate,
    pub right: Estimate,
    /// `|mu(A u (B+s)) - mu(A) mu(B)|`.
    pub gap: f64,
    /// Delta-method standard error of the difference.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub contains_zero: bool,
    pub within_3_sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub alpha: f64,
    pub t_star: f64,
    pub n: u64,
    pub rows: Vec<MixingRow>,
    /// Point gaps strictly decrease along the shift list.
    pub decreasing: bool,
    /// The last shift's interval contains 0.
    pub last_contains_zero: bool,
    /// The first shift's interval lies above the last one's.
    pub first_separated: bool,
}

/// Sets for one side of the mixing comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixingSide {
    pub sites: Vec<Vertex>,
    pub open: Vec<Edge>,
}

/// Gap between the joint correlation of `A` and a shifted `B` and the
/// product of the separate ones, for each shift, using the
/// dynamical-percolation dual truncated at `t_star`.
#[allow(clippy::too_many_arguments)]
pub fn mixing_check(
    setup: &MuSetup,
    a: &MixingSide,
    b: &MixingSide,
    alpha: f64,
    shifts: &[Vertex],
    t_star: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<MixingReport> {
    if setup.model != MuModel::Vmdyn {
        return Err(Error::unsupported("the mixing check uses the vmdyn dual"));
    }
    let query = |side: &MixingSide| CorrelationQuery {
        sites: side.sites.clone(),
        open: side.open.clone(),
        closed: Vec::new(),
        alpha,
        t_star,
        window: 0.0,
        n,
    };
    let left = estimate_mu_correlation(setup, &query(a), &seeds.derive(0x1ef7))?.estimate;
    let right = estimate_mu_correlation(setup, &query(b), &seeds.derive(0x5167))?.estimate;
    let trivial = (a.sites.is_empty() && a.open.is_empty()) || (b.sites.is_empty() && b.open.is_empty());
    let mut rows = Vec::with_capacity(shifts.len());
    for (k, s) in shifts.iter().enumerate() {
        let moved = MixingSide {
            sites: b.sites.iter().map(|x| setup.topology.displace(x, s)).collect(),
            open: b.open.iter().map(|e| e.shifted(s)).collect(),
        };
        if let Some(x) = moved.sites.iter().find(|x| a.sites.contains(x)) {
            return Err(Error::domain(format!("shifted sites overlap at {x}")));
        }
        if let Some(e) = moved.open.iter().find(|e| a.open.contains(e)) {
            return Err(Error::domain(format!("shifted edges overlap at {e}")));
        }
        let joint_side = MixingSide {
            sites: a.sites.iter().chain(&moved.sites).copied().collect(),
            open: a.open.iter().chain(&moved.open).copied().collect(),
        };
        let (joint, d, se) = if trivial {
            let j = if a.sites.is_empty() && a.open.is_empty() { right } else { left };
            (j, 0.0, 0.0)
        } else {
            let j = estimate_mu_correlation(setup, &query(&joint_side), &seeds.derive(0x7000 + k as u64))?.estimate;
            let d = j.mean - left.mean * right.mean;
            let se = (j.se.powi(2) + (right.mean * left.se).powi(2) + (left.mean * right.se).powi(2)).sqrt();
            (j, if se == 0.0 && d.abs() < 1e-12 { 0.0 } else { d }, se)
        };
        let gap = d.abs();
        rows.push(MixingRow {
            shift: *s,
            distance: s.l1_norm(),
            joint,
            left,
            right,
            gap,
            se,
            ci_low: (gap - Z95 * se).max(0.0),
            ci_high: gap + Z95 * se,
            contains_zero: gap <= Z95 * se,
            within_3_sigma: gap <= MC_SIGMAS * se,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    let last_contains_zero = rows.last().is_some_and(|r| r.contains_zero);
    let first_separated = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) if rows.len() > 1 => f.ci_low > l.ci_high,
        _ => false,
    };
    Ok(MixingReport { alpha, t_star, n, rows, decreasing, last_contains_zero, first_separated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub k: usize,
    pub shapes: Vec<Vec<Vertex>>,
    pub estimates: Vec<MuEstimate>,
    /// Largest bias bound over the shapes.
    pub epsilon: f64,
    /// Every pair differs by at most `3 * pooled SE + 2 * epsilon`.
    pub agree: bool,
}

/// Truncated `q(C)` for several `k`-vertex shapes with empty knowledge.
pub fn exchangeability_check(
    setup: &MuSetup,
    shapes: &[Vec<Vertex>],
    alpha: f64,
    t_star: f64,
    window: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<ExchangeabilityReport> {
    let k = shapes.first().map_or(0, Vec::len);
    if shapes.iter().any(|s| s.len() != k) {
        return Err(Error::domain("all shapes must have the same number of vertices"));
    }
    let estimates = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let q = CorrelationQuery { window, ..CorrelationQuery::sites(s.clone(), alpha, t_star, n) };
            estimate_mu_correlation(setup, &q, &seeds.derive(0xe0 + i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let epsilon = estimates.iter().map(MuEstimate::bias).fold(0.0, f64::max);
    let mut agree = true;
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let tol = MC_SIGMAS * pooled_se(a.estimate.se, b.estimate.se) + 2.0 * epsilon;
            agree &= (a.estimate.mean - b.estimate.mean).abs() <= tol;
        }
    }
    Ok(ExchangeabilityReport { k, shapes: shapes.to_vec(), estimates, epsilon, agree })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(model: MuModel) -> MuSetup {
        MuSetup { model, topology: Topology::lattice(3), range: 1, p: 0.5, v: 1.0 }
    }

    #[test]
    fn singleton_is_alpha_for_every_model() {
        for m in [MuModel::Voter, MuModel::Stirring, MuModel::Vmdyn] {
            let q = CorrelationQuery::sites(vec![Vertex::ORIGIN], 0.25, 5.0, 50);
            let e = estimate_mu_correlation(&setup(m), &q, &SeedScheme::new(1)).unwrap();
            assert_eq!(e.estimate.mean, 0.25);
            assert_eq!(e.bias_bound.unwrap().mean, 0.0);
        }
    }

    #[test]
    fn zero_alpha_gives_zero() {
        let q = CorrelationQuery::sites(vec![Vertex::ORIGIN, Vertex::axis(0, 1)], 0.0, 5.0, 50);
        let e = estimate_mu_correlation(&setup(MuModel::Voter), &q, &SeedScheme::new(1)).unwrap();
        assert_eq!(e.estimate.mean, 0.0);
    }

    #[test]
    fn empty_partner_has_no_gap() {
        let a = MixingSide { sites: vec![Vertex::ORIGIN], open: vec![] };
        let r = mixing_check(
            &setup(MuModel::Vmdyn),
            &a,
            &MixingSide::default(),
            0.5,
            &[Vertex::axis(0, 2)],
            5.0,
            20,
            &SeedScheme::new(2),
        )
        .unwrap();
        assert_eq!(r.rows[0].gap, 0.0);
    }

    #[test]
    fn overlapping_shift_is_rejected() {
        let a = MixingSide { sites: vec![Vertex::ORIGIN, Vertex::axis(0, 2)], open: vec![] };
        let b = MixingSide { sites: vec![Vertex::ORIGIN], open: vec![] };
        assert!(mixing_check(&setup(MuModel::Vmdyn), &a, &b, 0.5, &[Vertex::axis(0, 2)], 5.0, 20, &SeedScheme::new(2))
            .is_err());
    }
}
