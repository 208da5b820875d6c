//! Walk-level experiments: meeting of two walkers on dynamical
//! percolation, the distance decay of meeting for static walks, and
//! regeneration statistics.

use serde::{Deserialize, Serialize};

use crate::couplings::PairSetup;
use crate::duals::regeneration::{detect_regenerations, record_pair_trace, RegenerationStart};
use crate::duals::walkers::{EnvMode, KnowledgeWalkers};
use crate::error::{Error, Result};
use crate::lattice::{Topology, MAX_DIM};
use crate::randomness::{exp_sample, uniform_index, SeedScheme, StreamKind};
use crate::replicas;
use crate::stats::{ks_two_sample, line_fit, weighted_line_fit, Estimate, LineFit, TestResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub mode: EnvMode,
    pub level: i64,
    pub distance: i64,
    pub horizons: Vec<f64>,
    /// `P(|X^1_t - X^2_t| <= level for some t <= h)` per horizon.
    pub hits: Vec<Estimate>,
    /// Hit estimates do not decrease along the horizons.
    pub increasing: bool,
}

/// First time two walkers come within `level` of each other.
fn first_meeting(
    setup: &PairSetup,
    level: i64,
    horizon: f64,
    mode: EnvMode,
    seeds: &SeedScheme,
    r: u64,
) -> Result<Option<f64>> {
    let topo = setup.topology;
    if topo.distance(&setup.x, &setup.y) <= level {
        return Ok(Some(0.0));
    }
    let mut w = KnowledgeWalkers::new(topo, setup.range, setup.p, setup.v, &[setup.x, setup.y], mode, seeds, r)?;
    while let Some(ev) = w.step(horizon) {
        if topo.distance(&w.positions[0], &w.positions[1]) <= level {
            return Ok(Some(ev.time()));
        }
    }
    Ok(None)
}

/// Meeting probabilities of two walkers on a single or on separate
/// environments, each started from stationarity.
pub fn collision_experiment(
    setup: &PairSetup,
    level: i64,
    horizons: &[f64],
    n: u64,
    mode: EnvMode,
    seeds: &SeedScheme,
) -> Result<CollisionReport> {
    if horizons.is_empty() || horizons.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::domain("horizons must be positive and finite"));
    }
    if level < 0 {
        return Err(Error::domain("the proximity level must be non-negative"));
    }
    let longest = horizons.iter().copied().fold(0.0, f64::max);
    let times = replicas::try_run(n, |r| first_meeting(setup, level, longest, mode, seeds, r))?;
    let hits: Vec<Estimate> = horizons
        .iter()
        .map(|h| Estimate::proportion(times.iter().filter(|t| t.is_some_and(|t| t <= *h)).count() as u64, n))
        .collect();
    let increasing = hits.windows(2).all(|w| w[1].mean >= w[0].mean);
    Ok(CollisionReport {
        mode,
        level,
        distance: setup.topology.distance(&setup.x, &setup.y),
        horizons: horizons.to_vec(),
        hits,
        increasing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub distance: i64,
    pub hit: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub d: usize,
    pub level: i64,
    pub horizon: f64,
    pub rows: Vec<DecayRow>,
    pub decreasing: bool,
    /// Fit of `log P` against `log distance`.
    pub fit: Option<LineFit>,
    /// The slope lies within 0.75 of `-(d - 2)`; advisory only.
    pub slope_consistent: bool,
}

/// Whether two independent rate-1 simple random walks on `Z^d` started
/// `distance` apart along the first axis come within `level` by `horizon`.
/// The difference of the walks is a rate-2 simple random walk, which is
/// what is simulated.
fn static_meeting(d: usize, distance: i64, level: i64, horizon: f64, seeds: &SeedScheme, r: u64) -> bool {
    let mut z = [0i64; MAX_DIM];
    z[0] = distance;
    let mut rng = seeds.rng(StreamKind::Manual, 0, r);
    let mut t = 0.0;
    let mut l1 = distance;
    loop {
        if l1 <= level {
            return true;
        }
        t += exp_sample(&mut rng, 2.0);
        if t > horizon {
            return false;
        }
        let k = uniform_index(&mut rng, 2 * d);
        let (axis, up) = (k / 2, k % 2 == 0);
        let before = z[axis].abs();
        z[axis] += if up { 1 } else { -1 };
        l1 += z[axis].abs() - before;
    }
}

/// Meeting probability of independent static walks against distance, with
/// a log-log slope fit.
pub fn meeting_decay_check(
    d: usize,
    level: i64,
    distances: &[i64],
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<DecayReport> {
    if !(1..=MAX_DIM).contains(&d) {
        return Err(Error::domain(format!("dimension must lie in 1..={MAX_DIM}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() || level < 0 || distances.iter().any(|&x| x < 0) {
        return Err(Error::domain("horizon must be positive and distances non-negative"));
    }
    let rows: Vec<DecayRow> = distances
        .iter()
        .map(|&dist| {
            let s = seeds.derive(dist as u64);
            let hits = replicas::run(n, |r| static_meeting(d, dist, level, horizon, &s, r));
            DecayRow { distance: dist, hit: Estimate::proportion(hits.iter().filter(|h| **h).count() as u64, n) }
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| w[1].hit.mean < w[0].hit.mean);
    let usable: Vec<&DecayRow> = rows.iter().filter(|r| r.distance > 0 && r.hit.mean > 0.0).collect();
    let xs: Vec<f64> = usable.iter().map(|r| (r.distance as f64).ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.hit.mean.ln()).collect();
    let fit = line_fit(&xs, &ys);
    let target = -(d as f64 - 2.0);
    let slope_consistent = fit.is_some_and(|f| (f.slope - target).abs() <= 0.75);
    Ok(DecayReport { d, level, horizon, rows, decreasing, fit, slope_consistent })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationReport {
    pub n: u64,
    pub horizon: u32,
    pub start: RegenerationStart,
    /// Fraction of runs with `sigma_1` observed by the horizon.
    pub first_observed: Estimate,
    /// Mean `sigma_1 - sigma_0` over runs where it was observed.
    pub mean_first: Option<f64>,
    pub mean_increments: f64,
    /// First-half against second-half increments of the first coordinate
    /// of `dX - dY`, pooled over runs.
    pub ks: Option<TestResult>,
    pub ks_sizes: (usize, usize),
    /// Fit of `log P(sigma_1 > t)` against `t`.
    pub tail_fit: Option<LineFit>,
}

/// Regeneration statistics of two walkers on separate environments.
#[allow(clippy::too_many_arguments)]
pub fn regeneration_suite(
    setup: &PairSetup,
    horizon: u32,
    start: RegenerationStart,
    n: u64,
    seeds: &SeedScheme,
) -> Result<RegenerationReport> {
    if !matches!(setup.topology, Topology::InfiniteLattice { .. } | Topology::Torus { .. }) {
        return Err(Error::unsupported("regeneration runs need a torus or Z^d"));
    }
    let records = replicas::try_run(n, |r| {
        let trace = record_pair_trace(
            setup.topology,
            &setup.x,
            &setup.y,
            &[],
            setup.p,
            setup.v,
            setup.range,
            horizon,
            EnvMode::Separate,
            seeds,
            r,
        )?;
        Ok(detect_regenerations(&trace, start))
    })?;
    let firsts: Vec<f64> = records.iter().filter_map(|rec| rec.increments.first().map(|i| i.duration)).collect();
    let first_observed = Estimate::proportion(firsts.len() as u64, n);
    let mean_first = (!firsts.is_empty()).then(|| firsts.iter().sum::<f64>() / firsts.len() as f64);
    let mean_increments = records.iter().map(|r| r.increments.len() as f64).sum::<f64>() / n.max(1) as f64;

    // Given their number, the increments of a run are exchangeable, so the
    // first and second halves of an even prefix share one law.
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for rec in &records {
        let k = rec.increments.len() / 2 * 2;
        for (j, inc) in rec.increments[..k].iter().enumerate() {
            let v = (inc.dx.0[0] - inc.dy.0[0]) as f64;
            if j < k / 2 {
                early.push(v);
            } else {
                late.push(v);
            }
        }
    }
    let ks = (!early.is_empty() && !late.is_empty()).then(|| ks_two_sample(&early, &late));

    let (mut ts, mut logs, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    let mut sorted: Vec<f64> =
        records.iter().map(|r| r.increments.first().map_or(f64::INFINITY, |i| i.duration)).collect();
    sorted.sort_by(f64::total_cmp);
    for t in 1..=horizon {
        let above = sorted.len() - sorted.partition_point(|&s| s <= t as f64);
        if above < 10 {
            break;
        }
        let s = above as f64 / n as f64;
        ts.push(t as f64);
        logs.push(s.ln());
        weights.push(above as f64 / (1.0 - s).max(1e-12));
    }
    let tail_fit = weighted_line_fit(&ts, &logs, &weights);
    Ok(RegenerationReport {
        n,
        horizon,
        start,
        first_observed,
        mean_first,
        mean_increments,
        ks,
        ks_sizes: (early.len(), late.len()),
        tail_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Vertex;

    #[test]
    fn level_covering_start_hits_at_zero() {
        let t = Topology::lattice(1);
        let s = PairSetup { topology: &t, x: Vertex::ORIGIN, y: Vertex::axis(0, 3), p: 0.5, v: 1.0, range: 1 };
        let r = collision_experiment(&s, 3, &[1.0], 20, EnvMode::Single, &SeedScheme::new(1)).unwrap();
        assert_eq!(r.hits[0].mean, 1.0);
    }

    #[test]
    fn static_decay_at_contact_is_one() {
        let r = meeting_decay_check(3, 1, &[1, 4], 50.0, 200, &SeedScheme::new(1)).unwrap();
        assert_eq!(r.rows[0].hit.mean, 1.0);
        assert!(r.rows[1].hit.mean < 1.0);
    }
}
