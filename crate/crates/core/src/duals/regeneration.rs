//! Regeneration times of two walkers on dynamical percolation: integer
//! times at which no revealed edge remains known.

use serde::{Deserialize, Serialize};

use super::walkers::{EnvMode, KnowledgeWalkers, INITIAL_BIT};
use crate::error::{Error, Result};
use crate::lattice::{Edge, Topology, Vertex};
use crate::randomness::SeedScheme;

/// State of the pair at one observation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub time: f64,
    /// No edge is known at this time.
    pub empty: bool,
    pub x: Vertex,
    pub y: Vertex,
    /// Attempts made by both walkers so far.
    pub attempts: u64,
}

/// Pair trajectory observed at every integer time, plus the first
/// (continuous) time the knowledge was empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTrace {
    pub start: PairSample,
    pub first_empty: Option<PairSample>,
    /// Samples at times `1, 2, ..., horizon`.
    pub integer: Vec<PairSample>,
}

fn sample(w: &KnowledgeWalkers, time: f64) -> PairSample {
    PairSample {
        time,
        empty: w.knows_nothing(),
        x: w.positions[0],
        y: w.positions[1],
        attempts: w.attempts.iter().sum(),
    }
}

/// Runs two walkers from `x` and `y` and records the pair at integer times
/// up to `horizon`. `pinned` edges are initial knowledge (in the shared
/// environment, or in the first walker's environment when separate).
#[allow(clippy::too_many_arguments)]
pub fn record_pair_trace(
    topology: &Topology,
    x: &Vertex,
    y: &Vertex,
    pinned: &[(Edge, bool)],
    p: f64,
    v: f64,
    range: i32,
    horizon: u32,
    mode: EnvMode,
    seeds: &SeedScheme,
    replica: u64,
) -> Result<PairTrace> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    let mut w = KnowledgeWalkers::new(topology, range, p, v, &[*x, *y], mode, seeds, replica)?;
    for &(e, open) in pinned {
        w.pin(0, e, open, INITIAL_BIT);
    }
    let start = sample(&w, 0.0);
    let mut first_empty = start.empty.then_some(start);
    let mut integer = Vec::with_capacity(horizon as usize);
    for m in 1..=horizon {
        let until = m as f64;
        while w.step(until).is_some() {
            if first_empty.is_none() && w.knows_nothing() {
                first_empty = Some(sample(&w, w.time));
            }
        }
        integer.push(sample(&w, until));
    }
    Ok(PairTrace { start, first_empty, integer })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenerationStart {
    /// `sigma_0 = 0`.
    Zero,
    /// `tau_0`: the first (continuous) time the knowledge is empty; later
    /// times are integers.
    FirstEmpty,
}

/// One regeneration interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub n: usize,
    pub sigma: f64,
    pub duration: f64,
    pub dx: Vertex,
    pub dy: Vertex,
    /// Attempted jumps of both walkers in the interval.
    pub jumps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    /// `sigma_0, sigma_1, ...`.
    pub sigma: Vec<f64>,
    pub increments: Vec<Increment>,
    /// False when no regeneration after the start was observed.
    pub observed: bool,
}

impl RegenerationRecord {
    pub fn first(&self) -> Option<f64> {
        self.sigma.get(1).copied()
    }
}

/// `sigma_n` is the least integer `m > sigma_{n-1}` at which the knowledge
/// is empty.
pub fn detect_regenerations(trace: &PairTrace, start: RegenerationStart) -> RegenerationRecord {
    let origin = match start {
        RegenerationStart::Zero => Some(trace.start),
        RegenerationStart::FirstEmpty => trace.first_empty,
    };
    let Some(mut prev) = origin else {
        return RegenerationRecord { sigma: Vec::new(), increments: Vec::new(), observed: false };
    };
    let t0 = prev.time;
    let mut sigma = vec![t0];
    let mut increments = Vec::new();
    for s in trace.integer.iter().filter(|s| s.empty && s.time > t0) {
        increments.push(Increment {
            n: increments.len() + 1,
            sigma: s.time,
            duration: s.time - prev.time,
            dx: s.x.sub(&prev.x),
            dy: s.y.sub(&prev.y),
            jumps: s.attempts - prev.attempts,
        });
        sigma.push(s.time);
        prev = *s;
    }
    let observed = sigma.len() > 1;
    RegenerationRecord { sigma, increments, observed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quiet_unit_interval_regenerates_at_one() {
        let t = Topology::lattice(3);
        let far = Vertex::new(&[100, 0, 0]);
        let mut found = false;
        for rep in 0..200 {
            let trace = record_pair_trace(
                &t,
                &Vertex::ORIGIN,
                &far,
                &[],
                0.5,
                1.0,
                1,
                1,
                EnvMode::Separate,
                &SeedScheme::new(3),
                rep,
            )
            .unwrap();
            if trace.integer[0].attempts == 0 {
                let rec = detect_regenerations(&trace, RegenerationStart::Zero);
                assert_eq!(rec.first(), Some(1.0));
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn regeneration_times_increase() {
        let t = Topology::lattice(3);
        let trace = record_pair_trace(
            &t,
            &Vertex::ORIGIN,
            &Vertex::axis(0, 4),
            &[],
            0.5,
            1.0,
            1,
            300,
            EnvMode::Separate,
            &SeedScheme::new(4),
            0,
        )
        .unwrap();
        let rec = detect_regenerations(&trace, RegenerationStart::Zero);
        assert!(rec.sigma.windows(2).all(|w| w[0] < w[1]));
        let total: f64 = rec.increments.iter().map(|i| i.duration).sum();
        assert_eq!(total, *rec.sigma.last().unwrap());
    }

    #[test]
    fn initial_knowledge_delays_the_start() {
        let t = Topology::lattice(1);
        let e = Edge::new(Vertex::new(&[50]), Vertex::new(&[51]));
        let trace = record_pair_trace(
            &t,
            &Vertex::ORIGIN,
            &Vertex::new(&[9]),
            &[(e, true)],
            0.5,
            1.0,
            1,
            50,
            EnvMode::Single,
            &SeedScheme::new(5),
            0,
        )
        .unwrap();
        assert!(!trace.start.empty);
        let rec = detect_regenerations(&trace, RegenerationStart::FirstEmpty);
        if let Some(f) = trace.first_empty {
            assert!(f.time > 0.0);
            assert_eq!(rec.sigma[0], f.time);
        }
    }
}
