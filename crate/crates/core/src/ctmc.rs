//! Finite continuous-time Markov chains: state enumeration, transient
//! distributions by uniformization, and Gillespie sampling.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::randomness::{exp_sample, uniform01, Rng};

/// Default cap on enumerated state spaces.
pub const MAX_STATES: usize = 4096;

/// Relative truncation error of the Poisson series.
pub const UNIFORMIZATION_TOL: f64 = 1e-10;

/// A chain given by its outgoing transitions. Duplicated destinations are
/// summed; transitions to the current state are ignored.
pub trait RateModel {
    type State: Clone + Eq + Hash + Ord;

    fn transitions(&self, state: &Self::State, out: &mut Vec<(Self::State, f64)>);
}

/// Enumerated state space with a sparse generator.
#[derive(Clone, Debug)]
pub struct StateSpace<S> {
    pub states: Vec<S>,
    pub index: HashMap<S, usize>,
    /// Off-diagonal rates per row, destinations merged.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub exit: Vec<f64>,
}

impl<S: Clone + Eq + Hash + Ord> StateSpace<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Point mass on `s`.
    pub fn dirac(&self, s: &S) -> Result<Vec<f64>> {
        let i = self.index_of(s).ok_or_else(|| Error::domain("state not in the enumerated space"))?;
        let mut pi = vec![0.0; self.len()];
        pi[i] = 1.0;
        Ok(pi)
    }
}

/// Enumerates every state reachable from `initial`, refusing spaces larger
/// than `max_states`. States are ordered by discovery (breadth first from a
/// sorted frontier), which makes the numbering deterministic.
pub fn enumerate<M: RateModel>(model: &M, initial: &[M::State], max_states: usize) -> Result<StateSpace<M::State>> {
    let mut states: Vec<M::State> = Vec::new();
    let mut index: HashMap<M::State, usize> = HashMap::new();
    let mut seeds = initial.to_vec();
    seeds.sort();
    seeds.dedup();
    for s in seeds {
        index.insert(s.clone(), states.len());
        states.push(s);
    }
    let mut rows = Vec::new();
    let mut exit = Vec::new();
    let mut buf = Vec::new();
    let mut k = 0;
    while k < states.len() {
        buf.clear();
        model.transitions(&states[k], &mut buf);
        buf.sort_by(|a, b| a.0.cmp(&b.0));
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut total = 0.0;
        for (dest, rate) in buf.drain(..) {
            if rate <= 0.0 || dest == states[k] {
                continue;
            }
            let j = match index.get(&dest) {
                Some(j) => *j,
                None => {
                    if states.len() >= max_states {
                        return Err(Error::refused(format!("state space exceeds {max_states} states")));
                    }
                    index.insert(dest.clone(), states.len());
                    states.push(dest);
                    states.len() - 1
                }
            };
            total += rate;
            match row.last_mut() {
                Some(last) if last.0 == j => last.1 += rate,
                _ => row.push((j, rate)),
            }
        }
        rows.push(row);
        exit.push(total);
        k += 1;
    }
    Ok(StateSpace { states, index, rows, exit })
}

/// Distribution at time `t` from `pi0`, by uniformization. The Poisson
/// series is cut once the neglected mass is below [`UNIFORMIZATION_TOL`];
/// long horizons are split into steps with `lambda * dt <= 30`.
pub fn transient<S: Clone + Eq + Hash + Ord>(space: &StateSpace<S>, pi0: &[f64], t: f64) -> Result<Vec<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::domain("time must be non-negative and finite"));
    }
    if pi0.len() != space.len() {
        return Err(Error::contract("initial distribution has the wrong length"));
    }
    let lambda = space.exit.iter().copied().fold(0.0, f64::max);
    if lambda == 0.0 || t == 0.0 {
        return Ok(pi0.to_vec());
    }
    let steps = ((lambda * t) / 30.0).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut pi = pi0.to_vec();
    for _ in 0..steps {
        pi = uniformization_step(space, &pi, lambda, dt);
    }
    Ok(pi)
}

fn uniformization_step<S>(space: &StateSpace<S>, pi: &[f64], lambda: f64, dt: f64) -> Vec<f64> {
    let n = pi.len();
    let mean = lambda * dt;
    let mut weight = (-mean).exp();
    let mut acc: Vec<f64> = pi.iter().map(|x| x * weight).collect();
    let mut cur = pi.to_vec();
    let mut next = vec![0.0; n];
    let mut covered = weight;
    let mut k = 0u64;
    while 1.0 - covered > UNIFORMIZATION_TOL && k < 10_000 {
        k += 1;
        // cur <- cur * P with P = I + Q / lambda
        for (i, x) in next.iter_mut().enumerate() {
            *x = cur[i] * (1.0 - space.exit[i] / lambda);
        }
        for (i, row) in space.rows.iter().enumerate() {
            let ci = cur[i];
            if ci == 0.0 {
                continue;
            }
            for &(j, r) in row {
                next[j] += ci * r / lambda;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        weight *= mean / k as f64;
        covered += weight;
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += weight * c;
        }
    }
    acc
}

/// Samples one Gillespie path up to `horizon`; `observe` sees every state
/// with the time it was entered. Returns the final state.
pub fn gillespie<M: RateModel>(
    model: &M,
    start: M::State,
    horizon: f64,
    rng: &mut Rng,
    mut observe: impl FnMut(f64, &M::State),
) -> M::State {
    let mut state = start;
    let mut t = 0.0;
    let mut buf = Vec::new();
    observe(0.0, &state);
    loop {
        buf.clear();
        model.transitions(&state, &mut buf);
        buf.retain(|(d, r)| *r > 0.0 && *d != state);
        let total: f64 = buf.iter().map(|x| x.1).sum();
        if total <= 0.0 {
            return state;
        }
        t += exp_sample(rng, total);
        if t > horizon {
            return state;
        }
        let mut u = uniform01(rng) * total;
        let mut pick = buf.len() - 1;
        for (i, (_, r)) in buf.iter().enumerate() {
            if u < *r {
                pick = i;
                break;
            }
            u -= r;
        }
        state = buf.swap_remove(pick).0;
        observe(t, &state);
    }
}

/// Absorption-free probability that the chain started at `s0` has entered
/// the set `target` by time `t`, computed by making `target` absorbing.
pub fn hitting_probability<M: RateModel>(
    model: &M,
    s0: &M::State,
    target: impl Fn(&M::State) -> bool,
    t: f64,
    max_states: usize,
) -> Result<f64> {
    struct Stopped<'a, M: RateModel, F> {
        inner: &'a M,
        target: F,
    }
    impl<M: RateModel, F: Fn(&M::State) -> bool> RateModel for Stopped<'_, M, F> {
        type State = M::State;
        fn transitions(&self, s: &M::State, out: &mut Vec<(M::State, f64)>) {
            if !(self.target)(s) {
                self.inner.transitions(s, out);
            }
        }
    }
    let stopped = Stopped { inner: model, target: &target };
    let space = enumerate(&stopped, std::slice::from_ref(s0), max_states)?;
    let pi = transient(&space, &space.dirac(s0)?, t)?;
    Ok(space.states.iter().zip(&pi).filter(|(s, _)| target(s)).map(|(_, p)| p).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::SeedScheme;

    /// Two-state chain 0 -> 1 at rate a, 1 -> 0 at rate b.
    struct Flip {
        a: f64,
        b: f64,
    }

    impl RateModel for Flip {
        type State = u8;
        fn transitions(&self, s: &u8, out: &mut Vec<(u8, f64)>) {
            if *s == 0 {
                out.push((1, self.a));
            } else {
                out.push((0, self.b));
            }
        }
    }

    #[test]
    fn two_state_closed_form() {
        let m = Flip { a: 2.0, b: 0.5 };
        let space = enumerate(&m, &[0], 10).unwrap();
        for t in [0.0, 0.1, 1.0, 7.3, 200.0] {
            let pi = transient(&space, &space.dirac(&0).unwrap(), t).unwrap();
            let s = m.a + m.b;
            let p1 = m.a / s * (1.0 - (-s * t).exp());
            let i1 = space.index_of(&1).unwrap();
            assert!((pi[i1] - p1).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn refuses_large_spaces() {
        struct Counter;
        impl RateModel for Counter {
            type State = u32;
            fn transitions(&self, s: &u32, out: &mut Vec<(u32, f64)>) {
                out.push((s + 1, 1.0));
            }
        }
        assert!(matches!(enumerate(&Counter, &[0], 100), Err(Error::Refused(_))));
    }

    #[test]
    fn gillespie_matches_two_state_law() {
        let m = Flip { a: 1.0, b: 1.0 };
        let seeds = SeedScheme::new(1);
        let mut rng = seeds.rng(crate::randomness::StreamKind::Auxiliary, 0, 0);
        let n = 20_000;
        let mut ones = 0;
        for _ in 0..n {
            if gillespie(&m, 0, 0.5, &mut rng, |_, _| {}) == 1 {
                ones += 1;
            }
        }
        let p = 0.5 * (1.0 - (-1.0f64).exp());
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((ones as f64 / n as f64) - p).abs() < 4.0 * se);
    }

    #[test]
    fn hitting_probability_two_state() {
        let m = Flip { a: 3.0, b: 1.0 };
        let h = hitting_probability(&m, &0, |s| *s == 1, 0.4, 10).unwrap();
        assert!((h - (1.0 - (-1.2f64).exp())).abs() < 1e-9);
    }
}
