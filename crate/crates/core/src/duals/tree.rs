//! Walks on a regular tree and the probability of ending up in a branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::TreeVertex;
use crate::randomness::{exp_sample, uniform_index, SeedScheme, StreamKind};
use crate::stats::{Estimate, MeanAcc};

/// A set of tree vertices: the whole tree or the subtree under one child
/// of the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "child")]
pub enum Branch {
    Whole,
    Child(u8),
}

impl Branch {
    fn contains(&self, label: &[u8]) -> bool {
        match self {
            Branch::Whole => true,
            Branch::Child(c) => label.first() == Some(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeMeasure {
    /// Fraction of walks inside the branch at the horizon.
    pub estimate: Estimate,
    /// Mean of `2^{-depth}` at the horizon on the 3-regular tree: bounds the
    /// probability of a later return to the root, hence the truncation bias.
    pub truncation_bias: f64,
    /// Exact value of `P(the walk eventually stays in the branch)` on the
    /// 3-regular tree.
    pub exact: f64,
    pub horizon: f64,
    pub n: u64,
}

/// Exact probability on the 3-regular tree that the walk from `x`
/// eventually stays in `branch`.
pub fn exact_branch_probability(x: &TreeVertex, branch: Branch) -> f64 {
    match branch {
        Branch::Whole => 1.0,
        Branch::Child(_) if x.depth() == 0 => 1.0 / 3.0,
        Branch::Child(_) => {
            let back = 0.5f64.powi(x.depth() as i32);
            if branch.contains(&x.0) {
                1.0 - back + back / 3.0
            } else {
                back / 3.0
            }
        }
    }
}

fn check_label(x: &TreeVertex, degree: u8) -> Result<()> {
    for (i, &c) in x.0.iter().enumerate() {
        let limit = if i == 0 { degree } else { degree - 1 };
        if c >= limit {
            return Err(Error::domain(format!("tree label digit {c} at depth {} exceeds the branching", i + 1)));
        }
    }
    Ok(())
}

/// Runs `n` rate-1 walks on the 3-regular tree from `x` up to `horizon` and
/// reports how often they end inside `branch`.
pub fn tree_branch_measure(
    x: &TreeVertex,
    branch: Branch,
    horizon: f64,
    n: u64,
    seeds: &SeedScheme,
) -> Result<TreeMeasure> {
    const DEGREE: u8 = 3;
    check_label(x, DEGREE)?;
    if let Branch::Child(c) = branch {
        if c >= DEGREE {
            return Err(Error::domain(format!("the root has {DEGREE} children, got branch {c}")));
        }
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be a positive finite number"));
    }
    if n == 0 {
        return Err(Error::domain("need at least one walk"));
    }
    let mut inside = 0u64;
    let mut bias = MeanAcc::new();
    let mut label: Vec<u8> = Vec::new();
    for rep in 0..n {
        let mut rng = seeds.rng(StreamKind::Manual, 0, rep);
        label.clear();
        label.extend_from_slice(&x.0);
        let mut t = exp_sample(&mut rng, 1.0);
        while t <= horizon {
            let children = if label.is_empty() { DEGREE } else { DEGREE - 1 } as usize;
            let has_parent = !label.is_empty();
            let k = uniform_index(&mut rng, children + has_parent as usize);
            if k < children {
                label.push(k as u8);
            } else {
                label.pop();
            }
            t += exp_sample(&mut rng, 1.0);
        }
        if branch.contains(&label) {
            inside += 1;
        }
        let b = if branch == Branch::Whole { 0.0 } else { 0.5f64.powi(label.len() as i32) };
        bias.push(b);
    }
    Ok(TreeMeasure {
        estimate: Estimate::proportion(inside, n),
        truncation_bias: bias.estimate().mean,
        exact: exact_branch_probability(x, branch),
        horizon,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_tree_is_certain() {
        let m = tree_branch_measure(&TreeVertex(vec![1, 0]), Branch::Whole, 20.0, 100, &SeedScheme::new(1)).unwrap();
        assert_eq!(m.estimate.mean, 1.0);
        assert_eq!(m.exact, 1.0);
    }

    #[test]
    fn invalid_label_is_rejected() {
        assert!(tree_branch_measure(&TreeVertex(vec![0, 2]), Branch::Child(0), 1.0, 1, &SeedScheme::new(1)).is_err());
    }
}
