//! Values frozen from independent oracles: dense matrix exponentials of the
//! forward generators, closed forms on the regular tree, and lattice counts.

use ipslab::ctmc::{enumerate, MAX_STATES};
use ipslab::duals::exact::PairChain;
use ipslab::duals::tree::{exact_branch_probability, tree_branch_measure, Branch};
use ipslab::dynamics::{EdgeConfig, SiteConfig};
use ipslab::experiments::{duality_check_stirring, duality_check_vmdyn, duality_check_voter, DualQuery, InitialSites};
use ipslab::lattice::{FiniteGraph, Topology, TreeVertex, Vertex};
use ipslab::randomness::SeedScheme;

const TOL: f64 = 1e-8;

fn fixed(bits: &[u8]) -> InitialSites {
    InitialSites::Fixed(SiteConfig(bits.to_vec()))
}

#[test]
fn voter_on_c3_matches_the_generator_exponential() {
    let g = FiniteGraph::new(&Topology::cycle(3), 1).unwrap();
    let r = duality_check_voter(&g, &fixed(&[1, 1, 0]), &[0, 2], 0.7, 0, &SeedScheme::new(1)).unwrap();
    assert!((r.exact_lhs.unwrap() - 0.41385294997593).abs() < TOL);
    assert!((r.exact_rhs.unwrap() - 0.41385294997593).abs() < TOL);
    assert!(r.passes);
}

#[test]
fn stirring_on_c4_matches_the_generator_exponential() {
    let g = FiniteGraph::new(&Topology::cycle(4), 1).unwrap();
    let s = SeedScheme::new(1);
    let r = duality_check_stirring(&g, &fixed(&[1, 1, 0, 0]), &[0, 2], 2.0, 0.8, 0, &s).unwrap();
    assert!((r.exact_lhs.unwrap() - 0.28154875320667727).abs() < TOL);
    assert!((r.exact_rhs.unwrap() - 0.28154875320667727).abs() < TOL);
    let r = duality_check_stirring(&g, &fixed(&[1, 0, 1, 0]), &[1], 0.5, 1.0, 0, &s).unwrap();
    assert!((r.exact_lhs.unwrap() - 0.47510646581606797).abs() < TOL);
    assert!(r.passes);
}

#[test]
fn vmdyn_on_p3_matches_the_generator_exponential() {
    let g = FiniteGraph::new(&Topology::Path { n: 3 }, 1).unwrap();
    let s = SeedScheme::new(1);
    let q = DualQuery { sites: vec![1], open: vec![0], closed: vec![] };
    let r =
        duality_check_vmdyn(&g, &fixed(&[1, 1, 0]), &EdgeConfig(vec![true, false]), &q, 0.6, 1.0, 0.5, 0, &s).unwrap();
    assert!((r.exact_lhs.unwrap() - 0.8213477049570479).abs() < TOL);
    assert!((r.exact_rhs.unwrap() - 0.8213477049570479).abs() < TOL);
    let q = DualQuery { sites: vec![0, 2], open: vec![], closed: vec![1] };
    let r =
        duality_check_vmdyn(&g, &fixed(&[0, 1, 1]), &EdgeConfig(vec![false, true]), &q, 0.3, 1.0, 0.9, 0, &s).unwrap();
    assert!((r.exact_lhs.unwrap() - 0.014839992650787795).abs() < TOL);
    assert!((r.exact_rhs.unwrap() - 0.014839992650787795).abs() < TOL);
}

#[test]
fn range_two_ball_in_the_plane() {
    let t = Topology::lattice(2);
    assert_eq!(t.l1_ball(&Vertex::ORIGIN, 2).unwrap().len(), 13);
    assert_eq!(t.ball_edges(&Vertex::ORIGIN, 2).unwrap().len(), 16);
    let t3 = Topology::lattice(3);
    assert_eq!(t3.l1_ball(&Vertex::ORIGIN, 1).unwrap().len(), 7);
    assert_eq!(t3.ball_edges(&Vertex::ORIGIN, 1).unwrap().len(), 6);
}

#[test]
fn pair_chain_on_torus_5x5_has_625_states() {
    let g = FiniteGraph::new(&Topology::torus(2, 5), 1).unwrap();
    let space = enumerate(&PairChain { graph: &g }, &[(0, 7)], MAX_STATES).unwrap();
    assert_eq!(space.len(), 625);
}

#[test]
fn tree_branch_closed_forms() {
    let root = TreeVertex::root();
    assert!((exact_branch_probability(&root, Branch::Child(0)) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(exact_branch_probability(&root, Branch::Whole), 1.0);
    for k in 1..6u32 {
        let inside = TreeVertex(vec![0; k as usize]);
        let outside = TreeVertex(std::iter::once(1).chain(std::iter::repeat_n(0, k as usize - 1)).collect());
        let back = 0.5f64.powi(k as i32);
        assert!((exact_branch_probability(&inside, Branch::Child(0)) - (1.0 - 2.0 / 3.0 * back)).abs() < 1e-15);
        assert!((exact_branch_probability(&outside, Branch::Child(0)) - back / 3.0).abs() < 1e-15);
    }
}

#[test]
fn tree_walks_agree_with_the_closed_form() {
    let x = TreeVertex(vec![0, 1]);
    let m = tree_branch_measure(&x, Branch::Child(0), 60.0, 20_000, &SeedScheme::new(8)).unwrap();
    assert!((m.exact - 5.0 / 6.0).abs() < 1e-15);
    assert!((m.estimate.mean - m.exact).abs() <= 3.0 * m.estimate.se + m.truncation_bias);
}
