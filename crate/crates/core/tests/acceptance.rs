//! Acceptance suite: one line per criterion, each asserted at its stated
//! tolerance and run-time budget, and every criterion rerun with the same
//! master seed for byte-identical results.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ipslab::couplings::{
    collision_identity_check, couple_coalescing_independent, couple_single_separate, estimate_f_g,
    martingale_identity_check, PairSetup,
};
use ipslab::duals::exact::{IndependentWalkersChain, StirringSetChain};
use ipslab::duals::regeneration::RegenerationStart;
use ipslab::duals::space::LatticeSpace;
use ipslab::duals::walkers::EnvMode;
use ipslab::dynamics::{EdgeConfig, SiteConfig};
use ipslab::experiments::{
    collision_experiment, duality_check_stirring, duality_check_vmdyn, duality_check_voter, estimate_mu_correlation,
    meeting_decay_check, mixing_check, regeneration_suite, CorrelationQuery, DualQuery, DualityReport, InitialSites,
    MixingSide, MuModel, MuSetup,
};
use ipslab::lattice::{Edge, FiniteGraph, Topology, Vertex};
use ipslab::randomness::{uniform01, uniform_index, Rng, SeedScheme, StreamKind};
use ipslab::replicas;
use ipslab::stats::{pooled_se, Estimate, MeanAcc};
use serde_json::json;

const SEED: u64 = 2024;
const EXACT_TOL: f64 = 1e-8;

struct Verdict {
    passed: bool,
    detail: String,
    /// Serialised results compared across reruns.
    record: String,
}

fn verdict(passed: bool, detail: String, record: serde_json::Value) -> Verdict {
    Verdict { passed, detail, record: serde_json::to_string(&record).expect("records serialise") }
}

fn seeds(id: u64) -> SeedScheme {
    SeedScheme::new(SEED).derive(id)
}

fn case_rng(id: u64) -> Rng {
    seeds(id).rng(StreamKind::Auxiliary, 0, 0)
}

fn random_subset(rng: &mut Rng, n: usize, nonempty: bool) -> Vec<usize> {
    loop {
        let bits = uniform_index(rng, 1 << n);
        if bits != 0 || !nonempty {
            return (0..n).filter(|i| bits >> i & 1 == 1).collect();
        }
    }
}

fn max_exact_gap(reports: &[DualityReport]) -> f64 {
    reports.iter().map(|r| r.exact_gap.unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
}

fn exact_voter() -> Verdict {
    let g = FiniteGraph::new(&Topology::cycle(3), 1).unwrap();
    let mut rng = case_rng(1);
    let reports: Vec<DualityReport> = (0..5)
        .map(|_| {
            let eta0 = SiteConfig::from_bits(3, uniform_index(&mut rng, 8) as u64);
            let a = random_subset(&mut rng, 3, true);
            let t = 1.0 - uniform01(&mut rng);
            duality_check_voter(&g, &InitialSites::Fixed(eta0), &a, t, 0, &seeds(1)).unwrap()
        })
        .collect();
    let gap = max_exact_gap(&reports);
    verdict(gap <= EXACT_TOL, format!("voter on C3, 5 cases: max |lhs - rhs| = {gap:.2e}"), json!(reports))
}

fn exact_stirring() -> Verdict {
    let mut rng = case_rng(2);
    let mut reports = Vec::new();
    for n in [3, 4] {
        let g = FiniteGraph::new(&Topology::cycle(n), 1).unwrap();
        for v in [0.5, 2.0] {
            for _ in 0..5 {
                let eta0 = SiteConfig::from_bits(n as usize, uniform_index(&mut rng, 1 << n) as u64);
                let a = random_subset(&mut rng, n as usize, true);
                let t = 1.0 - uniform01(&mut rng);
                reports.push(duality_check_stirring(&g, &InitialSites::Fixed(eta0), &a, v, t, 0, &seeds(2)).unwrap());
            }
        }
    }
    let gap = max_exact_gap(&reports);
    verdict(
        gap <= EXACT_TOL,
        format!("stirring on C3/C4, v in {{0.5, 2}}, 20 cases: max gap = {gap:.2e}"),
        json!(reports),
    )
}

fn exact_vmdyn() -> Verdict {
    let g = FiniteGraph::new(&Topology::Path { n: 3 }, 1).unwrap();
    let mut rng = case_rng(3);
    let mut reports = Vec::new();
    for p in [0.3, 0.6] {
        for _ in 0..5 {
            let eta0 = SiteConfig::from_bits(3, uniform_index(&mut rng, 8) as u64);
            let zeta0 = EdgeConfig::from_bits(2, uniform_index(&mut rng, 4) as u64);
            let sites = random_subset(&mut rng, 3, false);
            let (mut open, mut closed) = (Vec::new(), Vec::new());
            for e in 0..2 {
                match uniform_index(&mut rng, 3) {
                    0 => open.push(e),
                    1 => closed.push(e),
                    _ => {}
                }
            }
            let t = 1.0 - uniform01(&mut rng);
            let q = DualQuery { sites, open, closed };
            reports.push(
                duality_check_vmdyn(&g, &InitialSites::Fixed(eta0), &zeta0, &q, p, 1.0, t, 0, &seeds(3)).unwrap(),
            );
        }
    }
    let gap = max_exact_gap(&reports);
    verdict(gap <= EXACT_TOL, format!("vmdyn on P3, p in {{0.3, 0.6}}, 10 cases: max gap = {gap:.2e}"), json!(reports))
}

fn mc_duality() -> Verdict {
    let topo = Topology::torus(2, 5);
    let g = FiniteGraph::new(&topo, 1).unwrap();
    let s = seeds(4);
    let n = 200_000;
    let init = InitialSites::Bernoulli(0.5);
    let idx = |c: &[i32]| g.vertex_index(&Vertex::new(c)).unwrap();
    let a = [idx(&[0, 0]), idx(&[1, 0]), idx(&[2, 2])];
    let voter = duality_check_voter(&g, &init, &a, 0.5, n, &s).unwrap();
    let stirring = duality_check_stirring(&g, &init, &a, 1.0, 0.5, n, &s).unwrap();
    let zeta0 = EdgeConfig::bernoulli(g.n_edges(), 0.5, &mut s.rng(StreamKind::InitialEdge, 0, u64::MAX));
    let e = |a: &[i32], b: &[i32]| g.edge_idx(&Edge::new(Vertex::new(a), Vertex::new(b))).unwrap();
    let q = DualQuery {
        sites: vec![idx(&[0, 0]), idx(&[1, 0])],
        open: vec![e(&[0, 0], &[0, 1])],
        closed: vec![e(&[1, 0], &[1, 1])],
    };
    let vmdyn = duality_check_vmdyn(&g, &init, &zeta0, &q, 0.5, 1.0, 0.5, n, &s).unwrap();
    let all = [&voter, &stirring, &vmdyn];
    let within = |r: &DualityReport| r.mc_gap.zip(r.pooled_se).is_some_and(|(gap, se)| gap <= 3.0 * se);
    let detail = all
        .iter()
        .map(|r| format!("{} {:.2} SE", r.model, r.mc_gap.unwrap_or(f64::NAN) / r.pooled_se.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(all.iter().all(|r| within(r)), format!("torus(2,5), N = 2e5, t = 0.5: {detail} (<= 3)"), json!(all))
}

fn containment() -> Verdict {
    let topo = Topology::torus(2, 5);
    let space = LatticeSpace::new(&topo, 1).unwrap();
    let a0: Vec<Vertex> = [[0, 0], [1, 0], [0, 2], [3, 3]].iter().map(|c| Vertex::new(c)).collect();
    let s = seeds(5);
    let runs = replicas::try_run(100_000, |r| {
        couple_coalescing_independent(&space, &a0, 10.0, &s, r).map(|run| (run.containment_violations, run.events))
    })
    .unwrap();
    let violations: u64 = runs.iter().map(|r| r.0).sum();
    let events: u64 = runs.iter().map(|r| r.1).sum();
    verdict(
        violations == 0 && events > 0,
        format!("1e5 replicas, {events} events: {violations} containment violations"),
        json!({ "violations": violations, "events": events }),
    )
}

fn martingales() -> Verdict {
    let g = FiniteGraph::new(&Topology::cycle(6), 1).unwrap();
    let s = seeds(6);
    let left = StirringSetChain { graph: &g, v: 1.0 };
    let right = IndependentWalkersChain { graph: &g, rate: 2.0 };
    let coup = martingale_identity_check(&left, &right, &vec![0, 2], 10.0, 100_000, &s).unwrap();
    let l3 = Topology::lattice(3);
    let space = LatticeSpace::new(&l3, 1).unwrap();
    let coll =
        collision_identity_check(&space, &[Vertex::ORIGIN, Vertex::axis(0, 2)], 1.0, 10.0, 100_000, &s.derive(1))
            .unwrap();
    let z = |c: &ipslab::couplings::MartingaleCheck| c.diff.abs() / c.pooled_se;
    verdict(
        coup.within && coll.within,
        format!(
            "tau_coup on C6: {:.4} vs {:.4} ({:.2} SE); tau_coll on Z^3: {:.4} vs {:.4} ({:.2} SE)",
            coup.lhs.mean,
            coup.rhs.mean,
            z(&coup),
            coll.lhs.mean,
            coll.rhs.mean,
            z(&coll)
        ),
        json!({ "coupling": coup, "collision": coll }),
    )
}

fn pair(topology: &Topology, distance: i32) -> PairSetup<'_> {
    PairSetup { topology, x: Vertex::ORIGIN, y: Vertex::axis(0, distance), p: 0.5, v: 1.0, range: 1 }
}

fn collision_recurrent() -> Verdict {
    let l1 = Topology::lattice(1);
    let r = collision_experiment(&pair(&l1, 4), 0, &[100.0, 1000.0], 20_000, EnvMode::Single, &seeds(7)).unwrap();
    let last = r.hits[1];
    verdict(
        r.increasing && last.mean >= 0.9,
        format!(
            "d = 1 single environment: hit {:.4} at 1e2, {:.4} +/- {:.4} at 1e3 (needs >= 0.9, increasing)",
            r.hits[0].mean, last.mean, last.se
        ),
        json!(r),
    )
}

fn collision_transient() -> Verdict {
    let l3 = Topology::lattice(3);
    let s = seeds(71);
    let near = collision_experiment(&pair(&l3, 4), 0, &[1000.0], 20_000, EnvMode::Single, &s).unwrap();
    let far = collision_experiment(&pair(&l3, 20), 0, &[1000.0], 20_000, EnvMode::Single, &s.derive(1)).unwrap();
    let (a, b) = (near.hits[0], far.hits[0]);
    verdict(
        b.ci_high < a.ci_low,
        format!(
            "d = 3 at 1e3: distance 4 [{:.4}, {:.4}] vs distance 20 [{:.4}, {:.4}]",
            a.ci_low, a.ci_high, b.ci_low, b.ci_high
        ),
        json!({ "near": near, "far": far }),
    )
}

fn regeneration() -> Verdict {
    let l3 = Topology::lattice(3);
    let r = regeneration_suite(&pair(&l3, 4), 200, RegenerationStart::Zero, 10_000, &seeds(8)).unwrap();
    let observed = r.first_observed.mean >= 0.99;
    let ks = r.ks.is_some_and(|t| t.passes(0.01));
    let tail = r.tail_fit.is_some_and(|f| f.slope_ci().1 < 0.0);
    verdict(
        observed && ks && tail,
        format!(
            "sigma_1 observed in {:.2}% (needs >= 99%), KS p = {:.3}, tail slope {:.4} (95% CI upper {:.4})",
            100.0 * r.first_observed.mean,
            r.ks.map_or(f64::NAN, |t| t.p_value),
            r.tail_fit.map_or(f64::NAN, |f| f.slope),
            r.tail_fit.map_or(f64::NAN, |f| f.slope_ci().1)
        ),
        json!(r),
    )
}

fn single_separate() -> Verdict {
    let l3 = Topology::lattice(3);
    let s = seeds(9);
    let n = 20_000;
    let horizon = 100.0;
    let mut rows = Vec::new();
    let mut bounds_ok = true;
    for d in [4, 8, 16] {
        let setup = pair(&l3, d);
        let sd = s.derive(d as u64);
        let runs = replicas::try_run(n, |r| couple_single_separate(&setup, horizon, &sd, r)).unwrap();
        let brk = Estimate::proportion(runs.iter().filter(|r| r.break_time.is_some()).count() as u64, n);
        let g2 = MeanAcc::from_iter(runs.iter().map(|r| r.occupation_2r)).estimate();
        let bound = 2.0 * g2.mean + 3.0 * pooled_se(brk.se, 2.0 * g2.se);
        bounds_ok &= brk.mean <= bound;
        rows.push(json!({ "distance": d, "break": brk, "g_2r": g2, "bound": bound }));
    }
    let fg: Vec<_> = [4, 8, 16, 24]
        .iter()
        .map(|&d| estimate_f_g(&pair(&l3, d), &[1], horizon, n, &s.derive(100 + d as u64)).unwrap().remove(0))
        .collect();
    let decreasing = fg.windows(2).all(|w| w[0].f.mean >= w[1].f.mean && w[0].g.mean >= w[1].g.mean);
    let (first, last) = (&fg[0], &fg[3]);
    let separated = first.f.ci_low > last.f.ci_high && first.g.ci_low > last.g.ci_high;
    verdict(
        bounds_ok && decreasing && separated,
        format!(
            "break <= 2 g_2R + 3 sigma at 4, 8, 16: {bounds_ok}; f_R {:.4} -> {:.4}, g_R {:.4} -> {:.4} from 4 to 24",
            first.f.mean, last.f.mean, first.g.mean, last.g.mean
        ),
        json!({ "coupling": rows, "f_g": fg }),
    )
}

fn mu_sanity() -> Verdict {
    let l3 = Topology::lattice(3);
    let s = seeds(10);
    let mut ok = true;
    let mut notes = Vec::new();
    let mut records = Vec::new();
    for model in [MuModel::Voter, MuModel::Stirring, MuModel::Vmdyn] {
        let setup = MuSetup { model, topology: l3.clone(), range: 1, p: 0.5, v: 1.0 };
        for alpha in [0.25, 0.5] {
            let e =
                estimate_mu_correlation(&setup, &CorrelationQuery::sites(vec![Vertex::ORIGIN], alpha, 20.0, 2000), &s)
                    .unwrap();
            ok &= (e.estimate.mean - alpha).abs() <= 3.0 * e.estimate.se;
            records.push(json!(e));
        }
        let pair_sites = vec![Vertex::ORIGIN, Vertex::axis(0, 1)];
        for alpha in [0.0, 1.0] {
            let e =
                estimate_mu_correlation(&setup, &CorrelationQuery::sites(pair_sites.clone(), alpha, 20.0, 2000), &s)
                    .unwrap();
            ok &= e.estimate.mean == alpha && e.estimate.se == 0.0;
            records.push(json!(e));
        }
        let e = estimate_mu_correlation(&setup, &CorrelationQuery::sites(pair_sites, 0.5, 50.0, 20_000), &s).unwrap();
        ok &= e.estimate.ci_low > 0.25 && e.estimate.ci_high < 0.5;
        notes.push(format!("{model:?} pair [{:.4}, {:.4}]", e.estimate.ci_low, e.estimate.ci_high));
        records.push(json!(e));
    }
    verdict(ok, format!("singletons = alpha, alpha in {{0,1}} exact; {}", notes.join(", ")), json!(records))
}

fn mixing() -> Verdict {
    let setup = MuSetup { model: MuModel::Vmdyn, topology: Topology::lattice(3), range: 1, p: 0.5, v: 1.0 };
    let a = MixingSide { sites: vec![Vertex::ORIGIN], open: vec![] };
    let shifts = [Vertex::axis(0, 2), Vertex::axis(0, 8), Vertex::axis(0, 32)];
    let r = mixing_check(&setup, &a, &a, 0.5, &shifts, 100.0, 50_000, &seeds(11)).unwrap();
    let gaps = r.rows.iter().map(|row| format!("{:.5}", row.gap)).collect::<Vec<_>>().join(" > ");
    let last = r.rows.last().unwrap();
    verdict(
        r.decreasing && r.last_contains_zero && r.first_separated,
        format!("gap {gaps}; gap(32) CI [{:.5}, {:.5}] contains 0: {}", last.ci_low, last.ci_high, last.contains_zero),
        json!(r),
    )
}

fn decay() -> Verdict {
    let r = meeting_decay_check(3, 1, &[4, 8, 16, 32], 4000.0, 20_000, &seeds(12)).unwrap();
    let slope = r.fit.map_or(f64::NAN, |f| f.slope);
    let hits = r.rows.iter().map(|row| format!("{:.4}", row.hit.mean)).collect::<Vec<_>>().join(" > ");
    verdict(
        r.decreasing && slope < 0.0,
        format!("hits {hits}; slope {slope:.3} (near -1: {})", r.slope_consistent),
        json!(r),
    )
}

struct Criterion {
    id: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: "1", budget: secs(1), run: exact_voter },
        Criterion { id: "2", budget: secs(5), run: exact_stirring },
        Criterion { id: "3", budget: secs(30), run: exact_vmdyn },
        Criterion { id: "4", budget: secs(360), run: mc_duality },
        Criterion { id: "5", budget: secs(60), run: containment },
        Criterion { id: "6", budget: secs(120), run: martingales },
        Criterion { id: "7a", budget: secs(300), run: collision_recurrent },
        Criterion { id: "7b", budget: secs(300), run: collision_transient },
        Criterion { id: "8", budget: secs(600), run: regeneration },
        Criterion { id: "9", budget: secs(900), run: single_separate },
        Criterion { id: "10", budget: secs(300), run: mu_sanity },
        Criterion { id: "11", budget: secs(900), run: mixing },
        Criterion { id: "12", budget: secs(600), run: decay },
    ];
    let mut failed = Vec::new();
    let mut reproducible = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let v = (c.run)();
        let elapsed = start.elapsed();
        let again = (c.run)();
        let in_budget = elapsed <= c.budget;
        let passed = v.passed && in_budget;
        let status = if passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>3}  {status}  {}  [{:.2}s, budget {}s]",
            c.id,
            v.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        if !passed {
            failed.push(c.id);
        }
        reproducible.push((c.id, v.record == again.record));
    }
    let differing: Vec<&str> = reproducible.iter().filter(|(_, same)| !same).map(|(id, _)| *id).collect();
    let status = if differing.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "criterion  13  {status}  reruns with seed {SEED} byte-identical for {}/{} criteria{}",
        reproducible.len() - differing.len(),
        reproducible.len(),
        if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }
    );
    if !differing.is_empty() {
        failed.push("13");
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
