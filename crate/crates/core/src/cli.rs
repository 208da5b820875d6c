//! Command-line front end: subcommands, overrides, reports and exit codes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CoupleCheck, ExperimentConfig, ExperimentKind, ModelKind};
use crate::couplings::{
    collision_identity_check, couple_coalescing_independent, couple_single_separate, estimate_f_g,
    martingale_identity_check, PairSetup,
};
use crate::duals::exact::{IndependentWalkersChain, StirringSetChain};
use crate::duals::regeneration::RegenerationStart;
use crate::duals::space::LatticeSpace;
use crate::duals::tree::{tree_branch_measure, Branch};
use crate::duals::walkers::EnvMode;
use crate::dynamics::{
    simulate_dynperc, simulate_stirring, simulate_vmdyn, simulate_voter, EdgeConfig, RunOptions, SiteConfig,
};
use crate::error::{Error, Result};
use crate::experiments::{
    collision_experiment, duality_check_stirring, duality_check_vmdyn, duality_check_voter, estimate_mu_correlation,
    exchangeability_check, meeting_decay_check, mixing_check, regeneration_suite, CorrelationQuery, DualQuery,
    InitialSites, MixingSide, MuModel, MuSetup,
};
use crate::lattice::{FiniteGraph, TreeVertex, Vertex};
use crate::randomness::{SeedScheme, StreamKind};
use crate::replicas;
use crate::report::{write_csv, ExperimentReport, RunManifest};
use crate::stats::{pooled_se, Estimate, MeanAcc, Z95};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ipslab", version, about = "Interacting particle systems and their duals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward simulation of a model.
    Simulate(RunArgs),
    /// Duality identity, exactly and by simulation.
    Duality(RunArgs),
    /// Truncated correlation `mu(C, E, F)` through the dual.
    Mu(RunArgs),
    /// Meeting probabilities of two walkers.
    Collision(RunArgs),
    /// Regeneration statistics of two walkers on separate environments.
    Regen(RunArgs),
    /// Mixing gap along a list of shifts.
    Mixing(RunArgs),
    /// Coupling checks: containment, martingale identities, single/separate.
    CoupleCheck(RunArgs),
    /// Shape independence of the truncated correlation.
    Exchangeability(RunArgs),
    /// Walks on the regular tree eventually staying in a branch.
    TreeMeasure(RunArgs),
    /// Lists every violation in a configuration without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Check subcommand-specific requirements too.
        #[arg(long, value_enum)]
        experiment: Option<ExperimentKind>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Worker threads; all logical cores by default.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit with code 3 when the experiment's acceptance check fails.
    #[arg(long = "assert")]
    pub assert: bool,
    /// Directory for the JSON report and CSV tables; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = Some(h);
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
    }
}

/// A CSV table attached to a report.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Outcome of one experiment before it is wrapped in a report.
pub struct Outcome {
    pub passed: Option<bool>,
    pub result: Value,
    pub tables: Vec<Table>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialise")
}

fn est_cells(e: &Estimate) -> Vec<String> {
    vec![e.mean.to_string(), e.se.to_string(), e.ci_low.to_string(), e.ci_high.to_string()]
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(vec![format!("{name} is required")]))
}

/// Validates `cfg` for `kind`, runs it on the configured worker pool and
/// wraps the result with its manifest.
pub fn execute(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<Table>)> {
    cfg.validate(Some(kind))?;
    let start = Instant::now();
    let outcome = replicas::with_workers(cfg.workers, || run_kind(kind, cfg))??;
    let seeds = SeedScheme::new(cfg.seed);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: to_value(cfg),
        master_seed: cfg.seed,
        replicas: cfg.reps,
        workers: cfg.workers.unwrap_or_else(rayon::current_num_threads),
        replica_seeds: (0..cfg.reps.min(8)).map(|r| seeds.stream_seed(StreamKind::SiteClock, 0, r)).collect(),
        result_digest: String::new(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((ExperimentReport::new(kind.name(), outcome.passed, outcome.result, manifest), outcome.tables))
}

fn run_kind(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Outcome> {
    match kind {
        ExperimentKind::Simulate => run_simulate(cfg),
        ExperimentKind::Duality => run_duality(cfg),
        ExperimentKind::Mu => run_mu(cfg),
        ExperimentKind::Collision => run_collision(cfg),
        ExperimentKind::Regen => run_regen(cfg),
        ExperimentKind::Mixing => run_mixing(cfg),
        ExperimentKind::CoupleCheck => run_couple_check(cfg),
        ExperimentKind::Exchangeability => run_exchangeability(cfg),
        ExperimentKind::TreeMeasure => run_tree(cfg),
    }
}

fn graph(cfg: &ExperimentConfig) -> Result<FiniteGraph> {
    FiniteGraph::new(&cfg.topology, cfg.model.range as usize)
}

fn site_indices(cfg: &ExperimentConfig, g: &FiniteGraph, cs: &[Vec<i32>]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> =
        cs.iter().map(|c| g.vertex_index(&cfg.topology.wrap(Vertex::new(c)))).collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn edge_indices(cfg: &ExperimentConfig, g: &FiniteGraph, es: &[[Vec<i32>; 2]]) -> Result<Vec<usize>> {
    cfg.edges(es).iter().map(|e| g.edge_idx(e)).collect()
}

fn initial_sites(cfg: &ExperimentConfig) -> InitialSites {
    match &cfg.initial.eta {
        Some(eta) => InitialSites::Fixed(SiteConfig(eta.clone())),
        None => InitialSites::Bernoulli(cfg.model.alpha),
    }
}

fn initial_edges(cfg: &ExperimentConfig, g: &FiniteGraph, seeds: &SeedScheme, replica: u64) -> EdgeConfig {
    match &cfg.initial.zeta {
        Some(z) => EdgeConfig(z.clone()),
        None => EdgeConfig::bernoulli(g.n_edges(), cfg.model.p, &mut seeds.rng(StreamKind::InitialEdge, 0, replica)),
    }
}

/// Density of ones, open-edge density, consensus time and events of one replica.
type SimRun = (f64, f64, Option<f64>, u64);

fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = graph(cfg)?;
    let seeds = SeedScheme::new(cfg.seed);
    let horizon = need(&cfg.horizon, "horizon")?;
    let opts = RunOptions::until(horizon);
    let m = &cfg.model;
    let n = g.n_vertices();
    let init = initial_sites(cfg);
    let sites = |r: u64| match &init {
        InitialSites::Fixed(s) => s.clone(),
        InitialSites::Bernoulli(a) => SiteConfig::bernoulli(n, *a, &mut seeds.rng(StreamKind::InitialSite, 0, r)),
    };
    let runs = replicas::try_run(cfg.reps, |r| -> Result<SimRun> {
        let density = |s: &SiteConfig| s.count_ones() as f64 / n as f64;
        let open = |e: &EdgeConfig| e.open_count() as f64 / g.n_edges().max(1) as f64;
        Ok(match m.kind {
            ModelKind::Voter => {
                let t = simulate_voter(&g, &sites(r), &opts, &seeds, r)?;
                (density(&t.final_state), f64::NAN, t.consensus_time, t.events)
            }
            ModelKind::Stirring => {
                let t = simulate_stirring(&g, &sites(r), m.v, &opts, &seeds, r)?;
                (density(&t.final_state), f64::NAN, t.consensus_time, t.events)
            }
            ModelKind::Dynperc => {
                let t = simulate_dynperc(&g, &initial_edges(cfg, &g, &seeds, r), m.p, m.v, &opts, &seeds, r)?;
                (f64::NAN, open(&t.final_state), None, t.events)
            }
            ModelKind::Vmdyn => {
                let z = initial_edges(cfg, &g, &seeds, r);
                let t = simulate_vmdyn(&g, &sites(r), &z, m.p, m.v, &opts, &seeds, r)?;
                (density(&t.final_state.sites), open(&t.final_state.edges), t.consensus_time, t.events)
            }
        })
    })?;
    let mut table = Table::new("replicas", &["replica", "density", "open_density", "consensus_time", "events"]);
    for (r, (d, o, c, e)) in runs.iter().enumerate() {
        let c = c.map_or(String::new(), |c| c.to_string());
        let cell = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
        table.push(vec![r.to_string(), cell(*d), cell(*o), c, e.to_string()]);
    }
    let mean = |f: &dyn Fn(&SimRun) -> f64| {
        let acc = MeanAcc::from_iter(runs.iter().map(f).filter(|x| !x.is_nan()));
        (acc.n > 0).then(|| acc.estimate())
    };
    let consensus = runs.iter().filter(|r| r.2.is_some()).count() as u64;
    let result = json!({
        "model": m.kind,
        "horizon": horizon,
        "n": cfg.reps,
        "density": mean(&|r| r.0),
        "open_density": mean(&|r| r.1),
        "consensus": Estimate::proportion(consensus, cfg.reps),
        "mean_events": mean(&|r| r.3 as f64),
    });
    Ok(Outcome { passed: None, result, tables: vec![table] })
}

fn run_duality(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = graph(cfg)?;
    let seeds = SeedScheme::new(cfg.seed);
    let t = need(&cfg.horizon, "horizon")?;
    let init = initial_sites(cfg);
    let sites = site_indices(cfg, &g, &cfg.query.sites)?;
    let m = &cfg.model;
    let report = match m.kind {
        ModelKind::Voter => duality_check_voter(&g, &init, &sites, t, cfg.reps, &seeds)?,
        ModelKind::Stirring => duality_check_stirring(&g, &init, &sites, m.v, t, cfg.reps, &seeds)?,
        ModelKind::Vmdyn => {
            let zeta0 = initial_edges(cfg, &g, &seeds, u64::MAX);
            let query = DualQuery {
                sites,
                open: edge_indices(cfg, &g, &cfg.query.open)?,
                closed: edge_indices(cfg, &g, &cfg.query.closed)?,
            };
            duality_check_vmdyn(&g, &init, &zeta0, &query, m.p, m.v, t, cfg.reps, &seeds)?
        }
        ModelKind::Dynperc => return Err(Error::unsupported("duality applies to voter, stirring or vmdyn")),
    };
    let mut table = Table::new("sides", &["side", "exact", "mean", "se", "ci_low", "ci_high"]);
    for (name, exact, est) in [("forward", report.exact_lhs, &report.lhs), ("dual", report.exact_rhs, &report.rhs)] {
        let mut row = vec![name.to_string(), exact.map_or(String::new(), |x| x.to_string())];
        row.extend(est.as_ref().map_or(vec![String::new(); 4], est_cells));
        table.push(row);
    }
    Ok(Outcome { passed: Some(report.passes), result: to_value(&report), tables: vec![table] })
}

fn mu_setup(cfg: &ExperimentConfig) -> Result<MuSetup> {
    let model = match cfg.model.kind {
        ModelKind::Voter => MuModel::Voter,
        ModelKind::Stirring => MuModel::Stirring,
        ModelKind::Vmdyn => MuModel::Vmdyn,
        ModelKind::Dynperc => return Err(Error::unsupported("correlations apply to voter, stirring or vmdyn")),
    };
    Ok(MuSetup { model, topology: cfg.topology.clone(), range: cfg.model.range, p: cfg.model.p, v: cfg.model.v })
}

fn run_mu(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = mu_setup(cfg)?;
    let t_star = need(&cfg.t_star, "t_star")?;
    let q = CorrelationQuery {
        sites: cfg.vertices(&cfg.query.sites),
        open: cfg.edges(&cfg.query.open),
        closed: cfg.edges(&cfg.query.closed),
        alpha: cfg.model.alpha,
        t_star,
        window: cfg.window.unwrap_or(t_star),
        n: cfg.reps,
    };
    let est = estimate_mu_correlation(&setup, &q, &SeedScheme::new(cfg.seed))?;
    let mut table = Table::new("estimate", &["alpha", "mean", "se", "ci_low", "ci_high", "bias_bound"]);
    let mut row = vec![est.alpha.to_string()];
    row.extend(est_cells(&est.estimate));
    row.push(est.bias().to_string());
    table.push(row);
    Ok(Outcome { passed: None, result: to_value(&est), tables: vec![table] })
}

/// Start pairs: `(x, y)` from the query, or `x` (default the origin) against
/// `x + distance * e_1` for each listed distance.
fn pairs(cfg: &ExperimentConfig) -> Result<Vec<(Vertex, Vertex)>> {
    let q = &cfg.query;
    let x = q.x.as_ref().map_or(Vertex::ORIGIN, |c| cfg.vertex(c));
    if !q.distances.is_empty() {
        return Ok(q.distances.iter().map(|&d| (x, cfg.topology.wrap(x.add(&Vertex::axis(0, d as i32))))).collect());
    }
    let y = need(&q.y, "query.y (or query.distances)")?;
    Ok(vec![(x, cfg.vertex(&y))])
}

fn run_collision(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seeds = SeedScheme::new(cfg.seed);
    let q = &cfg.query;
    let level = q.level.unwrap_or(0);
    if q.static_lattice {
        let horizon = need(&cfg.horizon, "horizon")?;
        let report = meeting_decay_check(cfg.topology.dim(), level, &q.distances, horizon, cfg.reps, &seeds)?;
        let mut table = Table::new("decay", &["distance", "mean", "se", "ci_low", "ci_high"]);
        for r in &report.rows {
            let mut row = vec![r.distance.to_string()];
            row.extend(est_cells(&r.hit));
            table.push(row);
        }
        let passed = report.decreasing && report.fit.is_some_and(|f| f.slope < 0.0);
        return Ok(Outcome { passed: Some(passed), result: to_value(&report), tables: vec![table] });
    }
    let horizons = if q.horizons.is_empty() { vec![need(&cfg.horizon, "horizon")?] } else { q.horizons.clone() };
    let mode = q.env.unwrap_or(EnvMode::Single);
    let m = &cfg.model;
    let mut reports = Vec::new();
    let mut table = Table::new("hits", &["distance", "horizon", "mean", "se", "ci_low", "ci_high"]);
    for (k, (x, y)) in pairs(cfg)?.into_iter().enumerate() {
        let setup = PairSetup { topology: &cfg.topology, x, y, p: m.p, v: m.v, range: m.range };
        let r = collision_experiment(&setup, level, &horizons, cfg.reps, mode, &seeds.derive(k as u64))?;
        for (h, e) in horizons.iter().zip(&r.hits) {
            let mut row = vec![r.distance.to_string(), h.to_string()];
            row.extend(est_cells(e));
            table.push(row);
        }
        reports.push(r);
    }
    let increasing = reports.iter().all(|r| r.increasing);
    let separated = match (reports.first(), reports.last()) {
        (Some(a), Some(b)) if reports.len() > 1 => {
            let (ha, hb) = (a.hits.last().expect("horizons"), b.hits.last().expect("horizons"));
            ha.ci_low > hb.ci_high
        }
        _ => true,
    };
    let result = json!({ "runs": reports, "increasing": increasing, "separated": separated });
    Ok(Outcome { passed: Some(increasing && separated), result, tables: vec![table] })
}

fn run_regen(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let (x, y) = pairs(cfg)?[0];
    let setup = PairSetup { topology: &cfg.topology, x, y, p: m.p, v: m.v, range: m.range };
    let horizon = need(&cfg.horizon, "horizon")?.floor() as u32;
    let start = cfg.query.regeneration_start.unwrap_or(RegenerationStart::Zero);
    let r = regeneration_suite(&setup, horizon, start, cfg.reps, &SeedScheme::new(cfg.seed))?;
    let observed = r.first_observed.mean >= 0.99;
    let ks = r.ks.is_some_and(|t| t.passes(0.01));
    let tail = r.tail_fit.is_some_and(|f| f.slope_ci().1 < 0.0);
    let mut table = Table::new("summary", &["check", "value", "passes"]);
    table.push(vec!["first_observed".into(), r.first_observed.mean.to_string(), observed.to_string()]);
    table.push(vec!["ks_p_value".into(), r.ks.map_or(String::new(), |t| t.p_value.to_string()), ks.to_string()]);
    table.push(vec!["tail_slope".into(), r.tail_fit.map_or(String::new(), |f| f.slope.to_string()), tail.to_string()]);
    let result = json!({ "report": r, "observed": observed, "ks_passes": ks, "tail_negative": tail });
    Ok(Outcome { passed: Some(observed && ks && tail), result, tables: vec![table] })
}

fn run_mixing(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = mu_setup(cfg)?;
    let q = &cfg.query;
    let a = MixingSide { sites: cfg.vertices(&q.sites), open: cfg.edges(&q.open) };
    let b = MixingSide { sites: cfg.vertices(&q.partner_sites), open: cfg.edges(&q.partner_open) };
    let shifts = cfg.vertices(&q.shifts);
    let t_star = need(&cfg.t_star, "t_star")?;
    let r = mixing_check(&setup, &a, &b, cfg.model.alpha, &shifts, t_star, cfg.reps, &SeedScheme::new(cfg.seed))?;
    let mut table = Table::new("gaps", &["distance", "gap", "se", "ci_low", "ci_high", "contains_zero"]);
    for row in &r.rows {
        table.push(vec![
            row.distance.to_string(),
            row.gap.to_string(),
            row.se.to_string(),
            row.ci_low.to_string(),
            row.ci_high.to_string(),
            row.contains_zero.to_string(),
        ]);
    }
    let passed = r.decreasing && r.last_contains_zero && r.first_separated;
    Ok(Outcome { passed: Some(passed), result: to_value(&r), tables: vec![table] })
}

fn run_exchangeability(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = mu_setup(cfg)?;
    let shapes: Vec<Vec<Vertex>> = cfg.query.shapes.iter().map(|s| cfg.vertices(s)).collect();
    let t_star = need(&cfg.t_star, "t_star")?;
    let window = cfg.window.unwrap_or(t_star);
    let r =
        exchangeability_check(&setup, &shapes, cfg.model.alpha, t_star, window, cfg.reps, &SeedScheme::new(cfg.seed))?;
    let mut table = Table::new("shapes", &["shape", "mean", "se", "ci_low", "ci_high", "bias_bound"]);
    for (k, e) in r.estimates.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(est_cells(&e.estimate));
        row.push(e.bias().to_string());
        table.push(row);
    }
    Ok(Outcome { passed: Some(r.agree), result: to_value(&r), tables: vec![table] })
}

fn run_tree(cfg: &ExperimentConfig) -> Result<Outcome> {
    let x = TreeVertex(need(&cfg.query.tree_vertex, "query.tree_vertex")?);
    let branch = cfg.query.branch.map_or(Branch::Whole, Branch::Child);
    let horizon = need(&cfg.horizon, "horizon")?;
    let r = tree_branch_measure(&x, branch, horizon, cfg.reps, &SeedScheme::new(cfg.seed))?;
    let passed = (r.estimate.mean - r.exact).abs() <= 3.0 * r.estimate.se + r.truncation_bias;
    let mut table = Table::new("measure", &["exact", "mean", "se", "ci_low", "ci_high", "truncation_bias"]);
    let mut row = vec![r.exact.to_string()];
    row.extend(est_cells(&r.estimate));
    row.push(r.truncation_bias.to_string());
    table.push(row);
    Ok(Outcome { passed: Some(passed), result: to_value(&r), tables: vec![table] })
}

fn run_couple_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let check = need(&cfg.query.check, "query.check")?;
    let horizon = need(&cfg.horizon, "horizon")?;
    let seeds = SeedScheme::new(cfg.seed);
    let m = &cfg.model;
    match check {
        CoupleCheck::Containment => {
            let space = LatticeSpace::new(&cfg.topology, m.range)?;
            let a0 = cfg.vertices(&cfg.query.sites);
            let runs = replicas::try_run(cfg.reps, |r| {
                couple_coalescing_independent(&space, &a0, horizon, &seeds, r)
                    .map(|run| (run.containment_violations, run.events))
            })?;
            let violations: u64 = runs.iter().map(|r| r.0).sum();
            let events: u64 = runs.iter().map(|r| r.1).sum();
            let mut table = Table::new("containment", &["replicas", "events", "violations"]);
            table.push(vec![cfg.reps.to_string(), events.to_string(), violations.to_string()]);
            let result = json!({ "check": check, "n": cfg.reps, "events": events, "violations": violations });
            Ok(Outcome { passed: Some(violations == 0), result, tables: vec![table] })
        }
        CoupleCheck::Martingale => {
            let g = graph(cfg)?;
            let z0 = site_indices(cfg, &g, &cfg.query.sites)?;
            let left = StirringSetChain { graph: &g, v: m.v };
            let right = IndependentWalkersChain { graph: &g, rate: 1.0 + m.v };
            let c = martingale_identity_check(&left, &right, &z0, horizon, cfg.reps, &seeds)?;
            Ok(martingale_outcome(check, c))
        }
        CoupleCheck::Collision => {
            let space = LatticeSpace::new(&cfg.topology, 1)?;
            let a0: Vec<Vertex> = cfg.vertices(&cfg.query.sites);
            let c = collision_identity_check(&space, &a0, m.v, horizon, cfg.reps, &seeds)?;
            Ok(martingale_outcome(check, c))
        }
        CoupleCheck::SingleSeparate => single_separate(cfg, horizon, &seeds),
    }
}

fn martingale_outcome(check: CoupleCheck, c: crate::couplings::MartingaleCheck) -> Outcome {
    let mut table = Table::new("identity", &["side", "mean", "se", "ci_low", "ci_high"]);
    for (name, e) in [("probability", &c.lhs), ("integral", &c.rhs)] {
        let mut row = vec![name.to_string()];
        row.extend(est_cells(e));
        table.push(row);
    }
    let result = json!({ "check": check, "identity": c });
    Outcome { passed: Some(c.within), result, tables: vec![table] }
}

#[derive(Serialize)]
struct CouplingRow {
    distance: i64,
    break_probability: Estimate,
    g_2r: Estimate,
    bound: f64,
    bound_holds: bool,
    f: Estimate,
    g: Estimate,
}

/// Break probability of the single/separate coupling against `2 g_{2R}`,
/// with `f_R` and `g_R` on separate environments, per distance.
fn single_separate(cfg: &ExperimentConfig, horizon: f64, seeds: &SeedScheme) -> Result<Outcome> {
    let m = &cfg.model;
    let level = cfg.query.level.unwrap_or(m.range as i64);
    let mut rows = Vec::new();
    let mut table = Table::new("coupling", &["distance", "break", "g_2r", "bound", "holds", "f", "g"]);
    for (k, (x, y)) in pairs(cfg)?.into_iter().enumerate() {
        let setup = PairSetup { topology: &cfg.topology, x, y, p: m.p, v: m.v, range: m.range };
        let s = seeds.derive(k as u64);
        let runs = replicas::try_run(cfg.reps, |r| couple_single_separate(&setup, horizon, &s, r))?;
        let broken = runs.iter().filter(|r| r.break_time.is_some()).count() as u64;
        let brk = Estimate::proportion(broken, cfg.reps);
        let g2r = MeanAcc::from_iter(runs.iter().map(|r| r.occupation_2r)).estimate();
        let bound = 2.0 * g2r.mean + 3.0 * pooled_se(brk.se, 2.0 * g2r.se);
        let fg = estimate_f_g(&setup, &[level], horizon, cfg.reps, &s.derive(0xf9))?.remove(0);
        let row = CouplingRow {
            distance: cfg.topology.distance(&x, &y),
            break_probability: brk,
            bound_holds: brk.mean <= bound,
            g_2r: g2r,
            bound,
            f: fg.f,
            g: fg.g,
        };
        table.push(vec![
            row.distance.to_string(),
            brk.mean.to_string(),
            g2r.mean.to_string(),
            bound.to_string(),
            row.bound_holds.to_string(),
            row.f.mean.to_string(),
            row.g.mean.to_string(),
        ]);
        rows.push(row);
    }
    let bounds = rows.iter().all(|r| r.bound_holds);
    let separated = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 => a.f.ci_low > b.f.ci_high && a.g.ci_low > b.g.ci_high,
        _ => true,
    };
    let decreasing = rows.windows(2).all(|w| w[0].f.mean >= w[1].f.mean && w[0].g.mean >= w[1].g.mean);
    let result = json!({
        "check": CoupleCheck::SingleSeparate,
        "level": level,
        "horizon": horizon,
        "z": Z95,
        "rows": rows,
        "bounds_hold": bounds,
        "decreasing": decreasing,
        "separated": separated,
    });
    Ok(Outcome { passed: Some(bounds && decreasing && separated), result, tables: vec![table] })
}

fn kind_of(cmd: &Command) -> Option<(ExperimentKind, &RunArgs)> {
    Some(match cmd {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Duality(a) => (ExperimentKind::Duality, a),
        Command::Mu(a) => (ExperimentKind::Mu, a),
        Command::Collision(a) => (ExperimentKind::Collision, a),
        Command::Regen(a) => (ExperimentKind::Regen, a),
        Command::Mixing(a) => (ExperimentKind::Mixing, a),
        Command::CoupleCheck(a) => (ExperimentKind::CoupleCheck, a),
        Command::Exchangeability(a) => (ExperimentKind::Exchangeability, a),
        Command::TreeMeasure(a) => (ExperimentKind::TreeMeasure, a),
        Command::Validate { .. } => return None,
    })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

fn write_outputs(dir: &Path, report: &ExperimentReport, tables: &[Table]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.json", report.experiment)), report.to_json()? + "\n")?;
    for t in tables {
        let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
        write_csv(&dir.join(format!("{}_{}.csv", report.experiment, t.name)), &header, &t.rows)?;
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Command::Validate { config, experiment } = &cli.command {
        let cfg = match ExperimentConfig::load(config) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_INVALID;
            }
        };
        let v = cfg.violations(*experiment);
        if v.is_empty() {
            println!("ok");
            return EXIT_OK;
        }
        for m in v {
            println!("{m}");
        }
        return EXIT_INVALID;
    }
    let (kind, args) = kind_of(&cli.command).expect("run subcommand");
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    args.apply(&mut cfg);
    let (report, tables) = match execute(kind, &cfg) {
        Ok(r) => r,
        Err(Error::Config(v)) => {
            for m in v {
                eprintln!("{m}");
            }
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("{e}");
            return exit_code(&e);
        }
    };
    let out = args.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    let written = match &out {
        Some(dir) => write_outputs(dir, &report, &tables),
        None => report.to_json().map(|j| println!("{j}")),
    };
    if let Err(e) = written {
        eprintln!("{e}");
        return EXIT_IO;
    }
    if out.is_some() {
        let status = match report.passed {
            Some(true) => "passed",
            Some(false) => "failed",
            None => "done",
        };
        println!("{} {status}", report.experiment);
    }
    if args.assert && report.passed == Some(false) {
        return EXIT_ASSERT;
    }
    EXIT_OK
}
