//! cttp: certified approximate counting and marginal sampling on
//! hypergraphs, with exact brute-force cross-checks.
//!
//! Every command prints a machine-readable JSON report to stdout and a
//! short human summary to stderr. Exit codes: 0 success, 1 usage or
//! input errors, 2 uncertifiable result, 3 enumeration budget overflow
//! (or failed verification checks).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::Signed;
use serde::{Deserialize, Serialize};

use cttp::colouring::{
    build_scheme, count_colourings, default_projection_size, local_uniformity_regime_holds,
    marginal_set_sampler, set_sampler_distribution, SchemeVariant,
};
use cttp::core::{
    decimal_string, parse_rational, rat, rational_string, Fault, Rat, Sym, BOT,
};
use cttp::derandomise::{
    BudgetSpec, CertifiedInterval, CountError, CountOptions, CountOutcome, EnumerationBudget,
    OutputDistribution, DEFAULT_LEAF_CAP,
};
use cttp::indset::{count_indsets, marginal_distribution_indset, marginal_sampler_indset};
use cttp::model::{parse_hypergraph, Hypergraph, Vertex};
use cttp::oracle::{
    exact_colour_set_marginal, exact_count_colourings, exact_count_indsets, exact_marginal,
    monte_carlo_distribution, Empirical, MarginalKind, OracleError, PartialPinning,
};
use cttp::randomscan::{randomscan_marginal, simulate_random_scan, IndSetGibbs};
use cttp::verify::run_checks;

const LEAF_CAP_ENV: &str = "CTTP_LEAF_CAP";

#[derive(Parser)]
#[command(
    name = "cttp",
    version,
    about = "Certified approximate counting and marginal sampling on hypergraphs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certified partition-function estimate via self-reduction.
    Count(CountArgs),
    /// Marginal distribution of a vertex (or vertex set), derandomised or sampled.
    Marginal(MarginalArgs),
    /// Run the invariant check suites on built-in fixtures and supplied instances.
    Verify(VerifyArgs),
    /// Exact brute-force counts and marginals for cross-checking.
    Oracle(OracleArgs),
    /// Random-scan witness-tree marginal for independent sets.
    Randomscan(RandomScanArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Indset,
    Colouring,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Indset => "indset",
            Kind::Colouring => "colouring",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Derandomised,
    Montecarlo,
}

#[derive(Args)]
struct RunOpts {
    /// Enumeration worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Leaf budget per enumeration (default 20000000, or CTTP_LEAF_CAP).
    #[arg(long)]
    leaf_cap: Option<u64>,
    /// Wall-clock budget per enumeration, in seconds.
    #[arg(long)]
    wall_clock: Option<u64>,
    /// Omit wall_time_ms from the report so replays are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CountArgs {
    /// Model family.
    #[arg(value_enum)]
    kind: Kind,
    /// Instance file in .hg format.
    file: PathBuf,
    /// Number of colours (colouring only).
    #[arg(long)]
    q: Option<u32>,
    /// Per-path lower-bound draw budget; certified mode.
    #[arg(long = "K", value_name = "DRAWS")]
    k_draws: Option<u128>,
    /// Target relative accuracy (rational or decimal); derives the budget.
    #[arg(long)]
    epsilon: Option<String>,
    /// Projected alphabet size override (colouring only).
    #[arg(long)]
    s: Option<u32>,
    /// Use the linear-instance budget and projection defaults.
    #[arg(long)]
    linear: bool,
    /// Density slack for the linear budget, e.g. 1 or 1/2 (implies --linear).
    #[arg(long)]
    linear_delta: Option<String>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct MarginalArgs {
    /// Model family.
    #[arg(value_enum)]
    kind: Kind,
    /// Instance file in .hg format.
    file: PathBuf,
    /// Target vertex.
    #[arg(long)]
    vertex: Option<usize>,
    /// Comma-separated target vertex set (colouring only).
    #[arg(long)]
    set: Option<String>,
    /// Number of colours (colouring only).
    #[arg(long)]
    q: Option<u32>,
    /// Projected alphabet size override (colouring only).
    #[arg(long)]
    s: Option<u32>,
    /// Per-path lower-bound draw budget.
    #[arg(long = "K", value_name = "DRAWS")]
    k_draws: u128,
    /// derandomised: exact output law; montecarlo: seeded empirical law.
    #[arg(long, value_enum, default_value = "derandomised")]
    mode: Mode,
    /// RNG seed (montecarlo).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials (montecarlo).
    #[arg(long)]
    trials: Option<u64>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct VerifyArgs {
    /// Extra instance files to include where suites accept them.
    files: Vec<PathBuf>,
    /// Restrict to one suite.
    #[arg(long)]
    suite: Option<String>,
    /// Omit wall_time_ms from the report.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    cmd: OracleCmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMarginalKind {
    Indset,
    Colour,
    Projected,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Exact model count by exhaustive enumeration.
    Count {
        #[arg(value_enum)]
        kind: Kind,
        file: PathBuf,
        /// Number of colours (colouring only).
        #[arg(long)]
        q: Option<u32>,
        /// Omit wall_time_ms from the report.
        #[arg(long)]
        no_timing: bool,
    },
    /// Exact single-vertex marginal, optionally under a pinning.
    Marginal {
        #[arg(value_enum)]
        kind: OracleMarginalKind,
        file: PathBuf,
        #[arg(long)]
        vertex: usize,
        /// Number of colours (colour and projected kinds).
        #[arg(long)]
        q: Option<u32>,
        /// Projected alphabet size (projected kind).
        #[arg(long)]
        s: Option<u32>,
        /// Pinning as comma-separated vertex=spin pairs, e.g. 2=1,3=0.
        #[arg(long)]
        pin: Option<String>,
        /// Omit wall_time_ms from the report.
        #[arg(long)]
        no_timing: bool,
    },
    /// Exact joint colour marginal of a vertex set.
    SetMarginal {
        file: PathBuf,
        #[arg(long)]
        q: u32,
        /// Comma-separated vertex set.
        #[arg(long)]
        set: String,
        /// Omit wall_time_ms from the report.
        #[arg(long)]
        no_timing: bool,
    },
}

#[derive(Args)]
struct RandomScanArgs {
    /// Instance file in .hg format.
    file: PathBuf,
    /// Target vertex.
    #[arg(long)]
    vertex: usize,
    /// Witness-tree size budget.
    #[arg(long = "K", value_name = "SIZE")]
    k_draws: usize,
    /// derandomised: exact output law; montecarlo: seeded empirical law.
    #[arg(long, value_enum, default_value = "derandomised")]
    mode: Mode,
    /// RNG seed (montecarlo).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials (montecarlo).
    #[arg(long)]
    trials: Option<u64>,
    /// Leaf budget for tree enumeration (default 20000000, or CTTP_LEAF_CAP).
    #[arg(long)]
    leaf_cap: Option<u64>,
    /// Omit wall_time_ms from the report.
    #[arg(long)]
    no_timing: bool,
}

// ---------------------------------------------------------------------
// Report schema. Field order is declaration order, so serialisation is
// stable-keyed; every certified quantity carries an exact rational string
// next to a fixed 12-digit decimal rendering.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NumberReport {
    exact: String,
    decimal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceReport {
    n: usize,
    m: usize,
    k: usize,
    max_degree: usize,
    is_linear: bool,
    isolated_vertex_count: usize,
    duplicate_edge_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IntervalReport {
    low: NumberReport,
    estimate: NumberReport,
    high: NumberReport,
    relative_half_width: NumberReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FactorReport {
    index: usize,
    estimate: NumberReport,
    truncation: NumberReport,
    leaf_count: u64,
    max_draws_observed: u64,
    max_lb_observed: String,
    depth_histogram: BTreeMap<usize, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    largest_component: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OutcomeReport {
    outcome: String,
    probability: NumberReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmpiricalRow {
    outcome: String,
    count: u64,
    frequency: NumberReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckReport {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnumerationReport {
    /// Lower-bound draw budget actually used (decimal string).
    k: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<NumberReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s: Option<u32>,
    leaf_cap: u64,
    jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_draws_observed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_lb_observed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_histogram: Option<BTreeMap<usize, u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
struct RunReport {
    command: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<InstanceReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    parameters: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<IntervalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factors: Option<Vec<FactorReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<OutcomeReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation_mass: Option<NumberReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical: Option<Vec<EmpiricalRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncated_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_count: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<Vec<CheckReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    enumeration: Option<EnumerationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

// ---------------------------------------------------------------------
// Failure plumbing.

struct CliFailure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> CliFailure {
    CliFailure { code, msg: msg.into() }
}

fn fault_code(f: &Fault) -> u8 {
    match f {
        Fault::EnumerationOverflow(_) | Fault::GuardExhausted => 3,
        _ => 1,
    }
}

fn oracle_code(e: &OracleError) -> u8 {
    match e {
        OracleError::BudgetExceeded(_) => 3,
        _ => 1,
    }
}

// ---------------------------------------------------------------------
// Small helpers.

fn num(r: &Rat) -> NumberReport {
    NumberReport { exact: rational_string(r), decimal: decimal_string(r, 12) }
}

fn instance_report(h: &Hypergraph) -> InstanceReport {
    let s = h.stats();
    InstanceReport {
        n: s.n,
        m: s.m,
        k: s.k,
        max_degree: s.max_degree,
        is_linear: s.is_linear,
        isolated_vertex_count: s.isolated_vertex_count,
        duplicate_edge_count: s.duplicate_edge_count,
    }
}

fn load(path: &Path) -> Result<Hypergraph, CliFailure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(1, format!("cannot read {}: {e}", path.display())))?;
    parse_hypergraph(&text).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn leaf_cap_value(flag: Option<u64>) -> Result<u64, CliFailure> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match std::env::var(LEAF_CAP_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| fail(1, format!("{LEAF_CAP_ENV} is not a valid integer: {s:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_LEAF_CAP),
        Err(e) => Err(fail(1, format!("{LEAF_CAP_ENV} is unreadable: {e}"))),
    }
}

fn parse_vertex_set(text: &str, h: &Hypergraph) -> Result<Vec<Vertex>, CliFailure> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| fail(1, format!("bad vertex {:?} in set", part.trim())))?;
        if v < 1 || v > h.n() {
            return Err(fail(1, format!("vertex {v} out of range 1..={}", h.n())));
        }
        if out.contains(&v) {
            return Err(fail(1, format!("vertex {v} repeated in set")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(fail(1, "empty vertex set"));
    }
    Ok(out)
}

fn parse_pinning(text: &str) -> Result<PartialPinning, CliFailure> {
    let mut pin = PartialPinning::new();
    for part in text.split(',') {
        let (v, c) = part
            .split_once('=')
            .ok_or_else(|| fail(1, format!("bad pinning entry {:?}, want vertex=spin", part)))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| fail(1, format!("bad pinned vertex {:?}", v.trim())))?;
        let c: Sym = c
            .trim()
            .parse()
            .map_err(|_| fail(1, format!("bad pinned spin {:?}", c.trim())))?;
        if pin.insert(v, c).is_some() {
            return Err(fail(1, format!("vertex {v} pinned twice")));
        }
    }
    Ok(pin)
}

fn sym_string(s: Sym) -> String {
    if s == BOT {
        "bot".to_string()
    } else {
        s.to_string()
    }
}

fn tuple_string(t: &[Sym]) -> String {
    t.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn vertex_list_string(vs: &[Vertex]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn dist_rows<K: Ord, F: Fn(&K) -> String>(
    outcomes: &BTreeMap<K, Rat>,
    render: F,
) -> Vec<OutcomeReport> {
    outcomes
        .iter()
        .map(|(k, p)| OutcomeReport { outcome: render(k), probability: num(p) })
        .collect()
}

fn enumeration_stats<K: Ord>(
    d: &OutputDistribution<K>,
    k: String,
    leaf_cap: u64,
    jobs: usize,
) -> EnumerationReport {
    EnumerationReport {
        k,
        gamma: None,
        s: None,
        leaf_cap,
        jobs,
        leaf_count: Some(d.leaf_count),
        max_draws_observed: Some(d.max_draws_observed),
        max_lb_observed: Some(d.max_lb_observed.to_string()),
        depth_histogram: Some(d.depth_histogram.clone()),
    }
}

fn interval_report(i: &CertifiedInterval) -> IntervalReport {
    IntervalReport {
        low: num(&i.low),
        estimate: num(&i.estimate),
        high: num(&i.high),
        relative_half_width: num(&i.relative_half_width()),
    }
}

/// Aggregates montecarlo outcomes over the truncation flag; returns the
/// rows (in outcome order) and the number of truncated trials.
fn mc_rows<K: Ord + Clone, F: Fn(&K) -> String>(
    emp: &Empirical<(K, bool)>,
    render: F,
) -> (Vec<EmpiricalRow>, u64) {
    let mut agg: BTreeMap<K, u64> = BTreeMap::new();
    let mut truncated = 0u64;
    for ((k, t), c) in &emp.counts {
        *agg.entry(k.clone()).or_insert(0) += c;
        if *t {
            truncated += c;
        }
    }
    let rows = agg
        .iter()
        .map(|(k, c)| EmpiricalRow {
            outcome: render(k),
            count: *c,
            frequency: num(&rat(*c as i64, emp.trials as i64)),
        })
        .collect();
    (rows, truncated)
}

fn emit(report: &RunReport) {
    println!("{}", serde_json::to_string_pretty(report).expect("report serialises"));
}

fn base_report(argv: &[String], start: Instant, no_timing: bool) -> RunReport {
    RunReport {
        command: argv.to_vec(),
        wall_time_ms: if no_timing {
            None
        } else {
            Some(start.elapsed().as_millis() as u64)
        },
        ..RunReport::default()
    }
}

// ---------------------------------------------------------------------
// count

fn budget_spec(args: &CountArgs) -> Result<BudgetSpec, CliFailure> {
    match (&args.k_draws, &args.epsilon) {
        (Some(k), None) => Ok(BudgetSpec::Draws(*k)),
        (None, Some(e)) => {
            let eps = parse_rational(e).map_err(|m| fail(1, format!("--epsilon: {m}")))?;
            if !eps.is_positive() {
                return Err(fail(1, "--epsilon must be positive"));
            }
            let linear_delta = match (&args.linear_delta, args.linear) {
                (Some(d), _) => {
                    let delta =
                        parse_rational(d).map_err(|m| fail(1, format!("--linear-delta: {m}")))?;
                    if !delta.is_positive() {
                        return Err(fail(1, "--linear-delta must be positive"));
                    }
                    Some(delta)
                }
                (None, true) => Some(Rat::from_integer(1.into())),
                (None, false) => None,
            };
            Ok(BudgetSpec::Epsilon { eps, linear_delta })
        }
        _ => Err(fail(1, "exactly one of --K and --epsilon is required")),
    }
}

fn count_report(
    argv: &[String],
    h: &Hypergraph,
    params: BTreeMap<String, String>,
    outcome: &CountOutcome,
    opts: &CountOptions,
    start: Instant,
    no_timing: bool,
) -> RunReport {
    let factors = outcome
        .factors
        .iter()
        .map(|f| FactorReport {
            index: f.index,
            estimate: num(&f.estimate),
            truncation: num(&f.truncation),
            leaf_count: f.leaf_count,
            max_draws_observed: f.max_draws_observed,
            max_lb_observed: f.max_lb_observed.to_string(),
            depth_histogram: f.depth_histogram.clone(),
            largest_component: f.largest_component,
        })
        .collect();
    RunReport {
        instance: Some(instance_report(h)),
        parameters: params,
        interval: Some(interval_report(&outcome.interval)),
        factors: Some(factors),
        enumeration: Some(EnumerationReport {
            k: outcome.k.to_string(),
            gamma: outcome.gamma.as_ref().map(num),
            s: outcome.s,
            leaf_cap: opts.leaf_cap,
            jobs: opts.jobs,
            leaf_count: None,
            max_draws_observed: None,
            max_lb_observed: None,
            depth_histogram: None,
        }),
        warnings: outcome.warnings.clone(),
        ..base_report(argv, start, no_timing)
    }
}

fn cmd_count(args: CountArgs, argv: &[String], start: Instant) -> Result<u8, CliFailure> {
    let h = load(&args.file)?;
    let spec = budget_spec(&args)?;
    let opts = CountOptions {
        leaf_cap: leaf_cap_value(args.run.leaf_cap)?,
        wall_clock: args.run.wall_clock.map(Duration::from_secs),
        jobs: args.run.jobs.max(1),
    };
    let mut params = BTreeMap::new();
    params.insert("kind".into(), args.kind.as_str().to_string());
    params.insert("file".into(), args.file.display().to_string());
    if let Some(k) = args.k_draws {
        params.insert("K".into(), k.to_string());
    }
    if let Some(e) = &args.epsilon {
        params.insert("epsilon".into(), e.clone());
    }
    if let Some(q) = args.q {
        params.insert("q".into(), q.to_string());
    }
    if let Some(s) = args.s {
        params.insert("s".into(), s.to_string());
    }
    if args.linear || args.linear_delta.is_some() {
        params.insert("linear".into(), "true".into());
    }
    if let Some(d) = &args.linear_delta {
        params.insert("linear_delta".into(), d.clone());
    }
    params.insert("leaf_cap".into(), opts.leaf_cap.to_string());
    params.insert("jobs".into(), opts.jobs.to_string());

    let result = match args.kind {
        Kind::Indset => {
            if args.q.is_some() || args.s.is_some() {
                return Err(fail(1, "--q and --s only apply to colouring"));
            }
            count_indsets(&h, &spec, &opts)
        }
        Kind::Colouring => {
            let q = args.q.ok_or_else(|| fail(1, "--q is required for colouring"))?;
            let variant = if args.linear || args.linear_delta.is_some() {
                SchemeVariant::Linear
            } else {
                SchemeVariant::General
            };
            count_colourings(&h, q, &spec, args.s, variant, &opts)
        }
    };
    match result {
        Ok(outcome) => {
            let report =
                count_report(argv, &h, params, &outcome, &opts, start, args.run.no_timing);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(i) = &report.interval {
                eprintln!(
                    "certified interval [{}, {}], estimate {}, relative half-width {}",
                    i.low.decimal, i.high.decimal, i.estimate.decimal,
                    i.relative_half_width.decimal
                );
            }
            emit(&report);
            Ok(0)
        }
        Err(CountError::Uncertifiable(msg)) => {
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                error: Some(msg.clone()),
                ..base_report(argv, start, args.run.no_timing)
            };
            eprintln!("uncertifiable: {msg}");
            emit(&report);
            Ok(2)
        }
        Err(CountError::Fault(f)) => Err(fail(fault_code(&f), f.to_string())),
    }
}

// ---------------------------------------------------------------------
// marginal

fn cmd_marginal(args: MarginalArgs, argv: &[String], start: Instant) -> Result<u8, CliFailure> {
    let h = load(&args.file)?;
    let leaf_cap = leaf_cap_value(args.run.leaf_cap)?;
    let jobs = args.run.jobs.max(1);
    let mut params = BTreeMap::new();
    params.insert("kind".into(), args.kind.as_str().to_string());
    params.insert("file".into(), args.file.display().to_string());
    params.insert("K".into(), args.k_draws.to_string());
    params.insert(
        "mode".into(),
        match args.mode {
            Mode::Derandomised => "derandomised".to_string(),
            Mode::Montecarlo => "montecarlo".to_string(),
        },
    );
    let mut warnings = Vec::new();

    match args.kind {
        Kind::Indset => {
            if args.set.is_some() || args.q.is_some() || args.s.is_some() {
                return Err(fail(1, "--set, --q and --s only apply to colouring"));
            }
            let v = args.vertex.ok_or_else(|| fail(1, "--vertex is required"))?;
            if v < 1 || v > h.n() {
                return Err(fail(1, format!("vertex {v} out of range 1..={}", h.n())));
            }
            params.insert("vertex".into(), v.to_string());
            match args.mode {
                Mode::Derandomised => {
                    let budget = EnumerationBudget {
                        k: args.k_draws,
                        leaf_cap,
                        wall_clock: args.run.wall_clock.map(Duration::from_secs),
                        jobs,
                    };
                    let d = marginal_distribution_indset(&h, v, &budget)
                        .map_err(|f| fail(fault_code(&f), f.to_string()))?;
                    let report = RunReport {
                        instance: Some(instance_report(&h)),
                        parameters: params,
                        distribution: Some(dist_rows(&d.outcomes, |s| sym_string(*s))),
                        truncation_mass: Some(num(&d.truncation_mass)),
                        enumeration: Some(enumeration_stats(
                            &d,
                            args.k_draws.to_string(),
                            leaf_cap,
                            jobs,
                        )),
                        ..base_report(argv, start, args.run.no_timing)
                    };
                    print_distribution_summary(&report);
                    emit(&report);
                    Ok(0)
                }
                Mode::Montecarlo => {
                    let trials = args.trials.unwrap_or(10_000);
                    let seed = args.seed.unwrap_or(0);
                    let mut fault: Option<Fault> = None;
                    let emp = monte_carlo_distribution(trials, seed, |src| {
                        match marginal_sampler_indset(&h, v, args.k_draws, src) {
                            Ok(pair) => pair,
                            Err(f) => {
                                fault = Some(f);
                                (0, true)
                            }
                        }
                    });
                    if let Some(f) = fault {
                        return Err(fail(fault_code(&f), f.to_string()));
                    }
                    let (rows, truncated) = mc_rows(&emp, |s| sym_string(*s));
                    let report = RunReport {
                        instance: Some(instance_report(&h)),
                        parameters: params,
                        seed: Some(seed),
                        trials: Some(trials),
                        empirical: Some(rows),
                        truncated_trials: Some(truncated),
                        ..base_report(argv, start, args.run.no_timing)
                    };
                    print_empirical_summary(&report);
                    emit(&report);
                    Ok(0)
                }
            }
        }
        Kind::Colouring => {
            let q = args.q.ok_or_else(|| fail(1, "--q is required for colouring"))?;
            let set = match (&args.set, args.vertex) {
                (Some(text), None) => parse_vertex_set(text, &h)?,
                (None, Some(v)) => {
                    if v < 1 || v > h.n() {
                        return Err(fail(1, format!("vertex {v} out of range 1..={}", h.n())));
                    }
                    vec![v]
                }
                (Some(_), Some(_)) => {
                    return Err(fail(1, "give either --vertex or --set, not both"))
                }
                (None, None) => return Err(fail(1, "--vertex or --set is required")),
            };
            let s = args.s.unwrap_or_else(|| default_projection_size(q, false));
            let scheme = build_scheme(q, s).map_err(|f| fail(1, f.to_string()))?;
            params.insert("q".into(), q.to_string());
            params.insert("s".into(), s.to_string());
            params.insert("set".into(), vertex_list_string(&set));
            if !local_uniformity_regime_holds(q, s, h.k(), h.stats().max_degree) {
                warnings.push(format!(
                    "instance is outside the local-uniformity regime for q={q}, s={s}; \
                     padding may fail, consider --s 1"
                ));
            }
            match args.mode {
                Mode::Derandomised => {
                    let budget = EnumerationBudget {
                        k: args.k_draws,
                        leaf_cap,
                        wall_clock: args.run.wall_clock.map(Duration::from_secs),
                        jobs,
                    };
                    let d = set_sampler_distribution(&h, &scheme, &set, &budget)
                        .map_err(|f| fail(fault_code(&f), f.to_string()))?;
                    let report = RunReport {
                        instance: Some(instance_report(&h)),
                        parameters: params,
                        distribution: Some(dist_rows(&d.outcomes, |t| tuple_string(t))),
                        truncation_mass: Some(num(&d.truncation_mass)),
                        enumeration: Some(enumeration_stats(
                            &d,
                            args.k_draws.to_string(),
                            leaf_cap,
                            jobs,
                        )),
                        warnings,
                        ..base_report(argv, start, args.run.no_timing)
                    };
                    print_distribution_summary(&report);
                    emit(&report);
                    Ok(0)
                }
                Mode::Montecarlo => {
                    let trials = args.trials.unwrap_or(10_000);
                    let seed = args.seed.unwrap_or(0);
                    let mut fault: Option<Fault> = None;
                    let fallback = vec![1 as Sym; set.len()];
                    let emp = monte_carlo_distribution(trials, seed, |src| {
                        match marginal_set_sampler(&h, &scheme, &set, args.k_draws, src) {
                            Ok(pair) => pair,
                            Err(f) => {
                                fault = Some(f);
                                (fallback.clone(), true)
                            }
                        }
                    });
                    if let Some(f) = fault {
                        return Err(fail(fault_code(&f), f.to_string()));
                    }
                    let (rows, truncated) = mc_rows(&emp, |t| tuple_string(t));
                    let report = RunReport {
                        instance: Some(instance_report(&h)),
                        parameters: params,
                        seed: Some(seed),
                        trials: Some(trials),
                        empirical: Some(rows),
                        truncated_trials: Some(truncated),
                        warnings,
                        ..base_report(argv, start, args.run.no_timing)
                    };
                    print_empirical_summary(&report);
                    emit(&report);
                    Ok(0)
                }
            }
        }
    }
}

fn print_distribution_summary(report: &RunReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(rows) = &report.distribution {
        for r in rows {
            eprintln!("Pr[{}] = {}", r.outcome, r.probability.decimal);
        }
    }
    if let Some(t) = &report.truncation_mass {
        eprintln!("truncation mass {}", t.decimal);
    }
}

fn print_empirical_summary(report: &RunReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let (Some(rows), Some(trials)) = (&report.empirical, report.trials) {
        for r in rows {
            eprintln!("{}: {}/{trials} ({})", r.outcome, r.count, r.frequency.decimal);
        }
    }
    if let Some(t) = report.truncated_trials {
        eprintln!("truncated trials: {t}");
    }
}

// ---------------------------------------------------------------------
// verify

fn cmd_verify(args: VerifyArgs, argv: &[String], start: Instant) -> Result<u8, CliFailure> {
    let mut extras = Vec::new();
    for path in &args.files {
        extras.push((path.display().to_string(), load(path)?));
    }
    let checks = run_checks(args.suite.as_deref(), &extras).map_err(|m| fail(1, m))?;
    let mut params = BTreeMap::new();
    params.insert("suite".into(), args.suite.clone().unwrap_or_else(|| "all".into()));
    let rows: Vec<CheckReport> = checks
        .iter()
        .map(|c| CheckReport { name: c.name.clone(), passed: c.passed, detail: c.detail.clone() })
        .collect();
    let passed = rows.iter().filter(|r| r.passed).count();
    for r in &rows {
        if r.passed {
            eprintln!("PASS {}: {}", r.name, r.detail);
        } else {
            eprintln!("FAIL {}: {}", r.name, r.detail);
        }
    }
    eprintln!("{passed}/{} checks passed", rows.len());
    let all_passed = passed == rows.len();
    let report = RunReport {
        parameters: params,
        checks: Some(rows),
        ..base_report(argv, start, args.no_timing)
    };
    emit(&report);
    Ok(if all_passed { 0 } else { 3 })
}

// ---------------------------------------------------------------------
// oracle

fn cmd_oracle(args: OracleArgs, argv: &[String], start: Instant) -> Result<u8, CliFailure> {
    match args.cmd {
        OracleCmd::Count { kind, file, q, no_timing } => {
            let h = load(&file)?;
            let count = match kind {
                Kind::Indset => {
                    if q.is_some() {
                        return Err(fail(1, "--q only applies to colouring"));
                    }
                    exact_count_indsets(&h)
                }
                Kind::Colouring => {
                    let q = q.ok_or_else(|| fail(1, "--q is required for colouring"))?;
                    exact_count_colourings(&h, q)
                }
            }
            .map_err(|e| fail(oracle_code(&e), e.to_string()))?;
            let mut params = BTreeMap::new();
            params.insert("kind".into(), kind.as_str().to_string());
            if let Some(q) = q {
                params.insert("q".into(), q.to_string());
            }
            eprintln!("exact count: {count}");
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                exact_count: Some(count.to_string()),
                ..base_report(argv, start, no_timing)
            };
            emit(&report);
            Ok(0)
        }
        OracleCmd::Marginal { kind, file, vertex, q, s, pin, no_timing } => {
            let h = load(&file)?;
            if vertex < 1 || vertex > h.n() {
                return Err(fail(1, format!("vertex {vertex} out of range 1..={}", h.n())));
            }
            let pinning = match &pin {
                Some(text) => parse_pinning(text)?,
                None => PartialPinning::new(),
            };
            let mut params = BTreeMap::new();
            params.insert("vertex".into(), vertex.to_string());
            if let Some(text) = &pin {
                params.insert("pin".into(), text.clone());
            }
            let scheme;
            let mk = match kind {
                OracleMarginalKind::Indset => {
                    params.insert("kind".into(), "indset".into());
                    MarginalKind::IndSet
                }
                OracleMarginalKind::Colour => {
                    let q = q.ok_or_else(|| fail(1, "--q is required"))?;
                    params.insert("kind".into(), "colour".into());
                    params.insert("q".into(), q.to_string());
                    MarginalKind::Colour { q }
                }
                OracleMarginalKind::Projected => {
                    let q = q.ok_or_else(|| fail(1, "--q is required"))?;
                    let s = s.unwrap_or_else(|| default_projection_size(q, false));
                    scheme = build_scheme(q, s).map_err(|f| fail(1, f.to_string()))?;
                    params.insert("kind".into(), "projected".into());
                    params.insert("q".into(), q.to_string());
                    params.insert("s".into(), s.to_string());
                    MarginalKind::Projected { scheme: &scheme }
                }
            };
            let dist = exact_marginal(&h, mk, vertex, &pinning)
                .map_err(|e| fail(oracle_code(&e), e.to_string()))?;
            let rows: Vec<OutcomeReport> = dist
                .support()
                .iter()
                .map(|(sym, p)| OutcomeReport { outcome: sym_string(*sym), probability: num(p) })
                .collect();
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                distribution: Some(rows),
                ..base_report(argv, start, no_timing)
            };
            print_distribution_summary(&report);
            emit(&report);
            Ok(0)
        }
        OracleCmd::SetMarginal { file, q, set, no_timing } => {
            let h = load(&file)?;
            let set = parse_vertex_set(&set, &h)?;
            let marg = exact_colour_set_marginal(&h, q, &set)
                .map_err(|e| fail(oracle_code(&e), e.to_string()))?;
            let rows: Vec<OutcomeReport> = marg
                .iter()
                .map(|(t, p)| OutcomeReport { outcome: tuple_string(t), probability: num(p) })
                .collect();
            let mut params = BTreeMap::new();
            params.insert("q".into(), q.to_string());
            params.insert("set".into(), vertex_list_string(&set));
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                distribution: Some(rows),
                ..base_report(argv, start, no_timing)
            };
            print_distribution_summary(&report);
            emit(&report);
            Ok(0)
        }
    }
}

// ---------------------------------------------------------------------
// randomscan

fn cmd_randomscan(
    args: RandomScanArgs,
    argv: &[String],
    start: Instant,
) -> Result<u8, CliFailure> {
    let h = load(&args.file)?;
    if args.vertex < 1 || args.vertex > h.n() {
        return Err(fail(1, format!("vertex {} out of range 1..={}", args.vertex, h.n())));
    }
    let model = IndSetGibbs::new(&h);
    let mut params = BTreeMap::new();
    params.insert("file".into(), args.file.display().to_string());
    params.insert("vertex".into(), args.vertex.to_string());
    params.insert("K".into(), args.k_draws.to_string());
    match args.mode {
        Mode::Derandomised => {
            let leaf_cap = leaf_cap_value(args.leaf_cap)?;
            let d = randomscan_marginal(&model, args.vertex, args.k_draws, leaf_cap)
                .map_err(|f| fail(fault_code(&f), f.to_string()))?;
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                distribution: Some(dist_rows(&d.outcomes, |s| sym_string(*s))),
                truncation_mass: Some(num(&d.truncation_mass)),
                enumeration: Some(enumeration_stats(
                    &d,
                    args.k_draws.to_string(),
                    leaf_cap,
                    1,
                )),
                ..base_report(argv, start, args.no_timing)
            };
            print_distribution_summary(&report);
            emit(&report);
            Ok(0)
        }
        Mode::Montecarlo => {
            let trials = args.trials.unwrap_or(10_000);
            let seed = args.seed.unwrap_or(0);
            let mut fault: Option<Fault> = None;
            let emp = monte_carlo_distribution(trials, seed, |src| {
                match simulate_random_scan(&model, args.vertex, args.k_draws, src) {
                    Ok(pair) => pair,
                    Err(f) => {
                        fault = Some(f);
                        (0, true)
                    }
                }
            });
            if let Some(f) = fault {
                return Err(fail(fault_code(&f), f.to_string()));
            }
            let (rows, truncated) = mc_rows(&emp, |s| sym_string(*s));
            let report = RunReport {
                instance: Some(instance_report(&h)),
                parameters: params,
                seed: Some(seed),
                trials: Some(trials),
                empirical: Some(rows),
                truncated_trials: Some(truncated),
                ..base_report(argv, start, args.no_timing)
            };
            print_empirical_summary(&report);
            emit(&report);
            Ok(0)
        }
    }
}

// ---------------------------------------------------------------------

fn dispatch(cli: Cli, argv: &[String], start: Instant) -> Result<u8, CliFailure> {
    match cli.cmd {
        Cmd::Count(a) => cmd_count(a, argv, start),
        Cmd::Marginal(a) => cmd_marginal(a, argv, start),
        Cmd::Verify(a) => cmd_verify(a, argv, start),
        Cmd::Oracle(a) => cmd_oracle(a, argv, start),
        Cmd::Randomscan(a) => cmd_randomscan(a, argv, start),
    }
}

fn main() {
    let start = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                0
            } else {
                1
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match dispatch(cli, &argv, start) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    };
    std::process::exit(code as i32);
}
