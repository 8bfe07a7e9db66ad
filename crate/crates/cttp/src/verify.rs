//! Self-check suites: exact identities and invariants evaluated on
//! shipped fixtures (and, where cheap, user-supplied instances). Each
//! check reports pass/fail with a diagnostic rather than panicking, so
//! the CLI can print a full scoreboard.

use std::collections::BTreeMap;

use num::{BigUint, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colouring::{
    build_scheme, local_uniformity_regime_holds, set_sampler_distribution, ColouringModel,
    ProjectionScheme,
};
use crate::core::{
    Engine, Horizon, MapReplaySource, Rat, ScanClock, Sym, BOT, DEFAULT_STEP_GUARD,
};
use crate::derandomise::{total_variation, EnumerationBudget};
use crate::indset::{marginal_distribution_indset, IndSetModel};
use crate::model::{
    edge_prefix, parse_hypergraph, prune_for_vertex_decomposition, Hypergraph, Vertex,
};
use crate::oracle::{
    exact_colour_set_marginal, exact_count_colourings, exact_count_indsets, exact_marginal,
    forward_chain_indset, forward_chain_projected, MarginalKind, PartialPinning,
};
use crate::randomscan::{build_witness_tree, dependency_dag, IndSetGibbs};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed: true, detail: detail.into() }
    }

    fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed: false, detail: detail.into() }
    }

    fn of(name: impl Into<String>, outcome: Result<String, String>) -> Self {
        match outcome {
            Ok(d) => CheckResult::pass(name, d),
            Err(d) => CheckResult::fail(name, d),
        }
    }
}

pub const SUITES: &[&str] = &[
    "format",
    "oracle",
    "marginal",
    "dtv-tau",
    "coupling",
    "local-uniformity",
    "boundedness",
    "witness-reconstruction",
];

fn builtins() -> Vec<(&'static str, Hypergraph)> {
    vec![
        ("one-edge-k2", parse_hypergraph("2 1 2\n1 2\n").unwrap()),
        ("one-edge-k3", parse_hypergraph("3 1 3\n1 2 3\n").unwrap()),
        ("path3", parse_hypergraph("3 2 2\n1 2\n2 3\n").unwrap()),
        ("triangle", parse_hypergraph("3 3 2\n1 2\n2 3\n1 3\n").unwrap()),
        ("edgeless3", parse_hypergraph("3 0 2\n").unwrap()),
    ]
}

/// Runs the selected suite (or all suites) over the shipped fixtures plus
/// any user instances. Unknown suite names are an error listing the valid
/// selectors.
pub fn run_checks(
    suite: Option<&str>,
    extras: &[(String, Hypergraph)],
) -> Result<Vec<CheckResult>, String> {
    if let Some(s) = suite {
        if !SUITES.contains(&s) {
            return Err(format!(
                "unknown suite {s:?}; valid suites: {}",
                SUITES.join(", ")
            ));
        }
    }
    let want = |s: &str| suite.is_none() || suite == Some(s);
    let mut out = Vec::new();
    if want("format") {
        out.extend(format_suite(extras));
    }
    if want("oracle") {
        out.extend(oracle_suite(extras));
    }
    if want("marginal") {
        out.extend(marginal_suite(extras));
    }
    if want("dtv-tau") {
        out.extend(dtv_suite());
    }
    if want("coupling") {
        out.extend(coupling_suite());
    }
    if want("local-uniformity") {
        out.extend(local_uniformity_suite());
    }
    if want("boundedness") {
        out.extend(boundedness_suite());
    }
    if want("witness-reconstruction") {
        out.extend(witness_suite());
    }
    Ok(out)
}

fn format_suite(extras: &[(String, Hypergraph)]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut all: Vec<(String, Hypergraph)> =
        builtins().into_iter().map(|(n, h)| (n.to_string(), h)).collect();
    all.extend(extras.iter().cloned());
    for (name, h) in &all {
        let text = h.to_hg();
        let res = match parse_hypergraph(&text) {
            Ok(back) if back == *h => Ok("serialise/parse round-trip".to_string()),
            Ok(_) => Err("round-trip produced a different instance".to_string()),
            Err(e) => Err(format!("re-parse failed: {e}")),
        };
        out.push(CheckResult::of(format!("format/round-trip/{name}"), res));
    }
    out
}

fn indset_telescoping(h: &Hypergraph) -> Result<String, String> {
    let z = exact_count_indsets(h).map_err(|e| e.to_string())?;
    let mut product = Rat::one();
    for i in 1..=h.n() {
        let hi = prune_for_vertex_decomposition(h, i).map_err(|e| e.to_string())?;
        // Pruning renumbers the surviving vertices so the decomposition
        // target is always vertex 1 of the reduced instance.
        let p = exact_marginal(&hi, MarginalKind::IndSet, 1, &PartialPinning::new())
            .map_err(|e| e.to_string())?
            .prob(0);
        if p.is_zero() {
            return Err(format!("vertex {i} has zero unoccupied mass"));
        }
        product *= p;
    }
    let telescoped = product.recip();
    if telescoped == Rat::from_integer(z.clone().into()) {
        Ok(format!("count {z} matches the telescoped product"))
    } else {
        Err(format!("count {z} vs telescoped {telescoped}"))
    }
}

fn colouring_telescoping(h: &Hypergraph, q: u32) -> Result<String, String> {
    let z = exact_count_colourings(h, q).map_err(|e| e.to_string())?;
    let mut product = Rat::from_integer(BigUint::from(q).pow(h.n() as u32).into());
    for i in 1..=h.m() {
        let prev = edge_prefix(h, i - 1).map_err(|e| e.to_string())?;
        let marg =
            exact_colour_set_marginal(&prev, q, h.edge(i - 1)).map_err(|e| e.to_string())?;
        let not_mono: Rat = marg
            .iter()
            .filter(|(tuple, _)| tuple.iter().any(|&c| c != tuple[0]))
            .fold(Rat::zero(), |a, (_, p)| a + p);
        product *= not_mono;
    }
    if product == Rat::from_integer(z.clone().into()) {
        Ok(format!("count {z} matches the edge-telescoped product"))
    } else {
        Err(format!("count {z} vs edge-telescoped {product}"))
    }
}

fn oracle_suite(extras: &[(String, Hypergraph)]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (name, h) in builtins() {
        out.push(CheckResult::of(
            format!("oracle/indset-telescoping/{name}"),
            indset_telescoping(&h),
        ));
        out.push(CheckResult::of(
            format!("oracle/colouring-telescoping-q3/{name}"),
            colouring_telescoping(&h, 3),
        ));
    }
    for (name, h) in extras {
        if h.n() <= 14 {
            out.push(CheckResult::of(
                format!("oracle/indset-telescoping/{name}"),
                indset_telescoping(h),
            ));
        }
    }
    out
}

fn indset_dominance(h: &Hypergraph, k: u128) -> Result<String, String> {
    let budget = EnumerationBudget::new(k);
    for v in 1..=h.n() {
        let d = marginal_distribution_indset(h, v, &budget).map_err(|e| e.to_string())?;
        let exact = exact_marginal(h, MarginalKind::IndSet, v, &PartialPinning::new())
            .map_err(|e| e.to_string())?;
        let mut deficit = Rat::zero();
        for j in [0u32, 1u32] {
            let got = d.prob(&j);
            let want = exact.prob(j);
            if got > want {
                return Err(format!(
                    "vertex {v}: untruncated mass {got} of spin {j} exceeds exact {want}"
                ));
            }
            deficit += want - got;
        }
        if deficit != d.truncation_mass {
            return Err(format!(
                "vertex {v}: deficit {deficit} differs from truncation mass {}",
                d.truncation_mass
            ));
        }
    }
    Ok(format!("dominance and deficit hold for all {} vertices", h.n()))
}

fn marginal_suite(extras: &[(String, Hypergraph)]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (name, h) in builtins() {
        out.push(CheckResult::of(
            format!("marginal/indset-dominance/{name}"),
            indset_dominance(&h, 8),
        ));
    }
    for (name, h) in extras {
        if h.n() <= 8 && h.m() <= 6 {
            out.push(CheckResult::of(
                format!("marginal/indset-dominance/{name}"),
                indset_dominance(h, 8),
            ));
        }
    }
    out
}

fn set_sampler_dtv(
    h: &Hypergraph,
    q: u32,
    s: u32,
    set: &[Vertex],
    k: u128,
) -> Result<String, String> {
    let scheme = build_scheme(q, s).map_err(|e| e.to_string())?;
    let d = set_sampler_distribution(h, &scheme, set, &EnumerationBudget::new(k))
        .map_err(|e| e.to_string())?;
    let exact = exact_colour_set_marginal(h, q, set).map_err(|e| e.to_string())?;
    let exact_map: BTreeMap<Vec<Sym>, Rat> = exact.into_iter().collect();
    let merged = d.merged_with_fallback(&vec![1; set.len()]);
    let dtv = total_variation(&merged, &exact_map);
    if dtv <= d.truncation_mass {
        Ok(format!("DTV {dtv} within truncation mass {}", d.truncation_mass))
    } else {
        Err(format!("DTV {dtv} exceeds truncation mass {}", d.truncation_mass))
    }
}

fn dtv_suite() -> Vec<CheckResult> {
    let fixtures: Vec<(&str, &str, u32, u32)> = vec![
        ("one-edge-k2-q3", "2 1 2\n1 2\n", 3, 1),
        ("one-edge-k3-q4", "3 1 3\n1 2 3\n", 4, 1),
        ("triangle-q3", "3 3 2\n1 2\n2 3\n1 3\n", 3, 1),
        ("one-edge-k3-q6-s2", "3 1 3\n1 2 3\n", 6, 2),
    ];
    let mut out = Vec::new();
    for (name, text, q, s) in fixtures {
        let h = parse_hypergraph(text).unwrap();
        for (ei, e) in h.edges().iter().enumerate() {
            out.push(CheckResult::of(
                format!("dtv-tau/{name}/edge{}", ei + 1),
                set_sampler_dtv(&h, q, s, e, 8),
            ));
        }
    }
    out
}

fn coupled_indset(h: &Hypergraph, t_horizon: i64, seed: u64) -> Result<(), String> {
    let record = forward_chain_indset(h, t_horizon, seed);
    let model = IndSetModel::new(h);
    let mut src = MapReplaySource::new(&record.draws);
    let mut eng =
        Engine::new(&model, &mut src, Horizon::Finite(t_horizon), DEFAULT_STEP_GUARD);
    let clock = ScanClock::new(h.n());
    for u in 1..=h.n() {
        let got = eng
            .resolve(clock.pred(u, 0))
            .map_err(|e| format!("seed {seed}, T {t_horizon}: resolve failed: {e:?}"))?;
        let want = record.final_config()[u];
        if got != want {
            return Err(format!(
                "seed {seed}, T {t_horizon}: vertex {u} resolved {got}, chain has {want}"
            ));
        }
    }
    Ok(())
}

fn coupled_projected(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    t_horizon: i64,
    seed: u64,
) -> Result<(), String> {
    let record =
        forward_chain_projected(h, scheme, t_horizon, seed).map_err(|e| e.to_string())?;
    let init = record.trajectory[0].clone();
    let model = ColouringModel::with_initial(h, scheme.clone(), init);
    let mut src = MapReplaySource::new(&record.draws);
    let mut eng =
        Engine::new(&model, &mut src, Horizon::Finite(t_horizon), DEFAULT_STEP_GUARD);
    let clock = ScanClock::new(h.n());
    for u in 1..=h.n() {
        let got = eng
            .resolve(clock.pred(u, 0))
            .map_err(|e| format!("seed {seed}, T {t_horizon}: resolve failed: {e:?}"))?;
        let want = record.final_config()[u];
        if got != want {
            return Err(format!(
                "seed {seed}, T {t_horizon}: vertex {u} resolved class {got}, chain has {want}"
            ));
        }
    }
    Ok(())
}

fn coupling_suite() -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (name, text) in
        [("path3", "3 2 2\n1 2\n2 3\n"), ("one-edge-k3", "3 1 3\n1 2 3\n")]
    {
        let h = parse_hypergraph(text).unwrap();
        let mut res = Ok(());
        'outer: for seed in 0..5u64 {
            for t in [h.n() as i64, 2 * h.n() as i64] {
                if let Err(e) = coupled_indset(&h, t, seed) {
                    res = Err(e);
                    break 'outer;
                }
            }
        }
        out.push(CheckResult::of(
            format!("coupling/indset/{name}"),
            res.map(|_| "5 seeds, two horizons, coordinatewise equal".to_string()),
        ));
    }
    for (name, text, q, s) in [
        ("one-edge-k3-q6-s2", "3 1 3\n1 2 3\n", 6u32, 2u32),
        ("path3-q3-s1", "3 2 2\n1 2\n2 3\n", 3, 1),
    ] {
        let h = parse_hypergraph(text).unwrap();
        let scheme = build_scheme(q, s).unwrap();
        let mut res = Ok(());
        'outer: for seed in 0..5u64 {
            for t in [h.n() as i64, 2 * h.n() as i64] {
                if let Err(e) = coupled_projected(&h, &scheme, t, seed) {
                    res = Err(e);
                    break 'outer;
                }
            }
        }
        out.push(CheckResult::of(
            format!("coupling/colouring/{name}"),
            res.map(|_| "5 seeds, two horizons, coordinatewise equal".to_string()),
        ));
    }
    out
}

fn projected_conditional_bounds(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
) -> Result<String, String> {
    let s = scheme.s();
    let q = scheme.q() as i64;
    let mut queries = 0u64;
    for v in 1..=h.n() {
        let others: Vec<Vertex> = (1..=h.n()).filter(|&u| u != v).collect();
        // Every class pinning of every subset of the other vertices.
        let mut stack: Vec<(usize, PartialPinning)> = vec![(0, PartialPinning::new())];
        while let Some((idx, pin)) = stack.pop() {
            if idx == others.len() {
                let dist = exact_marginal(h, MarginalKind::Projected { scheme }, v, &pin)
                    .map_err(|e| e.to_string())?;
                for j in 1..=s {
                    let frac = Rat::new((scheme.class_size(j) as i64).into(), q.into());
                    let low = frac.clone()
                        * (Rat::one() - Rat::new(1.into(), (4 * s as i64).into()));
                    let high =
                        frac * (Rat::one() + Rat::new(1.into(), (s as i64).into()));
                    let got = dist.prob(j);
                    if got < low || got > high {
                        return Err(format!(
                            "vertex {v}, pinning {pin:?}, class {j}: {got} outside [{low}, {high}]"
                        ));
                    }
                }
                queries += 1;
                continue;
            }
            stack.push((idx + 1, pin.clone()));
            for c in 1..=s {
                let mut p = pin.clone();
                p.insert(others[idx], c);
                stack.push((idx + 1, p));
            }
        }
    }
    Ok(format!("{queries} conditional marginals within bounds"))
}

fn local_uniformity_suite() -> Vec<CheckResult> {
    let h = parse_hypergraph("3 1 3\n1 2 3\n").unwrap();
    let scheme = build_scheme(24, 2).unwrap();
    let mut out = Vec::new();
    if !local_uniformity_regime_holds(24, 2, h.k(), h.stats().max_degree) {
        out.push(CheckResult::fail(
            "local-uniformity/regime/one-edge-k3-q24-s2",
            "fixture unexpectedly fails the regime precondition",
        ));
        return out;
    }
    out.push(CheckResult::of(
        "local-uniformity/bounds/one-edge-k3-q24-s2",
        projected_conditional_bounds(&h, &scheme),
    ));
    out
}

fn edge_factors_at_least_half(h: &Hypergraph, q: u32) -> Result<String, String> {
    let half = Rat::new(1.into(), 2.into());
    for i in 1..=h.m() {
        let prev = edge_prefix(h, i - 1).map_err(|e| e.to_string())?;
        let marg =
            exact_colour_set_marginal(&prev, q, h.edge(i - 1)).map_err(|e| e.to_string())?;
        let not_mono: Rat = marg
            .iter()
            .filter(|(tuple, _)| tuple.iter().any(|&c| c != tuple[0]))
            .fold(Rat::zero(), |a, (_, p)| a + p);
        if not_mono < half {
            return Err(format!("edge {i} factor {not_mono} below 1/2"));
        }
    }
    Ok(format!("all {} edge factors at least 1/2", h.m()))
}

fn boundedness_suite() -> Vec<CheckResult> {
    // Each (fixture, q) satisfies q > (e * max_degree * k)^(1/(k-1)).
    let fixtures: Vec<(&str, &str, u32)> = vec![
        ("one-edge-k2-q6", "2 1 2\n1 2\n", 6),
        ("one-edge-k3-q5", "3 1 3\n1 2 3\n", 5),
        ("triangle-q11", "3 3 2\n1 2\n2 3\n1 3\n", 11),
    ];
    fixtures
        .into_iter()
        .map(|(name, text, q)| {
            let h = parse_hypergraph(text).unwrap();
            CheckResult::of(
                format!("boundedness/{name}"),
                edge_factors_at_least_half(&h, q),
            )
        })
        .collect()
}

fn witness_suite() -> Vec<CheckResult> {
    let fixtures: Vec<(&str, &str)> = vec![
        ("path3", "3 2 2\n1 2\n2 3\n"),
        ("cycle5", "5 5 2\n1 2\n2 3\n3 4\n4 5\n1 5\n"),
        ("one-edge-k3", "3 1 3\n1 2 3\n"),
    ];
    let mut out = Vec::new();
    for (name, text) in fixtures {
        let h = parse_hypergraph(text).unwrap();
        let model = IndSetGibbs::new(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let mut checked = 0u32;
        let mut res: Result<(), String> = Ok(());
        for trial in 0..100usize {
            let scan: Vec<Vertex> =
                (0..64).map(|_| rng.random_range(1..=h.n())).collect();
            let choices: Vec<Sym> = (0..64)
                .map(|_| if rng.random_range(0..2) == 0 { 0 } else { BOT })
                .collect();
            let k = 1 + (trial % 6);
            match build_witness_tree(&model, &scan, &choices, k) {
                Err(_) => continue,
                Ok((tree, a)) => {
                    checked += 1;
                    if !tree.levels_are_duplicate_free() {
                        res = Err(format!("trial {trial}: duplicate label in a level"));
                        break;
                    }
                    let b = dependency_dag(&model, &tree).boundary;
                    if b != a {
                        res = Err(format!(
                            "trial {trial}: builder demands {a:?} but extraction found {b:?}"
                        ));
                        break;
                    }
                }
            }
        }
        if res.is_ok() && checked < 50 {
            res = Err(format!("only {checked} of 100 tapes were long enough"));
        }
        out.push(CheckResult::of(
            format!("witness-reconstruction/{name}"),
            res.map(|_| format!("{checked} tapes reconstructed")),
        ));
    }
    out
}
