//! Hypergraph colourings through a balanced projection.
//!
//! Colours `1..=q` are bucketed into `s` classes; the single-site dynamics
//! runs on the projected class configuration, whose conditional marginals
//! admit a product lower bound with `BOT` mass `1/(4s)` whenever the
//! instance is locally uniform enough. Resolving a vertex backwards grows
//! a component of mutually constraining vertices until every edge leaving
//! it is already decided by two distinct classes, then enumerates colour
//! lifts of the component exactly. The set sampler extends the same
//! machinery to joint colour draws, and the counter assembles certified
//! edge-deletion factors from it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use num::bigint::{BigInt, BigUint};
use num::One;

use crate::core::{
    BudgetedSource, ceil_log2_inverse, DrawKind, Engine, Fault, FiniteDistribution, Horizon,
    Interrupt, ModelSpec, RandomSource, Rat, ReplaySource, ScanClock, Sym, Time, BOT,
    DEFAULT_STEP_GUARD,
};
use crate::derandomise::{
    certified_factor, certified_product, enumerate_distribution, BudgetSpec, CountError,
    CountOptions, CountOutcome, EnumerationBudget, FactorDetail, Leaf, OutputDistribution,
    Transform,
};
use crate::model::{edge_prefix, Hypergraph, Vertex};

/// Cap on assignments enumerated per component (product of domain sizes).
const COMPONENT_ENUM_CAP: u128 = 100_000_000;

/// Balanced surjection from colours `1..=q` onto classes `1..=s`.
///
/// The first `q mod s` classes take `ceil(q/s)` colours, the rest take
/// `floor(q/s)`, and colours are dealt to classes in ascending blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionScheme {
    q: u32,
    s: u32,
    class_of: Vec<Sym>,
    preimages: Vec<Vec<Sym>>,
}

impl ProjectionScheme {
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn class_of(&self, colour: Sym) -> Sym {
        assert!(colour >= 1 && colour <= self.q, "colour out of range");
        self.class_of[(colour - 1) as usize]
    }

    pub fn preimage(&self, class: Sym) -> &[Sym] {
        assert!(class >= 1 && class <= self.s, "class out of range");
        &self.preimages[(class - 1) as usize]
    }

    pub fn class_size(&self, class: Sym) -> u32 {
        self.preimage(class).len() as u32
    }

    /// Lower-bound mass of a class: `(|preimage|/q) * (1 - 1/(4s))`.
    pub fn rho(&self, class: Sym) -> Rat {
        let size = self.class_size(class) as i64;
        let q = self.q as i64;
        let s4 = 4 * self.s as i64;
        Rat::new((size * (s4 - 1)).into(), (q * s4).into())
    }

    /// Mass withheld from every class: `1/(4s)`.
    pub fn bot_mass(&self) -> Rat {
        Rat::new(1.into(), (4 * self.s as i64).into())
    }
}

/// Builds the balanced scheme; `s` must lie in `1..=q`.
pub fn build_scheme(q: u32, s: u32) -> Result<ProjectionScheme, Fault> {
    if q == 0 || s == 0 || s > q {
        return Err(Fault::Inconsistency(format!(
            "projected alphabet size {s} out of range for {q} colours"
        )));
    }
    let big = (q / s + u32::from(q % s != 0)) as usize;
    let small = (q / s) as usize;
    let bigs = (q % s) as usize;
    let mut class_of = Vec::with_capacity(q as usize);
    let mut preimages = Vec::with_capacity(s as usize);
    let mut next = 1u32;
    for j in 1..=s {
        let size = if (j as usize) <= bigs { big } else { small };
        let block: Vec<Sym> = (next..next + size as u32).collect();
        next += size as u32;
        for _ in 0..size {
            class_of.push(j);
        }
        preimages.push(block);
    }
    debug_assert_eq!(next, q + 1);
    Ok(ProjectionScheme { q, s, class_of, preimages })
}

/// Default projected alphabet size: `floor(q^(2/3))` in general,
/// `floor(sqrt(q))` for linear instances. Always at least 1.
pub fn default_projection_size(q: u32, linear: bool) -> u32 {
    let q = q as u128;
    let mut s = 1u128;
    if linear {
        while (s + 1) * (s + 1) <= q {
            s += 1;
        }
    } else {
        while (s + 1) * (s + 1) * (s + 1) <= q * q {
            s += 1;
        }
    }
    s as u32
}

/// Class lower-bound distribution: mass `rho(j)` on class `j`, `1/(4s)`
/// on `BOT`.
pub fn lb_dist_projected(scheme: &ProjectionScheme) -> FiniteDistribution {
    let mut entries: Vec<(Sym, Rat)> =
        (1..=scheme.s()).map(|j| (j, scheme.rho(j))).collect();
    entries.push((BOT, scheme.bot_mass()));
    FiniteDistribution::new(entries).expect("lower-bound masses sum to 1")
}

/// Checks the local-uniformity condition
/// `floor(q/s)^k >= 4e * q * s * max_degree * k` with a rational upper
/// bound on `4e`, so `true` is conservative.
pub fn local_uniformity_regime_holds(q: u32, s: u32, k: usize, max_degree: usize) -> bool {
    if s <= 1 {
        return true;
    }
    let lhs = BigUint::from(q / s).pow(k as u32) * BigUint::from(10_000_000u32);
    let rhs = BigUint::from(108_731_274u32)
        * BigUint::from(q)
        * BigUint::from(s)
        * BigUint::from(max_degree)
        * BigUint::from(k);
    lhs >= rhs
}

/// Outcome of the boundary search: the component of vertices whose
/// colours must be enumerated jointly, and the classes pinned on every
/// decided vertex (all component members except the targets).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryResult {
    pub component: Vec<Vertex>,
    pub sigma: BTreeMap<Vertex, Sym>,
}

/// Backward-resolution model for the projected colouring dynamics.
pub struct ColouringModel<'a> {
    h: &'a Hypergraph,
    pub scheme: ProjectionScheme,
    lb: FiniteDistribution,
    init: Vec<Sym>,
}

impl<'a> ColouringModel<'a> {
    pub fn new(h: &'a Hypergraph, scheme: ProjectionScheme) -> Self {
        let lb = lb_dist_projected(&scheme);
        ColouringModel { h, scheme, lb, init: Vec::new() }
    }

    /// Same model with an initial class configuration (1-based), required
    /// for finite-horizon resolution.
    pub fn with_initial(h: &'a Hypergraph, scheme: ProjectionScheme, init: Vec<Sym>) -> Self {
        let mut m = ColouringModel::new(h, scheme);
        m.init = init;
        m
    }

    pub fn hypergraph(&self) -> &'a Hypergraph {
        self.h
    }
}

/// Grows a component from `seed_component` until every edge crossing it
/// is satisfied (two distinct pinned classes inside the edge).
///
/// For each unsatisfied crossing edge, lowest index first: read the
/// lower-bound draws of its vertices other than `exclude`; if the decided
/// ones span at most one class, resolve them all and absorb the whole
/// edge into the component; otherwise pin the decided classes, which
/// satisfies the edge.
fn boundary_bfs(
    eng: &mut Engine<'_, ColouringModel<'_>>,
    t: Time,
    exclude: Option<Vertex>,
    seed_component: &[Vertex],
    seed_sigma: BTreeMap<Vertex, Sym>,
) -> Result<BoundaryResult, Interrupt> {
    let h = eng.model().hypergraph();
    let mut comp: BTreeSet<Vertex> = seed_component.iter().copied().collect();
    let mut sigma = seed_sigma;
    loop {
        let mut chosen = None;
        for (ei, e) in h.edges().iter().enumerate() {
            let inside = e.iter().filter(|u| comp.contains(u)).count();
            if inside == 0 || inside == e.len() {
                continue;
            }
            let mut first: Option<Sym> = None;
            let mut satisfied = false;
            for u in e {
                if let Some(&c) = sigma.get(u) {
                    match first {
                        None => first = Some(c),
                        Some(p) if p != c => {
                            satisfied = true;
                            break;
                        }
                        _ => {}
                    }
                }
            }
            if !satisfied {
                chosen = Some(ei);
                break;
            }
        }
        let Some(ei) = chosen else { break };
        let e = h.edge(ei);
        let mut lbs = Vec::new();
        for &u in e.iter().filter(|&&u| Some(u) != exclude) {
            lbs.push((u, eng.lb_sample(eng.clock.pred(u, t))?));
        }
        let classes: BTreeSet<Sym> =
            lbs.iter().filter(|(_, r)| *r != BOT).map(|(_, r)| *r).collect();
        if classes.len() <= 1 {
            for &(u, _) in &lbs {
                let c = eng.resolve(eng.clock.pred(u, t))?;
                sigma.insert(u, c);
            }
            for &u in e {
                comp.insert(u);
            }
        } else {
            for &(u, r) in &lbs {
                if r != BOT {
                    sigma.insert(u, r);
                }
            }
        }
    }
    Ok(BoundaryResult { component: comp.into_iter().collect(), sigma })
}

/// Enumerates colour assignments of `component`: vertex `free` (if any)
/// ranges over all `q` colours, every other member over the preimage of
/// its pinned class; assignments must be proper on edges lying fully
/// inside the component. Calls `visit` with values aligned to
/// `component`'s order.
fn component_assignments<F: FnMut(&[Sym])>(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    component: &[Vertex],
    sigma: &BTreeMap<Vertex, Sym>,
    free: Option<Vertex>,
    mut visit: F,
) -> Result<(), Fault> {
    let mut pos = vec![usize::MAX; h.n() + 1];
    for (i, &u) in component.iter().enumerate() {
        pos[u] = i;
    }
    let mut domains: Vec<Vec<Sym>> = Vec::with_capacity(component.len());
    let mut space: u128 = 1;
    for &u in component {
        let d: Vec<Sym> = if Some(u) == free {
            (1..=scheme.q()).collect()
        } else {
            match sigma.get(&u) {
                Some(&c) => scheme.preimage(c).to_vec(),
                None => {
                    return Err(Fault::Inconsistency(format!(
                        "component vertex {u} has no pinned class"
                    )))
                }
            }
        };
        space = space.saturating_mul(d.len() as u128);
        if space > COMPONENT_ENUM_CAP {
            return Err(Fault::EnumerationOverflow(format!(
                "component enumeration needs {space} assignments"
            )));
        }
        domains.push(d);
    }
    // Edges fully inside the component, checked once their last position
    // is assigned.
    let mut closing: Vec<Vec<Vec<usize>>> = vec![Vec::new(); component.len()];
    for e in h.edges() {
        if e.iter().all(|&u| pos[u] != usize::MAX) {
            let positions: Vec<usize> = e.iter().map(|&u| pos[u]).collect();
            let last = *positions.iter().max().expect("edges are non-empty");
            closing[last].push(positions);
        }
    }
    fn rec<F: FnMut(&[Sym])>(
        domains: &[Vec<Sym>],
        closing: &[Vec<Vec<usize>>],
        i: usize,
        assign: &mut Vec<Sym>,
        visit: &mut F,
    ) {
        if i == domains.len() {
            visit(assign);
            return;
        }
        'next: for &x in &domains[i] {
            assign[i] = x;
            for positions in &closing[i] {
                if positions.iter().all(|&p| assign[p] == assign[positions[0]]) {
                    continue 'next;
                }
            }
            rec(domains, closing, i + 1, assign, visit);
        }
    }
    let mut assign = vec![0 as Sym; component.len()];
    rec(&domains, &closing, 0, &mut assign, &mut visit);
    Ok(())
}

/// Padding distribution of vertex `v` over classes, given the boundary:
/// enumerate the component's colour lifts, project `v`'s colour marginal
/// onto classes, subtract the lower bound, and rescale by `4s`.
///
/// A negative entry means the instance is outside the local-uniformity
/// regime; an empty enumeration means the pinned classes admit no proper
/// lift. Both abort with a diagnostic rather than renormalising.
pub fn padding_dist_colouring(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    component: &[Vertex],
    sigma: &BTreeMap<Vertex, Sym>,
    v: Vertex,
) -> Result<FiniteDistribution, Fault> {
    let vpos = component
        .iter()
        .position(|&u| u == v)
        .expect("target vertex is in its own component");
    let mut colour_counts = vec![0u128; scheme.q() as usize + 1];
    let mut total: u128 = 0;
    component_assignments(h, scheme, component, sigma, Some(v), |assign| {
        colour_counts[assign[vpos] as usize] += 1;
        total += 1;
    })?;
    if total == 0 {
        return Err(Fault::ZeroMassBoundary(format!(
            "no proper colour lift of the component around vertex {v}"
        )));
    }
    let four_s = Rat::from_integer((4 * scheme.s() as i64).into());
    let mut entries = Vec::with_capacity(scheme.s() as usize);
    for j in 1..=scheme.s() {
        let class_count: u128 =
            scheme.preimage(j).iter().map(|&c| colour_counts[c as usize]).sum();
        let mu = Rat::new(BigInt::from(class_count), BigInt::from(total));
        let p = four_s.clone() * (mu - scheme.rho(j));
        if p < Rat::from_integer(0.into()) {
            return Err(Fault::RegimeViolation(format!(
                "padding mass for class {j} at vertex {v} is negative ({p}); \
                 the instance is outside the local-uniformity regime"
            )));
        }
        entries.push((j, p));
    }
    FiniteDistribution::new(entries)
}

impl ModelSpec for ColouringModel<'_> {
    type Boundary = BoundaryResult;

    fn n(&self) -> usize {
        self.h.n()
    }

    fn lower_bound_dist(&self) -> &FiniteDistribution {
        &self.lb
    }

    fn init_value(&self, v: Vertex) -> Sym {
        assert!(
            !self.init.is_empty(),
            "finite-horizon resolution needs an initial configuration"
        );
        self.init[v]
    }

    fn boundary(&self, t: Time, eng: &mut Engine<'_, Self>) -> Result<BoundaryResult, Interrupt> {
        let v = eng.clock.idx_at(t);
        boundary_bfs(eng, t, Some(v), &[v], BTreeMap::new())
    }

    fn padding_dist(
        &self,
        t: Time,
        boundary: &BoundaryResult,
    ) -> Result<FiniteDistribution, Interrupt> {
        let v = ScanClock::new(self.h.n()).idx_at(t);
        Ok(padding_dist_colouring(self.h, &self.scheme, &boundary.component, &boundary.sigma, v)?)
    }
}

fn normalise_set(h: &Hypergraph, s_set: &[Vertex]) -> Vec<Vertex> {
    let mut v: Vec<Vertex> = s_set.to_vec();
    v.sort_unstable();
    v.dedup();
    assert!(!v.is_empty(), "target set is empty");
    assert!(v[0] >= 1 && *v.last().unwrap() <= h.n(), "target set out of range");
    v
}

/// Core of the set sampler: one shared tape resolves every member's
/// class, the boundary search extends the component from the whole set
/// (every vertex of an inspected edge counts, none excluded), and the
/// terminal step returns the exact conditional colour distribution of the
/// set given the component's pinned classes. Tuples follow ascending
/// member order.
fn run_set_sampler(
    model: &ColouringModel<'_>,
    members: &[Vertex],
    src: &mut dyn RandomSource,
    probe: Option<&AtomicUsize>,
) -> Result<Vec<(Vec<Sym>, Rat)>, Interrupt> {
    let mut eng = Engine::new(model, src, Horizon::Infinite, DEFAULT_STEP_GUARD);
    let mut sigma = BTreeMap::new();
    for &u in members {
        let c = eng.resolve(eng.clock.pred(u, 0))?;
        sigma.insert(u, c);
    }
    let b = boundary_bfs(&mut eng, 0, None, members, sigma)?;
    if let Some(p) = probe {
        p.fetch_max(b.component.len(), Ordering::Relaxed);
    }
    let h = model.hypergraph();
    let scheme = &model.scheme;
    let mut mpos = Vec::with_capacity(members.len());
    for &u in members {
        mpos.push(
            b.component.iter().position(|&w| w == u).expect("members seed the component"),
        );
    }
    let mut counts: BTreeMap<Vec<Sym>, u128> = BTreeMap::new();
    let mut total: u128 = 0;
    component_assignments(h, scheme, &b.component, &b.sigma, None, |assign| {
        let key: Vec<Sym> = mpos.iter().map(|&p| assign[p]).collect();
        *counts.entry(key).or_insert(0) += 1;
        total += 1;
    })
    .map_err(Interrupt::from)?;
    if total == 0 {
        return Err(Fault::ZeroMassBoundary(
            "no proper colour lift of the set's component".into(),
        )
        .into());
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, Rat::new(BigInt::from(c), BigInt::from(total))))
        .collect())
}

/// One randomised joint colour draw of `s_set` with per-run budget `k`:
/// `(assignment, truncated)`, the assignment aligned with the set sorted
/// ascending. A truncated run falls back to all-1.
pub fn marginal_set_sampler(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    s_set: &[Vertex],
    k: u128,
    src: &mut dyn RandomSource,
) -> Result<(Vec<Sym>, bool), Fault> {
    let members = normalise_set(h, s_set);
    let model = ColouringModel::new(h, scheme.clone());
    let mut budgeted = BudgetedSource::new(src, k);
    match run_set_sampler(&model, &members, &mut budgeted, None) {
        Ok(cond) => {
            let dist = FiniteDistribution::new(
                cond.iter().enumerate().map(|(i, (_, p))| (i as Sym, p.clone())).collect(),
            )?;
            match budgeted.draw((1, DrawKind::Padding), &dist) {
                Ok(i) => Ok((cond[i as usize].0.clone(), false)),
                Err(Interrupt::Fault(f)) => Err(f),
                Err(_) => Err(Fault::Inconsistency(
                    "terminal draw interrupted outside enumeration".into(),
                )),
            }
        }
        Err(Interrupt::Truncated) => Ok((vec![1; members.len()], true)),
        Err(Interrupt::Pending(_)) => {
            Err(Fault::Inconsistency("branch interrupt outside enumeration".into()))
        }
        Err(Interrupt::Fault(f)) => Err(f),
    }
}

pub(crate) fn set_sampler_distribution_probed(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    s_set: &[Vertex],
    budget: &EnumerationBudget,
    probe: Option<&AtomicUsize>,
) -> Result<OutputDistribution<Vec<Sym>>, Fault> {
    let members = normalise_set(h, s_set);
    let model = ColouringModel::new(h, scheme.clone());
    let program = move |src: &mut ReplaySource| {
        run_set_sampler(&model, &members, src, probe).map(Leaf::Expect)
    };
    enumerate_distribution(&program, budget)
}

/// Exact output law of the truncated set sampler, with the terminal draw
/// folded analytically (each leaf contributes its whole conditional).
pub fn set_sampler_distribution(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    s_set: &[Vertex],
    budget: &EnumerationBudget,
) -> Result<OutputDistribution<Vec<Sym>>, Fault> {
    set_sampler_distribution_probed(h, scheme, s_set, budget, None)
}

fn biguint_to_u128(x: BigUint) -> u128 {
    use num::ToPrimitive;
    x.to_u128().unwrap_or(u128::MAX)
}

/// Per-run draw budget sufficient for marginal error `gamma`:
/// `4 * max_degree^2 * k^5 * ceil(log2(1/gamma))`.
pub fn threshold_colouring(max_degree: usize, k: usize, gamma: &Rat) -> u128 {
    let b = BigUint::from(4u32)
        * BigUint::from(max_degree).pow(2)
        * BigUint::from(k).pow(5)
        * BigUint::from(ceil_log2_inverse(gamma));
    biguint_to_u128(b)
}

/// Linear-instance variant with slack `delta`:
/// `3*10^4 * ceil(((1+delta)/delta)^2) * max_degree^3 * k^10 * ceil(log2(1/gamma))`.
pub fn threshold_colouring_linear(
    max_degree: usize,
    k: usize,
    delta: &Rat,
    gamma: &Rat,
) -> u128 {
    let ratio = (Rat::one() + delta) / delta.clone();
    let sq = ratio.clone() * ratio;
    let ceil_sq = sq.ceil().to_integer().magnitude().clone();
    let b = BigUint::from(30_000u32)
        * ceil_sq
        * BigUint::from(max_degree).pow(3)
        * BigUint::from(k).pow(10)
        * BigUint::from(ceil_log2_inverse(gamma));
    biguint_to_u128(b)
}

/// Which default projection the counter should pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeVariant {
    General,
    Linear,
}

fn budget_for_colouring(
    h: &Hypergraph,
    spec: &BudgetSpec,
    warnings: &mut Vec<String>,
) -> (u128, Option<Rat>) {
    match spec {
        BudgetSpec::Draws(k) => (*k, None),
        BudgetSpec::Epsilon { eps, linear_delta } => {
            let m = h.m().max(1);
            let gamma = eps.clone() / Rat::from_integer((20 * m as i64).into());
            let stats = h.stats();
            let degree = stats.max_degree.max(1);
            let k = match linear_delta {
                Some(delta) if stats.is_linear => {
                    threshold_colouring_linear(degree, h.k(), delta, &gamma)
                }
                Some(_) => {
                    warnings.push(
                        "instance is not linear; using the general budget formula".into(),
                    );
                    threshold_colouring(degree, h.k(), &gamma)
                }
                None => threshold_colouring(degree, h.k(), &gamma),
            };
            warnings.push(
                "accuracy-derived budgets can exceed the leaf cap; the certified interval \
                 remains valid but may be wider than requested"
                    .into(),
            );
            (k.max(1), Some(gamma))
        }
    }
}

/// Certified enclosure of the number of proper q-colourings.
///
/// Edge self-reduction: the i-th factor is the enumerated probability
/// that edge i is not monochromatic under the set sampler on the instance
/// with only the first i-1 edges, and `q^n` times the product encloses
/// the count. With no explicit `s`, the default projection is used only
/// when the conservative local-uniformity check passes; otherwise the
/// trivial single-class projection (always sound, exhaustive at the
/// terminal step) is substituted and a warning recorded.
pub fn count_colourings(
    h: &Hypergraph,
    q: u32,
    spec: &BudgetSpec,
    explicit_s: Option<u32>,
    variant: SchemeVariant,
    opts: &CountOptions,
) -> Result<CountOutcome, CountError> {
    let mut warnings = Vec::new();
    let s = match explicit_s {
        Some(s) => s,
        None => {
            let d = default_projection_size(q, variant == SchemeVariant::Linear);
            if local_uniformity_regime_holds(q, d, h.k(), h.stats().max_degree) {
                d
            } else {
                if d > 1 {
                    warnings.push(format!(
                        "default projection onto {d} classes fails the local-uniformity \
                         check for this instance; using the single-class projection"
                    ));
                }
                1
            }
        }
    };
    let scheme = build_scheme(q, s).map_err(CountError::Fault)?;
    let (k, gamma) = budget_for_colouring(h, spec, &mut warnings);
    let budget = EnumerationBudget {
        k,
        leaf_cap: opts.leaf_cap,
        wall_clock: opts.wall_clock,
        jobs: opts.jobs,
    };
    let mut factors = Vec::new();
    let mut details = Vec::new();
    for i in 1..=h.m() {
        let prev = edge_prefix(h, i - 1).expect("prefix in range");
        let s_set = h.edge(i - 1).to_vec();
        let probe = AtomicUsize::new(0);
        let dist = set_sampler_distribution_probed(&prev, &scheme, &s_set, &budget, Some(&probe))?;
        let f = certified_factor(&dist, |tuple: &Vec<Sym>| {
            tuple.iter().any(|&c| c != tuple[0])
        });
        details.push(FactorDetail {
            index: i,
            estimate: f.estimate.clone(),
            truncation: f.truncation.clone(),
            leaf_count: dist.leaf_count,
            max_draws_observed: dist.max_draws_observed,
            max_lb_observed: dist.max_lb_observed,
            depth_histogram: dist.depth_histogram.clone(),
            largest_component: Some(probe.load(Ordering::Relaxed)),
        });
        factors.push(f);
    }
    let scale = Rat::from_integer(BigInt::from(q).pow(h.n() as u32));
    let interval = certified_product(&scale, &factors, Transform::Identity)
        .map_err(CountError::Uncertifiable)?;
    Ok(CountOutcome { interval, factors: details, k, gamma, s: Some(s), warnings })
}
