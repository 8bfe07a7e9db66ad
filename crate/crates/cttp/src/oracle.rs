//! Exact brute-force oracles for desk-scale verification.
//!
//! Everything here is deliberately naive: exhaustive assignment
//! enumeration with early pruning, exact big-integer counts, and a
//! forward simulation of the single-site chain that records every draw it
//! makes (keyed by timestamp) so the backward resolver can be replayed
//! against it draw for draw.

use std::collections::BTreeMap;

use num::bigint::BigUint;
use num::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::colouring::{lb_dist_projected, ProjectionScheme};
use crate::core::{
    DrawKey, DrawKind, FiniteDistribution, Rat, RandomSource, RngSource, ScanClock, Sym, BOT,
};
use crate::model::{Hypergraph, Vertex};

/// Cap on `product of domain sizes` for any one exhaustive enumeration.
const ENUM_BUDGET: u128 = 200_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration budget exceeded: {0} assignments")]
    BudgetExceeded(u128),
    #[error("pinning is infeasible: no assignment satisfies the constraints")]
    InfeasiblePinning,
    #[error("pinned value {value} out of range for vertex {vertex}")]
    BadPinning { vertex: Vertex, value: Sym },
    #[error("instance has no proper colouring")]
    NoProperColouring,
}

/// Vertex-indexed partial pinning. Values are spins for independent sets,
/// colours for colourings, classes for projected marginals.
pub type PartialPinning = BTreeMap<Vertex, Sym>;

/// Which exact marginal to compute.
pub enum MarginalKind<'a> {
    /// Spin marginal in the uniform independent-set distribution.
    IndSet,
    /// Colour marginal in the uniform proper-colouring distribution.
    Colour { q: u32 },
    /// Class marginal of the projected colouring distribution: pinned
    /// vertices are constrained to the preimage of their pinned class and
    /// the target's colour is pushed forward through the scheme.
    Projected { scheme: &'a ProjectionScheme },
}

/// Hard constraint an edge imposes on a complete assignment.
#[derive(Clone, Copy, PartialEq, Eq)]
enum EdgeRule {
    /// Independent sets: an edge must not be all ones.
    NotAllOnes,
    /// Colourings: an edge must not be monochromatic.
    NotMonochrome,
}

/// Exhaustive DFS over per-vertex domains with edge checks as soon as an
/// edge is fully assigned. Calls `visit` on every surviving assignment
/// (1-based: slot 0 unused).
fn for_each_assignment<F: FnMut(&[Sym])>(
    h: &Hypergraph,
    domains: &[Vec<Sym>],
    rule: EdgeRule,
    mut visit: F,
) -> Result<(), OracleError> {
    let n = h.n();
    debug_assert_eq!(domains.len(), n + 1);
    let mut space: u128 = 1;
    for d in &domains[1..] {
        space = space.saturating_mul(d.len() as u128);
        if space > ENUM_BUDGET {
            return Err(OracleError::BudgetExceeded(space));
        }
    }
    // Edges checked once their largest vertex is assigned.
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (i, e) in h.edges().iter().enumerate() {
        let last = *e.last().expect("edges are non-empty");
        closing[last].push(i);
    }
    let mut assign = vec![0 as Sym; n + 1];
    fn rec<F: FnMut(&[Sym])>(
        h: &Hypergraph,
        domains: &[Vec<Sym>],
        closing: &[Vec<usize>],
        rule: EdgeRule,
        v: Vertex,
        assign: &mut Vec<Sym>,
        visit: &mut F,
    ) {
        if v > h.n() {
            visit(assign);
            return;
        }
        'next_value: for &x in &domains[v] {
            assign[v] = x;
            for &ei in &closing[v] {
                let e = h.edge(ei);
                let bad = match rule {
                    EdgeRule::NotAllOnes => e.iter().all(|&u| assign[u] == 1),
                    EdgeRule::NotMonochrome => e.iter().all(|&u| assign[u] == assign[e[0]]),
                };
                if bad {
                    continue 'next_value;
                }
            }
            rec(h, domains, closing, rule, v + 1, assign, visit);
        }
    }
    rec(h, domains, &closing, rule, 1, &mut assign, &mut visit);
    Ok(())
}

/// Number of independent sets of `h` (assignments with no edge all ones).
pub fn exact_count_indsets(h: &Hypergraph) -> Result<BigUint, OracleError> {
    let domains: Vec<Vec<Sym>> = std::iter::once(Vec::new())
        .chain((1..=h.n()).map(|_| vec![0, 1]))
        .collect();
    let mut count = BigUint::zero();
    for_each_assignment(h, &domains, EdgeRule::NotAllOnes, |_| count += 1u32)?;
    Ok(count)
}

/// Number of proper q-colourings of `h` (no edge monochromatic).
pub fn exact_count_colourings(h: &Hypergraph, q: u32) -> Result<BigUint, OracleError> {
    let colours: Vec<Sym> = (1..=q).collect();
    let domains: Vec<Vec<Sym>> = std::iter::once(Vec::new())
        .chain((1..=h.n()).map(|_| colours.clone()))
        .collect();
    let mut count = BigUint::zero();
    for_each_assignment(h, &domains, EdgeRule::NotMonochrome, |_| count += 1u32)?;
    Ok(count)
}

/// Exact single-vertex marginal under a partial pinning.
pub fn exact_marginal(
    h: &Hypergraph,
    kind: MarginalKind<'_>,
    v: Vertex,
    pinning: &PartialPinning,
) -> Result<FiniteDistribution, OracleError> {
    let n = h.n();
    let (rule, free_domain, outcome_of): (EdgeRule, Vec<Sym>, Box<dyn Fn(Sym) -> Sym>) = match &kind
    {
        MarginalKind::IndSet => (EdgeRule::NotAllOnes, vec![0, 1], Box::new(|x| x)),
        MarginalKind::Colour { q } => {
            (EdgeRule::NotMonochrome, (1..=*q).collect(), Box::new(|x| x))
        }
        MarginalKind::Projected { scheme } => {
            let s = *scheme;
            (
                EdgeRule::NotMonochrome,
                (1..=s.q()).collect(),
                Box::new(move |x| s.class_of(x)),
            )
        }
    };
    let mut domains: Vec<Vec<Sym>> = vec![Vec::new(); n + 1];
    for u in 1..=n {
        domains[u] = free_domain.clone();
    }
    for (&u, &val) in pinning {
        if u == 0 || u > n {
            return Err(OracleError::BadPinning { vertex: u, value: val });
        }
        domains[u] = match &kind {
            MarginalKind::IndSet => {
                if val > 1 {
                    return Err(OracleError::BadPinning { vertex: u, value: val });
                }
                vec![val]
            }
            MarginalKind::Colour { q } => {
                if val == 0 || val > *q {
                    return Err(OracleError::BadPinning { vertex: u, value: val });
                }
                vec![val]
            }
            MarginalKind::Projected { scheme } => {
                if val == 0 || val > scheme.s() {
                    return Err(OracleError::BadPinning { vertex: u, value: val });
                }
                scheme.preimage(val).to_vec()
            }
        };
    }
    let mut counts: BTreeMap<Sym, BigUint> = BTreeMap::new();
    let mut total = BigUint::zero();
    for_each_assignment(h, &domains, rule, |assign| {
        let out = outcome_of(assign[v]);
        *counts.entry(out).or_insert_with(BigUint::zero) += 1u32;
        total += 1u32;
    })?;
    if total.is_zero() {
        return Err(OracleError::InfeasiblePinning);
    }
    let entries: Vec<(Sym, Rat)> = counts
        .into_iter()
        .map(|(s, c)| (s, Rat::new(c.into(), total.clone().into())))
        .collect();
    Ok(FiniteDistribution::new(entries).expect("counts normalise"))
}

/// Exact joint colour marginal of a vertex set in the uniform
/// proper-colouring distribution: assignment tuple (in `set` order) to
/// probability.
pub fn exact_colour_set_marginal(
    h: &Hypergraph,
    q: u32,
    set: &[Vertex],
) -> Result<Vec<(Vec<Sym>, Rat)>, OracleError> {
    let colours: Vec<Sym> = (1..=q).collect();
    let domains: Vec<Vec<Sym>> = std::iter::once(Vec::new())
        .chain((1..=h.n()).map(|_| colours.clone()))
        .collect();
    let mut counts: BTreeMap<Vec<Sym>, BigUint> = BTreeMap::new();
    let mut total = BigUint::zero();
    for_each_assignment(h, &domains, EdgeRule::NotMonochrome, |assign| {
        let key: Vec<Sym> = set.iter().map(|&u| assign[u]).collect();
        *counts.entry(key).or_insert_with(BigUint::zero) += 1u32;
        total += 1u32;
    })?;
    if total.is_zero() {
        return Err(OracleError::NoProperColouring);
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, Rat::new(c.into(), total.clone().into())))
        .collect())
}

/// First proper q-colouring in lexicographic order, if any.
pub fn some_proper_colouring(h: &Hypergraph, q: u32) -> Result<Vec<Sym>, OracleError> {
    let colours: Vec<Sym> = (1..=q).collect();
    let domains: Vec<Vec<Sym>> = std::iter::once(Vec::new())
        .chain((1..=h.n()).map(|_| colours.clone()))
        .collect();
    let mut found: Option<Vec<Sym>> = None;
    for_each_assignment(h, &domains, EdgeRule::NotMonochrome, |assign| {
        if found.is_none() {
            found = Some(assign.to_vec());
        }
    })?;
    found.ok_or(OracleError::NoProperColouring)
}

/// Record of one forward simulation: configurations at every step and
/// every draw made, keyed exactly as the backward resolver keys its own
/// draws.
#[derive(Debug, Clone)]
pub struct ChainRecord {
    /// `trajectory[j]` is the configuration after `j` steps, starting at
    /// the initial configuration (so the last entry is the time-0 state).
    /// Configurations are 1-based (slot 0 unused).
    pub trajectory: Vec<Vec<Sym>>,
    pub draws: BTreeMap<DrawKey, (Sym, FiniteDistribution)>,
    pub horizon: i64,
}

impl ChainRecord {
    pub fn final_config(&self) -> &[Sym] {
        self.trajectory.last().expect("trajectory non-empty")
    }
}

/// Forward simulation of the independent-set chain from the all-zero
/// configuration at time `-t_horizon` through time 0. Every lower-bound
/// draw is recorded at `(t, LowerBound)` and every padding draw at
/// `(t, Padding)`; padding distributions are computed from the full
/// current configuration, which is what the backward resolver's boundary
/// routine must reproduce from its pinning alone.
pub fn forward_chain_indset(h: &Hypergraph, t_horizon: i64, seed: u64) -> ChainRecord {
    let lb = FiniteDistribution::new(vec![(0, Rat::new(1.into(), 2.into())), (BOT, Rat::new(1.into(), 2.into()))])
        .expect("static distribution");
    let clock = ScanClock::new(h.n());
    let mut src = RngSource::new(ChaCha8Rng::seed_from_u64(seed));
    let mut x = vec![0 as Sym; h.n() + 1];
    let mut trajectory = vec![x.clone()];
    let mut draws = BTreeMap::new();
    for t in (1 - t_horizon)..=0 {
        let v = clock.idx_at(t);
        let key: DrawKey = (t, DrawKind::LowerBound);
        let r = src.draw(key, &lb).expect("rng draws never fail");
        draws.insert(key, (r, lb.clone()));
        if r != BOT {
            x[v] = r;
        } else {
            let forced = h
                .incident_edges(v)
                .iter()
                .any(|&ei| h.edge(ei).iter().all(|&u| u == v || x[u] == 1));
            let pad = FiniteDistribution::point_mass(if forced { 0 } else { 1 });
            let key: DrawKey = (t, DrawKind::Padding);
            let c = src.draw(key, &pad).expect("rng draws never fail");
            draws.insert(key, (c, pad));
            x[v] = c;
        }
        trajectory.push(x.clone());
    }
    ChainRecord { trajectory, draws, horizon: t_horizon }
}

/// Exact conditional class distribution of `v` given every other vertex's
/// class, in the projected colouring distribution.
fn projected_full_conditional(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    v: Vertex,
    classes: &[Sym],
) -> Result<FiniteDistribution, OracleError> {
    let mut pinning: PartialPinning = BTreeMap::new();
    for u in 1..=h.n() {
        if u != v {
            pinning.insert(u, classes[u]);
        }
    }
    exact_marginal(h, MarginalKind::Projected { scheme }, v, &pinning)
}

/// Forward simulation of the projected colouring chain. The initial state
/// projects a brute-force proper colouring; padding distributions are the
/// exact conditional remainder above the class lower bounds.
pub fn forward_chain_projected(
    h: &Hypergraph,
    scheme: &ProjectionScheme,
    t_horizon: i64,
    seed: u64,
) -> Result<ChainRecord, OracleError> {
    let lb = lb_dist_projected(scheme);
    let clock = ScanClock::new(h.n());
    let mut src = RngSource::new(ChaCha8Rng::seed_from_u64(seed));
    let base = some_proper_colouring(h, scheme.q())?;
    let mut x = vec![0 as Sym; h.n() + 1];
    for u in 1..=h.n() {
        x[u] = scheme.class_of(base[u]);
    }
    let mut trajectory = vec![x.clone()];
    let mut draws = BTreeMap::new();
    for t in (1 - t_horizon)..=0 {
        let v = clock.idx_at(t);
        let key: DrawKey = (t, DrawKind::LowerBound);
        let r = src.draw(key, &lb).expect("rng draws never fail");
        draws.insert(key, (r, lb.clone()));
        if r != BOT {
            x[v] = r;
        } else {
            let cond = projected_full_conditional(h, scheme, v, &x)?;
            let bot_mass = lb.prob(BOT);
            let mut entries = Vec::new();
            for j in 1..=scheme.s() {
                let p = (cond.prob(j) - lb.prob(j)) / bot_mass.clone();
                entries.push((j, p));
            }
            let pad = FiniteDistribution::new(entries).map_err(|_| OracleError::InfeasiblePinning)?;
            let key: DrawKey = (t, DrawKind::Padding);
            let c = src.draw(key, &pad).expect("rng draws never fail");
            draws.insert(key, (c, pad));
            x[v] = c;
        }
        trajectory.push(x.clone());
    }
    Ok(ChainRecord { trajectory, draws, horizon: t_horizon })
}

/// Empirical distribution of a sampler with per-outcome standard errors.
#[derive(Debug, Clone)]
pub struct Empirical<K: Ord> {
    pub trials: u64,
    pub counts: BTreeMap<K, u64>,
}

impl<K: Ord> Empirical<K> {
    pub fn frequency(&self, k: &K) -> f64 {
        *self.counts.get(k).unwrap_or(&0) as f64 / self.trials as f64
    }

    /// Binomial standard error `sqrt(p(1-p)/N)` of an outcome's frequency.
    pub fn std_error(&self, k: &K) -> f64 {
        let p = self.frequency(k);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Runs `sampler` `trials` times against one seeded RNG source and counts
/// outcomes.
pub fn monte_carlo_distribution<K: Ord, F>(trials: u64, seed: u64, mut sampler: F) -> Empirical<K>
where
    F: FnMut(&mut RngSource<ChaCha8Rng>) -> K,
{
    let mut src = RngSource::new(ChaCha8Rng::seed_from_u64(seed));
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    for _ in 0..trials {
        src.reset_counters();
        let k = sampler(&mut src);
        *counts.entry(k).or_insert(0) += 1;
    }
    Empirical { trials, counts }
}
