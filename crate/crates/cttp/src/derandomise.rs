//! Derandomisation by exhaustive replay.
//!
//! A randomised program that consumes draws through a [`ReplaySource`] is
//! re-executed once per root-to-leaf path of its decision tree: the source
//! replays a recorded outcome prefix, auto-extends through point-mass
//! draws, and interrupts at the first genuine branch, at which point the
//! enumerator forks one child per positive-probability outcome. Path
//! probabilities are exact rationals, so the output distribution is exact
//! and, because children are expanded and merged in ascending outcome
//! order, bit-identical across thread counts.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use num::{One, Signed, Zero};
use rayon::prelude::*;

use crate::core::{Fault, Interrupt, Rat, ReplaySource, Sym};

/// Default cap on the number of decision-tree leaves per enumeration.
pub const DEFAULT_LEAF_CAP: u64 = 20_000_000;

/// Depth limit under which child paths are handed to the thread pool;
/// below it the tree is explored sequentially within the worker.
const PARALLEL_SPLIT_DEPTH: usize = 24;

/// What a program execution hands back at a leaf: either a concrete
/// outcome, or an exact conditional distribution over outcomes (used when
/// a terminal step would otherwise draw from a known distribution; folding
/// the expectation analytically keeps the tree small).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Leaf<K> {
    Value(K),
    Expect(Vec<(K, Rat)>),
}

/// Resource limits for one enumeration.
#[derive(Debug, Clone)]
pub struct EnumerationBudget {
    /// Lower-bound draw budget per path; the draw that would exceed it
    /// truncates that path.
    pub k: u128,
    /// Hard cap on leaves explored; exceeding it aborts with a fault.
    pub leaf_cap: u64,
    /// Optional wall-clock allowance; expiring aborts with a fault. Leave
    /// unset for deterministic behaviour.
    pub wall_clock: Option<Duration>,
    /// Worker threads; `0` and `1` both mean sequential.
    pub jobs: usize,
}

impl EnumerationBudget {
    pub fn new(k: u128) -> Self {
        EnumerationBudget { k, leaf_cap: DEFAULT_LEAF_CAP, wall_clock: None, jobs: 1 }
    }

    pub fn with_leaf_cap(mut self, cap: u64) -> Self {
        self.leaf_cap = cap;
        self
    }

    pub fn with_wall_clock(mut self, d: Duration) -> Self {
        self.wall_clock = Some(d);
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }
}

/// Exact output law of a truncated randomised program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputDistribution<K: Ord> {
    /// Probability of each outcome along untruncated paths.
    pub outcomes: BTreeMap<K, Rat>,
    /// Total probability of paths stopped by the draw budget.
    pub truncation_mass: Rat,
    /// Leaves explored, truncated paths included.
    pub leaf_count: u64,
    /// Largest number of draws consumed on any single path.
    pub max_draws_observed: u64,
    /// Largest number of lower-bound draws consumed on any single path.
    pub max_lb_observed: u128,
    /// Leaf count by branch depth (number of genuine branches en route).
    pub depth_histogram: BTreeMap<usize, u64>,
}

impl<K: Ord + Clone> OutputDistribution<K> {
    /// Untruncated probability of an outcome.
    pub fn prob(&self, k: &K) -> Rat {
        self.outcomes.get(k).cloned().unwrap_or_else(Rat::zero)
    }

    /// Untruncated probability of an event.
    pub fn prob_of<P: Fn(&K) -> bool>(&self, event: P) -> Rat {
        self.outcomes
            .iter()
            .filter(|(k, _)| event(k))
            .map(|(_, p)| p.clone())
            .sum()
    }

    /// Total accounted mass; exactly 1 by construction.
    pub fn total_mass(&self) -> Rat {
        self.outcomes.values().cloned().sum::<Rat>() + self.truncation_mass.clone()
    }

    /// The sampler's law: truncated paths fall back to `fallback`.
    pub fn merged_with_fallback(&self, fallback: &K) -> BTreeMap<K, Rat> {
        let mut m = self.outcomes.clone();
        if self.truncation_mass.is_positive() {
            *m.entry(fallback.clone()).or_insert_with(Rat::zero) += self.truncation_mass.clone();
        }
        m
    }
}

/// Total variation distance between two sub-probability vectors.
pub fn total_variation<K: Ord>(a: &BTreeMap<K, Rat>, b: &BTreeMap<K, Rat>) -> Rat {
    let mut acc = Rat::zero();
    for (k, p) in a {
        acc += (p.clone() - b.get(k).cloned().unwrap_or_else(Rat::zero)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            acc += q.abs();
        }
    }
    acc / Rat::from_integer(2.into())
}

/// Per-path accumulator, merged child-after-child in outcome order.
struct Accum<K: Ord> {
    outcomes: BTreeMap<K, Rat>,
    truncation: Rat,
    leaves: u64,
    max_draws: u64,
    max_lb: u128,
    depths: BTreeMap<usize, u64>,
}

impl<K: Ord> Accum<K> {
    fn empty() -> Self {
        Accum {
            outcomes: BTreeMap::new(),
            truncation: Rat::zero(),
            leaves: 0,
            max_draws: 0,
            max_lb: 0,
            depths: BTreeMap::new(),
        }
    }

    fn note_leaf(&mut self, depth: usize, draws: u64, lb: u128) {
        self.leaves += 1;
        self.max_draws = self.max_draws.max(draws);
        self.max_lb = self.max_lb.max(lb);
        *self.depths.entry(depth).or_insert(0) += 1;
    }

    fn merge(&mut self, other: Accum<K>) {
        for (k, p) in other.outcomes {
            *self.outcomes.entry(k).or_insert_with(Rat::zero) += p;
        }
        self.truncation += other.truncation;
        self.leaves += other.leaves;
        self.max_draws = self.max_draws.max(other.max_draws);
        self.max_lb = self.max_lb.max(other.max_lb);
        for (d, c) in other.depths {
            *self.depths.entry(d).or_insert(0) += c;
        }
    }
}

struct Shared {
    k: u128,
    leaf_cap: u64,
    leaves: AtomicU64,
    abort: AtomicBool,
    deadline: Option<Instant>,
    parallel: bool,
}

impl Shared {
    fn check_alive(&self) -> Result<(), Fault> {
        if self.abort.load(Ordering::Relaxed) {
            return Err(Fault::EnumerationOverflow("aborted".into()));
        }
        if let Some(d) = self.deadline {
            if Instant::now() > d {
                self.abort.store(true, Ordering::Relaxed);
                return Err(Fault::EnumerationOverflow("wall clock budget expired".into()));
            }
        }
        Ok(())
    }

    fn count_leaf(&self) -> Result<(), Fault> {
        let seen = self.leaves.fetch_add(1, Ordering::Relaxed) + 1;
        if seen > self.leaf_cap {
            self.abort.store(true, Ordering::Relaxed);
            return Err(Fault::EnumerationOverflow(format!(
                "leaf cap {} exceeded",
                self.leaf_cap
            )));
        }
        Ok(())
    }
}

fn explore<K, F>(
    program: &F,
    sh: &Shared,
    prefix: Vec<Sym>,
    prob: Rat,
    depth: usize,
) -> Result<Accum<K>, Fault>
where
    K: Ord + Send,
    F: Fn(&mut ReplaySource) -> Result<Leaf<K>, Interrupt> + Sync,
{
    sh.check_alive()?;
    let mut src = ReplaySource::new(prefix).with_lb_budget(sh.k);
    let interrupted = match program(&mut src) {
        Ok(leaf) => {
            sh.count_leaf()?;
            let mut acc = Accum::empty();
            acc.note_leaf(depth, src.draw_count(), src.lb_used());
            match leaf {
                Leaf::Value(k) => {
                    *acc.outcomes.entry(k).or_insert_with(Rat::zero) += prob;
                }
                Leaf::Expect(pairs) => {
                    for (k, w) in pairs {
                        *acc.outcomes.entry(k).or_insert_with(Rat::zero) += &prob * w;
                    }
                }
            }
            return Ok(acc);
        }
        Err(i) => i,
    };
    match interrupted {
        Interrupt::Truncated => {
            sh.count_leaf()?;
            let mut acc = Accum::empty();
            acc.note_leaf(depth, src.draw_count(), src.lb_used());
            acc.truncation = prob;
            Ok(acc)
        }
        Interrupt::Fault(f) => Err(f),
        Interrupt::Pending(dist) => {
            // Children replay everything this path actually consumed
            // (the prefix plus point-mass extensions), then one branched
            // outcome. Extending the bare prefix instead would misalign
            // the replay against the folded draws.
            let base = src.consumed().to_vec();
            let children: Vec<(Sym, Rat)> =
                dist.positive().map(|(s, p)| (s, p.clone())).collect();
            let results: Vec<Result<Accum<K>, Fault>> =
                if sh.parallel && children.len() > 1 && depth < PARALLEL_SPLIT_DEPTH {
                    children
                        .into_par_iter()
                        .map(|(s, p)| {
                            let mut child = base.clone();
                            child.push(s);
                            explore(program, sh, child, &prob * p, depth + 1)
                        })
                        .collect()
                } else {
                    children
                        .into_iter()
                        .map(|(s, p)| {
                            let mut child = base.clone();
                            child.push(s);
                            explore(program, sh, child, &prob * p, depth + 1)
                        })
                        .collect()
                };
            let mut acc = Accum::empty();
            for r in results {
                acc.merge(r?);
            }
            Ok(acc)
        }
    }
}

/// Enumerates the exact output law of `program` under `budget`.
///
/// The program must be a pure function of the draws it makes. Every
/// positive-probability draw sequence is either explored to a leaf or
/// truncated by the per-path budget, so the returned masses sum to
/// exactly 1; this is asserted.
pub fn enumerate_distribution<K, F>(
    program: &F,
    budget: &EnumerationBudget,
) -> Result<OutputDistribution<K>, Fault>
where
    K: Ord + Send,
    F: Fn(&mut ReplaySource) -> Result<Leaf<K>, Interrupt> + Sync,
{
    let sh = Shared {
        k: budget.k,
        leaf_cap: budget.leaf_cap,
        leaves: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        deadline: budget.wall_clock.map(|d| Instant::now() + d),
        parallel: budget.jobs > 1,
    };
    let acc = if budget.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(budget.jobs)
            .build()
            .expect("worker pool construction");
        pool.install(|| explore(program, &sh, Vec::new(), Rat::one(), 0))?
    } else {
        explore(program, &sh, Vec::new(), Rat::one(), 0)?
    };
    let out = OutputDistribution {
        outcomes: acc.outcomes,
        truncation_mass: acc.truncation,
        leaf_count: acc.leaves,
        max_draws_observed: acc.max_draws,
        max_lb_observed: acc.max_lb,
        depth_histogram: acc.depths,
    };
    assert!(
        out.outcomes.values().cloned().sum::<Rat>() + out.truncation_mass.clone() == Rat::one(),
        "enumeration mass leak: program is not a pure function of its draws"
    );
    Ok(out)
}

/// One certified self-reduction factor: the event probability along
/// untruncated paths plus the truncated mass, which bounds how far the
/// true probability can sit from the estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub estimate: Rat,
    pub truncation: Rat,
}

impl Factor {
    /// `max(estimate - truncation, 0)`.
    pub fn low(&self) -> Rat {
        let l = self.estimate.clone() - self.truncation.clone();
        if l.is_negative() {
            Rat::zero()
        } else {
            l
        }
    }

    /// `min(estimate + truncation, 1)`.
    pub fn high(&self) -> Rat {
        let h = self.estimate.clone() + self.truncation.clone();
        if h > Rat::one() {
            Rat::one()
        } else {
            h
        }
    }
}

/// Reads one factor off an enumerated law: the untruncated probability of
/// `event` together with the law's truncation mass.
pub fn certified_factor<K: Ord + Clone, P: Fn(&K) -> bool>(
    dist: &OutputDistribution<K>,
    event: P,
) -> Factor {
    Factor { estimate: dist.prob_of(event), truncation: dist.truncation_mass.clone() }
}

/// How each factor enters the final product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Multiply by the factor itself.
    Identity,
    /// Multiply by its reciprocal.
    Reciprocal,
}

/// A certified enclosure of the assembled product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertifiedInterval {
    pub low: Rat,
    pub estimate: Rat,
    pub high: Rat,
}

impl CertifiedInterval {
    /// Half-width divided by the midpoint.
    pub fn relative_half_width(&self) -> Rat {
        let two = Rat::from_integer(2.into());
        let mid = (self.low.clone() + self.high.clone()) / two.clone();
        if mid.is_zero() {
            return Rat::zero();
        }
        (self.high.clone() - self.low.clone()) / (two * mid)
    }
}

/// Assembles `scale * prod transform(factor_i)` with certified bounds.
///
/// A factor whose estimate does not strictly exceed its truncation mass
/// admits zero as a possible true value, so nothing can be certified;
/// that factor's index is reported in the error.
pub fn certified_product(
    scale: &Rat,
    factors: &[Factor],
    transform: Transform,
) -> Result<CertifiedInterval, String> {
    let mut low = scale.clone();
    let mut estimate = scale.clone();
    let mut high = scale.clone();
    for (i, f) in factors.iter().enumerate() {
        if f.estimate <= f.truncation {
            return Err(format!(
                "factor {} uncertifiable: estimate {} within truncation mass {} of zero",
                i + 1,
                f.estimate,
                f.truncation
            ));
        }
        match transform {
            Transform::Identity => {
                low *= f.low();
                estimate *= f.estimate.clone();
                high *= f.high();
            }
            Transform::Reciprocal => {
                low /= f.high();
                estimate /= f.estimate.clone();
                high /= f.low();
            }
        }
    }
    Ok(CertifiedInterval { low, estimate, high })
}

/// Draw budget selection for a counting run: an explicit per-path budget,
/// or a target accuracy from which the budget is derived (with the linear
/// slack parameter selecting the linear-instance budget formula).
#[derive(Debug, Clone)]
pub enum BudgetSpec {
    Draws(u128),
    Epsilon { eps: Rat, linear_delta: Option<Rat> },
}

/// Enumeration limits shared by every factor of a counting run.
#[derive(Debug, Clone)]
pub struct CountOptions {
    pub leaf_cap: u64,
    pub wall_clock: Option<Duration>,
    pub jobs: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { leaf_cap: DEFAULT_LEAF_CAP, wall_clock: None, jobs: 1 }
    }
}

/// Per-factor accounting of one counting run.
#[derive(Debug, Clone)]
pub struct FactorDetail {
    /// 1-based position in the self-reduction.
    pub index: usize,
    pub estimate: Rat,
    pub truncation: Rat,
    pub leaf_count: u64,
    pub max_draws_observed: u64,
    pub max_lb_observed: u128,
    pub depth_histogram: BTreeMap<usize, u64>,
    /// Largest sub-instance component enumerated at a leaf, when the model
    /// tracks one.
    pub largest_component: Option<usize>,
}

/// Result of a counting run: the certified enclosure plus everything
/// needed to audit it.
#[derive(Debug, Clone)]
pub struct CountOutcome {
    pub interval: CertifiedInterval,
    pub factors: Vec<FactorDetail>,
    /// Per-path lower-bound draw budget actually used.
    pub k: u128,
    /// Failure probability target behind a derived budget, if any.
    pub gamma: Option<Rat>,
    /// Projected alphabet size, for models that project.
    pub s: Option<u32>,
    pub warnings: Vec<String>,
}

/// Why a counting run produced no certified interval.
#[derive(Debug, Clone, thiserror::Error)]
pub enum CountError {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error("uncertifiable: {0}")]
    Uncertifiable(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{rat, DrawKind, FiniteDistribution, RandomSource, BOT};

    fn fair_lb() -> FiniteDistribution {
        FiniteDistribution::new(vec![(0, rat(1, 2)), (BOT, rat(1, 2))]).unwrap()
    }

    #[test]
    fn constant_program_is_a_point_mass() {
        let program = |_: &mut ReplaySource| Ok(Leaf::Value(7u32));
        let d = enumerate_distribution(&program, &EnumerationBudget::new(4)).unwrap();
        assert_eq!(d.prob(&7), rat(1, 1));
        assert_eq!(d.truncation_mass, rat(0, 1));
        assert_eq!(d.leaf_count, 1);
        assert_eq!(d.max_draws_observed, 0);
        assert_eq!(d.depth_histogram.get(&0), Some(&1));
    }

    #[test]
    fn single_draw_program_reproduces_the_distribution() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let r = src.draw((0, DrawKind::LowerBound), &lb)?;
            Ok(Leaf::Value(r))
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(1)).unwrap();
        assert_eq!(d.prob(&0), rat(1, 2));
        assert_eq!(d.prob(&BOT), rat(1, 2));
        assert_eq!(d.leaf_count, 2);
        assert_eq!(d.max_draws_observed, 1);
    }

    #[test]
    fn budget_zero_truncates_everything() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let r = src.draw((0, DrawKind::LowerBound), &lb)?;
            Ok(Leaf::Value(r))
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(0)).unwrap();
        assert_eq!(d.truncation_mass, rat(1, 1));
        assert_eq!(d.leaf_count, 1);
        assert_eq!(d.outcomes.len(), 0);
    }

    #[test]
    fn second_lower_bound_draw_truncates_under_budget_one() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let a = src.draw((0, DrawKind::LowerBound), &lb)?;
            if a == BOT {
                let b = src.draw((-1, DrawKind::LowerBound), &lb)?;
                return Ok(Leaf::Value(b));
            }
            Ok(Leaf::Value(a))
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(1)).unwrap();
        // First draw 0 (1/2) survives; first draw BOT (1/2) then truncates.
        assert_eq!(d.prob(&0), rat(1, 2));
        assert_eq!(d.truncation_mass, rat(1, 2));
        assert_eq!(d.total_mass(), rat(1, 1));
    }

    #[test]
    fn expect_leaves_fold_terminal_distributions() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let r = src.draw((0, DrawKind::LowerBound), &lb)?;
            if r == BOT {
                Ok(Leaf::Expect(vec![(10u32, rat(1, 4)), (11, rat(3, 4))]))
            } else {
                Ok(Leaf::Value(10))
            }
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(1)).unwrap();
        assert_eq!(d.prob(&10), rat(1, 2) + rat(1, 2) * rat(1, 4));
        assert_eq!(d.prob(&11), rat(3, 8));
        assert_eq!(d.leaf_count, 2);
    }

    #[test]
    fn leaf_cap_aborts_with_a_fault() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let a = src.draw((0, DrawKind::LowerBound), &lb)?;
            let b = src.draw((-1, DrawKind::LowerBound), &lb)?;
            Ok(Leaf::Value(a.min(b)))
        };
        let err = enumerate_distribution(&program, &EnumerationBudget::new(8).with_leaf_cap(2))
            .unwrap_err();
        assert!(matches!(err, Fault::EnumerationOverflow(_)));
    }

    #[test]
    fn depth_histogram_counts_branches_not_draws() {
        let lb = fair_lb();
        let pad = FiniteDistribution::point_mass(1);
        let program = move |src: &mut ReplaySource| {
            let r = src.draw((0, DrawKind::LowerBound), &lb)?;
            if r == BOT {
                // Point-mass padding: a draw but not a branch.
                let c = src.draw((0, DrawKind::Padding), &pad)?;
                Ok(Leaf::Value(c))
            } else {
                Ok(Leaf::Value(r))
            }
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(1)).unwrap();
        assert_eq!(d.prob(&0), rat(1, 2));
        assert_eq!(d.prob(&1), rat(1, 2));
        assert_eq!(d.depth_histogram.get(&1), Some(&2));
        assert_eq!(d.max_draws_observed, 2);
    }

    #[test]
    fn parallel_enumeration_matches_sequential() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let mut acc = 0u32;
            for t in 0..4 {
                let r = src.draw((-t, DrawKind::LowerBound), &lb)?;
                acc = acc * 2 + u32::from(r == BOT);
            }
            Ok(Leaf::Value(acc))
        };
        let seq = enumerate_distribution(&program, &EnumerationBudget::new(8)).unwrap();
        let par = enumerate_distribution(&program, &EnumerationBudget::new(8).with_jobs(4))
            .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn merged_fallback_and_total_variation() {
        let lb = fair_lb();
        let program = move |src: &mut ReplaySource| {
            let r = src.draw((0, DrawKind::LowerBound), &lb)?;
            if r == BOT {
                src.draw((-1, DrawKind::LowerBound), &lb)?;
            }
            Ok(Leaf::Value(r))
        };
        let d = enumerate_distribution(&program, &EnumerationBudget::new(1)).unwrap();
        let merged = d.merged_with_fallback(&0);
        assert_eq!(merged.get(&0), Some(&rat(1, 1)));
        let mut exact = BTreeMap::new();
        exact.insert(0u32, rat(3, 4));
        exact.insert(1u32, rat(1, 4));
        assert_eq!(total_variation(&merged, &exact), rat(1, 4));
    }

    #[test]
    fn factor_bounds_clamp_to_the_unit_interval() {
        let f = Factor { estimate: rat(1, 16), truncation: rat(1, 8) };
        assert_eq!(f.low(), rat(0, 1));
        assert_eq!(f.high(), rat(3, 16));
        let g = Factor { estimate: rat(15, 16), truncation: rat(1, 8) };
        assert_eq!(g.high(), rat(1, 1));
    }

    #[test]
    fn reciprocal_product_frozen_example() {
        let f = Factor { estimate: rat(2, 3), truncation: rat(1, 12) };
        let iv = certified_product(&rat(1, 1), &[f], Transform::Reciprocal).unwrap();
        assert_eq!(iv.low, rat(4, 3));
        assert_eq!(iv.estimate, rat(3, 2));
        assert_eq!(iv.high, rat(12, 7));
    }

    #[test]
    fn identity_product_with_exact_factors_is_tight() {
        let f = Factor { estimate: rat(2, 3), truncation: rat(0, 1) };
        let iv = certified_product(&rat(9, 1), &[f], Transform::Identity).unwrap();
        assert_eq!(iv.low, rat(6, 1));
        assert_eq!(iv.estimate, rat(6, 1));
        assert_eq!(iv.high, rat(6, 1));
    }

    #[test]
    fn empty_factor_list_returns_the_scale() {
        let iv = certified_product(&rat(9, 1), &[], Transform::Identity).unwrap();
        assert_eq!(iv.low, rat(9, 1));
        assert_eq!(iv.high, rat(9, 1));
    }

    #[test]
    fn estimate_inside_truncation_is_uncertifiable() {
        let f = Factor { estimate: rat(1, 16), truncation: rat(1, 8) };
        let err = certified_product(&rat(1, 1), &[f], Transform::Reciprocal).unwrap_err();
        assert!(err.contains("factor 1"));
    }

    #[test]
    fn relative_half_width_is_exact() {
        let iv = CertifiedInterval { low: rat(9, 1), estimate: rat(10, 1), high: rat(11, 1) };
        assert_eq!(iv.relative_half_width(), rat(1, 10));
    }
}
