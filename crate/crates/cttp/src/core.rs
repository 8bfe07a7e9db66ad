//! The generic backward-resolution engine.
//!
//! A systematic-scan single-site chain updates vertex `i(t) = (t mod n)+1`
//! at each integer time. To sample one stationary coordinate at time 0 the
//! engine walks backwards: at each update time it first draws from the
//! model's lower-bound distribution (which decides the update outright
//! with probability `1 - mu_lb(BOT)`), and only on a `BOT` outcome asks
//! the model's boundary routine to pin enough earlier coordinates to make
//! the conditional marginal computable, then draws the remainder from the
//! padding distribution. All randomness flows through [`RandomSource`] so
//! the same code serves RNG sampling, coupled-forward replay, and
//! exhaustive enumeration.

use std::collections::BTreeMap;
use std::collections::HashMap;

use num::bigint::BigUint;
use num::rational::BigRational;
use num::{BigInt, Integer, One, Signed, Zero};
use rand::RngCore;
use thiserror::Error;

use crate::model::Vertex;

/// Spin value. Colour classes and colours are 1-based; independent-set
/// spins are `{0, 1}`.
pub type Sym = u32;

/// Distinguished "lower bound undecided" outcome.
pub const BOT: Sym = u32::MAX;

/// Update timestamp; the engine only ever works at `t <= 0`.
pub type Time = i64;

/// Exact rational probability.
pub type Rat = BigRational;

/// Shorthand rational constructor.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Default recursion allowance for [`Engine::resolve`]; an engineering
/// safety net against non-termination suspicion in RNG mode, far beyond
/// anything reachable at desk scale.
pub const DEFAULT_STEP_GUARD: u64 = 1 << 24;

/// What a draw is for: a lower-bound draw (counted against truncation
/// budgets, the tape's R set) or a padding/terminal draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DrawKind {
    LowerBound,
    Padding,
}

/// Identifies a draw within one execution: timestamp plus kind. Used by
/// replay sources to couple executions.
pub type DrawKey = (Time, DrawKind);

/// Hard failures; never part of a distribution's law.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Fault {
    #[error("step guard exhausted: resolve exceeded its recursion allowance")]
    GuardExhausted,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("replay mismatch: recorded outcome {outcome} impossible at draw index {index}")]
    ReplayMismatch { index: usize, outcome: Sym },
    #[error("coupling mismatch at t={t} ({kind:?}): {detail}")]
    CouplingMismatch { t: Time, kind: DrawKind, detail: String },
    #[error("boundary enumeration found no feasible assignment: {0}")]
    ZeroMassBoundary(String),
    #[error("regime violation: {0}")]
    RegimeViolation(String),
    #[error("scan prefix exhausted before the construction terminated")]
    ScanExhausted,
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
    #[error("enumeration overflow: {0}")]
    EnumerationOverflow(String),
}

/// Non-value outcomes of running a tape-driven program.
///
/// `Pending` is raised by an enumeration source facing a genuine branch;
/// `Truncated` signals the lower-bound draw budget was hit (a value-like
/// outcome for samplers, never an error); `Fault` is a real failure.
#[derive(Debug, Clone)]
pub enum Interrupt {
    Pending(FiniteDistribution),
    Truncated,
    Fault(Fault),
}

impl From<Fault> for Interrupt {
    fn from(f: Fault) -> Self {
        Interrupt::Fault(f)
    }
}

/// A finite distribution with exact rational probabilities.
///
/// Outcomes are distinct and sorted ascending (`BOT` sorts last);
/// probabilities are non-negative and sum to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteDistribution {
    support: Vec<(Sym, Rat)>,
}

impl FiniteDistribution {
    pub fn new(mut entries: Vec<(Sym, Rat)>) -> Result<Self, Fault> {
        entries.sort_by_key(|(s, _)| *s);
        let mut sum = Rat::zero();
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Fault::InvalidDistribution(format!(
                    "duplicate outcome {}",
                    w[0].0
                )));
            }
        }
        for (s, p) in &entries {
            if p.is_negative() {
                return Err(Fault::InvalidDistribution(format!(
                    "negative probability {p} for outcome {s}"
                )));
            }
            sum += p;
        }
        if !sum.is_one() {
            return Err(Fault::InvalidDistribution(format!("total mass {sum}, expected 1")));
        }
        Ok(FiniteDistribution { support: entries })
    }

    pub fn point_mass(s: Sym) -> Self {
        FiniteDistribution { support: vec![(s, Rat::one())] }
    }

    pub fn support(&self) -> &[(Sym, Rat)] {
        &self.support
    }

    pub fn prob(&self, s: Sym) -> Rat {
        self.support
            .iter()
            .find(|(x, _)| *x == s)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rat::zero)
    }

    /// Outcomes with strictly positive probability, ascending.
    pub fn positive(&self) -> impl Iterator<Item = (Sym, &Rat)> {
        self.support.iter().filter(|(_, p)| p.is_positive()).map(|(s, p)| (*s, p))
    }

    /// `Some(outcome)` iff exactly one outcome has positive probability.
    pub fn as_point_mass(&self) -> Option<Sym> {
        let mut it = self.positive();
        let first = it.next()?;
        if it.next().is_none() {
            Some(first.0)
        } else {
            None
        }
    }
}

/// The systematic-scan clock on `n` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanClock {
    pub n: usize,
}

impl ScanClock {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        ScanClock { n }
    }

    /// Vertex updated at time `t`: `(t mod n) + 1` with mathematical
    /// (non-negative) modulus.
    pub fn idx_at(&self, t: Time) -> Vertex {
        (t.rem_euclid(self.n as i64)) as usize + 1
    }

    /// Latest time `s <= t` at which vertex `u` is updated; O(1).
    pub fn pred(&self, u: Vertex, t: Time) -> Time {
        debug_assert!(u >= 1 && u <= self.n);
        let n = self.n as i64;
        t - (t - (u as i64 - 1)).rem_euclid(n)
    }
}

/// Memoisation tapes of one execution: `values` maps a timestamp to its
/// resolved spin (the chain's update outcome) and `lb` records every
/// lower-bound draw. `values` entries are written at most once; `lb`
/// never shrinks.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    values: HashMap<Time, Sym>,
    lb: HashMap<Time, Sym>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, t: Time) -> Option<Sym> {
        self.values.get(&t).copied()
    }

    pub fn lb(&self, t: Time) -> Option<Sym> {
        self.lb.get(&t).copied()
    }

    pub fn record_value(&mut self, t: Time, s: Sym) {
        let prev = self.values.insert(t, s);
        assert!(prev.is_none(), "tape value at t={t} written twice");
    }

    pub fn record_lb(&mut self, t: Time, s: Sym) {
        let prev = self.lb.insert(t, s);
        assert!(prev.is_none(), "lower-bound record at t={t} written twice");
    }

    /// Number of lower-bound draws recorded so far (the |R| of budget
    /// checks).
    pub fn lb_len(&self) -> usize {
        self.lb.len()
    }

    /// The recorded lower-bound draws, sorted by timestamp.
    pub fn lb_entries(&self) -> Vec<(Time, Sym)> {
        let mut v: Vec<(Time, Sym)> = self.lb.iter().map(|(&t, &s)| (t, s)).collect();
        v.sort_unstable();
        v
    }
}

/// Source of randomness; every probabilistic choice of every sampler goes
/// through this interface.
pub trait RandomSource {
    fn draw(&mut self, key: DrawKey, dist: &FiniteDistribution) -> Result<Sym, Interrupt>;
}

/// Draws an index uniformly from `[0, bound)` using rejection on raw bits.
fn uniform_below(rng: &mut dyn RngCore, bound: &BigUint) -> BigUint {
    debug_assert!(!bound.is_zero());
    if bound.is_one() {
        return BigUint::zero();
    }
    let bits = bound.bits();
    let bytes = ((bits + 7) / 8) as usize;
    let top_mask: u8 = if bits % 8 == 0 { 0xff } else { (1u8 << (bits % 8)) - 1 };
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[bytes - 1] &= top_mask;
        let x = BigUint::from_bytes_le(&buf);
        if &x < bound {
            return x;
        }
    }
}

/// RNG-backed source: exact rational sampling by default, optional f64
/// mode for Monte Carlo throughput (never used in certified paths).
pub struct RngSource<R: RngCore> {
    rng: R,
    float_mode: bool,
    lb_budget: Option<u128>,
    lb_used: u128,
    draw_count: u64,
}

impl<R: RngCore> RngSource<R> {
    pub fn new(rng: R) -> Self {
        RngSource { rng, float_mode: false, lb_budget: None, lb_used: 0, draw_count: 0 }
    }

    /// Opt into f64 cumulative sampling.
    pub fn with_float_mode(mut self) -> Self {
        self.float_mode = true;
        self
    }

    /// Cap the number of lower-bound draws; the draw that would exceed the
    /// cap signals [`Interrupt::Truncated`] before consuming randomness.
    pub fn with_lb_budget(mut self, k: u128) -> Self {
        self.lb_budget = Some(k);
        self
    }

    /// Lower-bound draws consumed so far.
    pub fn lb_used(&self) -> u128 {
        self.lb_used
    }

    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }

    /// Clears per-run counters, keeping the RNG state.
    pub fn reset_counters(&mut self) {
        self.lb_used = 0;
        self.draw_count = 0;
    }

    fn sample_exact(&mut self, dist: &FiniteDistribution) -> Sym {
        let mut denom = BigUint::one();
        for (_, p) in dist.support() {
            denom = denom.lcm(&p.denom().magnitude().clone());
        }
        let x = uniform_below(&mut self.rng, &denom);
        let mut acc = BigUint::zero();
        for (s, p) in dist.support() {
            let w = p.numer().magnitude() * (&denom / p.denom().magnitude());
            acc += w;
            if x < acc {
                return *s;
            }
        }
        unreachable!("total mass 1 exhausted without a hit");
    }

    fn sample_float(&mut self, dist: &FiniteDistribution) -> Sym {
        use num::ToPrimitive;
        let x = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut acc = 0.0f64;
        let mut last = None;
        for (s, p) in dist.positive() {
            acc += p.to_f64().unwrap_or(0.0);
            last = Some(s);
            if x < acc {
                return s;
            }
        }
        last.expect("distribution has positive support")
    }
}

impl<R: RngCore> RandomSource for RngSource<R> {
    fn draw(&mut self, key: DrawKey, dist: &FiniteDistribution) -> Result<Sym, Interrupt> {
        if key.1 == DrawKind::LowerBound {
            if let Some(k) = self.lb_budget {
                if self.lb_used >= k {
                    return Err(Interrupt::Truncated);
                }
            }
            self.lb_used += 1;
        }
        self.draw_count += 1;
        Ok(if self.float_mode { self.sample_float(dist) } else { self.sample_exact(dist) })
    }
}

/// Replay source for enumeration: replays a recorded outcome prefix, then
/// auto-extends through point-mass draws, and finally raises
/// [`Interrupt::Pending`] at the first genuine branch. An optional
/// lower-bound budget truncates exactly like the samplers' catch clauses.
pub struct ReplaySource {
    prefix: Vec<Sym>,
    pos: usize,
    consumed: Vec<Sym>,
    lb_budget: Option<u128>,
    lb_used: u128,
    draw_count: u64,
}

impl ReplaySource {
    pub fn new(prefix: Vec<Sym>) -> Self {
        ReplaySource { prefix, pos: 0, consumed: Vec::new(), lb_budget: None, lb_used: 0, draw_count: 0 }
    }

    pub fn with_lb_budget(mut self, k: u128) -> Self {
        self.lb_budget = Some(k);
        self
    }

    /// Outcomes consumed so far: the replayed prefix plus any point-mass
    /// extensions. A child path extends this by one branched outcome.
    pub fn consumed(&self) -> &[Sym] {
        &self.consumed
    }

    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }

    pub fn lb_used(&self) -> u128 {
        self.lb_used
    }
}

impl RandomSource for ReplaySource {
    fn draw(&mut self, key: DrawKey, dist: &FiniteDistribution) -> Result<Sym, Interrupt> {
        if key.1 == DrawKind::LowerBound {
            if let Some(k) = self.lb_budget {
                if self.lb_used >= k {
                    return Err(Interrupt::Truncated);
                }
            }
        }
        if self.pos < self.prefix.len() {
            let s = self.prefix[self.pos];
            if !dist.prob(s).is_positive() {
                return Err(Fault::ReplayMismatch { index: self.pos, outcome: s }.into());
            }
            self.pos += 1;
            self.consumed.push(s);
            if key.1 == DrawKind::LowerBound {
                self.lb_used += 1;
            }
            self.draw_count += 1;
            return Ok(s);
        }
        if let Some(s) = dist.as_point_mass() {
            self.consumed.push(s);
            if key.1 == DrawKind::LowerBound {
                self.lb_used += 1;
            }
            self.draw_count += 1;
            return Ok(s);
        }
        Err(Interrupt::Pending(dist.clone()))
    }
}

/// Keyed replay source: returns pre-recorded outcomes by draw key and
/// verifies that the distribution presented for each key is exactly the
/// recorded one. Used to assert that the backward resolver and a forward
/// chain simulation are the same coupled process.
pub struct MapReplaySource<'a> {
    map: &'a BTreeMap<DrawKey, (Sym, FiniteDistribution)>,
}

impl<'a> MapReplaySource<'a> {
    pub fn new(map: &'a BTreeMap<DrawKey, (Sym, FiniteDistribution)>) -> Self {
        MapReplaySource { map }
    }
}

impl RandomSource for MapReplaySource<'_> {
    fn draw(&mut self, key: DrawKey, dist: &FiniteDistribution) -> Result<Sym, Interrupt> {
        match self.map.get(&key) {
            None => Err(Fault::CouplingMismatch {
                t: key.0,
                kind: key.1,
                detail: "no recorded draw at this key".into(),
            }
            .into()),
            Some((s, recorded)) => {
                if recorded != dist {
                    return Err(Fault::CouplingMismatch {
                        t: key.0,
                        kind: key.1,
                        detail: format!(
                            "distribution mismatch: recorded {recorded:?}, presented {dist:?}"
                        ),
                    }
                    .into());
                }
                Ok(*s)
            }
        }
    }
}

/// Budget adapter: enforces a lower-bound draw cap in front of any inner
/// source. The draw that would exceed the cap signals
/// [`Interrupt::Truncated`] before touching the inner source.
pub struct BudgetedSource<'a> {
    inner: &'a mut dyn RandomSource,
    k: u128,
    lb_used: u128,
}

impl<'a> BudgetedSource<'a> {
    pub fn new(inner: &'a mut dyn RandomSource, k: u128) -> Self {
        BudgetedSource { inner, k, lb_used: 0 }
    }

    pub fn lb_used(&self) -> u128 {
        self.lb_used
    }
}

impl RandomSource for BudgetedSource<'_> {
    fn draw(&mut self, key: DrawKey, dist: &FiniteDistribution) -> Result<Sym, Interrupt> {
        if key.1 == DrawKind::LowerBound {
            if self.lb_used >= self.k {
                return Err(Interrupt::Truncated);
            }
            self.lb_used += 1;
        }
        self.inner.draw(key, dist)
    }
}

/// How far back the chain exists: `Infinite` for the stationary sampler,
/// `Finite(t_horizon)` for a chain started at time `-t_horizon` from the
/// model's initial configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Infinite,
    Finite(i64),
}

/// Model plug-in: lower-bound distribution, boundary routine, padding
/// distribution, and (for finite horizons) the initial configuration.
///
/// The boundary routine must pin a set of earlier coordinates under which
/// the target vertex's conditional marginal equals its marginal given the
/// full chain state; this is cross-checked against the exact oracle on
/// small instances by the coupled-chain test suite.
pub trait ModelSpec: Sized {
    /// Boundary outcome: the pinned partial configuration plus whatever
    /// auxiliary data the padding computation needs.
    type Boundary;

    fn n(&self) -> usize;

    /// Distribution over spins plus `BOT`. Must give `BOT` mass < 1.
    fn lower_bound_dist(&self) -> &FiniteDistribution;

    /// Initial configuration for finite horizons.
    fn init_value(&self, v: Vertex) -> Sym;

    fn boundary(&self, t: Time, eng: &mut Engine<'_, Self>) -> Result<Self::Boundary, Interrupt>;

    fn padding_dist(&self, t: Time, boundary: &Self::Boundary)
        -> Result<FiniteDistribution, Interrupt>;
}

/// One backward-resolution execution: owns the tapes, borrows the model
/// and the randomness source. A single engine is single-owner state; for
/// enumeration each explored path gets its own engine.
pub struct Engine<'a, M: ModelSpec> {
    model: &'a M,
    pub clock: ScanClock,
    pub tape: Tape,
    src: &'a mut dyn RandomSource,
    horizon: Horizon,
    steps_left: u64,
}

impl<'a, M: ModelSpec> Engine<'a, M> {
    pub fn new(
        model: &'a M,
        src: &'a mut dyn RandomSource,
        horizon: Horizon,
        step_guard: u64,
    ) -> Self {
        assert!(
            model.lower_bound_dist().prob(BOT) < Rat::one(),
            "lower-bound distribution must decide with positive probability"
        );
        Engine {
            model,
            clock: ScanClock::new(model.n()),
            tape: Tape::new(),
            src,
            horizon,
            steps_left: step_guard,
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    fn before_horizon(&self, t: Time) -> bool {
        match self.horizon {
            Horizon::Infinite => false,
            Horizon::Finite(th) => t <= -th,
        }
    }

    /// Memoised lower-bound draw at time `s`. Beyond a finite horizon the
    /// lower bound is `BOT` by definition and nothing is recorded; a
    /// memoised hit consumes no randomness; otherwise one fresh draw is
    /// made and recorded.
    pub fn lb_sample(&mut self, s: Time) -> Result<Sym, Interrupt> {
        if self.before_horizon(s) {
            return Ok(BOT);
        }
        if let Some(r) = self.tape.lb(s) {
            return Ok(r);
        }
        let model = self.model;
        let r = self.src.draw((s, DrawKind::LowerBound), model.lower_bound_dist())?;
        self.tape.record_lb(s, r);
        Ok(r)
    }

    /// Outcome of the update at time `t`, resolved backwards: memoised
    /// value, else the lower-bound draw if it decides, else the model
    /// boundary (which recursively resolves earlier updates) followed by a
    /// padding draw.
    pub fn resolve(&mut self, t: Time) -> Result<Sym, Interrupt> {
        if self.steps_left == 0 {
            return Err(Fault::GuardExhausted.into());
        }
        self.steps_left -= 1;
        if self.before_horizon(t) {
            return Ok(self.model.init_value(self.clock.idx_at(t)));
        }
        if let Some(c) = self.tape.value(t) {
            return Ok(c);
        }
        let r = self.lb_sample(t)?;
        if r != BOT {
            self.tape.record_value(t, r);
            return Ok(r);
        }
        let model = self.model;
        let b = model.boundary(t, self)?;
        let dist = model.padding_dist(t, &b)?;
        let c = self.src.draw((t, DrawKind::Padding), &dist)?;
        self.tape.record_value(t, c);
        Ok(c)
    }
}

/// Truncated resolution: fresh tapes, at most `k` lower-bound draws (and
/// hence at most `k` padding draws). The draw that would exceed the
/// budget aborts the whole call tree with [`Interrupt::Truncated`]; with
/// `k = 0` truncation fires before any draw.
pub fn approx_resolve<M: ModelSpec>(
    t: Time,
    k: u128,
    src: &mut dyn RandomSource,
    model: &M,
) -> Result<Sym, Interrupt> {
    let mut budgeted = BudgetedSource::new(src, k);
    let mut eng = Engine::new(model, &mut budgeted, Horizon::Infinite, DEFAULT_STEP_GUARD);
    eng.resolve(t)
}

/// `ceil(log2(num/den))` for a rational > 0; 0 when the ratio is <= 1.
pub fn ceil_log2_ratio(num: &BigUint, den: &BigUint) -> u64 {
    assert!(!num.is_zero() && !den.is_zero());
    if num <= den {
        return 0;
    }
    let mut eta = 0u64;
    let mut scaled = den.clone();
    while &scaled < num {
        scaled <<= 1;
        eta += 1;
    }
    eta
}

/// `ceil(log2(1/gamma))` for a rational `gamma` in (0, 1].
pub fn ceil_log2_inverse(gamma: &Rat) -> u64 {
    assert!(gamma.is_positive(), "gamma must be positive");
    ceil_log2_ratio(gamma.denom().magnitude(), gamma.numer().magnitude())
}

/// Exact decimal rendering with `digits` fractional digits, rounding half
/// away from zero. Deterministic (integer arithmetic only).
pub fn decimal_string(r: &Rat, digits: u32) -> String {
    let sign = if r.is_negative() { "-" } else { "" };
    let num = r.numer().magnitude().clone();
    let den = r.denom().magnitude().clone();
    let scale = BigUint::from(10u32).pow(digits);
    let scaled = (&num * &scale * 2u32 + &den) / (&den * 2u32);
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    if digits == 0 {
        return format!("{sign}{int_part}");
    }
    format!("{sign}{int_part}.{frac_part:0>width$}", width = digits as usize)
}

/// Parses a rational from `p/q`, a decimal like `0.05`, or an integer.
pub fn parse_rational(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let num: BigInt = a.trim().parse().map_err(|_| format!("bad numerator {a:?}"))?;
        let den: BigInt = b.trim().parse().map_err(|_| format!("bad denominator {b:?}"))?;
        if den.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(Rat::new(num, den));
    }
    if let Some((a, b)) = s.split_once('.') {
        let neg = a.trim_start().starts_with('-');
        let int: BigInt = if a.is_empty() || a == "-" {
            BigInt::zero()
        } else {
            a.parse().map_err(|_| format!("bad integer part {a:?}"))?
        };
        if !b.chars().all(|c| c.is_ascii_digit()) || b.is_empty() {
            return Err(format!("bad fractional part {b:?}"));
        }
        let frac: BigInt = b.parse().map_err(|_| format!("bad fractional part {b:?}"))?;
        let scale = BigInt::from(10u32).pow(b.len() as u32);
        let magnitude = int.abs() * &scale + frac;
        let signed = if neg { -magnitude } else { magnitude };
        return Ok(Rat::new(signed, scale));
    }
    let int: BigInt = s.parse().map_err(|_| format!("bad integer {s:?}"))?;
    Ok(Rat::from_integer(int))
}

/// Renders a rational as `num/den` (or plain integer when den = 1).
pub fn rational_string(r: &Rat) -> String {
    r.to_string()
}
