//! Coupling-towards-the-past (CTTP) marginal samplers for hypergraph
//! independent sets and proper colourings, derandomised by exhaustive
//! enumeration of their random choices and assembled into certified
//! partition-function estimates via self-reduction.
//!
//! The crate is organised around a small generic engine:
//!
//! * [`model`]: hypergraph instances and the `.hg` interchange format;
//! * [`core`]: scan clock, randomness tapes, exact finite distributions,
//!   the random-source abstraction, and the model-agnostic backward
//!   resolver with its truncated variant;
//! * [`indset`]: the independent-set instantiation and the
//!   vertex-decomposition counter;
//! * [`colouring`]: the projected-colouring instantiation and the
//!   edge-decomposition counter;
//! * [`derandomise`]: exhaustive decision-tree enumeration of any
//!   tape-driven sampler, plus certified interval assembly;
//! * [`randomscan`]: witness-tree derandomisation of random-scan dynamics;
//! * [`oracle`]: exact brute-force counters, marginals, and a forward
//!   chain simulator used to cross-check everything at desk scale;
//! * [`verify`]: named invariant suites backing the CLI's verify command.
//!
//! All certified arithmetic is exact (big rationals); floating point only
//! appears in opt-in Monte Carlo summaries.

pub mod colouring;
pub mod core;
pub mod derandomise;
pub mod indset;
pub mod model;
pub mod oracle;
pub mod randomscan;
pub mod verify;
