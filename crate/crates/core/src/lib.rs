//! Placement of chained edge applications across hosts owned by competing
//! edge providers.
//!
//! The crate is I/O-free and `no_std` (it needs `alloc`). It contains:
//!
//! - [`model`]: providers, hosts, host links, service chains and the
//!   [`WorldState`] that tracks remaining capacity and link occupancy.
//! - [`cost`]: host cost, link unit price, pairwise link cost, chain latency
//!   and the chain cost objective.
//! - [`feasibility`]: capacity, bandwidth and latency constraint checks.
//! - [`placement`]: the ranked first-fit placement heuristic.
//! - [`oracle`]: exhaustive enumeration of every assignment of one chain.
//! - [`ledger`]: hash-chained blocks recording entities and placement
//!   transactions, with tamper detection and deterministic replay.
//! - [`consensus`]: validators that independently run the heuristic and
//!   commit a decision only on strict-majority agreement.
//!
//! File formats, scenario configs and the command-line driver live in the
//! `edgechain-sim` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod canonical;
pub mod consensus;
pub mod cost;
pub mod digest;
pub mod feasibility;
pub mod ledger;
pub mod model;
pub mod oracle;
pub mod placement;

pub use consensus::{audit_round, run_round, AuditReport, ConsensusError, ConsensusOutcome, Validator};
pub use cost::{chain_cost, chain_latency, CostBreakdown, PairPricing};
pub use digest::Digest;
pub use feasibility::{check_partial, check_placement, Violation, ViolationKind};
pub use ledger::{verify_chain, Block, ChainStatus, Ledger, LedgerError};
pub use model::{
    AppLink, HostLink, MeApp, MeHost, Mecsp, ModelError, Placement, ResourceWeights, SvcChain,
    UserDistribution, WorldParams, WorldState,
};
pub use oracle::{solve_exact, OracleError, OracleResult};
pub use placement::{
    PlacementDecision, PlacementOutcome, PlacementRequest, Placer, RankingPolicy,
};
