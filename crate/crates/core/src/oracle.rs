//! Exhaustive search for the cheapest feasible placement of one chain.
//!
//! Every mapping of apps to hosts is enumerated in lexicographic order of
//! the assignment vector (first app most significant, hosts by id). Each
//! candidate is checked from scratch with [`check_placement`] and, when
//! feasible, costed on a scratch copy of the world. Only a strictly cheaper
//! candidate replaces the incumbent, so ties go to the lexicographically
//! smallest vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cost::{chain_cost, CostBreakdown};
use crate::feasibility::check_placement;
use crate::model::{ModelError, Placement, SvcChain, UserDistribution, WorldState};

pub const DEFAULT_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: Option<Placement>,
    pub best_cost: CostBreakdown,
    pub evaluated: u64,
    pub feasible_count: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("{candidates} candidate placements exceed the limit of {limit}")]
    TooLarge { candidates: u64, limit: u64 },
    #[error("app {0:?} is already placed")]
    AlreadyPlaced(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Number of candidate placements, saturating at `u64::MAX`.
pub fn candidate_count(hosts: usize, apps: usize) -> u64 {
    let mut n: u64 = 1;
    for _ in 0..apps {
        n = n.saturating_mul(hosts as u64);
    }
    n
}

/// Finds the cheapest feasible placement of `chain` given the apps already
/// placed in `world`. `world` itself is not modified.
pub fn solve_exact(
    world: &WorldState,
    chain: &SvcChain,
    dist: &UserDistribution,
    limit: u64,
) -> Result<OracleResult, OracleError> {
    let hosts: Vec<&str> = world.hosts().keys().map(String::as_str).collect();
    let n = chain.apps.len();
    let candidates = candidate_count(hosts.len(), n);
    if candidates > limit {
        return Err(OracleError::TooLarge { candidates, limit });
    }
    let mut base = world.clone();
    if base.chain(&chain.id).is_none() {
        base.register_chain(chain.clone())?;
    }
    if let Some(a) = chain.apps.iter().find(|a| base.placement().contains(&a.id)) {
        return Err(OracleError::AlreadyPlaced(a.id.clone()));
    }

    let mut result = OracleResult { best: None, best_cost: CostBreakdown::default(), evaluated: 0, feasible_count: 0 };
    if candidates == 0 {
        return Ok(result);
    }
    let mut digits = vec![0usize; n];
    loop {
        let mut merged = base.placement().clone();
        for (a, &d) in chain.apps.iter().zip(&digits) {
            merged.insert(a.id.clone(), hosts[d]);
        }
        result.evaluated += 1;
        let violations = check_placement(&base, &merged, &[chain]).expect("candidate covers every app");
        if violations.is_empty() {
            result.feasible_count += 1;
            let mut scratch = base.clone();
            for (a, &d) in chain.apps.iter().zip(&digits) {
                scratch.apply_assignment(&a.id, hosts[d]).expect("feasible candidate applies cleanly");
            }
            let own = scratch.placement().restricted_to(chain);
            let cost = chain_cost(&scratch, chain, &own, dist).expect("feasible candidate is routable");
            if result.best.is_none() || cost.total < result.best_cost.total {
                result.best = Some(own);
                result.best_cost = cost;
            }
        }
        // odometer step, last app fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(result);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < hosts.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}
