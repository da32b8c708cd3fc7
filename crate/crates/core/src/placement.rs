//! Heuristic chain placement.
//!
//! Apps of a chain are placed in chain order. For each app every host is
//! ranked and the first one that passes [`check_partial`] is taken. When an
//! app finds no host the search backs up to earlier apps and tries their
//! next candidates, up to [`Placer::backtrack_limit`] undo steps. A chain is
//! placed completely or not at all.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::Serialize;

use crate::canonical::digest_of;
use crate::cost::{chain_cost, host_app_cost, CostBreakdown};
use crate::digest::Digest;
use crate::feasibility::check_partial;
use crate::model::{MeApp, Placement, ResourceWeights, SvcChain, UserDistribution, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementRequest {
    pub chain: SvcChain,
    pub dist: UserDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PlacementOutcome {
    Placed,
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementDecision {
    pub chain_id: String,
    pub assignments: Placement,
    pub cost: CostBreakdown,
    pub outcome: PlacementOutcome,
}

impl PlacementDecision {
    pub fn is_placed(&self) -> bool {
        self.outcome == PlacementOutcome::Placed
    }

    fn infeasible(chain_id: &str, reason: String) -> Self {
        PlacementDecision {
            chain_id: chain_id.into(),
            assignments: Placement::new(),
            cost: CostBreakdown::default(),
            outcome: PlacementOutcome::Infeasible(reason),
        }
    }
}

/// Primary ranking key for candidate hosts. Both policies continue with the
/// same secondary keys: hosts carrying the app's placed predecessors first,
/// then lower summed latency to the predecessors' hosts, then host id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RankingPolicy {
    /// Lower host cost of the app first (the owner's effective unit price
    /// for this chain's users), then larger owner user share.
    #[default]
    EffectiveCost,
    /// Larger owner user share first.
    UserShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Placer {
    pub policy: RankingPolicy,
    /// Maximum number of undo steps per chain. 0 gives plain first-fit: the
    /// chain fails as soon as one app has no feasible host.
    pub backtrack_limit: u64,
}

impl Default for Placer {
    fn default() -> Self {
        Placer { policy: RankingPolicy::EffectiveCost, backtrack_limit: Self::DEFAULT_BACKTRACK_LIMIT }
    }
}

const ALGORITHM_NAME: &str = "edgechain-placement";
const ALGORITHM_VERSION: u32 = 1;

// Relative resolution at which host costs are treated as equal when ranking.
const COST_QUANTUM: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, PartialOrd)]
struct RankKey<'a> {
    cost: i64,
    neg_share: f64,
    not_last_hop: bool,
    latency: f64,
    host: &'a str,
}

fn cmp_keys(a: &RankKey<'_>, b: &RankKey<'_>) -> Ordering {
    a.cost
        .cmp(&b.cost)
        .then(a.neg_share.total_cmp(&b.neg_share))
        .then(a.not_last_hop.cmp(&b.not_last_hop))
        .then(a.latency.total_cmp(&b.latency))
        .then(a.host.cmp(b.host))
}

fn quantize(costs: &[f64]) -> Vec<i64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = costs.iter().copied().fold(0.0, f64::max);
    let scale = if min > 0.0 {
        min
    } else if max > 0.0 {
        max
    } else {
        return costs.iter().map(|_| 0).collect();
    };
    costs.iter().map(|c| (c / scale * COST_QUANTUM + 0.5) as i64).collect()
}

impl Placer {
    pub const DEFAULT_BACKTRACK_LIMIT: u64 = 100_000;

    /// First-fit without backtracking.
    pub fn first_fit(policy: RankingPolicy) -> Self {
        Placer { policy, backtrack_limit: 0 }
    }

    /// Identifies the algorithm and its configuration. Validators that agree
    /// on this digest compute identical decisions from identical state.
    pub fn algorithm_digest(&self) -> Digest {
        #[derive(Serialize)]
        struct Id<'a> {
            name: &'a str,
            version: u32,
            placer: &'a Placer,
        }
        digest_of(&Id { name: ALGORITHM_NAME, version: ALGORITHM_VERSION, placer: self })
    }

    /// Every host of `world`, best candidate for `app` first.
    pub fn rank_hosts(&self, world: &WorldState, chain: &SvcChain, app: &MeApp, dist: &UserDistribution) -> Vec<String> {
        let weights: ResourceWeights = world.weights();
        let placement = world.placement();
        let pred_hosts: Vec<&str> = chain.predecessors(&app.id).filter_map(|l| placement.host_of(&l.src)).collect();
        let hosts: Vec<&str> = world.hosts().keys().map(String::as_str).collect();
        let costs: Vec<f64> = hosts
            .iter()
            .map(|h| world.owner_of(h).map_or(f64::INFINITY, |m| host_app_cost(app, m, dist, weights)))
            .collect();
        let quantized = match self.policy {
            RankingPolicy::EffectiveCost => quantize(&costs),
            RankingPolicy::UserShare => alloc::vec![0; hosts.len()],
        };
        let mut keys: Vec<RankKey<'_>> = hosts
            .iter()
            .zip(quantized)
            .map(|(&h, cost)| {
                let share = world.host(h).map_or(0.0, |mh| dist.share(&mh.owner));
                let latency = pred_hosts
                    .iter()
                    .map(|&p| {
                        if p == h {
                            0.0
                        } else {
                            world.link_between(p, h).map_or(f64::INFINITY, |l| l.latency_ms)
                        }
                    })
                    .sum();
                RankKey { cost, neg_share: -share, not_last_hop: !pred_hosts.contains(&h), latency, host: h }
            })
            .collect();
        keys.sort_by(cmp_keys);
        keys.into_iter().map(|k| String::from(k.host)).collect()
    }

    /// Places `app` on the first ranked host that passes the partial check.
    /// Returns the host, or `None` with `world` unchanged.
    pub fn place_app(
        &self,
        world: &mut WorldState,
        chain: &SvcChain,
        app: &MeApp,
        dist: &UserDistribution,
    ) -> Option<String> {
        self.candidates(world, chain, app, dist).into_iter().find(|h| world.apply_assignment(&app.id, h).is_ok())
    }

    fn candidates(&self, world: &WorldState, chain: &SvcChain, app: &MeApp, dist: &UserDistribution) -> Vec<String> {
        self.rank_hosts(world, chain, app, dist)
            .into_iter()
            .filter(|h| check_partial(world, chain, &app.id, h).is_ok_and(|v| v.is_empty()))
            .collect()
    }

    /// Places every app of the request's chain, registering the chain first
    /// if `world` does not know it. On failure `world` is left exactly as it
    /// was passed in.
    pub fn place_chain(&self, world: &mut WorldState, request: &PlacementRequest) -> PlacementDecision {
        let chain = &request.chain;
        let snapshot = world.clone();
        match world.chain(&chain.id) {
            Some(registered) if registered != chain => {
                return PlacementDecision::infeasible(&chain.id, "chain differs from the registered chain".into());
            }
            Some(_) => {}
            None => {
                if let Err(e) = world.register_chain(chain.clone()) {
                    return PlacementDecision::infeasible(&chain.id, format!("{e}"));
                }
            }
        }
        if let Some(a) = chain.apps.iter().find(|a| world.placement().contains(&a.id)) {
            *world = snapshot;
            return PlacementDecision::infeasible(&chain.id, format!("app {:?} is already placed", a.id));
        }

        match self.search(world, chain, &request.dist) {
            Ok(()) => {
                let assignments = world.placement().restricted_to(chain);
                let cost = chain_cost(world, chain, &assignments, &request.dist).expect("every app placed on a routable host");
                PlacementDecision { chain_id: chain.id.clone(), assignments, cost, outcome: PlacementOutcome::Placed }
            }
            Err(reason) => {
                *world = snapshot;
                PlacementDecision::infeasible(&chain.id, reason)
            }
        }
    }

    /// Depth-first search over ranked candidates. With no undo budget this
    /// is first-fit.
    fn search(&self, world: &mut WorldState, chain: &SvcChain, dist: &UserDistribution) -> Result<(), String> {
        let n = chain.apps.len();
        // Untried candidates per depth, stored reversed so `pop` yields the best.
        let mut stack: Vec<Vec<String>> = Vec::with_capacity(n);
        let mut undo_steps = 0u64;
        let mut deepest_failure: Option<usize> = None;
        if n == 0 {
            return Ok(());
        }
        let mut first = self.candidates(world, chain, &chain.apps[0], dist);
        first.reverse();
        stack.push(first);
        loop {
            let depth = stack.len() - 1;
            let app = &chain.apps[depth];
            match stack[depth].pop() {
                Some(host) => {
                    world.apply_assignment(&app.id, &host).expect("candidate passed the partial check");
                    if depth + 1 == n {
                        return Ok(());
                    }
                    let mut next = self.candidates(world, chain, &chain.apps[depth + 1], dist);
                    next.reverse();
                    stack.push(next);
                }
                None => {
                    if deepest_failure.is_none_or(|d| depth > d) {
                        deepest_failure = Some(depth);
                    }
                    stack.pop();
                    if stack.is_empty() {
                        break;
                    }
                    if undo_steps >= self.backtrack_limit {
                        let d = deepest_failure.expect("set above");
                        return Err(format!("no feasible host for app {:?}", chain.apps[d].id));
                    }
                    undo_steps += 1;
                    let prev = &chain.apps[stack.len() - 1];
                    world.remove_assignment(&prev.id).expect("placed during this search");
                }
            }
        }
        Err(format!("no feasible assignment for chain {:?}", chain.id))
    }

    /// Places the requests in [`processing_order`] on one evolving world.
    /// Decisions are returned in processing order.
    pub fn place_all(&self, world: &mut WorldState, requests: &[PlacementRequest]) -> Vec<PlacementDecision> {
        processing_order(requests, world.weights()).into_iter().map(|i| self.place_chain(world, &requests[i])).collect()
    }
}

/// Indices of `requests` by decreasing total weighted demand, ties by chain
/// id.
pub fn processing_order(requests: &[PlacementRequest], weights: ResourceWeights) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..requests.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ca, cb) = (&requests[a].chain, &requests[b].chain);
        cb.weighted_demand(weights).total_cmp(&ca.weighted_demand(weights)).then_with(|| ca.id.cmp(&cb.id))
    });
    idx
}
