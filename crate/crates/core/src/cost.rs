//! Pricing and latency of a placed service chain.
//!
//! Host cost of an app on a host of provider `m`:
//!
//! ```text
//! n_s * (w_cpu*C_v + w_mem*M_v) * (gamma_m + (1 - P_m) * delta_m)
//! ```
//!
//! Host-link unit price: `(applinks / max_virtual_links) * (used_bw / capacity)`.
//!
//! AppLink cost between hosts of providers `i` and `j`, with own-user
//! fraction `F` (`P_i + P_j`, or `P_m` once when both hosts share an owner):
//!
//! ```text
//! n_s * zeta * (F*kappa + (1 - F)*(kappa + sigma))
//! ```
//!
//! where `kappa`, `sigma` are the means of the two providers' values.

use serde::Serialize;

use crate::model::{AppLink, HostLink, LinkUsage, MeApp, Mecsp, Placement, ResourceWeights, SvcChain, UserDistribution, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostBreakdown {
    pub host_cost: f64,
    pub link_cost: f64,
    pub total: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPricing {
    pub kappa: f64,
    pub sigma: f64,
}

/// Whether the link unit price counts an AppLink that is about to be placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaMode {
    /// Price the link as it stands; used to audit existing placements.
    AsIs,
    /// Include the AppLink being costed; used for candidate placements.
    Prospective,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("app {0:?} has no assignment")]
    Unplaced(alloc::string::String),
    #[error("no host link between {a:?} and {b:?}")]
    NoRoute { a: alloc::string::String, b: alloc::string::String },
    #[error("host {0:?} or its owner is unknown")]
    UnknownHost(alloc::string::String),
}

/// Unit price of a provider's resources for a chain with the given users.
pub fn effective_unit_price(owner: &Mecsp, dist: &UserDistribution) -> f64 {
    owner.gamma + (1.0 - dist.share(&owner.id)) * owner.delta
}

pub fn host_app_cost(app: &MeApp, owner: &Mecsp, dist: &UserDistribution, weights: ResourceWeights) -> f64 {
    dist.total_users() as f64 * weights.weigh(app.cpu_demand, app.mem_demand) * effective_unit_price(owner, dist)
}

/// Unit price of a host link, optionally including one more AppLink of
/// `prospective` Mbps.
pub fn link_unit_price(link: &HostLink, usage: LinkUsage, prospective: Option<u64>) -> f64 {
    let (count, bw) = match prospective {
        Some(extra) => (usage.applink_count + 1, usage.used_bandwidth + extra),
        None => (usage.applink_count, usage.used_bandwidth),
    };
    let zeta = (f64::from(count) / f64::from(link.max_virtual_links)) * (bw as f64 / link.bandwidth_capacity as f64);
    zeta.min(1.0)
}

pub fn pair_pricing(a: &Mecsp, b: &Mecsp) -> PairPricing {
    if a.id == b.id {
        return PairPricing { kappa: a.kappa, sigma: a.sigma };
    }
    PairPricing { kappa: (a.kappa + b.kappa) / 2.0, sigma: (a.sigma + b.sigma) / 2.0 }
}

/// Fraction of the chain's users that subscribe to a provider owning one of
/// the two hosts, clamped to `[0, 1]`.
pub fn own_user_fraction(a: &Mecsp, b: &Mecsp, dist: &UserDistribution) -> f64 {
    let f = if a.id == b.id { dist.share(&a.id) } else { dist.share(&a.id) + dist.share(&b.id) };
    f.clamp(0.0, 1.0)
}

/// The pairwise link cost formula for a given unit price.
pub fn link_cost_with_zeta(zeta: f64, a: &Mecsp, b: &Mecsp, dist: &UserDistribution) -> f64 {
    let pricing = pair_pricing(a, b);
    let f = own_user_fraction(a, b, dist);
    dist.total_users() as f64 * zeta * (f * pricing.kappa + (1.0 - f) * (pricing.kappa + pricing.sigma))
}

/// Cost of `app_link` with its endpoints on `host_a` and `host_b`.
pub fn link_cost(
    world: &WorldState,
    app_link: &AppLink,
    host_a: &str,
    host_b: &str,
    dist: &UserDistribution,
    mode: ZetaMode,
) -> Result<f64, CostError> {
    let owner_a = world.owner_of(host_a).ok_or_else(|| CostError::UnknownHost(host_a.into()))?;
    let owner_b = world.owner_of(host_b).ok_or_else(|| CostError::UnknownHost(host_b.into()))?;
    if host_a == host_b {
        return Ok(0.0);
    }
    let link = world
        .link_between(host_a, host_b)
        .ok_or_else(|| CostError::NoRoute { a: host_a.into(), b: host_b.into() })?;
    let usage = world.link_usage().get(&link.id).copied().unwrap_or_default();
    let prospective = match mode {
        ZetaMode::AsIs => None,
        ZetaMode::Prospective => Some(app_link.bandwidth_demand),
    };
    let zeta = link_unit_price(link, usage, prospective);
    Ok(link_cost_with_zeta(zeta, owner_a, owner_b, dist))
}

fn hosts_of<'a>(link: &AppLink, placement: &'a Placement) -> Result<(&'a str, &'a str), CostError> {
    let a = placement.host_of(&link.src).ok_or_else(|| CostError::Unplaced(link.src.clone()))?;
    let b = placement.host_of(&link.dst).ok_or_else(|| CostError::Unplaced(link.dst.clone()))?;
    Ok((a, b))
}

/// Sum of host-link latencies over the chain's AppLinks; co-located hops
/// contribute nothing.
pub fn chain_latency(world: &WorldState, chain: &SvcChain, placement: &Placement) -> Result<f64, CostError> {
    if let Some(app) = chain.apps.iter().find(|a| !placement.contains(&a.id)) {
        return Err(CostError::Unplaced(app.id.clone()));
    }
    let mut total = 0.0;
    for link in &chain.links {
        let (a, b) = hosts_of(link, placement)?;
        if a == b {
            continue;
        }
        let hl = world.link_between(a, b).ok_or_else(|| CostError::NoRoute { a: a.into(), b: b.into() })?;
        total += hl.latency_ms;
    }
    Ok(total)
}

/// Evaluates the placement objective for `chain`. Link unit prices are read
/// from `world` as-is, so `world` should already reflect `placement`.
pub fn chain_cost(
    world: &WorldState,
    chain: &SvcChain,
    placement: &Placement,
    dist: &UserDistribution,
) -> Result<CostBreakdown, CostError> {
    let latency_ms = chain_latency(world, chain, placement)?;
    let weights = world.weights();
    let mut host_cost = 0.0;
    for app in &chain.apps {
        let host = placement.host_of(&app.id).ok_or_else(|| CostError::Unplaced(app.id.clone()))?;
        let owner = world.owner_of(host).ok_or_else(|| CostError::UnknownHost(host.into()))?;
        host_cost += host_app_cost(app, owner, dist, weights);
    }
    let mut link_total = 0.0;
    for link in &chain.links {
        let (a, b) = hosts_of(link, placement)?;
        link_total += link_cost(world, link, a, b, dist, ZetaMode::AsIs)?;
    }
    Ok(CostBreakdown { host_cost, link_cost: link_total, total: host_cost + link_total, latency_ms })
}
