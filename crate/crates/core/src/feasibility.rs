//! Capacity, bandwidth and latency constraints.
//!
//! [`check_placement`] evaluates a complete placement from scratch;
//! [`check_partial`] evaluates one more app against the world's current
//! occupancy while a chain is being placed.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::model::{Placement, SvcChain, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ViolationKind {
    Bandwidth,
    VirtualLinks,
    Cpu,
    Memory,
    Latency,
    NoRoute,
}

/// One breached bound. `margin` is the amount by which it is exceeded
/// (resource units or ms); for `NoRoute` it counts the unroutable AppLinks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeasibilityError {
    #[error("app {0:?} has no assignment")]
    Unplaced(String),
    #[error("placement references unknown app {0:?}")]
    UnknownApp(String),
    #[error("placement references unknown host {0:?}")]
    UnknownHost(String),
}

fn over(kind: ViolationKind, subject: &str, used: f64, bound: f64) -> Option<Violation> {
    (used > bound).then(|| Violation { kind, subject: subject.into(), margin: used - bound })
}

/// Checks every host, every host link and the latency of each of `chains`
/// against `placement`.
///
/// Occupancy is recomputed from `placement` over the apps of the world's
/// registered chains plus `chains`, independent of the world's incremental
/// bookkeeping. Only the substrate of `world` is consulted.
pub fn check_placement(
    world: &WorldState,
    placement: &Placement,
    chains: &[&SvcChain],
) -> Result<Vec<Violation>, FeasibilityError> {
    let mut known: BTreeMap<&str, &SvcChain> = world.chains().iter().map(|(k, v)| (k.as_str(), v)).collect();
    for c in chains {
        known.insert(&c.id, c);
    }
    for c in chains {
        if let Some(a) = c.apps.iter().find(|a| !placement.contains(&a.id)) {
            return Err(FeasibilityError::Unplaced(a.id.clone()));
        }
    }
    let apps: BTreeMap<&str, (u64, u64)> =
        known.values().flat_map(|c| c.apps.iter()).map(|a| (a.id.as_str(), (a.cpu_demand, a.mem_demand))).collect();

    let mut cpu: BTreeMap<&str, u64> = BTreeMap::new();
    let mut mem: BTreeMap<&str, u64> = BTreeMap::new();
    for (app, host) in placement.iter() {
        let &(c, m) = apps.get(app).ok_or_else(|| FeasibilityError::UnknownApp(app.into()))?;
        if world.host(host).is_none() {
            return Err(FeasibilityError::UnknownHost(host.into()));
        }
        *cpu.entry(host).or_default() += c;
        *mem.entry(host).or_default() += m;
    }

    let mut violations = Vec::new();
    let mut link_count: BTreeMap<&str, u64> = BTreeMap::new();
    let mut link_bw: BTreeMap<&str, u64> = BTreeMap::new();
    let mut unroutable = Vec::new();
    for chain in known.values() {
        for l in &chain.links {
            let (Some(a), Some(b)) = (placement.host_of(&l.src), placement.host_of(&l.dst)) else { continue };
            if a == b {
                continue;
            }
            match world.link_between(a, b) {
                Some(hl) => {
                    *link_count.entry(&hl.id).or_default() += 1;
                    *link_bw.entry(&hl.id).or_default() += l.bandwidth_demand;
                }
                None => unroutable.push(format!("{}->{}", l.src, l.dst)),
            }
        }
    }

    for (id, h) in world.hosts() {
        let c = cpu.get(id.as_str()).copied().unwrap_or(0);
        let m = mem.get(id.as_str()).copied().unwrap_or(0);
        violations.extend(over(ViolationKind::Cpu, id, c as f64, h.cpu_capacity as f64));
        violations.extend(over(ViolationKind::Memory, id, m as f64, h.mem_capacity as f64));
    }
    for (id, l) in world.host_links() {
        let bw = link_bw.get(id.as_str()).copied().unwrap_or(0);
        let n = link_count.get(id.as_str()).copied().unwrap_or(0);
        violations.extend(over(ViolationKind::Bandwidth, id, bw as f64, l.bandwidth_capacity as f64));
        violations.extend(over(ViolationKind::VirtualLinks, id, n as f64, f64::from(l.max_virtual_links)));
    }
    for subject in unroutable {
        violations.push(Violation { kind: ViolationKind::NoRoute, subject, margin: 1.0 });
    }
    for chain in chains {
        let mut latency = 0.0;
        for l in &chain.links {
            let (a, b) = (placement.host_of(&l.src).expect("checked"), placement.host_of(&l.dst).expect("checked"));
            if a != b {
                if let Some(hl) = world.link_between(a, b) {
                    latency += hl.latency_ms;
                }
            }
        }
        violations.extend(over(ViolationKind::Latency, &chain.id, latency, chain.max_latency_ms));
        for a in &chain.apps {
            if let Some(budget) = a.max_latency_ms {
                let incoming = incoming_latency(world, chain, &a.id, |x| placement.host_of(x));
                violations.extend(over(ViolationKind::Latency, &a.id, incoming, budget));
            }
        }
    }
    Ok(violations)
}

/// Latency of the hops into `app` whose endpoints are both assigned by
/// `host_of`.
fn incoming_latency<'a>(world: &WorldState, chain: &SvcChain, app: &str, host_of: impl Fn(&str) -> Option<&'a str>) -> f64 {
    let mut total = 0.0;
    for l in chain.predecessors(app) {
        if let (Some(a), Some(b)) = (host_of(&l.src), host_of(&l.dst)) {
            if a != b {
                if let Some(hl) = world.link_between(a, b) {
                    total += hl.latency_ms;
                }
            }
        }
    }
    total
}

/// Latency of the chain's AppLinks whose endpoints are both placed.
pub fn placed_latency(world: &WorldState, chain: &SvcChain) -> f64 {
    let p = world.placement();
    let mut total = 0.0;
    for l in &chain.links {
        if let (Some(a), Some(b)) = (p.host_of(&l.src), p.host_of(&l.dst)) {
            if a != b {
                if let Some(hl) = world.link_between(a, b) {
                    total += hl.latency_ms;
                }
            }
        }
    }
    total
}

/// Checks placing `app` of `chain` on `host`, given the apps already placed
/// in `world`: host headroom, headroom of the host links the new AppLinks
/// would use, the chain's cumulative latency and the app's own hop budget.
pub fn check_partial(
    world: &WorldState,
    chain: &SvcChain,
    app: &str,
    host: &str,
) -> Result<Vec<Violation>, FeasibilityError> {
    let a = chain.app(app).ok_or_else(|| FeasibilityError::UnknownApp(app.into()))?;
    let h = world.host(host).ok_or_else(|| FeasibilityError::UnknownHost(host.into()))?;
    let usage = world.host_usage().get(host).copied().unwrap_or_default();
    let mut violations = Vec::new();
    violations.extend(over(ViolationKind::Cpu, host, (usage.cpu_used + a.cpu_demand) as f64, h.cpu_capacity as f64));
    violations.extend(over(ViolationKind::Memory, host, (usage.mem_used + a.mem_demand) as f64, h.mem_capacity as f64));

    let placement = world.placement();
    let mut deltas: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut added_latency = 0.0;
    for (link, peer) in chain.links_of(app) {
        let Some(peer_host) = placement.host_of(peer) else { continue };
        if peer_host == host {
            continue;
        }
        match world.link_between(host, peer_host) {
            Some(hl) => {
                let d = deltas.entry(&hl.id).or_default();
                d.0 += 1;
                d.1 += link.bandwidth_demand;
                added_latency += hl.latency_ms;
            }
            None => violations.push(Violation {
                kind: ViolationKind::NoRoute,
                subject: format!("{}->{}", link.src, link.dst),
                margin: 1.0,
            }),
        }
    }
    for (id, (count, bw)) in deltas {
        let l = world.link(id).expect("indexed link exists");
        let u = world.link_usage().get(id).copied().unwrap_or_default();
        violations.extend(over(ViolationKind::Bandwidth, id, (u.used_bandwidth + bw) as f64, l.bandwidth_capacity as f64));
        violations.extend(over(
            ViolationKind::VirtualLinks,
            id,
            (u64::from(u.applink_count) + count) as f64,
            f64::from(l.max_virtual_links),
        ));
    }
    let latency = placed_latency(world, chain) + added_latency;
    violations.extend(over(ViolationKind::Latency, &chain.id, latency, chain.max_latency_ms));
    // The new hops are incoming either to `app` or to a successor of it.
    let host_of = |x: &str| if x == app { Some(host) } else { placement.host_of(x) };
    let touched = core::iter::once(app).chain(chain.links.iter().filter(|l| l.src == app).map(|l| l.dst.as_str()));
    for target in touched {
        let Some(budget) = chain.app(target).and_then(|t| t.max_latency_ms) else { continue };
        if target != app && !placement.contains(target) {
            continue;
        }
        let incoming = incoming_latency(world, chain, target, host_of);
        violations.extend(over(ViolationKind::Latency, target, incoming, budget));
    }
    Ok(violations)
}
