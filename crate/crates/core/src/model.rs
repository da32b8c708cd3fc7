//! Domain entities and the world state shared by every other module.
//!
//! A [`WorldState`] holds the substrate (providers, hosts, host links), the
//! registered service chains, the current app-to-host [`Placement`] and the
//! derived occupancy of hosts and links. Every mutator validates first and
//! then commits, so a failed call leaves the state untouched.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{decimal, decimal_opt};

/// Edge computing service provider and its price list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mecsp {
    pub id: String,
    /// Unit resource price when serving the provider's own subscribers.
    #[serde(with = "decimal")]
    pub gamma: f64,
    /// Unit resource premium charged for serving other providers' users.
    #[serde(with = "decimal")]
    pub delta: f64,
    /// Bandwidth base unit price.
    #[serde(with = "decimal")]
    pub kappa: f64,
    /// Bandwidth premium.
    #[serde(with = "decimal")]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeHost {
    pub id: String,
    pub owner: String,
    /// vCPUs.
    pub cpu_capacity: u64,
    /// Memory in MB.
    pub mem_capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostLink {
    pub id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    /// Mbps.
    pub bandwidth_capacity: u64,
    #[serde(with = "decimal")]
    pub latency_ms: f64,
    pub max_virtual_links: u32,
}

impl HostLink {
    pub const DEFAULT_MAX_VIRTUAL_LINKS: u32 = 100;

    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.endpoint_a == a && self.endpoint_b == b) || (self.endpoint_a == b && self.endpoint_b == a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeApp {
    pub id: String,
    pub vendor: String,
    pub cpu_demand: u64,
    pub mem_demand: u64,
    /// Optional budget for the hop into this app. `None` leaves only the
    /// chain-level budget in force.
    #[serde(with = "decimal_opt", default, skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppLink {
    pub src: String,
    pub dst: String,
    /// Mbps.
    pub bandwidth_demand: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcChain {
    pub id: String,
    /// Apps in chain order.
    pub apps: Vec<MeApp>,
    pub links: Vec<AppLink>,
    pub max_latency_ms: f64,
    pub requested_by: String,
}

impl SvcChain {
    /// Builds a linear chain `apps[0] -> apps[1] -> ...` with one AppLink of
    /// `bandwidth` Mbps per hop.
    pub fn linear(
        id: impl Into<String>,
        apps: Vec<MeApp>,
        bandwidth: u64,
        max_latency_ms: f64,
        requested_by: impl Into<String>,
    ) -> Self {
        let links = apps
            .windows(2)
            .map(|w| AppLink { src: w[0].id.clone(), dst: w[1].id.clone(), bandwidth_demand: bandwidth })
            .collect();
        SvcChain { id: id.into(), apps, links, max_latency_ms, requested_by: requested_by.into() }
    }

    pub fn app(&self, id: &str) -> Option<&MeApp> {
        self.apps.iter().find(|a| a.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.apps.iter().position(|a| a.id == id)
    }

    /// AppLinks with `app` as either endpoint, paired with the other endpoint.
    pub fn links_of<'a>(&'a self, app: &'a str) -> impl Iterator<Item = (&'a AppLink, &'a str)> + 'a {
        self.links.iter().filter_map(move |l| {
            if l.src == app {
                Some((l, l.dst.as_str()))
            } else if l.dst == app {
                Some((l, l.src.as_str()))
            } else {
                None
            }
        })
    }

    pub fn predecessors<'a>(&'a self, app: &'a str) -> impl Iterator<Item = &'a AppLink> + 'a {
        self.links.iter().filter(move |l| l.dst == app)
    }

    pub fn weighted_demand(&self, weights: ResourceWeights) -> f64 {
        self.apps.iter().map(|a| weights.weigh(a.cpu_demand, a.mem_demand)).sum()
    }
}

/// Number of users requesting a chain and the fraction subscribed to each
/// provider. Providers without an entry have share 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDistribution {
    total_users: u64,
    shares: BTreeMap<String, f64>,
}

impl UserDistribution {
    pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(total_users: u64, shares: BTreeMap<String, f64>) -> Result<Self, ModelError> {
        if total_users == 0 {
            return Err(ModelError::InvalidValue { subject: "user_distribution".into(), what: "total_users must be positive" });
        }
        let mut sum = 0.0;
        for (m, &p) in &shares {
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidValue { subject: m.clone(), what: "share must lie in [0, 1]" });
            }
            sum += p;
        }
        if sum > 1.0 + Self::SHARE_SUM_TOLERANCE {
            return Err(ModelError::InvalidValue { subject: "user_distribution".into(), what: "shares sum above 1" });
        }
        Ok(UserDistribution { total_users, shares })
    }

    pub fn total_users(&self) -> u64 {
        self.total_users
    }

    pub fn share(&self, mecsp: &str) -> f64 {
        self.shares.get(mecsp).copied().unwrap_or(0.0)
    }

    pub fn shares(&self) -> &BTreeMap<String, f64> {
        &self.shares
    }
}

/// Weights applied when adding vCPUs to MB in the host cost. `(1, 1)` adds
/// the raw numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceWeights {
    pub cpu: f64,
    pub mem: f64,
}

impl Default for ResourceWeights {
    fn default() -> Self {
        ResourceWeights { cpu: 1.0, mem: 1.0 }
    }
}

impl ResourceWeights {
    pub fn weigh(&self, cpu: u64, mem: u64) -> f64 {
        self.cpu * cpu as f64 + self.mem * mem as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldParams {
    pub weights: ResourceWeights,
}

/// App id to host id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Placement(BTreeMap<String, String>);

impl Placement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host_of(&self, app: &str) -> Option<&str> {
        self.0.get(app).map(String::as_str)
    }

    pub fn contains(&self, app: &str) -> bool {
        self.0.contains_key(app)
    }

    /// Returns the previous host if `app` was already assigned.
    pub fn insert(&mut self, app: impl Into<String>, host: impl Into<String>) -> Option<String> {
        self.0.insert(app.into(), host.into())
    }

    pub fn remove(&mut self, app: &str) -> Option<String> {
        self.0.remove(app)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(a, h)| (a.as_str(), h.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Assignments restricted to the apps of `chain`.
    pub fn restricted_to(&self, chain: &SvcChain) -> Placement {
        Placement(
            chain
                .apps
                .iter()
                .filter_map(|a| self.0.get(&a.id).map(|h| (a.id.clone(), h.clone())))
                .collect(),
        )
    }
}

impl<A: Into<String>, H: Into<String>> FromIterator<(A, H)> for Placement {
    fn from_iter<I: IntoIterator<Item = (A, H)>>(iter: I) -> Self {
        Placement(iter.into_iter().map(|(a, h)| (a.into(), h.into())).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HostUsage {
    pub cpu_used: u64,
    pub mem_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkUsage {
    pub applink_count: u32,
    pub used_bandwidth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Cpu,
    Memory,
    Bandwidth,
    VirtualLinks,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Memory => "memory",
            Resource::Bandwidth => "bandwidth",
            Resource::VirtualLinks => "virtual links",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityKind {
    Mecsp,
    MeHost,
    HostLink,
    SvcChain,
    MeApp,
    AppLink,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Mecsp => "MECSP",
            EntityKind::MeHost => "MEHost",
            EntityKind::HostLink => "HostLink",
            EntityKind::SvcChain => "SvcChain",
            EntityKind::MeApp => "MEApp",
            EntityKind::AppLink => "AppLink",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: EntityKind, id: String },
    #[error("{kind} {id:?} references missing {missing:?}")]
    DanglingReference { kind: EntityKind, id: String, missing: String },
    #[error("hosts {a:?} and {b:?} already share a link")]
    DuplicateLink { a: String, b: String },
    #[error("invalid value for {subject:?}: {what}")]
    InvalidValue { subject: String, what: &'static str },
    #[error("{resource} capacity exceeded on {subject:?}: requested {requested}, available {available}")]
    CapacityExceeded { resource: Resource, subject: String, requested: u64, available: u64 },
    #[error("no host link between {a:?} and {b:?}")]
    NoRoute { a: String, b: String },
    #[error("app {0:?} is already placed")]
    AlreadyPlaced(String),
    #[error("app {0:?} is not placed")]
    NotPlaced(String),
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("unknown host {0:?}")]
    UnknownHost(String),
    #[error("unknown {kind} {id:?}")]
    Unknown { kind: EntityKind, id: String },
    #[error("{kind} {id:?} is still in use")]
    InUse { kind: EntityKind, id: String },
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.into(), b.into())
    } else {
        (b.into(), a.into())
    }
}

/// The substrate, the registered chains and their current placement.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldState {
    params: WorldParams,
    mecsps: BTreeMap<String, Mecsp>,
    hosts: BTreeMap<String, MeHost>,
    links: BTreeMap<String, HostLink>,
    link_index: BTreeMap<(String, String), String>,
    chains: BTreeMap<String, SvcChain>,
    app_index: BTreeMap<String, String>,
    placement: Placement,
    host_usage: BTreeMap<String, HostUsage>,
    link_usage: BTreeMap<String, LinkUsage>,
}

impl WorldState {
    pub fn new(params: WorldParams) -> Self {
        WorldState { params, ..Default::default() }
    }

    /// Builds a world with an empty placement from a substrate description.
    pub fn from_substrate(
        params: WorldParams,
        mecsps: impl IntoIterator<Item = Mecsp>,
        hosts: impl IntoIterator<Item = MeHost>,
        links: impl IntoIterator<Item = HostLink>,
    ) -> Result<Self, ModelError> {
        let mut world = WorldState::new(params);
        for m in mecsps {
            world.add_mecsp(m)?;
        }
        for h in hosts {
            world.add_host(h)?;
        }
        for l in links {
            world.add_link(l)?;
        }
        Ok(world)
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn weights(&self) -> ResourceWeights {
        self.params.weights
    }

    pub fn mecsps(&self) -> &BTreeMap<String, Mecsp> {
        &self.mecsps
    }

    pub fn hosts(&self) -> &BTreeMap<String, MeHost> {
        &self.hosts
    }

    pub fn host_links(&self) -> &BTreeMap<String, HostLink> {
        &self.links
    }

    pub fn chains(&self) -> &BTreeMap<String, SvcChain> {
        &self.chains
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn link_usage(&self) -> &BTreeMap<String, LinkUsage> {
        &self.link_usage
    }

    pub fn host_usage(&self) -> &BTreeMap<String, HostUsage> {
        &self.host_usage
    }

    pub fn mecsp(&self, id: &str) -> Option<&Mecsp> {
        self.mecsps.get(id)
    }

    pub fn host(&self, id: &str) -> Option<&MeHost> {
        self.hosts.get(id)
    }

    pub fn owner_of(&self, host: &str) -> Option<&Mecsp> {
        self.hosts.get(host).and_then(|h| self.mecsps.get(&h.owner))
    }

    pub fn link(&self, id: &str) -> Option<&HostLink> {
        self.links.get(id)
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&HostLink> {
        self.link_index.get(&pair_key(a, b)).and_then(|id| self.links.get(id))
    }

    pub fn chain(&self, id: &str) -> Option<&SvcChain> {
        self.chains.get(id)
    }

    pub fn chain_of_app(&self, app: &str) -> Option<&SvcChain> {
        self.app_index.get(app).and_then(|c| self.chains.get(c))
    }

    pub fn app(&self, id: &str) -> Option<&MeApp> {
        self.chain_of_app(id).and_then(|c| c.app(id))
    }

    /// Remaining `(cpu, mem)` of a host.
    pub fn remaining(&self, host: &str) -> Option<(u64, u64)> {
        let h = self.hosts.get(host)?;
        let u = self.host_usage.get(host).copied().unwrap_or_default();
        Some((h.cpu_capacity - u.cpu_used, h.mem_capacity - u.mem_used))
    }

    /// Hosts grouped by owning provider.
    pub fn hosts_by_owner(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for h in self.hosts.values() {
            out.entry(h.owner.as_str()).or_default().push(h.id.as_str());
        }
        out
    }

    pub fn add_mecsp(&mut self, m: Mecsp) -> Result<(), ModelError> {
        validate_mecsp(&m)?;
        if self.mecsps.contains_key(&m.id) {
            return Err(ModelError::DuplicateId { kind: EntityKind::Mecsp, id: m.id });
        }
        self.mecsps.insert(m.id.clone(), m);
        Ok(())
    }

    pub fn update_mecsp(&mut self, m: Mecsp) -> Result<(), ModelError> {
        validate_mecsp(&m)?;
        match self.mecsps.get_mut(&m.id) {
            Some(slot) => {
                *slot = m;
                Ok(())
            }
            None => Err(ModelError::Unknown { kind: EntityKind::Mecsp, id: m.id }),
        }
    }

    pub fn remove_mecsp(&mut self, id: &str) -> Result<Mecsp, ModelError> {
        if !self.mecsps.contains_key(id) {
            return Err(ModelError::Unknown { kind: EntityKind::Mecsp, id: id.into() });
        }
        if self.hosts.values().any(|h| h.owner == id) {
            return Err(ModelError::InUse { kind: EntityKind::Mecsp, id: id.into() });
        }
        Ok(self.mecsps.remove(id).expect("checked above"))
    }

    pub fn add_host(&mut self, h: MeHost) -> Result<(), ModelError> {
        self.validate_host(&h)?;
        if self.hosts.contains_key(&h.id) {
            return Err(ModelError::DuplicateId { kind: EntityKind::MeHost, id: h.id });
        }
        self.host_usage.insert(h.id.clone(), HostUsage::default());
        self.hosts.insert(h.id.clone(), h);
        Ok(())
    }

    /// Replaces a host's owner or capacities. Capacities may not drop below
    /// current usage.
    pub fn update_host(&mut self, h: MeHost) -> Result<(), ModelError> {
        self.validate_host(&h)?;
        let usage = match self.host_usage.get(&h.id) {
            Some(u) => *u,
            None => return Err(ModelError::Unknown { kind: EntityKind::MeHost, id: h.id }),
        };
        if usage.cpu_used > h.cpu_capacity {
            return Err(ModelError::InUse { kind: EntityKind::MeHost, id: h.id });
        }
        if usage.mem_used > h.mem_capacity {
            return Err(ModelError::InUse { kind: EntityKind::MeHost, id: h.id });
        }
        self.hosts.insert(h.id.clone(), h);
        Ok(())
    }

    pub fn remove_host(&mut self, id: &str) -> Result<MeHost, ModelError> {
        if !self.hosts.contains_key(id) {
            return Err(ModelError::Unknown { kind: EntityKind::MeHost, id: id.into() });
        }
        let busy = self.placement.iter().any(|(_, h)| h == id)
            || self.links.values().any(|l| l.endpoint_a == id || l.endpoint_b == id);
        if busy {
            return Err(ModelError::InUse { kind: EntityKind::MeHost, id: id.into() });
        }
        self.host_usage.remove(id);
        Ok(self.hosts.remove(id).expect("checked above"))
    }

    pub fn add_link(&mut self, l: HostLink) -> Result<(), ModelError> {
        self.validate_link(&l)?;
        if self.links.contains_key(&l.id) {
            return Err(ModelError::DuplicateId { kind: EntityKind::HostLink, id: l.id });
        }
        let key = pair_key(&l.endpoint_a, &l.endpoint_b);
        if self.link_index.contains_key(&key) {
            return Err(ModelError::DuplicateLink { a: key.0, b: key.1 });
        }
        self.link_index.insert(key, l.id.clone());
        self.link_usage.insert(l.id.clone(), LinkUsage::default());
        self.links.insert(l.id.clone(), l);
        Ok(())
    }

    /// Replaces a link's capacities or latency; endpoints are fixed.
    pub fn update_link(&mut self, l: HostLink) -> Result<(), ModelError> {
        self.validate_link(&l)?;
        let old = match self.links.get(&l.id) {
            Some(old) => old,
            None => return Err(ModelError::Unknown { kind: EntityKind::HostLink, id: l.id }),
        };
        if !old.connects(&l.endpoint_a, &l.endpoint_b) {
            return Err(ModelError::InvalidValue { subject: l.id, what: "link endpoints cannot change" });
        }
        let usage = self.link_usage.get(&l.id).copied().unwrap_or_default();
        if usage.used_bandwidth > l.bandwidth_capacity || usage.applink_count > l.max_virtual_links {
            return Err(ModelError::InUse { kind: EntityKind::HostLink, id: l.id });
        }
        self.links.insert(l.id.clone(), l);
        Ok(())
    }

    pub fn remove_link(&mut self, id: &str) -> Result<HostLink, ModelError> {
        let l = match self.links.get(id) {
            Some(l) => l,
            None => return Err(ModelError::Unknown { kind: EntityKind::HostLink, id: id.into() }),
        };
        if self.link_usage.get(id).copied().unwrap_or_default() != LinkUsage::default() {
            return Err(ModelError::InUse { kind: EntityKind::HostLink, id: id.into() });
        }
        self.link_index.remove(&pair_key(&l.endpoint_a, &l.endpoint_b));
        self.link_usage.remove(id);
        Ok(self.links.remove(id).expect("checked above"))
    }

    /// Checks a chain against the registered ones without registering it.
    pub fn validate_chain(&self, chain: &SvcChain) -> Result<(), ModelError> {
        if self.chains.contains_key(&chain.id) {
            return Err(ModelError::DuplicateId { kind: EntityKind::SvcChain, id: chain.id.clone() });
        }
        if !(chain.max_latency_ms.is_finite() && chain.max_latency_ms > 0.0) {
            return Err(ModelError::InvalidValue { subject: chain.id.clone(), what: "max_latency_ms must be positive" });
        }
        for (i, app) in chain.apps.iter().enumerate() {
            if app.cpu_demand == 0 || app.mem_demand == 0 {
                return Err(ModelError::InvalidValue { subject: app.id.clone(), what: "app demands must be positive" });
            }
            if let Some(budget) = app.max_latency_ms {
                if !(budget.is_finite() && budget >= 0.0) {
                    return Err(ModelError::InvalidValue { subject: app.id.clone(), what: "app latency budget must be non-negative" });
                }
            }
            if self.app_index.contains_key(&app.id) || chain.apps[..i].iter().any(|a| a.id == app.id) {
                return Err(ModelError::DuplicateId { kind: EntityKind::MeApp, id: app.id.clone() });
            }
        }
        for link in &chain.links {
            if link.src == link.dst {
                return Err(ModelError::InvalidValue { subject: link.src.clone(), what: "AppLink endpoints must differ" });
            }
            for end in [&link.src, &link.dst] {
                if chain.app(end).is_none() {
                    return Err(ModelError::DanglingReference {
                        kind: EntityKind::AppLink,
                        id: alloc::format!("{}->{}", link.src, link.dst),
                        missing: end.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn register_chain(&mut self, chain: SvcChain) -> Result<(), ModelError> {
        self.validate_chain(&chain)?;
        for app in &chain.apps {
            self.app_index.insert(app.id.clone(), chain.id.clone());
        }
        self.chains.insert(chain.id.clone(), chain);
        Ok(())
    }

    /// Removes a chain none of whose apps is placed.
    pub fn unregister_chain(&mut self, id: &str) -> Result<SvcChain, ModelError> {
        let chain = match self.chains.get(id) {
            Some(c) => c,
            None => return Err(ModelError::Unknown { kind: EntityKind::SvcChain, id: id.into() }),
        };
        if chain.apps.iter().any(|a| self.placement.contains(&a.id)) {
            return Err(ModelError::InUse { kind: EntityKind::SvcChain, id: id.into() });
        }
        let chain = self.chains.remove(id).expect("checked above");
        for app in &chain.apps {
            self.app_index.remove(&app.id);
        }
        Ok(chain)
    }

    /// Link deltas `(link id, applinks, bandwidth)` caused by placing `app`
    /// on `host` given the peers already placed.
    fn link_deltas(&self, chain: &SvcChain, app: &str, host: &str) -> Result<BTreeMap<String, (u32, u64)>, ModelError> {
        let mut deltas: BTreeMap<String, (u32, u64)> = BTreeMap::new();
        for (link, peer) in chain.links_of(app) {
            let Some(peer_host) = self.placement.host_of(peer) else { continue };
            if peer_host == host {
                continue;
            }
            let hl = self
                .link_between(host, peer_host)
                .ok_or_else(|| ModelError::NoRoute { a: host.into(), b: peer_host.into() })?;
            let d = deltas.entry(hl.id.clone()).or_default();
            d.0 += 1;
            d.1 += link.bandwidth_demand;
        }
        Ok(deltas)
    }

    /// Places `app` on `host`, deducting its demands from the host and the
    /// AppLinks to already-placed peers from the connecting host links.
    pub fn apply_assignment(&mut self, app: &str, host: &str) -> Result<(), ModelError> {
        let chain = self.chain_of_app(app).ok_or_else(|| ModelError::UnknownApp(app.into()))?;
        let demand = chain.app(app).expect("indexed app belongs to its chain");
        if self.placement.contains(app) {
            return Err(ModelError::AlreadyPlaced(app.into()));
        }
        let h = self.hosts.get(host).ok_or_else(|| ModelError::UnknownHost(host.into()))?;
        let usage = self.host_usage.get(host).copied().unwrap_or_default();
        let cpu_left = h.cpu_capacity - usage.cpu_used;
        if demand.cpu_demand > cpu_left {
            return Err(ModelError::CapacityExceeded {
                resource: Resource::Cpu,
                subject: host.into(),
                requested: demand.cpu_demand,
                available: cpu_left,
            });
        }
        let mem_left = h.mem_capacity - usage.mem_used;
        if demand.mem_demand > mem_left {
            return Err(ModelError::CapacityExceeded {
                resource: Resource::Memory,
                subject: host.into(),
                requested: demand.mem_demand,
                available: mem_left,
            });
        }
        let deltas = self.link_deltas(chain, app, host)?;
        for (id, &(count, bw)) in &deltas {
            let link = &self.links[id];
            let u = self.link_usage.get(id).copied().unwrap_or_default();
            let count_left = link.max_virtual_links - u.applink_count;
            if count > count_left {
                return Err(ModelError::CapacityExceeded {
                    resource: Resource::VirtualLinks,
                    subject: id.clone(),
                    requested: count.into(),
                    available: count_left.into(),
                });
            }
            let bw_left = link.bandwidth_capacity - u.used_bandwidth;
            if bw > bw_left {
                return Err(ModelError::CapacityExceeded {
                    resource: Resource::Bandwidth,
                    subject: id.clone(),
                    requested: bw,
                    available: bw_left,
                });
            }
        }
        let (cpu, mem) = (demand.cpu_demand, demand.mem_demand);
        for (id, (count, bw)) in deltas {
            let u = self.link_usage.entry(id).or_default();
            u.applink_count += count;
            u.used_bandwidth += bw;
        }
        let u = self.host_usage.entry(host.into()).or_default();
        u.cpu_used += cpu;
        u.mem_used += mem;
        self.placement.insert(app, host);
        Ok(())
    }

    /// Exact inverse of [`WorldState::apply_assignment`].
    pub fn remove_assignment(&mut self, app: &str) -> Result<String, ModelError> {
        let host = match self.placement.host_of(app) {
            Some(h) => String::from(h),
            None => return Err(ModelError::NotPlaced(app.into())),
        };
        let chain = self.chain_of_app(app).expect("placed apps belong to registered chains");
        let demand = chain.app(app).expect("indexed app belongs to its chain");
        let (cpu, mem) = (demand.cpu_demand, demand.mem_demand);
        let deltas = self.link_deltas(chain, app, &host).expect("routes existed when the app was placed");
        for (id, (count, bw)) in deltas {
            let u = self.link_usage.get_mut(&id).expect("link usage tracked for every link");
            u.applink_count -= count;
            u.used_bandwidth -= bw;
        }
        let u = self.host_usage.get_mut(&host).expect("host usage tracked for every host");
        u.cpu_used -= cpu;
        u.mem_used -= mem;
        self.placement.remove(app);
        Ok(host)
    }

    /// Host usage derived from the placement alone.
    pub fn recompute_host_usage(&self) -> BTreeMap<String, HostUsage> {
        let mut out: BTreeMap<String, HostUsage> = self.hosts.keys().map(|h| (h.clone(), HostUsage::default())).collect();
        for (app, host) in self.placement.iter() {
            let a = self.app(app).expect("placed apps belong to registered chains");
            let u = out.entry(host.into()).or_default();
            u.cpu_used += a.cpu_demand;
            u.mem_used += a.mem_demand;
        }
        out
    }

    /// Link usage derived from the chains and the placement alone.
    pub fn recompute_link_usage(&self) -> BTreeMap<String, LinkUsage> {
        let mut out: BTreeMap<String, LinkUsage> = self.links.keys().map(|l| (l.clone(), LinkUsage::default())).collect();
        for chain in self.chains.values() {
            for link in &chain.links {
                let (Some(a), Some(b)) = (self.placement.host_of(&link.src), self.placement.host_of(&link.dst)) else {
                    continue;
                };
                if a == b {
                    continue;
                }
                if let Some(hl) = self.link_between(a, b) {
                    let u = out.entry(hl.id.clone()).or_default();
                    u.applink_count += 1;
                    u.used_bandwidth += link.bandwidth_demand;
                }
            }
        }
        out
    }

    /// Verifies the derived-state and capacity invariants. Intended for
    /// tests and audits.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        if self.recompute_host_usage() != self.host_usage {
            return Err("host usage diverges from placement");
        }
        if self.recompute_link_usage() != self.link_usage {
            return Err("link usage diverges from placement");
        }
        for (id, h) in &self.hosts {
            let u = self.host_usage[id];
            if u.cpu_used > h.cpu_capacity || u.mem_used > h.mem_capacity {
                return Err("host over capacity");
            }
        }
        for (id, l) in &self.links {
            let u = self.link_usage[id];
            if u.used_bandwidth > l.bandwidth_capacity || u.applink_count > l.max_virtual_links {
                return Err("link over capacity");
            }
        }
        for (app, host) in self.placement.iter() {
            if self.app(app).is_none() || !self.hosts.contains_key(host) {
                return Err("placement references unknown app or host");
            }
        }
        Ok(())
    }

    fn validate_host(&self, h: &MeHost) -> Result<(), ModelError> {
        if h.cpu_capacity == 0 || h.mem_capacity == 0 {
            return Err(ModelError::InvalidValue { subject: h.id.clone(), what: "host capacities must be positive" });
        }
        if !self.mecsps.contains_key(&h.owner) {
            return Err(ModelError::DanglingReference { kind: EntityKind::MeHost, id: h.id.clone(), missing: h.owner.clone() });
        }
        Ok(())
    }

    fn validate_link(&self, l: &HostLink) -> Result<(), ModelError> {
        for end in [&l.endpoint_a, &l.endpoint_b] {
            if !self.hosts.contains_key(end) {
                return Err(ModelError::DanglingReference { kind: EntityKind::HostLink, id: l.id.clone(), missing: end.clone() });
            }
        }
        if l.endpoint_a == l.endpoint_b {
            return Err(ModelError::InvalidValue { subject: l.id.clone(), what: "link endpoints must differ" });
        }
        if l.bandwidth_capacity == 0 {
            return Err(ModelError::InvalidValue { subject: l.id.clone(), what: "bandwidth capacity must be positive" });
        }
        if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0) {
            return Err(ModelError::InvalidValue { subject: l.id.clone(), what: "latency must be non-negative" });
        }
        if l.max_virtual_links == 0 {
            return Err(ModelError::InvalidValue { subject: l.id.clone(), what: "max_virtual_links must be at least 1" });
        }
        Ok(())
    }
}

fn validate_mecsp(m: &Mecsp) -> Result<(), ModelError> {
    let ok = |v: f64| v.is_finite() && v >= 0.0;
    if !(ok(m.gamma) && ok(m.delta) && ok(m.kappa) && ok(m.sigma)) {
        return Err(ModelError::InvalidValue { subject: m.id.clone(), what: "prices must be finite and non-negative" });
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn table3_world_shape() {
        let w = table3_world();
        assert_eq!(w.hosts().len(), 9);
        assert_eq!(w.host_links().len(), 36);
        assert!(w.placement().is_empty());
        assert_eq!(w.hosts_by_owner()["m2"], vec!["h4", "h5", "h6"]);
        w.check_invariants().unwrap();
    }

    #[test]
    fn empty_substrate_is_valid() {
        let w = WorldState::from_substrate(WorldParams::default(), vec![], vec![], vec![]).unwrap();
        assert!(w.hosts().is_empty());
    }

    #[test]
    fn dangling_link_endpoint_rejected() {
        let mut w = table3_world();
        let err = w
            .add_link(HostLink {
                id: "bad".into(),
                endpoint_a: "h1".into(),
                endpoint_b: "h99".into(),
                bandwidth_capacity: 10,
                latency_ms: 1.0,
                max_virtual_links: 1,
            })
            .unwrap_err();
        assert!(matches!(err, ModelError::DanglingReference { missing, .. } if missing == "h99"));
    }

    #[test]
    fn second_link_for_same_pair_rejected() {
        let mut w = table3_world();
        let err = w
            .add_link(HostLink {
                id: "dup".into(),
                endpoint_a: "h2".into(),
                endpoint_b: "h1".into(),
                bandwidth_capacity: 10,
                latency_ms: 1.0,
                max_virtual_links: 1,
            })
            .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateLink { .. }));
    }

    #[test]
    fn host_with_unknown_owner_rejected() {
        let mut w = table3_world();
        let err = w.add_host(MeHost { id: "hx".into(), owner: "m9".into(), cpu_capacity: 1, mem_capacity: 1 });
        assert!(matches!(err, Err(ModelError::DanglingReference { .. })));
    }

    #[test]
    fn deduction_matches_placement_transaction_example() {
        let mut w = WorldState::from_substrate(
            WorldParams::default(),
            vec![mecsp("m", 1.0, 0.0, 1.0, 0.0)],
            vec![MeHost { id: "MEHost-2".into(), owner: "m".into(), cpu_capacity: 6, mem_capacity: 8192 }],
            vec![],
        )
        .unwrap();
        w.register_chain(SvcChain::linear("s", vec![app("MEApp-4", 2, 4096)], 0, 10.0, "u")).unwrap();
        w.apply_assignment("MEApp-4", "MEHost-2").unwrap();
        assert_eq!(w.remaining("MEHost-2"), Some((4, 4096)));
    }

    #[test]
    fn thirty_third_app_exceeds_cpu() {
        let mut w = table3_world();
        let apps = (0..33).map(|i| app(&format!("a{i}"), 2, 1)).collect();
        w.register_chain(SvcChain { id: "big".into(), apps, links: vec![], max_latency_ms: 50.0, requested_by: "u".into() })
            .unwrap();
        for i in 0..32 {
            w.apply_assignment(&format!("a{i}"), "h1").unwrap();
        }
        let err = w.apply_assignment("a32", "h1").unwrap_err();
        assert!(matches!(err, ModelError::CapacityExceeded { resource: Resource::Cpu, available: 0, .. }));
        w.check_invariants().unwrap();
    }

    #[test]
    fn colocated_zero_bandwidth_link_uses_nothing() {
        let mut w = table3_world();
        w.register_chain(SvcChain::linear("s", vec![app("a", 1, 1), app("b", 1, 1)], 0, 50.0, "u")).unwrap();
        let before = w.link_usage().clone();
        w.apply_assignment("a", "h1").unwrap();
        w.apply_assignment("b", "h1").unwrap();
        assert_eq!(w.link_usage(), &before);
    }

    #[test]
    fn remove_middle_app_releases_both_links() {
        let mut w = table3_world();
        w.register_chain(table3_chain("s")).unwrap();
        w.apply_assignment("s-v1", "h1").unwrap();
        w.apply_assignment("s-v2", "h2").unwrap();
        w.apply_assignment("s-v3", "h3").unwrap();
        assert_eq!(w.link_usage()["e1-2"], LinkUsage { applink_count: 1, used_bandwidth: 30 });
        assert_eq!(w.link_usage()["e2-3"], LinkUsage { applink_count: 1, used_bandwidth: 30 });
        w.remove_assignment("s-v2").unwrap();
        assert_eq!(w.link_usage(), &w.recompute_link_usage());
        assert_eq!(w.link_usage()["e1-2"], LinkUsage::default());
        assert_eq!(w.link_usage()["e2-3"], LinkUsage::default());
    }

    #[test]
    fn remove_unplaced_app_fails() {
        let mut w = table3_world();
        w.register_chain(table3_chain("s")).unwrap();
        assert_eq!(w.remove_assignment("s-v1"), Err(ModelError::NotPlaced("s-v1".into())));
    }

    #[test]
    fn double_placement_rejected() {
        let mut w = table3_world();
        w.register_chain(table3_chain("s")).unwrap();
        w.apply_assignment("s-v1", "h1").unwrap();
        assert_eq!(w.apply_assignment("s-v1", "h2"), Err(ModelError::AlreadyPlaced("s-v1".into())));
    }

    #[test]
    fn missing_route_rejected_without_side_effects() {
        let mut w = WorldState::from_substrate(
            WorldParams::default(),
            vec![mecsp("m", 1.0, 0.0, 1.0, 0.0)],
            (1..=2).map(|i| MeHost { id: format!("h{i}"), owner: "m".into(), cpu_capacity: 4, mem_capacity: 4 }),
            vec![],
        )
        .unwrap();
        w.register_chain(SvcChain::linear("s", vec![app("a", 1, 1), app("b", 1, 1)], 1, 10.0, "u")).unwrap();
        w.apply_assignment("a", "h1").unwrap();
        let snapshot = w.clone();
        assert!(matches!(w.apply_assignment("b", "h2"), Err(ModelError::NoRoute { .. })));
        assert_eq!(w, snapshot);
    }

    #[test]
    fn bandwidth_and_virtual_link_limits_enforced() {
        let mut w = WorldState::from_substrate(
            WorldParams::default(),
            vec![mecsp("m", 1.0, 0.0, 1.0, 0.0)],
            (1..=2).map(|i| MeHost { id: format!("h{i}"), owner: "m".into(), cpu_capacity: 8, mem_capacity: 8 }),
            vec![HostLink {
                id: "e".into(),
                endpoint_a: "h1".into(),
                endpoint_b: "h2".into(),
                bandwidth_capacity: 50,
                latency_ms: 1.0,
                max_virtual_links: 1,
            }],
        )
        .unwrap();
        w.register_chain(SvcChain::linear("s", vec![app("a", 1, 1), app("b", 1, 1)], 60, 10.0, "u")).unwrap();
        w.register_chain(SvcChain::linear("t", vec![app("c", 1, 1), app("d", 1, 1)], 10, 10.0, "u")).unwrap();
        w.apply_assignment("a", "h1").unwrap();
        assert!(matches!(
            w.apply_assignment("b", "h2"),
            Err(ModelError::CapacityExceeded { resource: Resource::Bandwidth, requested: 60, available: 50, .. })
        ));
        w.apply_assignment("b", "h1").unwrap();
        w.apply_assignment("c", "h1").unwrap();
        w.apply_assignment("d", "h2").unwrap();
        w.register_chain(SvcChain::linear("u", vec![app("e", 1, 1), app("f", 1, 1)], 1, 10.0, "u")).unwrap();
        w.apply_assignment("e", "h1").unwrap();
        assert!(matches!(
            w.apply_assignment("f", "h2"),
            Err(ModelError::CapacityExceeded { resource: Resource::VirtualLinks, .. })
        ));
    }

    #[test]
    fn shares_must_sum_to_at_most_one() {
        let mut m = BTreeMap::new();
        m.insert("m1".into(), 0.7);
        m.insert("m2".into(), 0.5);
        assert!(UserDistribution::new(100, m).is_err());
        let d = shares(0.5, 0.25, 0.25);
        assert_eq!(d.share("m4"), 0.0);
    }

    #[test]
    fn chains_with_foreign_link_endpoints_rejected() {
        let w = table3_world();
        let mut c = table3_chain("s");
        c.links.push(AppLink { src: "s-v1".into(), dst: "elsewhere".into(), bandwidth_demand: 1 });
        assert!(matches!(w.validate_chain(&c), Err(ModelError::DanglingReference { .. })));
    }

    proptest! {
        // Random apply/remove sequences keep incremental usage equal to a
        // from-scratch recomputation, and apply-then-remove is the identity.
        #[test]
        fn incremental_usage_matches_recompute(ops in proptest::collection::vec((0usize..5, 0usize..9, any::<bool>()), 1..60)) {
            let mut w = table3_world();
            w.register_chain(SvcChain::linear("s", (0..5).map(|i| app(&format!("a{i}"), 20, 20000)).collect(), 4000, 50.0, "u")).unwrap();
            for (a, h, place) in ops {
                let app_id = format!("a{a}");
                let host = format!("h{}", h + 1);
                if place {
                    let before = w.clone();
                    if w.apply_assignment(&app_id, &host).is_ok() {
                        let mut undo = w.clone();
                        undo.remove_assignment(&app_id).unwrap();
                        prop_assert_eq!(&undo, &before);
                    } else {
                        prop_assert_eq!(&w, &before);
                    }
                } else {
                    let _ = w.remove_assignment(&app_id);
                }
                prop_assert!(w.check_invariants().is_ok());
            }
        }
    }
}
