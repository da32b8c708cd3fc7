//! Scenario files.
//!
//! A scenario is a TOML document listing providers, hosts, host links,
//! service chains and the user distribution shared by all chains.

use std::collections::BTreeMap;
use std::path::Path;

use edgechain_core::model::{AppLink, HostLink, MeApp, MeHost, Mecsp, ModelError, ResourceWeights, SvcChain, UserDistribution, WorldParams, WorldState};
use edgechain_core::PlacementRequest;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Model(#[from] ModelError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MecspConfig {
    pub id: String,
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub id: String,
    pub owner: String,
    pub cpu_capacity: u64,
    pub mem_capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostLinkConfig {
    pub id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub bandwidth_capacity: u64,
    pub latency_ms: f64,
    pub max_virtual_links: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub id: String,
    pub vendor: String,
    pub cpu_demand: u64,
    pub mem_demand: u64,
    pub max_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppLinkConfig {
    pub src: String,
    pub dst: String,
    pub bandwidth_demand: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub id: String,
    pub max_latency_ms: f64,
    pub requested_by: String,
    pub apps: Vec<AppConfig>,
    /// Explicit AppLinks. When absent the chain is linear with
    /// `link_bandwidth` Mbps per hop.
    pub links: Option<Vec<AppLinkConfig>>,
    pub link_bandwidth: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserDistributionConfig {
    pub total_users: u64,
    #[serde(default)]
    pub shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub cpu: f64,
    pub mem: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig { cpu: 1.0, mem: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultsConfig {
    pub max_virtual_links: u32,
}

impl Default for DefaultsConfig {
    fn default() -> Self {
        DefaultsConfig { max_virtual_links: HostLink::DEFAULT_MAX_VIRTUAL_LINKS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Reserved; the pipeline is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub defaults: DefaultsConfig,
    pub user_distribution: UserDistributionConfig,
    #[serde(default)]
    pub mecsps: Vec<MecspConfig>,
    #[serde(default)]
    pub hosts: Vec<HostConfig>,
    #[serde(default)]
    pub host_links: Vec<HostLinkConfig>,
    #[serde(default)]
    pub chains: Vec<ChainConfig>,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        text.parse()
    }

    pub fn params(&self) -> WorldParams {
        WorldParams { weights: ResourceWeights { cpu: self.weights.cpu, mem: self.weights.mem } }
    }

    pub fn dist(&self) -> Result<UserDistribution, ConfigError> {
        Ok(UserDistribution::new(self.user_distribution.total_users, self.user_distribution.shares.clone())?)
    }

    /// Host links after collapsing repeated host pairs to their first entry.
    pub fn effective_links(&self) -> Vec<HostLink> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for l in &self.host_links {
            let key = if l.endpoint_a <= l.endpoint_b {
                (l.endpoint_a.clone(), l.endpoint_b.clone())
            } else {
                (l.endpoint_b.clone(), l.endpoint_a.clone())
            };
            if !seen.insert(key) {
                continue;
            }
            out.push(HostLink {
                id: l.id.clone(),
                endpoint_a: l.endpoint_a.clone(),
                endpoint_b: l.endpoint_b.clone(),
                bandwidth_capacity: l.bandwidth_capacity,
                latency_ms: l.latency_ms,
                max_virtual_links: l.max_virtual_links.unwrap_or(self.defaults.max_virtual_links),
            });
        }
        out
    }

    /// The substrate with an empty placement and no chains registered.
    pub fn build_world(&self) -> Result<WorldState, ConfigError> {
        let w = self.weights;
        if !(w.cpu.is_finite() && w.cpu >= 0.0 && w.mem.is_finite() && w.mem >= 0.0) {
            return Err(ConfigError::Invalid("weights must be finite and non-negative".into()));
        }
        let mecsps = self.mecsps.iter().map(|m| Mecsp { id: m.id.clone(), gamma: m.gamma, delta: m.delta, kappa: m.kappa, sigma: m.sigma });
        let hosts = self.hosts.iter().map(|h| MeHost {
            id: h.id.clone(),
            owner: h.owner.clone(),
            cpu_capacity: h.cpu_capacity,
            mem_capacity: h.mem_capacity,
        });
        Ok(WorldState::from_substrate(self.params(), mecsps, hosts, self.effective_links())?)
    }

    pub fn chains(&self) -> Result<Vec<SvcChain>, ConfigError> {
        self.chains.iter().map(build_chain).collect()
    }

    pub fn requests(&self) -> Result<Vec<PlacementRequest>, ConfigError> {
        let dist = self.dist()?;
        Ok(self.chains()?.into_iter().map(|chain| PlacementRequest { chain, dist: dist.clone() }).collect())
    }

    /// Checks referential integrity, id uniqueness and the user shares.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut world = self.build_world()?;
        for c in self.chains()? {
            world.register_chain(c)?;
        }
        for m in self.user_distribution.shares.keys() {
            if world.mecsp(m).is_none() {
                return Err(ConfigError::Invalid(format!("user share for unknown provider {m:?}")));
            }
        }
        self.dist()?;
        Ok(())
    }
}

impl std::str::FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn build_chain(c: &ChainConfig) -> Result<SvcChain, ConfigError> {
    let apps: Vec<MeApp> = c
        .apps
        .iter()
        .map(|a| MeApp {
            id: a.id.clone(),
            vendor: a.vendor.clone(),
            cpu_demand: a.cpu_demand,
            mem_demand: a.mem_demand,
            max_latency_ms: a.max_latency_ms,
        })
        .collect();
    match (&c.links, c.link_bandwidth) {
        (Some(links), None) => Ok(SvcChain {
            id: c.id.clone(),
            apps,
            links: links
                .iter()
                .map(|l| AppLink { src: l.src.clone(), dst: l.dst.clone(), bandwidth_demand: l.bandwidth_demand })
                .collect(),
            max_latency_ms: c.max_latency_ms,
            requested_by: c.requested_by.clone(),
        }),
        (None, Some(bw)) => Ok(SvcChain::linear(c.id.clone(), apps, bw, c.max_latency_ms, c.requested_by.clone())),
        _ => Err(ConfigError::Invalid(format!("chain {:?} needs exactly one of links or link_bandwidth", c.id))),
    }
}

/// A scalar in a scenario that sweeps can vary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamPath {
    Mecsp { id: String, field: PriceField },
    Share(String),
    TotalUsers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceField {
    Gamma,
    Delta,
    Kappa,
    Sigma,
}

impl std::str::FromStr for ParamPath {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('.').collect();
        let field = |f: &str| match f {
            "gamma" => Some(PriceField::Gamma),
            "delta" => Some(PriceField::Delta),
            "kappa" => Some(PriceField::Kappa),
            "sigma" => Some(PriceField::Sigma),
            _ => None,
        };
        match parts.as_slice() {
            ["mecsp", id, f] => field(f)
                .map(|field| ParamPath::Mecsp { id: (*id).into(), field })
                .ok_or_else(|| ConfigError::Invalid(format!("unknown price field {f:?}"))),
            ["share", id] => Ok(ParamPath::Share((*id).into())),
            ["total_users"] => Ok(ParamPath::TotalUsers),
            _ => Err(ConfigError::Invalid(format!(
                "unknown parameter {s:?}; expected mecsp.<id>.<gamma|delta|kappa|sigma>, share.<id> or total_users"
            ))),
        }
    }
}

impl std::fmt::Display for ParamPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamPath::Mecsp { id, field } => {
                let name = match field {
                    PriceField::Gamma => "gamma",
                    PriceField::Delta => "delta",
                    PriceField::Kappa => "kappa",
                    PriceField::Sigma => "sigma",
                };
                write!(f, "mecsp.{id}.{name}")
            }
            ParamPath::Share(id) => write!(f, "share.{id}"),
            ParamPath::TotalUsers => f.write_str("total_users"),
        }
    }
}

impl ScenarioConfig {
    /// Sets one parameter. The result is not revalidated.
    pub fn set_param(&mut self, path: &ParamPath, value: f64) -> Result<(), ConfigError> {
        match path {
            ParamPath::Mecsp { id, field } => {
                let m = self
                    .mecsps
                    .iter_mut()
                    .find(|m| &m.id == id)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown provider {id:?}")))?;
                match field {
                    PriceField::Gamma => m.gamma = value,
                    PriceField::Delta => m.delta = value,
                    PriceField::Kappa => m.kappa = value,
                    PriceField::Sigma => m.sigma = value,
                }
            }
            ParamPath::Share(id) => {
                if !self.mecsps.iter().any(|m| &m.id == id) {
                    return Err(ConfigError::Invalid(format!("unknown provider {id:?}")));
                }
                self.user_distribution.shares.insert(id.clone(), value);
            }
            ParamPath::TotalUsers => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                    return Err(ConfigError::Invalid(format!("total_users must be a positive integer, got {value}")));
                }
                self.user_distribution.total_users = value as u64;
            }
        }
        Ok(())
    }

    /// Multiplies every provider price by `k`.
    pub fn scale_prices(&mut self, k: f64) {
        for m in &mut self.mecsps {
            m.gamma *= k;
            m.delta *= k;
            m.kappa *= k;
            m.sigma *= k;
        }
    }
}
