//! Hash-chained ledger of entity records and placement transactions.
//!
//! Each block hashes its index, the previous block's hash, its canonical
//! payload and a logical timestamp. Entity records are content addressed;
//! updates and deletes name the address they supersede. Folding the blocks
//! in order ([`replay`]) rebuilds the [`WorldState`] they describe.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical::{decimal, digest_of};
use crate::digest::Digest;
use crate::model::{AppLink, EntityKind, HostLink, MeApp, MeHost, Mecsp, ModelError, SvcChain, WorldParams, WorldState};
use crate::placement::PlacementDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Create,
    Update,
    Delete,
}

/// On-ledger form of a service chain; apps and links are the addresses of
/// their records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRecord {
    pub id: String,
    pub apps: Vec<Digest>,
    pub links: Vec<Digest>,
    #[serde(with = "decimal")]
    pub max_latency_ms: f64,
    pub requested_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", deny_unknown_fields)]
pub enum Entity {
    #[serde(rename = "MECSP")]
    Mecsp(Mecsp),
    #[serde(rename = "MEHost")]
    MeHost(MeHost),
    HostLink(HostLink),
    SvcChain(ChainRecord),
    #[serde(rename = "MEApp")]
    MeApp(MeApp),
    AppLink(AppLink),
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::Mecsp(_) => EntityKind::Mecsp,
            Entity::MeHost(_) => EntityKind::MeHost,
            Entity::HostLink(_) => EntityKind::HostLink,
            Entity::SvcChain(_) => EntityKind::SvcChain,
            Entity::MeApp(_) => EntityKind::MeApp,
            Entity::AppLink(_) => EntityKind::AppLink,
        }
    }

    /// Identifier used for update/delete lineage. AppLinks have no id of
    /// their own and use `src->dst`.
    pub fn id(&self) -> String {
        match self {
            Entity::Mecsp(m) => m.id.clone(),
            Entity::MeHost(h) => h.id.clone(),
            Entity::HostLink(l) => l.id.clone(),
            Entity::SvcChain(c) => c.id.clone(),
            Entity::MeApp(a) => a.id.clone(),
            Entity::AppLink(l) => alloc::format!("{}->{}", l.src, l.dst),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerRecord {
    pub address: Digest,
    pub entity: Entity,
    pub op: Op,
    pub prev_address: Option<Digest>,
}

#[derive(Serialize)]
struct AddressInput<'a> {
    entity: &'a Entity,
    op: Op,
    prev_address: Option<Digest>,
}

impl LedgerRecord {
    pub fn new(entity: Entity, op: Op, prev_address: Option<Digest>) -> Self {
        let address = digest_of(&AddressInput { entity: &entity, op, prev_address });
        LedgerRecord { address, entity, op, prev_address }
    }

    pub fn expected_address(&self) -> Digest {
        digest_of(&AddressInput { entity: &self.entity, op: self.op, prev_address: self.prev_address })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Remaining {
    pub cpu: u64,
    pub mem: u64,
}

/// One app assigned to one host, with the resources deducted from the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementTx {
    pub app_address: Digest,
    pub host_address: Digest,
    pub cpu_delta: u64,
    pub mem_delta: u64,
    pub resulting_remaining: Remaining,
    pub algorithm_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LedgerEntry {
    Record(LedgerRecord),
    Placement(PlacementTx),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    pub payload: Vec<LedgerEntry>,
    pub timestamp: u64,
    pub hash: Digest,
}

#[derive(Serialize)]
struct BlockHeader<'a> {
    index: u64,
    payload: &'a [LedgerEntry],
    prev_hash: Digest,
    timestamp: u64,
}

impl Block {
    pub fn compute_hash(index: u64, prev_hash: Digest, payload: &[LedgerEntry], timestamp: u64) -> Digest {
        digest_of(&BlockHeader { index, payload, prev_hash, timestamp })
    }

    pub fn new(index: u64, prev_hash: Digest, payload: Vec<LedgerEntry>, timestamp: u64) -> Self {
        let hash = Self::compute_hash(index, prev_hash, &payload, timestamp);
        Block { index, prev_hash, payload, timestamp, hash }
    }

    pub fn recomputed_hash(&self) -> Digest {
        Self::compute_hash(self.index, self.prev_hash, &self.payload, self.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainStatus {
    Valid,
    FirstBad(u64),
}

/// Recomputes every hash and link; reports the first block whose index,
/// stored hash or `prev_hash` linkage is wrong.
pub fn verify_chain(blocks: &[Block]) -> ChainStatus {
    let mut prev = Digest::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        if b.index != i as u64 || b.prev_hash != prev || b.recomputed_hash() != b.hash {
            return ChainStatus::FirstBad(i as u64);
        }
        prev = b.hash;
    }
    ChainStatus::Valid
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayCause {
    #[error("record address does not match its content")]
    AddressMismatch,
    #[error("address {0} does not name a live record of the expected kind")]
    DanglingAddress(Digest),
    #[error("{kind} {id:?} created twice")]
    DuplicateCreate { kind: EntityKind, id: String },
    #[error("malformed lineage: {0}")]
    Lineage(&'static str),
    #[error("{0} records cannot be updated or deleted")]
    Immutable(EntityKind),
    #[error("transaction deltas or remaining resources disagree with the state")]
    ResourceMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("block {index}: {cause}")]
pub struct ReplayError {
    pub index: u64,
    pub cause: ReplayCause,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LedgerError {
    #[error("chain is invalid from block {0}")]
    InvalidChain(u64),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("chain {0:?} is not registered on the ledger")]
    UnregisteredChain(String),
    #[error("chain {0:?} is already registered on the ledger")]
    DuplicateChain(String),
    #[error("decision assigns {app:?} to unknown {what} {id:?}")]
    UnknownEntity { app: String, what: &'static str, id: String },
}

/// World state rebuilt from a ledger, plus the current record address of
/// every live entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub world: WorldState,
    addresses: BTreeMap<(EntityKind, String), Digest>,
    by_address: BTreeMap<Digest, (EntityKind, String)>,
    pending_apps: BTreeMap<Digest, MeApp>,
    pending_links: BTreeMap<Digest, AppLink>,
}

impl Replayed {
    fn new(params: WorldParams) -> Self {
        Replayed {
            world: WorldState::new(params),
            addresses: BTreeMap::new(),
            by_address: BTreeMap::new(),
            pending_apps: BTreeMap::new(),
            pending_links: BTreeMap::new(),
        }
    }

    /// Current address of the live record for `(kind, id)`.
    pub fn address_of(&self, kind: EntityKind, id: &str) -> Option<Digest> {
        self.addresses.get(&(kind, String::from(id))).copied()
    }

    /// Entity named by a live address.
    pub fn resolve(&self, address: &Digest) -> Option<(EntityKind, &str)> {
        self.by_address.get(address).map(|(k, id)| (*k, id.as_str()))
    }

    fn bind(&mut self, kind: EntityKind, id: String, address: Digest) {
        if let Some(old) = self.addresses.insert((kind, id.clone()), address) {
            self.by_address.remove(&old);
        }
        self.by_address.insert(address, (kind, id));
    }

    fn unbind(&mut self, kind: EntityKind, id: &str) {
        if let Some(old) = self.addresses.remove(&(kind, String::from(id))) {
            self.by_address.remove(&old);
        }
    }

    fn take_pending_app(&mut self, address: &Digest) -> Result<MeApp, ReplayCause> {
        self.pending_apps.remove(address).ok_or(ReplayCause::DanglingAddress(*address))
    }

    fn apply_record(&mut self, r: &LedgerRecord) -> Result<(), ReplayCause> {
        if r.expected_address() != r.address {
            return Err(ReplayCause::AddressMismatch);
        }
        if self.by_address.contains_key(&r.address) || self.pending_apps.contains_key(&r.address) || self.pending_links.contains_key(&r.address) {
            return Err(ReplayCause::DuplicateCreate { kind: r.entity.kind(), id: r.entity.id() });
        }
        let kind = r.entity.kind();
        let id = r.entity.id();
        match r.op {
            Op::Create => {
                if r.prev_address.is_some() {
                    return Err(ReplayCause::Lineage("create with a predecessor"));
                }
                if self.addresses.contains_key(&(kind, id.clone())) {
                    return Err(ReplayCause::DuplicateCreate { kind, id });
                }
                self.create(r, kind, id)
            }
            Op::Update | Op::Delete => {
                let prev = r.prev_address.ok_or(ReplayCause::Lineage("update or delete without a predecessor"))?;
                if self.address_of(kind, &id) != Some(prev) {
                    return Err(ReplayCause::DanglingAddress(prev));
                }
                match (&r.entity, r.op) {
                    (Entity::Mecsp(m), Op::Update) => self.world.update_mecsp(m.clone())?,
                    (Entity::MeHost(h), Op::Update) => self.world.update_host(h.clone())?,
                    (Entity::HostLink(l), Op::Update) => self.world.update_link(l.clone())?,
                    (Entity::Mecsp(m), Op::Delete) => {
                        self.world.remove_mecsp(&m.id)?;
                    }
                    (Entity::MeHost(h), Op::Delete) => {
                        self.world.remove_host(&h.id)?;
                    }
                    (Entity::HostLink(l), Op::Delete) => {
                        self.world.remove_link(&l.id)?;
                    }
                    _ => return Err(ReplayCause::Immutable(kind)),
                }
                if r.op == Op::Update {
                    self.bind(kind, id, r.address);
                } else {
                    self.unbind(kind, &id);
                }
                Ok(())
            }
        }
    }

    fn create(&mut self, r: &LedgerRecord, kind: EntityKind, id: String) -> Result<(), ReplayCause> {
        match &r.entity {
            Entity::Mecsp(m) => self.world.add_mecsp(m.clone())?,
            Entity::MeHost(h) => self.world.add_host(h.clone())?,
            Entity::HostLink(l) => self.world.add_link(l.clone())?,
            Entity::MeApp(a) => {
                if self.world.app(&a.id).is_some() || self.pending_apps.values().any(|p| p.id == a.id) {
                    return Err(ReplayCause::DuplicateCreate { kind, id });
                }
                self.pending_apps.insert(r.address, a.clone());
                return Ok(());
            }
            Entity::AppLink(l) => {
                for end in [&l.src, &l.dst] {
                    if !self.pending_apps.values().any(|p| &p.id == end) {
                        return Err(ReplayCause::Model(ModelError::DanglingReference {
                            kind: EntityKind::AppLink,
                            id: id.clone(),
                            missing: end.clone(),
                        }));
                    }
                }
                self.pending_links.insert(r.address, l.clone());
                return Ok(());
            }
            Entity::SvcChain(c) => {
                let mut apps = Vec::with_capacity(c.apps.len());
                let mut app_addresses = Vec::with_capacity(c.apps.len());
                for a in &c.apps {
                    if !self.pending_apps.contains_key(a) {
                        return Err(ReplayCause::DanglingAddress(*a));
                    }
                    apps.push(self.pending_apps[a].clone());
                    app_addresses.push(*a);
                }
                let mut links = Vec::with_capacity(c.links.len());
                for l in &c.links {
                    links.push(self.pending_links.get(l).cloned().ok_or(ReplayCause::DanglingAddress(*l))?);
                }
                let chain = SvcChain {
                    id: c.id.clone(),
                    apps,
                    links,
                    max_latency_ms: c.max_latency_ms,
                    requested_by: c.requested_by.clone(),
                };
                self.world.register_chain(chain.clone())?;
                for (a, addr) in chain.apps.iter().zip(app_addresses) {
                    self.take_pending_app(&addr)?;
                    self.bind(EntityKind::MeApp, a.id.clone(), addr);
                }
                for (l, addr) in chain.links.iter().zip(&c.links) {
                    self.pending_links.remove(addr);
                    self.bind(EntityKind::AppLink, alloc::format!("{}->{}", l.src, l.dst), *addr);
                }
            }
        }
        self.bind(kind, id, r.address);
        Ok(())
    }

    fn apply_tx(&mut self, tx: &PlacementTx) -> Result<(), ReplayCause> {
        let app = match self.resolve(&tx.app_address) {
            Some((EntityKind::MeApp, id)) => String::from(id),
            _ => return Err(ReplayCause::DanglingAddress(tx.app_address)),
        };
        let host = match self.resolve(&tx.host_address) {
            Some((EntityKind::MeHost, id)) => String::from(id),
            _ => return Err(ReplayCause::DanglingAddress(tx.host_address)),
        };
        let demand = self.world.app(&app).ok_or(ReplayCause::DanglingAddress(tx.app_address))?;
        if (demand.cpu_demand, demand.mem_demand) != (tx.cpu_delta, tx.mem_delta) {
            return Err(ReplayCause::ResourceMismatch);
        }
        self.world.apply_assignment(&app, &host)?;
        let (cpu, mem) = self.world.remaining(&host).expect("host exists");
        if (Remaining { cpu, mem }) != tx.resulting_remaining {
            return Err(ReplayCause::ResourceMismatch);
        }
        Ok(())
    }

    fn apply_block(&mut self, block: &Block) -> Result<(), ReplayError> {
        for entry in &block.payload {
            let r = match entry {
                LedgerEntry::Record(r) => self.apply_record(r),
                LedgerEntry::Placement(tx) => self.apply_tx(tx),
            };
            r.map_err(|cause| ReplayError { index: block.index, cause })?;
        }
        Ok(())
    }
}

/// Folds `blocks` into a world. The chain must verify.
pub fn replay(blocks: &[Block], params: WorldParams) -> Result<Replayed, LedgerError> {
    if let ChainStatus::FirstBad(i) = verify_chain(blocks) {
        return Err(LedgerError::InvalidChain(i));
    }
    let mut state = Replayed::new(params);
    for b in blocks {
        state.apply_block(b)?;
    }
    Ok(state)
}

/// Records creating the substrate of `world`: providers, then hosts, then
/// host links, each in id order.
pub fn substrate_records(world: &WorldState) -> Vec<LedgerEntry> {
    let mut out = Vec::new();
    for m in world.mecsps().values() {
        out.push(LedgerEntry::Record(LedgerRecord::new(Entity::Mecsp(m.clone()), Op::Create, None)));
    }
    for h in world.hosts().values() {
        out.push(LedgerEntry::Record(LedgerRecord::new(Entity::MeHost(h.clone()), Op::Create, None)));
    }
    for l in world.host_links().values() {
        out.push(LedgerEntry::Record(LedgerRecord::new(Entity::HostLink(l.clone()), Op::Create, None)));
    }
    out
}

/// Records registering `chain`: its apps, its links, then the chain itself.
pub fn chain_records(chain: &SvcChain) -> Vec<LedgerEntry> {
    let apps: Vec<LedgerRecord> =
        chain.apps.iter().map(|a| LedgerRecord::new(Entity::MeApp(a.clone()), Op::Create, None)).collect();
    let links: Vec<LedgerRecord> =
        chain.links.iter().map(|l| LedgerRecord::new(Entity::AppLink(l.clone()), Op::Create, None)).collect();
    let record = ChainRecord {
        id: chain.id.clone(),
        apps: apps.iter().map(|r| r.address).collect(),
        links: links.iter().map(|r| r.address).collect(),
        max_latency_ms: chain.max_latency_ms,
        requested_by: chain.requested_by.clone(),
    };
    let svc = LedgerRecord::new(Entity::SvcChain(record), Op::Create, None);
    apps.into_iter().chain(links).chain(core::iter::once(svc)).map(LedgerEntry::Record).collect()
}

/// A verified sequence of blocks. Appending keeps it verified; timestamps
/// of the convenience appenders are the block index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    blocks: Vec<Block>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, LedgerError> {
        match verify_chain(&blocks) {
            ChainStatus::Valid => Ok(Ledger { blocks }),
            ChainStatus::FirstBad(i) => Err(LedgerError::InvalidChain(i)),
        }
    }

    /// A ledger whose genesis block creates the substrate of `world`.
    pub fn genesis(world: &WorldState) -> Self {
        let mut l = Ledger::new();
        l.append(substrate_records(world), 0);
        l
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Hash of the last block, or zero for an empty ledger.
    pub fn head(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, |b| b.hash)
    }

    pub fn append(&mut self, payload: Vec<LedgerEntry>, timestamp: u64) -> &Block {
        let b = Block::new(self.blocks.len() as u64, self.head(), payload, timestamp);
        self.blocks.push(b);
        self.blocks.last().expect("just pushed")
    }

    fn append_logical(&mut self, payload: Vec<LedgerEntry>) {
        let t = self.blocks.len() as u64;
        self.append(payload, t);
    }

    pub fn replay(&self, params: WorldParams) -> Result<Replayed, LedgerError> {
        replay(&self.blocks, params)
    }

    /// Appends one block registering `chain`.
    pub fn register_chain(&mut self, chain: &SvcChain, params: WorldParams) -> Result<(), LedgerError> {
        let state = self.replay(params)?;
        if state.world.chain(&chain.id).is_some() {
            return Err(LedgerError::DuplicateChain(chain.id.clone()));
        }
        state.world.validate_chain(chain).map_err(|cause| ReplayError { index: self.blocks.len() as u64, cause: cause.into() })?;
        self.append_logical(chain_records(chain));
        Ok(())
    }

    /// Appends one block per assignment of a placed decision, in chain
    /// order. Infeasible decisions append nothing. Returns the number of
    /// blocks appended.
    pub fn post_placement(
        &mut self,
        decision: &PlacementDecision,
        algorithm_digest: Digest,
        params: WorldParams,
    ) -> Result<usize, LedgerError> {
        if !decision.is_placed() {
            return Ok(0);
        }
        let mut state = self.replay(params)?;
        let chain = state
            .world
            .chain(&decision.chain_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnregisteredChain(decision.chain_id.clone()))?;
        let mut txs = Vec::with_capacity(chain.apps.len());
        for app in &chain.apps {
            let host = decision.assignments.host_of(&app.id).ok_or_else(|| LedgerError::UnknownEntity {
                app: app.id.clone(),
                what: "assignment for app",
                id: app.id.clone(),
            })?;
            let app_address = state.address_of(EntityKind::MeApp, &app.id).expect("registered apps have records");
            let host_address = state.address_of(EntityKind::MeHost, host).ok_or_else(|| LedgerError::UnknownEntity {
                app: app.id.clone(),
                what: "host",
                id: host.into(),
            })?;
            state
                .world
                .apply_assignment(&app.id, host)
                .map_err(|e| ReplayError { index: (self.blocks.len() + txs.len()) as u64, cause: e.into() })?;
            let (cpu, mem) = state.world.remaining(host).expect("host exists");
            txs.push(PlacementTx {
                app_address,
                host_address,
                cpu_delta: app.cpu_demand,
                mem_delta: app.mem_demand,
                resulting_remaining: Remaining { cpu, mem },
                algorithm_digest,
            });
        }
        let n = txs.len();
        for tx in txs {
            self.append_logical(alloc::vec![LedgerEntry::Placement(tx)]);
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::to_canonical;
    use crate::model::fixtures::*;
    use crate::placement::{PlacementRequest, Placer};
    use alloc::vec;
    use proptest::prelude::*;

    fn fig5_ledger() -> Ledger {
        let mut l = Ledger::new();
        let m = LedgerRecord::new(Entity::Mecsp(mecsp("m", 1.0, 0.0, 1.0, 0.0)), Op::Create, None);
        let h = LedgerRecord::new(
            Entity::MeHost(MeHost { id: "h".into(), owner: "m".into(), cpu_capacity: 8, mem_capacity: 16384 }),
            Op::Create,
            None,
        );
        let host_address = h.address;
        l.append(vec![LedgerEntry::Record(m), LedgerEntry::Record(h)], 0);
        let chain = SvcChain::linear("s", vec![app("a", 2, 4096)], 0, 10.0, "u");
        l.register_chain(&chain, WorldParams::default()).unwrap();
        let app_address = l.replay(WorldParams::default()).unwrap().address_of(EntityKind::MeApp, "a").unwrap();
        l.append_logical(vec![LedgerEntry::Placement(PlacementTx {
            app_address,
            host_address,
            cpu_delta: 2,
            mem_delta: 4096,
            resulting_remaining: Remaining { cpu: 6, mem: 12288 },
            algorithm_digest: Placer::default().algorithm_digest(),
        })]);
        l
    }

    use crate::model::MeHost;

    #[test]
    fn replay_applies_deduction() {
        let s = fig5_ledger().replay(WorldParams::default()).unwrap();
        assert_eq!(s.world.remaining("h"), Some((6, 12288)));
        assert_eq!(s.world.placement().host_of("a"), Some("h"));
    }

    #[test]
    fn empty_genesis_replays_to_empty_world() {
        let l = Ledger::genesis(&WorldState::default());
        assert_eq!(l.blocks()[0].prev_hash, Digest::ZERO);
        assert_eq!(l.replay(WorldParams::default()).unwrap().world, WorldState::default());
    }

    #[test]
    fn genesis_replays_substrate() {
        let w = table3_world();
        assert_eq!(Ledger::genesis(&w).replay(WorldParams::default()).unwrap().world, w);
    }

    #[test]
    fn tx_with_unknown_host_fails_at_its_block() {
        let mut l = fig5_ledger();
        let mut blocks = l.blocks().to_vec();
        let mut tx = match &blocks[2].payload[0] {
            LedgerEntry::Placement(tx) => tx.clone(),
            _ => unreachable!(),
        };
        blocks.truncate(2);
        l = Ledger::from_blocks(blocks).unwrap();
        tx.host_address = Digest::of(b"nowhere");
        l.append(vec![LedgerEntry::Placement(tx)], 2);
        let err = l.replay(WorldParams::default()).unwrap_err();
        assert!(matches!(err, LedgerError::Replay(ReplayError { index: 2, cause: ReplayCause::DanglingAddress(_) })));
    }

    #[test]
    fn wrong_remaining_is_rejected() {
        let mut l = fig5_ledger();
        let mut blocks = l.blocks().to_vec();
        let mut tx = match &blocks[2].payload[0] {
            LedgerEntry::Placement(tx) => tx.clone(),
            _ => unreachable!(),
        };
        blocks.truncate(2);
        l = Ledger::from_blocks(blocks).unwrap();
        tx.resulting_remaining.cpu = 7;
        l.append(vec![LedgerEntry::Placement(tx)], 2);
        assert!(matches!(
            l.replay(WorldParams::default()),
            Err(LedgerError::Replay(ReplayError { cause: ReplayCause::ResourceMismatch, .. }))
        ));
    }

    #[test]
    fn append_links_and_is_deterministic() {
        let mut a = Ledger::new();
        a.append(vec![], 0);
        a.append(vec![], 1);
        assert_eq!(a.blocks()[1].prev_hash, a.blocks()[0].hash);
        let mut b = Ledger::new();
        b.append(vec![], 0);
        b.append(vec![], 1);
        assert_eq!(a.head(), b.head());
    }

    #[test]
    fn single_byte_flip_reported_at_block() {
        let l = ten_block_ledger();
        assert_eq!(verify_chain(l.blocks()), ChainStatus::Valid);
        let mut blocks = l.blocks().to_vec();
        blocks[4].timestamp ^= 1;
        assert_eq!(verify_chain(&blocks), ChainStatus::FirstBad(4));
    }

    #[test]
    fn spliced_block_detected_downstream() {
        let l = ten_block_ledger();
        let mut blocks = l.blocks().to_vec();
        let b4 = &blocks[4];
        blocks[4] = Block::new(4, b4.prev_hash, vec![], b4.timestamp);
        assert_eq!(verify_chain(&blocks), ChainStatus::FirstBad(5));
    }

    #[test]
    fn update_and_delete_follow_lineage() {
        let w = table3_world();
        let mut l = Ledger::genesis(&w);
        let s = l.replay(WorldParams::default()).unwrap();
        let prev = s.address_of(EntityKind::Mecsp, "m1").unwrap();
        let upd = LedgerRecord::new(Entity::Mecsp(mecsp("m1", 1.0, 0.6, 1.0, 0.2)), Op::Update, Some(prev));
        l.append(vec![LedgerEntry::Record(upd.clone())], 1);
        let s = l.replay(WorldParams::default()).unwrap();
        assert_eq!(s.world.mecsp("m1").unwrap().delta, 0.6);
        // a second update naming the stale address is rejected
        let stale = LedgerRecord::new(Entity::Mecsp(mecsp("m1", 1.0, 0.1, 1.0, 0.2)), Op::Update, Some(prev));
        let mut bad = l.clone();
        bad.append(vec![LedgerEntry::Record(stale)], 2);
        assert!(bad.replay(WorldParams::default()).is_err());

        let prev = s.address_of(EntityKind::HostLink, "e1-2").unwrap();
        let link = w.link("e1-2").unwrap().clone();
        l.append(vec![LedgerEntry::Record(LedgerRecord::new(Entity::HostLink(link), Op::Delete, Some(prev)))], 2);
        let s = l.replay(WorldParams::default()).unwrap();
        assert!(s.world.link("e1-2").is_none());
        assert_eq!(s.address_of(EntityKind::HostLink, "e1-2"), None);
    }

    #[test]
    fn duplicate_create_rejected() {
        let w = table3_world();
        let mut l = Ledger::genesis(&w);
        let again = LedgerRecord::new(Entity::Mecsp(mecsp("m1", 2.0, 0.0, 1.0, 0.0)), Op::Create, None);
        l.append(vec![LedgerEntry::Record(again)], 1);
        assert!(matches!(
            l.replay(WorldParams::default()),
            Err(LedgerError::Replay(ReplayError { index: 1, cause: ReplayCause::DuplicateCreate { .. } }))
        ));
    }

    #[test]
    fn block_json_round_trips() {
        let l = fig5_ledger();
        for b in l.blocks() {
            let text = to_canonical(b);
            let back: Block = serde_json::from_str(&text).unwrap();
            assert_eq!(&back, b);
            assert_eq!(to_canonical(&back), text);
        }
    }

    #[test]
    fn infeasible_decision_posts_nothing() {
        let mut l = Ledger::genesis(&table3_world());
        let before = l.clone();
        let dec = PlacementDecision {
            chain_id: "s".into(),
            assignments: Default::default(),
            cost: Default::default(),
            outcome: crate::placement::PlacementOutcome::Infeasible("x".into()),
        };
        assert_eq!(l.post_placement(&dec, Digest::ZERO, WorldParams::default()), Ok(0));
        assert_eq!(l, before);
    }

    /// Genesis, two chain registrations and the first chain's five
    /// placements plus two of the second's.
    fn ten_block_ledger() -> Ledger {
        let w = table3_world();
        let mut l = Ledger::genesis(&w);
        let placer = Placer::default();
        let mut live = w.clone();
        for id in ["s1", "s2"] {
            l.register_chain(&table3_chain(id), WorldParams::default()).unwrap();
        }
        let dec = placer.place_chain(&mut live, &PlacementRequest { chain: table3_chain("s1"), dist: shares(0.5, 0.25, 0.25) });
        l.post_placement(&dec, placer.algorithm_digest(), WorldParams::default()).unwrap();
        let mut partial = dec.clone();
        partial.chain_id = "s2".into();
        partial.assignments = [("s2-v1", "h2"), ("s2-v2", "h2"), ("s2-v3", "h2"), ("s2-v4", "h2"), ("s2-v5", "h2")].into_iter().collect();
        l.post_placement(&partial, placer.algorithm_digest(), WorldParams::default()).unwrap();
        l.blocks.truncate(10);
        l
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn replay_matches_live(deltas in proptest::collection::vec(0.0f64..1.0, 1..4), p1 in 0.0f64..1.0) {
            let mut live = table3_world();
            let mut l = Ledger::genesis(&live);
            let placer = Placer::default();
            for (i, delta) in deltas.iter().enumerate() {
                live.update_mecsp(mecsp("m1", 1.0, *delta, 1.0, 0.2)).unwrap();
                let prev = l.replay(WorldParams::default()).unwrap().address_of(EntityKind::Mecsp, "m1").unwrap();
                l.append_logical(vec![LedgerEntry::Record(LedgerRecord::new(Entity::Mecsp(mecsp("m1", 1.0, *delta, 1.0, 0.2)), Op::Update, Some(prev)))]);
                let chain = table3_chain(&alloc::format!("s{i}"));
                l.register_chain(&chain, WorldParams::default()).unwrap();
                live.register_chain(chain.clone()).unwrap();
                let dec = placer.place_chain(&mut live, &PlacementRequest { chain, dist: shares(p1, 1.0 - p1, 0.0) });
                l.post_placement(&dec, placer.algorithm_digest(), WorldParams::default()).unwrap();
            }
            prop_assert_eq!(l.replay(WorldParams::default()).unwrap().world, live);
        }

        #[test]
        fn any_bit_flip_detected(block in 0usize..10, byte in any::<prop::sample::Index>(), bit in 0u8..8) {
            let l = ten_block_ledger();
            let mut blocks = l.blocks().to_vec();
            let text = to_canonical(&blocks[block]);
            let mut bytes = text.into_bytes();
            let i = byte.index(bytes.len());
            bytes[i] ^= 1 << bit;
            match core::str::from_utf8(&bytes).ok().and_then(|s| serde_json::from_str::<Block>(s).ok()) {
                // unparseable lines are rejected outright
                None => {}
                Some(b) => {
                    let reencoded = to_canonical(&b);
                    if reencoded.as_bytes() == bytes.as_slice() {
                        blocks[block] = b;
                        prop_assert_ne!(verify_chain(&blocks), ChainStatus::Valid);
                    }
                }
            }
        }
    }
}
