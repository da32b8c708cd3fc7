//! End-to-end runs: every chain is registered on the ledger, placed by a
//! validator round and, once committed, applied to the live world.

use std::collections::BTreeMap;

use edgechain_core::consensus::{audit_round, run_round, AuditReport, ConsensusError, ConsensusOutcome, Validator};
use edgechain_core::ledger::LedgerError;
use edgechain_core::model::{ModelError, WorldState};
use edgechain_core::placement::processing_order;
use edgechain_core::{CostBreakdown, Digest, Ledger, PlacementDecision, PlacementOutcome, Placer, PlacementRequest};
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};

pub const DEFAULT_VALIDATORS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{byzantine} byzantine validators out of {validators}")]
    BadValidatorCount { validators: usize, byzantine: usize },
    #[error("ledger replay diverges from the live world")]
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub chain_id: String,
    /// `placed`, `infeasible` or `no_quorum`.
    pub status: String,
    pub reason: Option<String>,
    pub assignments: BTreeMap<String, String>,
    pub cost: Option<CostBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub validators: usize,
    pub byzantine: usize,
    pub chains: Vec<ChainReport>,
    pub apps_per_host: BTreeMap<String, usize>,
    pub apps_per_mecsp: BTreeMap<String, usize>,
    pub total_cost: f64,
    pub ledger_height: usize,
    pub ledger_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Round {
    pub chain_id: String,
    pub outcome: ConsensusOutcome,
    pub audit: AuditReport,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: SimulationReport,
    pub rounds: Vec<Round>,
    pub ledger: Ledger,
    pub world: WorldState,
}

/// Forged decision used by byzantine validators: every app of the chain on
/// the host with the greatest id.
pub fn forgery(world: &WorldState, request: &PlacementRequest) -> PlacementDecision {
    let host = world.hosts().keys().next_back().cloned().unwrap_or_default();
    PlacementDecision {
        chain_id: request.chain.id.clone(),
        assignments: request.chain.apps.iter().map(|a| (a.id.clone(), host.clone())).collect(),
        cost: CostBreakdown::default(),
        outcome: PlacementOutcome::Placed,
    }
}

pub fn forged_algorithm() -> Digest {
    Digest::of(b"forged placement")
}

/// `n` validators of which the first `byzantine` collude on [`forgery`].
pub fn validator_set(n: usize, byzantine: usize, world: &WorldState, request: &PlacementRequest) -> Vec<Validator> {
    (0..n)
        .map(|i| {
            let id = format!("validator-{i}");
            if i < byzantine {
                Validator::byzantine(id, forgery(world, request), forged_algorithm())
            } else {
                Validator::honest(id)
            }
        })
        .collect()
}

pub fn run_simulation(cfg: &ScenarioConfig, validators: usize, byzantine: usize) -> Result<Simulation, SimError> {
    if validators == 0 || byzantine > validators {
        return Err(SimError::BadValidatorCount { validators, byzantine });
    }
    let params = cfg.params();
    let mut world = cfg.build_world()?;
    let requests = cfg.requests()?;
    let mut ledger = Ledger::genesis(&world);
    let placer = Placer::default();
    let mut chains = Vec::new();
    let mut rounds = Vec::new();

    for i in processing_order(&requests, world.weights()) {
        let req = &requests[i];
        ledger.register_chain(&req.chain, params)?;
        world.register_chain(req.chain.clone())?;
        let set = validator_set(validators, byzantine, &world, req);
        let outcome = run_round(&mut ledger, req, &set, &placer, params)?;
        let audit = audit_round(&outcome, &ledger, params);
        let report = match &outcome.committed {
            Some(d) if d.is_placed() => {
                for app in &req.chain.apps {
                    let host = d.assignments.host_of(&app.id).expect("placed decisions cover the chain");
                    world.apply_assignment(&app.id, host)?;
                }
                ChainReport {
                    chain_id: req.chain.id.clone(),
                    status: "placed".into(),
                    reason: None,
                    assignments: d.assignments.iter().map(|(a, h)| (a.into(), h.into())).collect(),
                    cost: Some(d.cost),
                }
            }
            Some(d) => ChainReport {
                chain_id: req.chain.id.clone(),
                status: "infeasible".into(),
                reason: match &d.outcome {
                    PlacementOutcome::Infeasible(r) => Some(r.clone()),
                    PlacementOutcome::Placed => None,
                },
                assignments: BTreeMap::new(),
                cost: None,
            },
            None => ChainReport {
                chain_id: req.chain.id.clone(),
                status: "no_quorum".into(),
                reason: None,
                assignments: BTreeMap::new(),
                cost: None,
            },
        };
        chains.push(report);
        rounds.push(Round { chain_id: req.chain.id.clone(), outcome, audit });
    }

    if ledger.replay(params)?.world != world {
        return Err(SimError::Divergence);
    }

    let mut apps_per_host: BTreeMap<String, usize> = world.hosts().keys().map(|h| (h.clone(), 0)).collect();
    let mut apps_per_mecsp: BTreeMap<String, usize> = world.mecsps().keys().map(|m| (m.clone(), 0)).collect();
    for (_, host) in world.placement().iter() {
        *apps_per_host.entry(host.into()).or_default() += 1;
        let owner = &world.host(host).expect("placed on a known host").owner;
        *apps_per_mecsp.entry(owner.clone()).or_default() += 1;
    }
    let total_cost = chains.iter().filter_map(|c| c.cost).map(|c| c.total).sum();
    let report = SimulationReport {
        validators,
        byzantine,
        chains,
        apps_per_host,
        apps_per_mecsp,
        total_cost,
        ledger_height: ledger.len(),
        ledger_digest: ledger.head(),
    };
    Ok(Simulation { report, rounds, ledger, world })
}

/// `chain_id,app_id,host_id,owner` rows for every placed app.
pub fn placements_csv(sim: &Simulation) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["chain_id", "app_id", "host_id", "owner"]).expect("writing to memory");
    for c in &sim.report.chains {
        let chain = sim.world.chain(&c.chain_id).expect("reported chains are registered");
        for app in &chain.apps {
            if let Some(host) = c.assignments.get(&app.id) {
                let owner = &sim.world.host(host).expect("known host").owner;
                w.write_record([&c.chain_id, &app.id, host, owner]).expect("writing to memory");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV of UTF-8 fields")
}
