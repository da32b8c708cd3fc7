//! Majority agreement among validators that each run the placement
//! independently on their own replay of the ledger.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::canonical::digest_of;
use crate::digest::Digest;
use crate::ledger::{Ledger, LedgerEntry, LedgerError};
use crate::model::{EntityKind, WorldParams};
use crate::placement::{PlacementDecision, PlacementRequest, Placer};

#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    Honest,
    /// Votes for `forgery` under `claimed_algorithm` whatever the input.
    Byzantine { forgery: PlacementDecision, claimed_algorithm: Digest },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validator {
    pub id: String,
    pub behavior: Behavior,
}

impl Validator {
    pub fn honest(id: impl Into<String>) -> Self {
        Validator { id: id.into(), behavior: Behavior::Honest }
    }

    pub fn byzantine(id: impl Into<String>, forgery: PlacementDecision, claimed_algorithm: Digest) -> Self {
        Validator { id: id.into(), behavior: Behavior::Byzantine { forgery, claimed_algorithm } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Vote {
    pub decision: Digest,
    pub algorithm: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusOutcome {
    pub committed: Option<PlacementDecision>,
    /// Vote digest of the committed decision.
    pub committed_digest: Option<Digest>,
    pub votes: BTreeMap<String, Vote>,
    pub quorum: usize,
    /// Ledger length before the round.
    pub base_height: u64,
    /// Algorithm digest of the honest placer.
    pub reference_algorithm: Digest,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("a round needs at least one validator")]
    NoValidators,
    #[error("chain {0:?} must be registered on the ledger before placement")]
    UnregisteredChain(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Strict-majority threshold for `n` validators.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

/// Digest of what a validator vouches for: the chain, whether it was
/// placed, its sorted assignments and the algorithm that produced them.
pub fn decision_digest(decision: &PlacementDecision, algorithm: Digest) -> Digest {
    #[derive(Serialize)]
    struct Voted<'a> {
        algorithm: Digest,
        assignments: Vec<(&'a str, &'a str)>,
        chain: &'a str,
        placed: bool,
    }
    digest_of(&Voted {
        algorithm,
        assignments: decision.assignments.iter().collect(),
        chain: &decision.chain_id,
        placed: decision.is_placed(),
    })
}

/// Runs one placement round. Each validator replays `ledger` and votes; a
/// decision backed by more than half the validators commits and, if it
/// places the chain, is appended to `ledger`. Without a majority `ledger`
/// is left untouched.
pub fn run_round(
    ledger: &mut Ledger,
    request: &PlacementRequest,
    validators: &[Validator],
    placer: &Placer,
    params: WorldParams,
) -> Result<ConsensusOutcome, ConsensusError> {
    if validators.is_empty() {
        return Err(ConsensusError::NoValidators);
    }
    let base = ledger.replay(params)?;
    if base.world.chain(&request.chain.id).is_none() {
        return Err(ConsensusError::UnregisteredChain(request.chain.id.clone()));
    }
    let reference_algorithm = placer.algorithm_digest();
    let mut votes = BTreeMap::new();
    let mut ballots: BTreeMap<Digest, (usize, PlacementDecision, Digest)> = BTreeMap::new();
    for v in validators {
        let (decision, algorithm) = match &v.behavior {
            Behavior::Honest => {
                let mut world = base.world.clone();
                (placer.place_chain(&mut world, request), reference_algorithm)
            }
            Behavior::Byzantine { forgery, claimed_algorithm } => (forgery.clone(), *claimed_algorithm),
        };
        let d = decision_digest(&decision, algorithm);
        votes.insert(v.id.clone(), Vote { decision: d, algorithm });
        ballots.entry(d).or_insert((0, decision, algorithm)).0 += 1;
    }
    let q = quorum(validators.len());
    let winner = ballots.into_iter().find(|(_, (n, _, _))| *n >= q);
    let base_height = ledger.len() as u64;
    let (committed, committed_digest) = match winner {
        Some((d, (_, decision, algorithm))) => {
            ledger.post_placement(&decision, algorithm, params)?;
            (Some(decision), Some(d))
        }
        None => (None, None),
    };
    Ok(ConsensusOutcome { committed, committed_digest, votes, quorum: q, base_height, reference_algorithm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub no_quorum: bool,
    /// Validators whose vote differs from the committed decision.
    pub dissenters: BTreeMap<String, Digest>,
    /// Validators claiming an algorithm other than the reference one.
    pub algorithm_mismatches: BTreeMap<String, Digest>,
    /// Blocks appended by the round.
    pub tx_delta: u64,
    /// Whether the appended placement transactions are exactly the
    /// committed assignments.
    pub committed_matches_ledger: bool,
}

/// Checks a finished round against the ledger it was run on.
pub fn audit_round(outcome: &ConsensusOutcome, ledger: &Ledger, params: WorldParams) -> AuditReport {
    let dissenters = match outcome.committed_digest {
        Some(w) => outcome.votes.iter().filter(|(_, v)| v.decision != w).map(|(id, v)| (id.clone(), v.decision)).collect(),
        None => BTreeMap::new(),
    };
    let algorithm_mismatches = outcome
        .votes
        .iter()
        .filter(|(_, v)| v.algorithm != outcome.reference_algorithm)
        .map(|(id, v)| (id.clone(), v.algorithm))
        .collect();
    let tx_delta = (ledger.len() as u64).saturating_sub(outcome.base_height);
    let committed_matches_ledger = match &outcome.committed {
        Some(d) if d.is_placed() => appended_assignments(outcome, ledger, params).is_some_and(|p| p == d.assignments),
        _ => tx_delta == 0,
    };
    AuditReport { no_quorum: outcome.committed.is_none(), dissenters, algorithm_mismatches, tx_delta, committed_matches_ledger }
}

fn appended_assignments(outcome: &ConsensusOutcome, ledger: &Ledger, params: WorldParams) -> Option<crate::model::Placement> {
    let state = ledger.replay(params).ok()?;
    let mut out = crate::model::Placement::new();
    for b in ledger.blocks().get(outcome.base_height as usize..)? {
        for e in &b.payload {
            let LedgerEntry::Placement(tx) = e else { return None };
            let (EntityKind::MeApp, app) = state.resolve(&tx.app_address)? else { return None };
            let (EntityKind::MeHost, host) = state.resolve(&tx.host_address)? else { return None };
            if out.insert(app, host).is_some() {
                return None;
            }
        }
    }
    Some(out)
}
