//! Heuristic against exhaustive search, chain by chain.

use edgechain_core::oracle::{solve_exact, OracleError};
use edgechain_core::placement::processing_order;
use edgechain_core::{CostBreakdown, Placer};
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::sweep::fmt_num;

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chain {chain:?}: {source}")]
    Oracle { chain: String, source: OracleError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub chain_id: String,
    pub heuristic: Option<CostBreakdown>,
    pub oracle: Option<CostBreakdown>,
    /// Heuristic total over oracle total, when both placed the chain.
    pub ratio: Option<f64>,
    pub same_assignments: bool,
    /// Both placed the chain, or both found it infeasible.
    pub agree_on_feasibility: bool,
    pub evaluated: u64,
    pub feasible_count: u64,
}

/// Costs of the ratio when the optimum is free: equal costs count as 1.
fn ratio(heuristic: f64, optimum: f64) -> f64 {
    if heuristic == optimum {
        1.0
    } else {
        heuristic / optimum
    }
}

/// For each chain in processing order: solve exactly on the current world,
/// then place heuristically and carry the result forward.
pub fn run_compare(cfg: &ScenarioConfig, placer: &Placer, limit: u64) -> Result<Vec<CompareRow>, CompareError> {
    let mut world = cfg.build_world()?;
    let requests = cfg.requests()?;
    let mut rows = Vec::new();
    for i in processing_order(&requests, world.weights()) {
        let req = &requests[i];
        let exact =
            solve_exact(&world, &req.chain, &req.dist, limit).map_err(|source| CompareError::Oracle { chain: req.chain.id.clone(), source })?;
        let dec = placer.place_chain(&mut world, req);
        let heuristic = dec.is_placed().then_some(dec.cost);
        let oracle = exact.best.as_ref().map(|_| exact.best_cost);
        rows.push(CompareRow {
            chain_id: req.chain.id.clone(),
            ratio: heuristic.zip(oracle).map(|(h, o)| ratio(h.total, o.total)),
            same_assignments: match &exact.best {
                Some(best) => dec.is_placed() && best == &dec.assignments,
                None => !dec.is_placed(),
            },
            agree_on_feasibility: heuristic.is_some() == oracle.is_some(),
            heuristic,
            oracle,
            evaluated: exact.evaluated,
            feasible_count: exact.feasible_count,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[CompareRow]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record([
        "chain_id",
        "heuristic_cost",
        "oracle_cost",
        "ratio",
        "same_assignments",
        "agree_on_feasibility",
        "evaluated",
        "feasible_count",
    ])
    .expect("writing to memory");
    for r in rows {
        let opt = |c: Option<CostBreakdown>| c.map(|c| fmt_num(c.total)).unwrap_or_else(|| "infeasible".into());
        w.write_record([
            r.chain_id.clone(),
            opt(r.heuristic),
            opt(r.oracle),
            r.ratio.map(fmt_num).unwrap_or_default(),
            r.same_assignments.to_string(),
            r.agree_on_feasibility.to_string(),
            r.evaluated.to_string(),
            r.feasible_count.to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV of UTF-8 fields")
}
