//! Scenario files, simulation runs, sweeps and ledger files on top of
//! `edgechain-core`.

pub mod compare;
pub mod config;
pub mod ledger_file;
pub mod simulate;
pub mod sweep;
