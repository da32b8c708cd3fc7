use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgechain_core::ledger::replay;
use edgechain_core::model::WorldParams;
use edgechain_core::{oracle, Placer};
use edgechain_sim::config::{ParamPath, ScenarioConfig};
use edgechain_sim::ledger_file::{self, FileStatus};
use edgechain_sim::simulate::{placements_csv, run_simulation, DEFAULT_VALIDATORS};
use edgechain_sim::sweep::{run_sweep, to_csv, CoupledRule, SweepSpec};
use edgechain_sim::compare;
use serde_json::json;

#[derive(Parser)]
#[command(name = "edgechain", version, about = "Service chain placement over a shared edge ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place every chain of a scenario through validator rounds.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VALIDATORS)]
        validators: usize,
        /// Directory for report.json, placements.csv and ledger.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the placement while stepping one parameter.
    Sweep(SweepArgs),
    /// Compare the heuristic with exhaustive search per chain.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = oracle::DEFAULT_LIMIT)]
        limit: u64,
    },
    /// Inspect a ledger file.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Run a simulation with colluding validators and print the round audits.
    Consensus {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        validators: usize,
        #[arg(long, default_value_t = 0)]
        byzantine: usize,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `mecsp.<id>.<gamma|delta|kappa|sigma>`, `share.<id>` or `users`.
    #[arg(long)]
    param: ParamPath,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long)]
    step: f64,
    /// `<path>=x`, `<path>=1-x` or `<path>=<number>`; repeatable.
    #[arg(long)]
    coupled: Vec<CoupledRule>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Check hashes and linkage; exit status 1 on the first bad block.
    Verify {
        #[arg(long)]
        file: PathBuf,
    },
    /// Rebuild the world from the records and print its placement.
    Replay {
        #[arg(long)]
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String, serde_json::Error> {
    serde_json::to_string_pretty(v).map(|s| s + "\n")
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn Error>> {
    match cli.command {
        Command::Simulate { scenario, validators, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let sim = run_simulation(&cfg, validators, 0)?;
            let report = pretty(&sim.report)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("report.json"), report)?;
                    std::fs::write(dir.join("placements.csv"), placements_csv(&sim))?;
                    ledger_file::write(&sim.ledger, dir.join("ledger.jsonl"))?;
                }
                None => print!("{report}"),
            }
        }
        Command::Sweep(a) => {
            let cfg = ScenarioConfig::load(&a.scenario)?;
            let spec = SweepSpec { param: a.param, from: a.from, to: a.to, step: a.step, coupled: a.coupled };
            let points = run_sweep(&cfg, &spec, &Placer::default())?;
            let table = to_csv(&spec.param, &points);
            match a.csv {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
        }
        Command::Compare { scenario, limit } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let rows = compare::run_compare(&cfg, &Placer::default(), limit)?;
            print!("{}", compare::to_csv(&rows));
        }
        Command::Ledger { command: LedgerCommand::Verify { file } } => {
            let (_, status) = ledger_file::read(&file)?;
            return Ok(match status {
                FileStatus::Valid { blocks } => {
                    println!("valid: {blocks} blocks");
                    ExitCode::SUCCESS
                }
                FileStatus::FirstBad { index, reason } => {
                    println!("invalid: block {index}: {reason}");
                    ExitCode::FAILURE
                }
            });
        }
        Command::Ledger { command: LedgerCommand::Replay { file } } => {
            let (blocks, status) = ledger_file::read(&file)?;
            if let FileStatus::FirstBad { index, reason } = status {
                println!("invalid: block {index}: {reason}");
                return Ok(ExitCode::FAILURE);
            }
            let state = replay(&blocks, WorldParams::default())?;
            let w = &state.world;
            let summary = json!({
                "blocks": blocks.len(),
                "mecsps": w.mecsps().len(),
                "hosts": w.hosts().len(),
                "chains": w.chains().keys().collect::<Vec<_>>(),
                "placement": w.placement(),
                "remaining": w.hosts().keys().map(|h| {
                    let r = w.remaining(h).expect("known host");
                    (h.clone(), json!({"cpu": r.0, "mem": r.1}))
                }).collect::<serde_json::Map<_, _>>(),
            });
            print!("{}", pretty(&summary)?);
        }
        Command::Consensus { scenario, validators, byzantine } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let sim = run_simulation(&cfg, validators, byzantine)?;
            let rounds: Vec<_> = sim
                .rounds
                .iter()
                .map(|r| {
                    json!({
                        "chain_id": r.chain_id,
                        "committed": r.outcome.committed.is_some(),
                        "quorum": r.outcome.quorum,
                        "audit": r.audit,
                    })
                })
                .collect();
            let out = json!({
                "validators": validators,
                "byzantine": byzantine,
                "rounds": rounds,
                "apps_per_mecsp": sim.report.apps_per_mecsp,
                "ledger_height": sim.report.ledger_height,
            });
            print!("{}", pretty(&out)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
