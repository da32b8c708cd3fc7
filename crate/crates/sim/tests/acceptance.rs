//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use edgechain_core::feasibility::check_placement;
use edgechain_core::ledger::Block;
use edgechain_core::oracle::{self, solve_exact};
use edgechain_core::placement::processing_order;
use edgechain_core::{CostBreakdown, Ledger, PlacementDecision, Placer};
use edgechain_sim::compare::run_compare;
use edgechain_sim::config::{
    AppConfig, ChainConfig, HostConfig, HostLinkConfig, MecspConfig, ScenarioConfig, UserDistributionConfig,
};
use edgechain_sim::ledger_file::{decode, encode, FileStatus};
use edgechain_sim::simulate::run_simulation;
use edgechain_sim::sweep::{evaluate, run_sweep, SweepPoint, SweepSpec};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/table3.scenario");

fn table3() -> ScenarioConfig {
    ScenarioConfig::load(SCENARIO).expect("table3 scenario loads")
}

fn table3_shares(m1: f64, m2: f64, m3: f64) -> ScenarioConfig {
    let mut cfg = table3();
    cfg.user_distribution.shares = [("m1", m1), ("m2", m2), ("m3", m3)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    cfg
}

fn delta_spec() -> SweepSpec {
    SweepSpec { param: "mecsp.m1.delta".parse().unwrap(), from: 0.1, to: 0.6, step: 0.05, coupled: vec![] }
}

fn share_spec() -> SweepSpec {
    SweepSpec {
        param: "share.m1".parse().unwrap(),
        from: 0.0,
        to: 1.0,
        step: 0.1,
        coupled: vec!["share.m2=1-x".parse().unwrap(), "share.m3=0".parse().unwrap()],
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn counts(p: &SweepPoint) -> (usize, usize, usize) {
    (p.apps_per_mecsp["m1"], p.apps_per_mecsp["m2"], p.apps_per_mecsp["m3"])
}

/// Every point must be all-on-m1 at or below `m1_until` and all-on-m2 from
/// `m2_from`; points strictly between are unconstrained.
fn crossover(cfg: &ScenarioConfig, m1_until: f64, m2_from: f64) -> Outcome {
    let (points, took) = timed(|| run_sweep(cfg, &delta_spec(), &Placer::default()));
    let points = points.map_err(|e| e.to_string())?;
    ensure!(points.len() == 11, "{} sweep points", points.len());
    let mut trace = Vec::new();
    for p in &points {
        let c = counts(p);
        trace.push(format!("{}:{}/{}/{}", p.value, c.0, c.1, c.2));
        ensure!(p.feasible, "infeasible at delta {}", p.value);
        if p.value <= m1_until + 1e-12 {
            ensure!(c == (15, 0, 0), "delta {}: counts {:?}, expected all on m1", p.value, c);
        }
        if p.value >= m2_from - 1e-12 {
            ensure!(c == (0, 15, 0), "delta {}: counts {:?}, expected all on m2", p.value, c);
        }
    }
    ensure!(took < Duration::from_secs(1), "sweep took {took:?}");
    Ok(format!("{took:.2?}; m1/m2/m3 {}", trace.join(" ")))
}

fn c1() -> Outcome {
    crossover(&table3_shares(0.5, 0.25, 0.25), 0.30, 0.40)
}

fn c2() -> Outcome {
    crossover(&table3_shares(0.25, 0.25, 0.5), 0.20, 0.25)
}

fn c3() -> Outcome {
    let (points, took) = timed(|| run_sweep(&table3(), &share_spec(), &Placer::default()));
    let points = points.map_err(|e| e.to_string())?;
    ensure!(points.len() == 11, "{} sweep points", points.len());
    let mut trace = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (counts(&w[0]), counts(&w[1]));
        ensure!(b.0 >= a.0, "m1 count drops from {} to {} at share {}", a.0, b.0, w[1].value);
        ensure!(b.1 <= a.1, "m2 count rises from {} to {} at share {}", a.1, b.1, w[1].value);
    }
    for p in &points {
        let c = counts(p);
        trace.push(format!("{}:{}/{}/{}", p.value, c.0, c.1, c.2));
        ensure!(p.feasible, "infeasible at share {}", p.value);
        ensure!(c.2 == 0, "apps on m3 at share {} although capacity and latency allow m1/m2", p.value);
    }
    ensure!(took < Duration::from_secs(2), "sweep took {took:?}");
    Ok(format!("{took:.2?}; m1/m2/m3 {}", trace.join(" ")))
}

fn c4() -> Outcome {
    let cfg = table3();
    let req = cfg.requests().map_err(|e| e.to_string())?.remove(0);
    let world = cfg.build_world().map_err(|e| e.to_string())?;
    let (exact, took) = timed(|| solve_exact(&world, &req.chain, &req.dist, oracle::DEFAULT_LIMIT));
    let exact = exact.map_err(|e| e.to_string())?;
    ensure!(exact.evaluated == 59049, "{} enumerations", exact.evaluated);
    ensure!(took < Duration::from_secs(10), "single-chain oracle took {took:?}");

    let mut ratios = Vec::new();
    let mut all_one = true;
    for (label, base) in [("a", table3_shares(0.5, 0.25, 0.25)), ("b", table3_shares(0.25, 0.25, 0.5))] {
        let spec = delta_spec();
        for x in spec.points().map_err(|e| e.to_string())? {
            let point = spec.configure(&base, x).map_err(|e| e.to_string())?;
            let rows = run_compare(&point, &Placer::default(), oracle::DEFAULT_LIMIT).map_err(|e| e.to_string())?;
            for r in rows {
                ensure!(r.agree_on_feasibility, "{label} delta {x} chain {}: feasibility disagrees", r.chain_id);
                let Some(ratio) = r.ratio else { continue };
                ensure!(ratio >= 1.0, "{label} delta {x} chain {}: ratio {ratio} below 1", r.chain_id);
                all_one &= ratio == 1.0;
                ratios.push(ratio);
            }
        }
    }
    let max = ratios.iter().cloned().fold(1.0, f64::max);
    Ok(format!(
        "oracle {took:.2?} over {} candidates; {} ratios, max {max}{}",
        exact.evaluated,
        ratios.len(),
        if all_one { " (all 1.0)" } else { "" }
    ))
}

/// Small random scenario: at most `max_hosts` hosts and `max_apps` apps
/// spread over one or two chains.
fn random_scenario(rng: &mut ChaCha8Rng, max_hosts: usize, max_apps: usize) -> ScenarioConfig {
    let n_mecsps = rng.random_range(1..=3usize);
    let mecsps: Vec<MecspConfig> = (0..n_mecsps)
        .map(|i| MecspConfig {
            id: format!("m{i}"),
            gamma: rng.random_range(0.5..2.0),
            delta: rng.random_range(0.0..1.0),
            kappa: rng.random_range(0.1..2.0),
            sigma: rng.random_range(0.0..1.0),
        })
        .collect();
    let n_hosts = rng.random_range(1..=max_hosts);
    let hosts: Vec<HostConfig> = (0..n_hosts)
        .map(|i| HostConfig {
            id: format!("h{i}"),
            owner: format!("m{}", rng.random_range(0..n_mecsps)),
            cpu_capacity: rng.random_range(1..=8),
            mem_capacity: rng.random_range(1..=8) * 1024,
        })
        .collect();
    let mut host_links = Vec::new();
    for a in 0..n_hosts {
        for b in a + 1..n_hosts {
            if rng.random_bool(0.7) {
                host_links.push(HostLinkConfig {
                    id: format!("e{a}-{b}"),
                    endpoint_a: format!("h{a}"),
                    endpoint_b: format!("h{b}"),
                    bandwidth_capacity: rng.random_range(10..=200),
                    latency_ms: rng.random_range(0.5..10.0),
                    max_virtual_links: rng.random_bool(0.5).then(|| rng.random_range(1..=4)),
                });
            }
        }
    }
    let n_apps = rng.random_range(1..=max_apps);
    let n_chains = if n_apps >= 2 && rng.random_bool(0.4) { 2 } else { 1 };
    let split = if n_chains == 2 { rng.random_range(1..n_apps) } else { n_apps };
    let chains = [(0, split), (split, n_apps)]
        .into_iter()
        .filter(|(a, b)| a < b)
        .enumerate()
        .map(|(c, (a, b))| ChainConfig {
            id: format!("c{c}"),
            max_latency_ms: rng.random_range(2.0..30.0),
            requested_by: "u".into(),
            apps: (a..b)
                .map(|i| AppConfig {
                    id: format!("c{c}-a{i}"),
                    vendor: "v".into(),
                    cpu_demand: rng.random_range(1..=4),
                    mem_demand: rng.random_range(1..=16) * 256,
                    max_latency_ms: rng.random_bool(0.3).then(|| rng.random_range(1.0..15.0)),
                })
                .collect(),
            links: None,
            link_bandwidth: Some(rng.random_range(1..=80)),
        })
        .collect();
    // shares in twentieths so that their sum never exceeds one
    let mut left = 20u32;
    let mut shares = BTreeMap::new();
    for m in &mecsps {
        let k = rng.random_range(0..=left);
        left -= k;
        shares.insert(m.id.clone(), f64::from(k) / 20.0);
    }
    ScenarioConfig {
        seed: 0,
        weights: Default::default(),
        defaults: Default::default(),
        user_distribution: UserDistributionConfig { total_users: rng.random_range(1..=100), shares },
        mecsps,
        hosts,
        host_links,
        chains,
    }
}

fn c5() -> Outcome {
    const SCENARIOS: usize = 1500;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let placer = Placer::default();
    let (mut placed, mut infeasible) = (0, 0);
    for s in 0..SCENARIOS {
        let cfg = random_scenario(&mut rng, 4, 4);
        cfg.validate().map_err(|e| format!("scenario {s}: {e}"))?;
        let mut world = cfg.build_world().map_err(|e| e.to_string())?;
        let requests = cfg.requests().map_err(|e| e.to_string())?;
        for i in processing_order(&requests, world.weights()) {
            let req = &requests[i];
            let before = world.clone();
            let dec = placer.place_chain(&mut world, req);
            if dec.is_placed() {
                placed += 1;
                let chain = world.chain(&req.chain.id).ok_or("placed chain not registered")?;
                let v = check_placement(&world, &dec.assignments, &[chain]).map_err(|e| format!("scenario {s}: {e}"))?;
                ensure!(v.is_empty(), "scenario {s} chain {}: {} violations, first {:?}", req.chain.id, v.len(), v[0]);
                let all = check_placement(&world, world.placement(), &[]).map_err(|e| e.to_string())?;
                ensure!(all.is_empty(), "scenario {s}: world placement violates {:?}", all[0]);
            } else {
                infeasible += 1;
                ensure!(world == before, "scenario {s}: infeasible verdict changed the world");
                let exact = solve_exact(&before, &req.chain, &req.dist, oracle::DEFAULT_LIMIT).map_err(|e| e.to_string())?;
                ensure!(
                    exact.feasible_count == 0,
                    "scenario {s} chain {}: infeasible verdict but oracle found {} feasible placements",
                    req.chain.id,
                    exact.feasible_count
                );
            }
        }
    }
    Ok(format!("{SCENARIOS} scenarios; {placed} placed chains checked, {infeasible} infeasible verdicts confirmed"))
}

fn flip(text: &[u8], byte: usize, bit: u8) -> Vec<u8> {
    let mut t = text.to_vec();
    t[byte] ^= 1 << bit;
    t
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut total_blocks = 0;
    for s in 0..100 {
        let cfg = random_scenario(&mut rng, 4, 4);
        let validators = rng.random_range(1..=5usize);
        let byzantine = rng.random_range(0..=(validators - 1) / 2);
        let sim = run_simulation(&cfg, validators, byzantine).map_err(|e| format!("session {s}: {e}"))?;
        let replayed = sim.ledger.replay(cfg.params()).map_err(|e| e.to_string())?;
        ensure!(replayed.world == sim.world, "session {s}: replay differs from live world");
        total_blocks += sim.ledger.len();
    }

    let sim = run_simulation(&table3(), 3, 0).map_err(|e| e.to_string())?;
    let blocks: Vec<Block> = sim.ledger.blocks()[..10].to_vec();
    Ledger::from_blocks(blocks.clone()).map_err(|e| e.to_string())?;
    let lines: Vec<String> = blocks.iter().map(|b| encode(std::slice::from_ref(b))).collect();
    let offsets: Vec<usize> = lines.iter().scan(0, |acc, l| Some(std::mem::replace(acc, *acc + l.len()))).collect();
    let text = encode(&blocks).into_bytes();
    ensure!(decode(&text).1 == FileStatus::Valid { blocks: 10 }, "pristine chain does not verify");

    let detected = |block: usize, byte: usize, bit: u8| -> Result<(), String> {
        let at = offsets[block] + byte;
        match decode(&flip(&text, at, bit)).1 {
            FileStatus::FirstBad { index, .. } if index == block as u64 => Ok(()),
            other => Err(format!("flip of bit {bit} in byte {byte} of block {block} gave {other:?}")),
        }
    };
    // exhaustive on the block holding the first placement, excluding its newline
    let target = 4;
    let mut flips = 0u64;
    for byte in 0..lines[target].len() - 1 {
        for bit in 0..8 {
            detected(target, byte, bit)?;
            flips += 1;
        }
    }
    for (block, line) in lines.iter().enumerate().filter(|(b, _)| *b != target) {
        for _ in 0..500 {
            detected(block, rng.random_range(0..line.len() - 1), rng.random_range(0..8))?;
            flips += 1;
        }
    }
    Ok(format!("100 sessions ({total_blocks} blocks) replay equal; {flips} bit flips all detected at the flipped block"))
}

fn c7() -> Outcome {
    let cfg = table3();
    let placer = Placer::default();
    let mut world = cfg.build_world().map_err(|e| e.to_string())?;
    let honest: Vec<PlacementDecision> = placer.place_all(&mut world, &cfg.requests().map_err(|e| e.to_string())?);
    let (res, took) = timed(|| -> Outcome {
        let mut cases = 0;
        for n in [3usize, 5, 7, 9] {
            for f in 0..n.div_ceil(2) {
                let sim = run_simulation(&cfg, n, f).map_err(|e| e.to_string())?;
                for (round, expected) in sim.rounds.iter().zip(&honest) {
                    ensure!(round.outcome.committed.as_ref() == Some(expected), "N={n} f={f} chain {}: committed differs", round.chain_id);
                }
                cases += 1;
            }
        }
        for n in [2usize, 4, 6, 8] {
            let sim = run_simulation(&cfg, n, n / 2).map_err(|e| e.to_string())?;
            ensure!(sim.rounds.iter().all(|r| r.outcome.committed.is_none()), "N={n} f={}: a decision was committed", n / 2);
            ensure!(sim.ledger.len() == 4, "N={n}: ledger grew to {} blocks without a commit", sim.ledger.len());
            cases += 1;
        }
        Ok(format!("{cases} (N, f) cases"))
    });
    let detail = res?;
    ensure!(took < Duration::from_secs(5), "grid took {took:?}");
    Ok(format!("{detail} in {took:.2?}"))
}

fn simulate_to(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_edgechain"))
        .args(["simulate", "--scenario", SCENARIO, "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "simulate failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn c8() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    simulate_to(a.path())?;
    simulate_to(b.path())?;
    for f in ["report.json", "placements.csv", "ledger.jsonl"] {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{f} differs between runs");
    }
    let digest = |d: &Path| -> Result<String, String> {
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(d.join("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        Ok(v["ledger_digest"].as_str().unwrap_or_default().to_string())
    };
    let (da, db) = (digest(a.path())?, digest(b.path())?);
    ensure!(!da.is_empty() && da == db, "ledger digests {da} / {db}");
    Ok(format!("3 files byte-identical, ledger digest {da}"))
}

fn scaled_close(base: &CostBreakdown, scaled: &CostBreakdown) -> bool {
    let close = |a: f64, b: f64| (3.0 * a - b).abs() <= 1e-9 * (3.0 * a).abs().max(f64::MIN_POSITIVE);
    close(base.host_cost, scaled.host_cost) && close(base.link_cost, scaled.link_cost) && close(base.total, scaled.total)
}

fn c9() -> Outcome {
    let cases: [(&str, ScenarioConfig, SweepSpec); 3] = [
        ("c1", table3_shares(0.5, 0.25, 0.25), delta_spec()),
        ("c2", table3_shares(0.25, 0.25, 0.5), delta_spec()),
        ("c3", table3(), share_spec()),
    ];
    let placer = Placer::default();
    let mut points = 0;
    let mut worst = 0f64;
    for (label, base, spec) in cases {
        for x in spec.points().map_err(|e| e.to_string())? {
            let cfg = spec.configure(&base, x).map_err(|e| e.to_string())?;
            let mut scaled = cfg.clone();
            scaled.scale_prices(3.0);
            let p = evaluate(&cfg, &placer, x).map_err(|e| e.to_string())?;
            let q = evaluate(&scaled, &placer, x).map_err(|e| e.to_string())?;
            for (d, e) in p.decisions.iter().zip(&q.decisions) {
                ensure!(d.assignments == e.assignments && d.outcome == e.outcome, "{label} at {x}: chain {} moves", d.chain_id);
                ensure!(scaled_close(&d.cost, &e.cost), "{label} at {x}: chain {} costs {:?} vs {:?}", d.chain_id, d.cost, e.cost);
                if d.cost.total != 0.0 {
                    worst = worst.max((e.cost.total / d.cost.total - 3.0).abs() / 3.0);
                }
            }
            points += 1;
        }
    }
    Ok(format!("{points} points unchanged, worst relative cost error {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1", "delta crossover, P=(0.5,0.25,0.25)", c1),
        ("2", "delta crossover, P=(0.25,0.25,0.5)", c2),
        ("3", "share monotonicity", c3),
        ("4", "oracle bound", c4),
        ("5", "constraint soundness", c5),
        ("6", "ledger integrity", c6),
        ("7", "consensus neutrality", c7),
        ("8", "determinism", c8),
        ("9", "price-scale invariance", c9),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] criterion {n}: {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {n}: {name}: {why}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
