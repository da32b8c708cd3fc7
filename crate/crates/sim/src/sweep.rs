//! Parameter sweeps. Each point is evaluated on a fresh world built from the
//! scenario with the swept parameter (and any coupled ones) overridden.

use std::collections::BTreeMap;

use edgechain_core::feasibility::check_placement;
use edgechain_core::{PlacementDecision, Placer, SvcChain};

use crate::config::{ConfigError, ParamPath, ScenarioConfig};

/// Values are rounded to this many decimal places so that accumulated step
/// error does not leak into parameter values.
const VALUE_DECIMALS: i32 = 9;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("placement of chain {chain:?} at {value} fails re-validation")]
    Revalidation { chain: String, value: f64 },
}

/// How a coupled parameter follows the swept value `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Same,
    Complement,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRule {
    pub path: ParamPath,
    pub coupling: Coupling,
}

impl std::str::FromStr for CoupledRule {
    type Err = SweepError;

    /// `<path>=x`, `<path>=1-x` or `<path>=<number>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (path, rhs) = s.split_once('=').ok_or_else(|| SweepError::Spec(format!("coupled rule {s:?} lacks '='")))?;
        let coupling = match rhs.trim() {
            "x" => Coupling::Same,
            "1-x" => Coupling::Complement,
            c => Coupling::Constant(c.parse().map_err(|_| SweepError::Spec(format!("bad coupled value {c:?}")))?),
        };
        Ok(CoupledRule { path: path.trim().parse()?, coupling })
    }
}

impl CoupledRule {
    fn value(&self, x: f64) -> f64 {
        match self.coupling {
            Coupling::Same => x,
            Coupling::Complement => round_value(1.0 - x),
            Coupling::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: ParamPath,
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub coupled: Vec<CoupledRule>,
}

fn round_value(v: f64) -> f64 {
    let k = 10f64.powi(VALUE_DECIMALS);
    (v * k).round() / k
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>, SweepError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(SweepError::Spec("step must be positive".into()));
        }
        if !(self.from.is_finite() && self.to.is_finite() && self.from <= self.to) {
            return Err(SweepError::Spec("from must not exceed to".into()));
        }
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| round_value(self.from + i as f64 * self.step)).collect())
    }

    /// `cfg` with the swept parameter set to `x` and coupled ones following.
    pub fn configure(&self, cfg: &ScenarioConfig, x: f64) -> Result<ScenarioConfig, SweepError> {
        let mut point = cfg.clone();
        point.set_param(&self.param, x)?;
        for rule in &self.coupled {
            point.set_param(&rule.path, rule.value(x))?;
        }
        Ok(point)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub apps_per_mecsp: BTreeMap<String, usize>,
    pub apps_per_host: BTreeMap<String, usize>,
    pub total_cost: f64,
    /// Per chain id; `None` for chains that could not be placed.
    pub latency_ms: BTreeMap<String, Option<f64>>,
    pub feasible: bool,
    pub decisions: Vec<PlacementDecision>,
}

/// Evaluates `cfg` as is: all chains placed in processing order on a fresh
/// world, every placed chain re-checked against the constraints.
pub fn evaluate(cfg: &ScenarioConfig, placer: &Placer, value: f64) -> Result<SweepPoint, SweepError> {
    cfg.validate()?;
    let mut world = cfg.build_world()?;
    let requests = cfg.requests()?;
    let decisions = placer.place_all(&mut world, &requests);
    let placed: Vec<&SvcChain> =
        decisions.iter().filter(|d| d.is_placed()).map(|d| world.chain(&d.chain_id).expect("placed chains are registered")).collect();
    let violations = check_placement(&world, world.placement(), &placed).map_err(|_| SweepError::Revalidation {
        chain: String::new(),
        value,
    })?;
    if let Some(v) = violations.first() {
        return Err(SweepError::Revalidation { chain: v.subject.clone(), value });
    }
    let mut apps_per_host: BTreeMap<String, usize> = world.hosts().keys().map(|h| (h.clone(), 0)).collect();
    let mut apps_per_mecsp: BTreeMap<String, usize> = world.mecsps().keys().map(|m| (m.clone(), 0)).collect();
    for (_, host) in world.placement().iter() {
        *apps_per_host.entry(host.into()).or_default() += 1;
        *apps_per_mecsp.entry(world.host(host).expect("known host").owner.clone()).or_default() += 1;
    }
    let latency_ms = decisions.iter().map(|d| (d.chain_id.clone(), d.is_placed().then_some(d.cost.latency_ms))).collect();
    Ok(SweepPoint {
        value,
        apps_per_mecsp,
        apps_per_host,
        total_cost: decisions.iter().filter(|d| d.is_placed()).map(|d| d.cost.total).sum(),
        latency_ms,
        feasible: decisions.iter().all(PlacementDecision::is_placed),
        decisions,
    })
}

pub fn run_sweep(cfg: &ScenarioConfig, spec: &SweepSpec, placer: &Placer) -> Result<Vec<SweepPoint>, SweepError> {
    spec.points()?
        .into_iter()
        .map(|x| evaluate(&spec.configure(cfg, x)?, placer, x))
        .collect()
}

/// Decimal with at most six fractional digits and no trailing zeros.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn to_csv(param: &ParamPath, points: &[SweepPoint]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    if let Some(first) = points.first() {
        let mut header = vec![param.to_string()];
        header.extend(first.apps_per_mecsp.keys().map(|m| format!("apps_{m}")));
        header.extend(first.apps_per_host.keys().map(|h| format!("apps_{h}")));
        header.push("total_cost".into());
        header.extend(first.latency_ms.keys().map(|c| format!("latency_{c}")));
        header.push("feasible".into());
        w.write_record(&header).expect("writing to memory");
    }
    for p in points {
        let mut row = vec![fmt_num(p.value)];
        row.extend(p.apps_per_mecsp.values().map(|n| n.to_string()));
        row.extend(p.apps_per_host.values().map(|n| n.to_string()));
        row.push(fmt_num(p.total_cost));
        row.extend(p.latency_ms.values().map(|l| l.map(fmt_num).unwrap_or_default()));
        row.push(p.feasible.to_string());
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV of UTF-8 fields")
}
