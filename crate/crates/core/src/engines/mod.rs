//! Simulation drivers for the static, semi-dynamic, fully dynamic and
//! capacity-planning models.
//!
//! Every driver runs `replications` independent replications, each on its
//! own random stream derived from `(seed, replication)`, and merges them in
//! replication order, so results do not depend on the thread count.

mod fully_dynamic;
mod init;
mod nearest;
mod rng;
mod semi_dynamic;
mod static_engine;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fully_dynamic::{
    default_warmup, run_capacity_replication, run_fully_dynamic_replication, AuditCounts,
    CapacitySim, FullyDynamicSim, FullyDynamicTrace, PeriodRecord,
};
pub use init::{even_points, uniform_point, uniform_points};
pub use nearest::{estimate_nn_distance, NnEstimate};
pub use rng::{stream, SimRng};
pub use semi_dynamic::{run_semi_dynamic_replication, SemiDynamicSim, SemiDynamicTrace};
pub use static_engine::{run_static_replication, solve_static_instance};

use crate::error::{Error, Result};
use crate::geometry::Norm;
use crate::policies::{InLeafRule, Policy};
use crate::static_match::DEFAULT_EXACT_CAP;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Static,
    SemiDynamic,
    FullyDynamic,
    Capacity,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Model::Static),
            "semi_dynamic" => Ok(Model::SemiDynamic),
            "fully_dynamic" => Ok(Model::FullyDynamic),
            "capacity" => Ok(Model::Capacity),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Initial placement of the free supply in the fully dynamic and capacity
/// models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    UniformRandom,
    EvenGrid,
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_random" | "uniform" => Ok(Init::UniformRandom),
            "even_grid" | "even" => Ok(Init::EvenGrid),
            other => Err(Error::Config(format!("unknown init `{other}`"))),
        }
    }
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: Model,
    pub d: usize,
    /// Horizon (number of demand units / periods).
    #[serde(rename = "N")]
    pub horizon: u64,
    /// Excess supply for the static and semi-dynamic models.
    #[serde(rename = "M")]
    pub excess: u64,
    /// Free supply for the fully dynamic and capacity models.
    #[serde(rename = "m")]
    pub free_supply: Option<u64>,
    /// Load factor (ride length in periods) for the capacity model.
    #[serde(rename = "n")]
    pub load: Option<u64>,
    pub policy: Policy,
    pub in_leaf: InLeafRule,
    pub init: Init,
    pub seed: u64,
    pub replications: u32,
    /// Periods excluded from steady-state statistics; `None` picks the default.
    pub warmup: Option<u64>,
    pub norm: Norm,
    pub beta: Option<f64>,
    /// Hierarchy depth override.
    #[serde(rename = "l0")]
    pub depth: Option<u32>,
    /// Keep per-period distances in the report.
    pub record_samples: bool,
    /// Check the boundary-respect and outside-use properties every period.
    pub audit: bool,
    pub exact_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model: Model::SemiDynamic,
            d: 1,
            horizon: 1024,
            excess: 0,
            free_supply: None,
            load: None,
            policy: Policy::HierarchicalGreedy,
            in_leaf: InLeafRule::Nearest,
            init: Init::UniformRandom,
            seed: 0,
            replications: 1,
            warmup: None,
            norm: Norm::Euclidean,
            beta: None,
            depth: None,
            record_samples: false,
            audit: false,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("N must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("reps must be at least 1".into());
        }
        if let Some(w) = self.warmup {
            if w >= self.horizon {
                return bad(format!("warmup {w} must be below N = {}", self.horizon));
            }
        }
        match self.model {
            Model::Static => {
                if self.d >= 2 && self.horizon as usize > self.exact_cap {
                    return Err(Error::InstanceTooLarge {
                        solver: "exact flow",
                        size: self.horizon as usize,
                        limit: self.exact_cap,
                    });
                }
            }
            Model::SemiDynamic => {}
            Model::FullyDynamic | Model::Capacity => {
                match self.free_supply {
                    None => return bad("missing required field `m`".into()),
                    Some(m) if m < 2 => return bad(format!("m must be at least 2, got {m}")),
                    _ => {}
                }
                if self.model == Model::Capacity {
                    match self.load {
                        None => return bad("missing required field `n`".into()),
                        Some(0) => return bad("n must be at least 1".into()),
                        _ => {}
                    }
                }
            }
        }
        if let Some(beta) = self.beta {
            if !(beta.is_finite() && beta > 0.0) {
                return bad(format!("beta must be positive, got {beta}"));
            }
        }
        Ok(())
    }

    pub(crate) fn free(&self) -> u64 {
        self.free_supply.expect("validated")
    }
}

/// Matches and cost accumulated at one hierarchy level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub match_count: u64,
    pub total_cost: f64,
}

/// Result of a single replication.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RepOutcome {
    pub counted: u64,
    pub total_cost: f64,
    /// `(count, cost)` per level.
    pub per_level: Vec<(u64, f64)>,
    pub samples: Option<Vec<f64>>,
    pub transient: Option<u64>,
    pub warmup: u64,
    pub warmup_clamped: bool,
    pub stockouts: u64,
    pub audit: Option<AuditCounts>,
}

impl RepOutcome {
    pub(crate) fn new(levels: usize) -> Self {
        RepOutcome {
            per_level: vec![(0, 0.0); levels],
            ..RepOutcome::default()
        }
    }

    pub(crate) fn record(&mut self, level: u32, distance: f64) {
        self.counted += 1;
        self.total_cost += distance;
        let slot = &mut self.per_level[level as usize];
        slot.0 += 1;
        slot.1 += distance;
    }

    pub fn mean(&self) -> f64 {
        self.total_cost / self.counted as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: Model,
    pub d: usize,
    pub replications: u32,
    /// Mean match distance over counted periods, pooled across replications.
    pub mean_cost: f64,
    /// Standard error across replication means; `None` for one replication.
    pub stderr: Option<f64>,
    pub replication_means: Vec<f64>,
    pub matched: u64,
    pub total_cost: f64,
    pub depth: u32,
    pub per_level: Vec<LevelStats>,
    /// Largest warmup applied in any replication.
    pub warmup: u64,
    pub warmup_clamped: bool,
    /// Largest observed first time a cell reached its floor threshold, when
    /// every cell got there in every replication.
    pub transient_estimate: Option<u64>,
    /// Excess-supply cost per period `m / n` (capacity model).
    pub supply_cost: Option<f64>,
    /// `supply_cost + mean_cost` (capacity model).
    pub total_cost_per_period: Option<f64>,
    pub stockouts: u64,
    pub audit: Option<AuditCounts>,
    #[serde(skip)]
    pub raw_samples: Option<Vec<Vec<f64>>>,
}

impl CostReport {
    pub fn merge(cfg: &SimConfig, depth: u32, reps: Vec<RepOutcome>) -> Self {
        let levels = depth as usize + 1;
        let mut per_level: Vec<LevelStats> = (0..levels as u32)
            .map(|level| LevelStats {
                level,
                match_count: 0,
                total_cost: 0.0,
            })
            .collect();
        let mut matched = 0;
        let mut total_cost = 0.0;
        let mut transient = Some(0u64);
        let mut audit: Option<AuditCounts> = None;
        for r in &reps {
            matched += r.counted;
            total_cost += r.total_cost;
            for (s, &(c, cost)) in per_level.iter_mut().zip(&r.per_level) {
                s.match_count += c;
                s.total_cost += cost;
            }
            transient = match (transient, r.transient) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
            if let Some(a) = r.audit {
                audit = Some(audit.unwrap_or_default().combine(a));
            }
        }
        if !matches!(cfg.model, Model::FullyDynamic | Model::Capacity) {
            transient = None;
        }
        let replication_means: Vec<f64> = reps.iter().map(RepOutcome::mean).collect();
        let mean_cost = total_cost / matched as f64;
        let supply_cost = match cfg.model {
            Model::Capacity => Some(cfg.free() as f64 / cfg.load.expect("validated") as f64),
            _ => None,
        };
        let raw_samples = if cfg.record_samples {
            Some(reps.iter().map(|r| r.samples.clone().unwrap_or_default()).collect())
        } else {
            None
        };
        CostReport {
            model: cfg.model,
            d: cfg.d,
            replications: cfg.replications,
            mean_cost,
            stderr: stats::stderr(&replication_means),
            matched,
            total_cost,
            depth,
            per_level,
            warmup: reps.iter().map(|r| r.warmup).max().unwrap_or(0),
            warmup_clamped: reps.iter().any(|r| r.warmup_clamped),
            transient_estimate: transient,
            supply_cost,
            total_cost_per_period: supply_cost.map(|s| s + mean_cost),
            stockouts: reps.iter().map(|r| r.stockouts).sum(),
            audit,
            replication_means,
            raw_samples,
        }
    }
}

/// Hierarchy depth a configuration runs with.
pub fn resolved_depth(cfg: &SimConfig) -> u32 {
    use crate::policies::{fully_dynamic_depth, semi_dynamic_depth};
    cfg.depth.unwrap_or_else(|| match cfg.model {
        Model::Static | Model::SemiDynamic => semi_dynamic_depth(cfg.d, cfg.horizon),
        Model::FullyDynamic | Model::Capacity => fully_dynamic_depth(cfg.d, cfg.free()),
    })
}

/// Runs replication `rep` of any model.
pub fn run_replication(cfg: &SimConfig, rep: u32) -> Result<RepOutcome> {
    match cfg.model {
        Model::Static => run_static_replication(cfg, rep),
        Model::SemiDynamic => run_semi_dynamic_replication(cfg, rep).map(|(o, _)| o),
        Model::FullyDynamic => run_fully_dynamic_replication(cfg, rep).map(|(o, _)| o),
        Model::Capacity => run_capacity_replication(cfg, rep),
    }
}

/// Runs all replications of `cfg` in parallel and merges them.
pub fn run(cfg: &SimConfig) -> Result<CostReport> {
    cfg.validate()?;
    let reps: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<_>>()?;
    Ok(CostReport::merge(cfg, resolved_depth(cfg), reps))
}

fn expect_model(cfg: &SimConfig, model: Model) -> Result<()> {
    if cfg.model != model {
        return Err(Error::Config(format!(
            "expected model {model:?}, got {:?}",
            cfg.model
        )));
    }
    Ok(())
}

pub fn run_static(cfg: &SimConfig) -> Result<CostReport> {
    expect_model(cfg, Model::Static)?;
    run(cfg)
}

pub fn run_semi_dynamic(cfg: &SimConfig) -> Result<CostReport> {
    expect_model(cfg, Model::SemiDynamic)?;
    run(cfg)
}

pub fn run_fully_dynamic(cfg: &SimConfig) -> Result<CostReport> {
    expect_model(cfg, Model::FullyDynamic)?;
    run(cfg)
}

pub fn run_capacity_sim(cfg: &SimConfig) -> Result<CostReport> {
    expect_model(cfg, Model::Capacity)?;
    run(cfg)
}
