use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::{resolved_depth, run_replication, CostReport, SimConfig};
use crate::error::{Error, Result};

use super::fit::{bootstrap_exponent_ci, fit_scaling, ScalePoint, ScalingFit};

/// Configuration field varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "N")]
    Horizon,
    #[serde(rename = "M")]
    Excess,
    #[serde(rename = "m")]
    FreeSupply,
    #[serde(rename = "n")]
    Load,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Horizon => "N",
            SweepParam::Excess => "M",
            SweepParam::FreeSupply => "m",
            SweepParam::Load => "n",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(SweepParam::Horizon),
            "M" => Ok(SweepParam::Excess),
            "m" => Ok(SweepParam::FreeSupply),
            "n" => Ok(SweepParam::Load),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// A grid over one parameter, optionally tying other sizes to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<u64>,
    /// Set `M = round(ratio * N)` at every grid point.
    pub excess_per_horizon: Option<f64>,
    /// Set `N = factor * m` at every grid point.
    pub horizon_per_free: Option<u64>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<u64>) -> Self {
        SweepSpec {
            param,
            values,
            excess_per_horizon: None,
            horizon_per_free: None,
        }
    }

    /// Configuration of grid point `value`.
    pub fn config_for(&self, base: &SimConfig, value: u64) -> SimConfig {
        let mut cfg = base.clone();
        match self.param {
            SweepParam::Horizon => cfg.horizon = value,
            SweepParam::Excess => cfg.excess = value,
            SweepParam::FreeSupply => cfg.free_supply = Some(value),
            SweepParam::Load => cfg.load = Some(value),
        }
        if let (Some(f), Some(m)) = (self.horizon_per_free, cfg.free_supply) {
            cfg.horizon = f * m;
        }
        if let Some(r) = self.excess_per_horizon {
            cfg.excess = (r * cfg.horizon as f64).round() as u64;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: u64,
    pub config: SimConfig,
    pub report: CostReport,
}

/// Runs every configuration with all of its replications as one parallel
/// job list and merges results in input order.
pub fn run_configs(configs: &[SimConfig]) -> Result<Vec<CostReport>> {
    for cfg in configs {
        cfg.validate()?;
    }
    let jobs: Vec<(usize, u32)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.replications).map(move |r| (i, r)))
        .collect();
    // Longest jobs first keeps the pool busy near the end.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(configs[jobs[j].0].horizon));
    let mut results: Vec<(usize, _)> = order
        .into_par_iter()
        .map(|j| {
            let (i, rep) = jobs[j];
            (j, run_replication(&configs[i], rep))
        })
        .collect();
    results.sort_by_key(|(j, _)| *j);
    let mut outcomes = results.into_iter().map(|(_, r)| r);
    configs
        .iter()
        .map(|cfg| {
            let reps = (&mut outcomes)
                .take(cfg.replications as usize)
                .collect::<Result<Vec<_>>>()?;
            Ok(CostReport::merge(cfg, resolved_depth(cfg), reps))
        })
        .collect()
}

/// Runs `base` at every grid point of `spec`.
pub fn sweep(base: &SimConfig, spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    if spec.values.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let configs: Vec<SimConfig> = spec.values.iter().map(|&v| spec.config_for(base, v)).collect();
    let reports = run_configs(&configs)?;
    Ok(spec
        .values
        .iter()
        .zip(configs)
        .zip(reports)
        .map(|((&value, config), report)| SweepPoint {
            value,
            config,
            report,
        })
        .collect())
}

/// Scale points `(value, mean cost, stderr)` of a sweep.
pub fn sweep_points(points: &[SweepPoint]) -> Vec<ScalePoint> {
    points
        .iter()
        .map(|p| ScalePoint {
            scale: p.value as f64,
            cost: p.report.mean_cost,
            stderr: p.report.stderr,
        })
        .collect()
}

/// Fits mean cost against the swept value, with a bootstrap interval for
/// the exponent when every point has at least two replications.
pub fn fit_sweep(points: &[SweepPoint], seed: u64) -> Result<ScalingFit> {
    let mut fit = fit_scaling(&sweep_points(points))?;
    if points.iter().all(|p| p.report.replication_means.len() >= 2) {
        let scales: Vec<f64> = points.iter().map(|p| p.value as f64).collect();
        let means: Vec<Vec<f64>> = points.iter().map(|p| p.report.replication_means.clone()).collect();
        fit.exponent_ci = Some(bootstrap_exponent_ci(&scales, &means, 200, 0.95, seed)?);
    }
    Ok(fit)
}
