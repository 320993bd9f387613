use crate::error::Result;
use crate::geometry::{Hierarchy, Norm, Point};
use crate::policies::{greedy_match, hg_match, GammaSchedule, InLeafRule, MatchDecision, Policy, SupplyTree};

use super::init::{uniform_point, uniform_points};
use super::{resolved_depth, rng, RepOutcome, SimConfig};

/// Semi-dynamic state: a fixed initial supply consumed by arriving demand.
#[derive(Debug, Clone)]
pub struct SemiDynamicSim {
    tree: SupplyTree,
    schedule: GammaSchedule,
    policy: Policy,
    rule: InLeafRule,
    norm: Norm,
}

impl SemiDynamicSim {
    pub fn new(
        hierarchy: Hierarchy,
        supply: impl IntoIterator<Item = Point>,
        policy: Policy,
        rule: InLeafRule,
        norm: Norm,
    ) -> Result<Self> {
        let schedule = GammaSchedule::zero(hierarchy.dim(), hierarchy.depth());
        let tree = SupplyTree::from_points(hierarchy, supply)?;
        Ok(SemiDynamicSim {
            tree,
            schedule,
            policy,
            rule,
            norm,
        })
    }

    pub fn tree(&self) -> &SupplyTree {
        &self.tree
    }

    pub fn step(&mut self, demand: &Point) -> Result<MatchDecision> {
        match self.policy {
            Policy::HierarchicalGreedy => {
                hg_match(&mut self.tree, &self.schedule, demand, self.rule, self.norm)
            }
            Policy::Greedy => greedy_match(&mut self.tree, demand, self.norm),
        }
    }
}

/// Leaf-level counts needed for the excess-demand diagnostic: the initial
/// supply per leaf and the total demand that arrived in each leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiDynamicTrace {
    pub dim: usize,
    pub depth: u32,
    pub horizon: u64,
    pub excess: u64,
    pub initial_supply: Vec<u32>,
    pub demand_arrivals: Vec<u32>,
}

pub fn run_semi_dynamic_replication(
    cfg: &SimConfig,
    rep: u32,
) -> Result<(RepOutcome, SemiDynamicTrace)> {
    let mut rng = rng::stream(cfg.seed, u64::from(rep));
    let h = Hierarchy::new(cfg.d, resolved_depth(cfg))?;
    let supply = uniform_points(&mut rng, cfg.d, cfg.horizon + cfg.excess);
    let mut sim = SemiDynamicSim::new(h.clone(), supply, cfg.policy, cfg.in_leaf, cfg.norm)?;
    let mut trace = SemiDynamicTrace {
        dim: cfg.d,
        depth: h.depth(),
        horizon: cfg.horizon,
        excess: cfg.excess,
        initial_supply: sim.tree().counts_at(0).to_vec(),
        demand_arrivals: vec![0; h.leaf_count()],
    };

    let warmup = cfg.warmup.unwrap_or(0);
    let mut out = RepOutcome::new(h.depth() as usize + 1);
    out.warmup = warmup;
    let mut samples = cfg.record_samples.then(Vec::new);
    for t in 1..=cfg.horizon {
        let demand = uniform_point(&mut rng, cfg.d);
        let decision = sim.step(&demand)?;
        trace.demand_arrivals[decision.demand_leaf] += 1;
        if t > warmup {
            out.record(decision.level, decision.distance);
            if let Some(s) = samples.as_mut() {
                s.push(decision.distance);
            }
        }
    }
    out.samples = samples;
    Ok((out, trace))
}
