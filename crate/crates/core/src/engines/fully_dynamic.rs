use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Hierarchy, Norm, Point};
use crate::policies::{
    default_beta, greedy_match, hg_match, GammaSchedule, InLeafRule, MatchDecision, Policy,
    SupplyTree,
};

use super::init::{even_points, uniform_point, uniform_points};
use super::{resolved_depth, rng, Init, RepOutcome, SimConfig};

/// Default number of warmup periods for `m` free units: `m (3 ln m + 7)`,
/// the bound on the expected time for every cell to reach its threshold.
pub fn default_warmup(m: u64) -> u64 {
    let m = m as f64;
    (m * (3.0 * m.ln() + 7.0)).ceil() as u64
}

/// Tallies of the per-period policy assertions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub checks: u64,
    /// A cell fell below `floor(gamma)` after having reached it.
    pub boundary_violations: u64,
    /// Supply left a cell for demand outside it while the cell held fewer
    /// than `ceil(eta)` units.
    pub outside_use_violations: u64,
}

impl AuditCounts {
    pub fn combine(self, other: AuditCounts) -> AuditCounts {
        AuditCounts {
            checks: self.checks + other.checks,
            boundary_violations: self.boundary_violations + other.boundary_violations,
            outside_use_violations: self.outside_use_violations + other.outside_use_violations,
        }
    }

    pub fn violations(&self) -> u64 {
        self.boundary_violations + self.outside_use_violations
    }
}

/// Leaves touched in one period, as dense leaf indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub demand_leaf: u32,
    pub taken_leaf: u32,
    pub arrival_leaf: u32,
}

/// Enough of a fully dynamic run to replay every cell count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullyDynamicTrace {
    pub dim: usize,
    pub depth: u32,
    pub initial_leaf_counts: Vec<u32>,
    pub periods: Vec<PeriodRecord>,
}

impl FullyDynamicTrace {
    /// Count of cell `node` at `level` for the initial leaf counts.
    pub fn initial_count(&self, h: &Hierarchy, level: u32, node: usize) -> u64 {
        self.initial_leaf_counts
            .iter()
            .enumerate()
            .filter(|&(leaf, _)| h.ancestor_linear(leaf, level) == node)
            .map(|(_, &c)| u64::from(c))
            .sum()
    }
}

const UNREACHED: u64 = u64::MAX;

/// Fully dynamic state: each period one demand arrives and is matched, then
/// one supply unit arrives, so the free supply stays constant.
#[derive(Debug, Clone)]
pub struct FullyDynamicSim {
    tree: SupplyTree,
    schedule: GammaSchedule,
    policy: Policy,
    rule: InLeafRule,
    norm: Norm,
    period: u64,
    /// First period at whose start each cell held at least `floor(gamma)`.
    reached: Vec<Vec<u64>>,
    audit: Option<AuditCounts>,
    trace: Option<FullyDynamicTrace>,
}

impl FullyDynamicSim {
    pub fn new(
        tree: SupplyTree,
        schedule: GammaSchedule,
        policy: Policy,
        rule: InLeafRule,
        norm: Norm,
    ) -> Result<Self> {
        let h = tree.hierarchy();
        if schedule.depth() != h.depth() || schedule.dim != h.dim() {
            return Err(crate::Error::InvalidSchedule(
                "schedule does not fit the hierarchy".into(),
            ));
        }
        let reached = (0..=h.depth())
            .map(|l| {
                tree.counts_at(l)
                    .iter()
                    .map(|&c| {
                        if i64::from(c) >= schedule.lower_bounds[l as usize] {
                            1
                        } else {
                            UNREACHED
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(FullyDynamicSim {
            tree,
            schedule,
            policy,
            rule,
            norm,
            period: 0,
            reached,
            audit: None,
            trace: None,
        })
    }

    /// Enables the boundary-respect and outside-use assertions.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(AuditCounts::default());
        self
    }

    /// Records the leaves touched in every period.
    pub fn with_trace(mut self) -> Self {
        let h = self.tree.hierarchy();
        self.trace = Some(FullyDynamicTrace {
            dim: h.dim(),
            depth: h.depth(),
            initial_leaf_counts: self.tree.counts_at(0).to_vec(),
            periods: Vec::new(),
        });
        self
    }

    pub fn tree(&self) -> &SupplyTree {
        &self.tree
    }

    pub fn schedule(&self) -> &GammaSchedule {
        &self.schedule
    }

    /// Periods completed so far.
    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn audit_counts(&self) -> Option<AuditCounts> {
        self.audit
    }

    pub fn trace(&self) -> Option<&FullyDynamicTrace> {
        self.trace.as_ref()
    }

    pub fn into_trace(self) -> Option<FullyDynamicTrace> {
        self.trace
    }

    /// Largest first-reach period over all cells, or `None` while some cell
    /// has never held `floor(gamma)` units at a period start.
    pub fn transient(&self) -> Option<u64> {
        let mut worst = 0;
        for &t in self.reached.iter().flatten() {
            if t == UNREACHED {
                return None;
            }
            worst = worst.max(t);
        }
        Some(worst)
    }

    /// Runs one period: match `demand`, then add `arrival` to the free supply.
    pub fn step(&mut self, demand: &Point, arrival: Point) -> Result<MatchDecision> {
        let t = self.period + 1;
        let decision = match self.policy {
            Policy::HierarchicalGreedy => {
                hg_match(&mut self.tree, &self.schedule, demand, self.rule, self.norm)?
            }
            Policy::Greedy => greedy_match(&mut self.tree, demand, self.norm)?,
        };
        if self.audit.is_some() {
            self.audit_after_match(&decision, t);
        }
        let arrival_leaf = self.tree.insert(arrival)?;
        self.period = t;

        let h = self.tree.hierarchy();
        for level in 0..=h.depth() {
            let node = h.ancestor_linear(arrival_leaf, level);
            let slot = &mut self.reached[level as usize][node];
            if *slot == UNREACHED
                && i64::from(self.tree.count(level, node))
                    >= self.schedule.lower_bounds[level as usize]
            {
                *slot = t + 1;
            }
        }
        if self.audit.is_some() {
            // Only the cells that lost a unit can have dropped.
            self.audit_boundary(decision.supply_leaf, t + 1);
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.periods.push(PeriodRecord {
                demand_leaf: decision.demand_leaf as u32,
                taken_leaf: decision.supply_leaf as u32,
                arrival_leaf: arrival_leaf as u32,
            });
        }
        Ok(decision)
    }

    fn audit_after_match(&mut self, decision: &MatchDecision, t: u64) {
        let h = self.tree.hierarchy();
        let audit = self.audit.as_mut().expect("audit enabled");
        // Cells below the match level hold the supply but not the demand.
        for level in 0..decision.level.min(h.depth()) {
            let node = h.ancestor_linear(decision.supply_leaf, level);
            let before = i64::from(self.tree.count(level, node)) + 1;
            audit.checks += 1;
            if before <= self.schedule.upper_bounds[level as usize] {
                audit.outside_use_violations += 1;
            }
        }
        self.audit_boundary(decision.supply_leaf, t);
    }

    fn audit_boundary(&mut self, leaf: usize, t: u64) {
        let h = self.tree.hierarchy();
        let audit = self.audit.as_mut().expect("audit enabled");
        for level in 0..=h.depth() {
            let node = h.ancestor_linear(leaf, level);
            if self.reached[level as usize][node] <= t {
                audit.checks += 1;
                if i64::from(self.tree.count(level, node)) < self.schedule.lower_bounds[level as usize]
                {
                    audit.boundary_violations += 1;
                }
            }
        }
    }
}

/// Capacity-planning state: `n + m` units, of which a matched unit stays
/// busy for the `n` periods after its match and then returns at a fresh
/// uniform location. Exactly one unit is released per period.
#[derive(Debug, Clone)]
pub struct CapacitySim {
    tree: SupplyTree,
    schedule: GammaSchedule,
    policy: Policy,
    rule: InLeafRule,
    norm: Norm,
    load: u64,
    /// Release period of every busy unit, in release order.
    busy: VecDeque<u64>,
    pending: VecDeque<Point>,
    period: u64,
    stockouts: u64,
}

impl CapacitySim {
    /// Starts with the units of `tree` free and `load` units busy, one
    /// released at the end of each of the first `load` periods.
    pub fn new(
        tree: SupplyTree,
        schedule: GammaSchedule,
        load: u64,
        policy: Policy,
        rule: InLeafRule,
        norm: Norm,
    ) -> Self {
        CapacitySim {
            tree,
            schedule,
            policy,
            rule,
            norm,
            load,
            busy: (1..=load).collect(),
            pending: VecDeque::new(),
            period: 0,
            stockouts: 0,
        }
    }

    pub fn tree(&self) -> &SupplyTree {
        &self.tree
    }

    pub fn free(&self) -> u64 {
        u64::from(self.tree.root_count())
    }

    pub fn busy(&self) -> u64 {
        self.busy.len() as u64
    }

    pub fn load(&self) -> u64 {
        self.load
    }

    /// Periods in which some demand found no free unit.
    pub fn stockouts(&self) -> u64 {
        self.stockouts
    }

    /// Runs one period. Demands that find no free unit wait, at no cost,
    /// for a later period. Returned decisions are in service order.
    pub fn step<R: Rng + ?Sized>(&mut self, demand: Point, rng: &mut R) -> Result<Vec<MatchDecision>> {
        let t = self.period + 1;
        self.pending.push_back(demand);
        let mut served = Vec::with_capacity(1);
        while !self.pending.is_empty() && self.tree.root_count() > 0 {
            let d = self.pending.pop_front().expect("non-empty");
            let decision = match self.policy {
                Policy::HierarchicalGreedy => {
                    hg_match(&mut self.tree, &self.schedule, &d, self.rule, self.norm)?
                }
                Policy::Greedy => greedy_match(&mut self.tree, &d, self.norm)?,
            };
            self.busy.push_back(t + self.load);
            served.push(decision);
        }
        if !self.pending.is_empty() {
            self.stockouts += 1;
        }
        let dim = self.tree.hierarchy().dim();
        while self.busy.front().is_some_and(|&r| r <= t) {
            self.busy.pop_front();
            self.tree.insert(uniform_point(rng, dim))?;
        }
        self.period = t;
        Ok(served)
    }
}

fn initial_tree(cfg: &SimConfig, h: &Hierarchy, rng: &mut rng::SimRng) -> Result<SupplyTree> {
    let m = cfg.free();
    let points = match cfg.init {
        Init::UniformRandom => uniform_points(rng, cfg.d, m),
        Init::EvenGrid => even_points(h, m),
    };
    SupplyTree::from_points(h.clone(), points)
}

fn schedule_for(cfg: &SimConfig, depth: u32) -> Result<GammaSchedule> {
    let m = cfg.free();
    let beta = cfg.beta.unwrap_or_else(|| default_beta(cfg.d));
    let schedule = GammaSchedule::fully_dynamic(cfg.d, m, depth, beta)?;
    schedule.validate(m)?;
    Ok(schedule)
}

/// Warmup actually applied, and whether it had to be cut to `N/2`.
fn resolve_warmup(cfg: &SimConfig, transient: Option<u64>) -> (u64, bool) {
    match cfg.warmup {
        Some(w) => (w, false),
        None => {
            let w = default_warmup(cfg.free()).max(transient.unwrap_or(0));
            if w >= cfg.horizon {
                (cfg.horizon / 2, true)
            } else {
                (w, false)
            }
        }
    }
}

fn summarize(cfg: &SimConfig, depth: u32, periods: &[(f64, u32)], out: &mut RepOutcome) {
    let start = out.warmup as usize;
    let mut samples = cfg.record_samples.then(Vec::new);
    let mut fresh = RepOutcome::new(depth as usize + 1);
    for &(dist, level) in &periods[start.min(periods.len())..] {
        fresh.record(level, dist);
        if let Some(s) = samples.as_mut() {
            s.push(dist);
        }
    }
    out.counted = fresh.counted;
    out.total_cost = fresh.total_cost;
    out.per_level = fresh.per_level;
    out.samples = samples;
}

/// One fully dynamic replication. The trace is returned when `cfg.audit`
/// is set.
pub fn run_fully_dynamic_replication(
    cfg: &SimConfig,
    rep: u32,
) -> Result<(RepOutcome, Option<FullyDynamicTrace>)> {
    let mut rng = rng::stream(cfg.seed, u64::from(rep));
    let depth = resolved_depth(cfg);
    let h = Hierarchy::new(cfg.d, depth)?;
    let schedule = schedule_for(cfg, depth)?;
    let tree = initial_tree(cfg, &h, &mut rng)?;
    let mut sim = FullyDynamicSim::new(tree, schedule, cfg.policy, cfg.in_leaf, cfg.norm)?;
    if cfg.audit {
        sim = sim.with_audit().with_trace();
    }
    let mut periods = Vec::with_capacity(cfg.horizon as usize);
    for _ in 0..cfg.horizon {
        let demand = uniform_point(&mut rng, cfg.d);
        let arrival = uniform_point(&mut rng, cfg.d);
        let decision = sim.step(&demand, arrival)?;
        periods.push((decision.distance, decision.level));
    }
    let transient = sim.transient();
    let (warmup, clamped) = resolve_warmup(cfg, transient);
    let mut out = RepOutcome {
        transient,
        warmup,
        warmup_clamped: clamped,
        audit: sim.audit_counts(),
        ..RepOutcome::default()
    };
    summarize(cfg, depth, &periods, &mut out);
    Ok((out, sim.into_trace()))
}

/// One capacity-model replication. The random stream depends only on
/// `(seed, rep)`, so runs that differ only in `n` share their randomness.
pub fn run_capacity_replication(cfg: &SimConfig, rep: u32) -> Result<RepOutcome> {
    let mut rng = rng::stream(cfg.seed, u64::from(rep));
    let depth = resolved_depth(cfg);
    let h = Hierarchy::new(cfg.d, depth)?;
    let schedule = schedule_for(cfg, depth)?;
    let tree = initial_tree(cfg, &h, &mut rng)?;
    let load = cfg.load.expect("validated");
    let mut sim = CapacitySim::new(tree, schedule, load, cfg.policy, cfg.in_leaf, cfg.norm);
    let mut periods = Vec::with_capacity(cfg.horizon as usize);
    for _ in 0..cfg.horizon {
        let demand = uniform_point(&mut rng, cfg.d);
        for decision in sim.step(demand, &mut rng)? {
            periods.push((decision.distance, decision.level));
        }
    }
    let (warmup, clamped) = resolve_warmup(cfg, None);
    let mut out = RepOutcome {
        warmup,
        warmup_clamped: clamped,
        stockouts: sim.stockouts(),
        ..RepOutcome::default()
    };
    summarize(cfg, depth, &periods, &mut out);
    Ok(out)
}
