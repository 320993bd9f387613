use crate::error::Result;
use crate::geometry::{Hierarchy, Norm, Point};
use crate::static_match::{match_exact_flow_capped, match_line_excess, MatchingResult};

use super::init::uniform_points;
use super::{resolved_depth, rng, RepOutcome, SimConfig};

/// Optimal matching of one static instance: the line program for `d = 1`,
/// the exact assignment solver otherwise.
pub fn solve_static_instance(
    supply: &[Point],
    demand: &[Point],
    norm: Norm,
    exact_cap: usize,
) -> Result<MatchingResult> {
    if demand.first().map(Point::dim) == Some(1) && supply.iter().all(|p| p.dim() == 1) {
        let s: Vec<f64> = supply.iter().map(|p| p.coords()[0]).collect();
        let d: Vec<f64> = demand.iter().map(|p| p.coords()[0]).collect();
        match_line_excess(&s, &d)
    } else {
        match_exact_flow_capped(supply, demand, norm, exact_cap)
    }
}

pub fn run_static_replication(cfg: &SimConfig, rep: u32) -> Result<RepOutcome> {
    let mut rng = rng::stream(cfg.seed, u64::from(rep));
    let supply = uniform_points(&mut rng, cfg.d, cfg.horizon + cfg.excess);
    let demand = uniform_points(&mut rng, cfg.d, cfg.horizon);
    let result = solve_static_instance(&supply, &demand, cfg.norm, cfg.exact_cap)?;

    // Decompose the optimal matching by the level at which each pair
    // first shares a cell.
    let h = Hierarchy::new(cfg.d, resolved_depth(cfg))?;
    let mut out = RepOutcome::new(h.depth() as usize + 1);
    for &(i, j) in &result.pairs {
        let a = h.id_linear(&h.leaf_of(&demand[i])?);
        let b = h.id_linear(&h.leaf_of(&supply[j])?);
        out.record(h.match_level(a, b), crate::geometry::distance(&demand[i], &supply[j], cfg.norm)?);
    }
    Ok(out)
}
