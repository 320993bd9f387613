use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engines::{stream, FullyDynamicTrace};
use crate::error::{Error, Result};
use crate::geometry::Hierarchy;
use crate::policies::GammaSchedule;
use crate::stats;

/// Lazy doubly reflected walk on `lower..=upper`. Each period a demand
/// arrives in the cell with probability `q` and moves the walk down unless
/// it sits at `lower`; then a supply unit arrives with probability `q` and
/// moves it up unless it sits at `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub level: u32,
    pub q: f64,
    pub lower: i64,
    pub upper: i64,
    pub start: i64,
}

impl WalkSpec {
    /// Walk for a cell at `level < depth` of a fully dynamic schedule,
    /// started at the upper boundary.
    pub fn for_level(schedule: &GammaSchedule, level: u32) -> Result<Self> {
        let depth = schedule.depth();
        if level >= depth {
            return Err(Error::LevelOutOfRange { level, depth });
        }
        let q = (-(f64::from(depth - level) * schedule.dim as f64)).exp2();
        let lower = schedule.lower_bounds[level as usize];
        let upper = schedule.upper_bounds[level as usize];
        Ok(WalkSpec {
            level,
            q,
            lower,
            upper,
            start: upper,
        })
    }

    /// Number of states `upper - lower + 1`.
    pub fn states(&self) -> i64 {
        self.upper - self.lower + 1
    }

    fn check(&self) -> Result<()> {
        if self.lower > self.upper || !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidSchedule(format!("invalid walk {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn after_demand(&self, w: i64, demand: bool) -> i64 {
        if demand {
            (w - 1).max(self.lower)
        } else {
            w
        }
    }

    #[inline]
    pub fn after_supply(&self, w: i64, supply: bool) -> i64 {
        if supply {
            (w + 1).min(self.upper)
        } else {
            w
        }
    }

    /// Stationary probability of the lower boundary, `(1-q)/(states - q)`.
    ///
    /// Detailed balance: the walk leaves `lower` upward with probability
    /// `q` and every other edge carries `q(1-q)` both ways, so all states
    /// above `lower` share the mass `pi_lower / (1-q)`.
    pub fn lower_occupancy(&self) -> f64 {
        let m = self.states() as f64;
        (1.0 - self.q) / (m - self.q)
    }
}

/// Monte Carlo occupancy of the lower boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkOccupancy {
    pub spec: WalkSpec,
    pub periods: u64,
    pub fraction: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub exact: f64,
}

impl WalkOccupancy {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.fraction - self.exact).abs() <= sigmas * self.stderr
    }
}

/// Simulates a standalone walk for `burn + periods` periods and records the
/// fraction of the last `periods` spent at the lower boundary.
pub fn simulate_walk(spec: &WalkSpec, periods: u64, burn: u64, seed: u64) -> Result<WalkOccupancy> {
    spec.check()?;
    let mut rng = stream(seed, u64::from(spec.level));
    let mut w = spec.start.clamp(spec.lower, spec.upper);
    let batches = 100u64;
    let batch = (periods / batches).max(1);
    let mut hits = Vec::with_capacity(batches as usize);
    let mut in_batch = 0u64;
    let mut count = 0u64;
    for t in 0..burn + batch * batches {
        w = spec.after_demand(w, rng.gen_bool(spec.q));
        w = spec.after_supply(w, rng.gen_bool(spec.q));
        if t >= burn {
            in_batch += u64::from(w == spec.lower);
            count += 1;
            if count == batch {
                hits.push(in_batch as f64 / batch as f64);
                in_batch = 0;
                count = 0;
            }
        }
    }
    Ok(WalkOccupancy {
        spec: *spec,
        periods: batch * batches,
        fraction: stats::mean(&hits),
        stderr: stats::stderr(&hits).unwrap_or(0.0),
        exact: spec.lower_occupancy(),
    })
}

/// Replays the count of cell `node` at `level` through a fully dynamic
/// trace and checks it against the coupled walk: from the first period
/// `T` with `n(T) >= floor(gamma)`, the walk starts at `min(n(T), upper)`,
/// and thereafter `n >= W` at every period start and `n~ >= W~` after
/// every demand. Returns `true` when the cell never reaches its threshold.
pub fn walk_domination_check(
    trace: &FullyDynamicTrace,
    schedule: &GammaSchedule,
    level: u32,
    node: usize,
) -> Result<bool> {
    if trace.periods.is_empty() {
        return Err(Error::MissingTrace);
    }
    let h = Hierarchy::new(trace.dim, trace.depth)?;
    if schedule.depth() != trace.depth {
        return Err(Error::InvalidSchedule("schedule depth differs from trace".into()));
    }
    let spec = WalkSpec::for_level(schedule, level)?;
    if node >= h.cells_at(level) {
        return Err(Error::InvalidCell);
    }
    let inside = |leaf: u32| h.ancestor_linear(leaf as usize, level) == node;

    let mut n = trace.initial_count(&h, level, node) as i64;
    let mut walk: Option<i64> = None;
    for rec in &trace.periods {
        if walk.is_none() && n >= spec.lower {
            walk = Some(n.min(spec.upper));
        }
        let taken = i64::from(inside(rec.taken_leaf));
        let n_tilde = n - taken;
        let next = n_tilde + i64::from(inside(rec.arrival_leaf));
        if let Some(w) = walk {
            if n < w {
                return Ok(false);
            }
            let w_tilde = spec.after_demand(w, inside(rec.demand_leaf));
            if n_tilde < w_tilde {
                return Ok(false);
            }
            walk = Some(spec.after_supply(w_tilde, inside(rec.arrival_leaf)));
        }
        n = next;
    }
    Ok(walk.map_or(true, |w| n >= w))
}

/// Cells that failed [`walk_domination_check`] and the number checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominationSummary {
    pub cells_checked: u64,
    pub failures: Vec<(u32, usize)>,
}

/// Runs [`walk_domination_check`] for every cell below the root.
pub fn walk_domination_all(
    trace: &FullyDynamicTrace,
    schedule: &GammaSchedule,
) -> Result<DominationSummary> {
    let h = Hierarchy::new(trace.dim, trace.depth)?;
    let mut summary = DominationSummary {
        cells_checked: 0,
        failures: Vec::new(),
    };
    for level in 0..trace.depth {
        for node in 0..h.cells_at(level) {
            summary.cells_checked += 1;
            if !walk_domination_check(trace, schedule, level, node)? {
                summary.failures.push((level, node));
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::PeriodRecord;

    /// Stationary law of the walk by power iteration on its transition
    /// matrix, independent of the closed form.
    fn stationary(spec: &WalkSpec) -> Vec<f64> {
        let k = spec.states() as usize;
        let mut pi = vec![1.0 / k as f64; k];
        let q = spec.q;
        for _ in 0..200_000 {
            let mut next = vec![0.0; k];
            for (i, &p) in pi.iter().enumerate() {
                let w = spec.lower + i as i64;
                for (demand, pd) in [(true, q), (false, 1.0 - q)] {
                    for (supply, ps) in [(true, q), (false, 1.0 - q)] {
                        let to = spec.after_supply(spec.after_demand(w, demand), supply);
                        next[(to - spec.lower) as usize] += p * pd * ps;
                    }
                }
            }
            pi = next;
        }
        pi
    }

    #[test]
    fn closed_form_matches_transition_matrix() {
        for (q, lower, upper) in [(0.5, 3, 3), (0.5, 0, 4), (0.25, 2, 9), (1.0 / 16.0, 5, 7)] {
            let spec = WalkSpec {
                level: 0,
                q,
                lower,
                upper,
                start: upper,
            };
            let pi = stationary(&spec);
            assert!((pi[0] - spec.lower_occupancy()).abs() < 1e-9, "{spec:?} {pi:?}");
            assert!(spec.lower_occupancy() <= 1.0 / spec.states() as f64);
        }
    }

    #[test]
    fn simulated_occupancy_matches() {
        let spec = WalkSpec {
            level: 1,
            q: 0.25,
            lower: 4,
            upper: 8,
            start: 8,
        };
        let occ = simulate_walk(&spec, 400_000, 1000, 3).unwrap();
        assert!(occ.within(3.0), "{occ:?}");
    }

    fn trace(initial: Vec<u32>, periods: &[(u32, u32, u32)]) -> FullyDynamicTrace {
        FullyDynamicTrace {
            dim: 1,
            depth: 1,
            initial_leaf_counts: initial,
            periods: periods
                .iter()
                .map(|&(d, t, a)| PeriodRecord {
                    demand_leaf: d,
                    taken_leaf: t,
                    arrival_leaf: a,
                })
                .collect(),
        }
    }

    #[test]
    fn detects_outside_use() {
        // gamma = [2, 8]: leaf bounds lower 2, upper ceil(4) - 1 = 3.
        let s = GammaSchedule::from_gammas(1, vec![2.0, 8.0], None).unwrap();
        let ok = trace(vec![3, 7], &[(0, 0, 1), (1, 1, 0), (0, 0, 0)]);
        assert!(walk_domination_check(&ok, &s, 0, 0).unwrap());
        // Supply leaves leaf 0 twice for demand in leaf 1.
        let bad = trace(vec![3, 7], &[(1, 0, 1), (1, 0, 1)]);
        assert!(!walk_domination_check(&bad, &s, 0, 0).unwrap());
        assert!(matches!(
            walk_domination_check(&trace(vec![3, 7], &[]), &s, 0, 0),
            Err(Error::MissingTrace)
        ));
    }
}
