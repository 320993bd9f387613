use serde::{Deserialize, Serialize};

use crate::engines::SemiDynamicTrace;
use crate::error::{Error, Result};
use crate::geometry::Hierarchy;

/// Smallest integer level `l` with `M >= sqrt(19 N 2^{d(depth - l)})`, the
/// level from which excess supply damps the demand surplus. `None` when
/// `M = 0`.
pub fn crossover_level(d: usize, horizon: u64, excess: u64, depth: u32) -> Option<i64> {
    if excess == 0 {
        return None;
    }
    let lhs = u128::from(excess) * u128::from(excess);
    let rhs = 19 * u128::from(horizon);
    // Condition at level l: lhs >= rhs 2^{d(depth - l)}. It is monotone in l.
    let holds = |l: i64| {
        let e = (i64::from(depth) - l) * d as i64;
        if e >= 0 {
            // rhs 2^e beyond u128 exceeds any lhs
            e < 128 && rhs.checked_mul(1u128 << e).is_some_and(|r| lhs >= r)
        } else {
            // rhs < 2^69, so the shift cannot overflow before it passes rhs
            lhs >= rhs || -e >= 70 || (lhs << -e) >= rhs
        }
    };
    let mut l = i64::from(depth);
    if holds(l) {
        while holds(l - 1) {
            l -= 1;
        }
        Some(l)
    } else {
        while !holds(l) {
            l += 1;
        }
        Some(l)
    }
}

/// Mean surplus of demand over initial supply per cell at one level,
/// compared with `sqrt(N 2^{d(l - depth)})` and, at or above the crossover
/// level, with the damped form `sqrt(N 2^{d(l - depth)}) exp(-M^2 2^{d(l - depth)} / (19 N))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub level: u32,
    pub cells: u64,
    pub mean_excess: f64,
    pub envelope: f64,
    pub damped_envelope: Option<f64>,
    /// `mean_excess` over the applicable envelope.
    pub ratio: f64,
}

pub fn tail_bound_diagnostic(traces: &[SemiDynamicTrace], level: u32) -> Result<TailRow> {
    let first = traces.first().ok_or(Error::MissingTrace)?;
    let (d, depth, horizon, excess) = (first.dim, first.depth, first.horizon, first.excess);
    if level > depth {
        return Err(Error::LevelOutOfRange { level, depth });
    }
    let h = Hierarchy::new(d, depth)?;
    let cells = h.cells_at(level);
    let mut total = 0.0;
    for t in traces {
        if (t.dim, t.depth, t.horizon, t.excess) != (d, depth, horizon, excess) {
            return Err(Error::Config("traces from different configurations".into()));
        }
        let mut supply = vec![0i64; cells];
        let mut demand = vec![0i64; cells];
        for leaf in 0..h.leaf_count() {
            let a = h.ancestor_linear(leaf, level);
            supply[a] += i64::from(t.initial_supply[leaf]);
            demand[a] += i64::from(t.demand_arrivals[leaf]);
        }
        total += demand
            .iter()
            .zip(&supply)
            .map(|(&dm, &s)| (dm - s).max(0) as f64)
            .sum::<f64>();
    }
    let n_cells = (cells * traces.len()) as f64;
    let mean_excess = total / n_cells;
    let share = (f64::from(level) - f64::from(depth)) * d as f64;
    let share = share.exp2();
    let envelope = (horizon as f64 * share).sqrt();
    let damped_envelope = crossover_level(d, horizon, excess, depth)
        .filter(|&l| i64::from(level) >= l)
        .map(|_| {
            let m = excess as f64;
            envelope * (-(m * m * share) / (19.0 * horizon as f64)).exp()
        });
    let bound = damped_envelope.unwrap_or(envelope);
    Ok(TailRow {
        level,
        cells: cells as u64,
        mean_excess,
        envelope,
        damped_envelope,
        ratio: if bound > 0.0 { mean_excess / bound } else { f64::INFINITY },
    })
}
