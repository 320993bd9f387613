use serde::{Deserialize, Serialize};

use crate::engines::{CostReport, Model, SimConfig};
use crate::error::{Error, Result};

use super::fit::{fit_scaling, ScalePoint, ScalingFit};
use super::sweep::run_configs;

/// Cost per period at one `(n, m)` pair: `total = m / n + match_cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: u64,
    pub match_cost: f64,
    pub total: f64,
    /// Standard error of the match cost.
    pub stderr: Option<f64>,
}

impl CurvePoint {
    pub fn new(n: u64, m: u64, match_cost: f64, stderr: Option<f64>) -> Self {
        CurvePoint {
            m,
            match_cost,
            total: m as f64 / n as f64 + match_cost,
            stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub n: u64,
    /// Grid point with the lowest simulated total cost.
    pub m_star: u64,
    /// Minimizer of `m / n` plus the smoothed match cost.
    pub m_star_smoothed: f64,
    pub total_cost: f64,
    /// Either minimum sits at an end of the grid.
    pub at_boundary: bool,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPlan {
    pub rows: Vec<PlanRow>,
    /// Fit of the smoothed `m*` against `n`.
    pub fit: ScalingFit,
    pub boundary_hit: bool,
}

/// Half-width, in `ln m`, of the local log-log regression that smooths the
/// match cost. The hierarchy depth steps every factor `2^d` in `m`, so for
/// `d = 2` the full window spans one step.
pub const SMOOTH_HALF_WIDTH: f64 = std::f64::consts::LN_2;

/// Points of the fine grid on which the smoothed total is minimized.
const FINE_GRID: usize = 512;

/// Local linear fit of `ln c` against `ln m` at `u`, over the points within
/// `SMOOTH_HALF_WIDTH`, or the three nearest points if fewer fall inside.
fn smoothed_match_cost(curve: &[CurvePoint], u: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve
        .iter()
        .map(|p| ((p.m as f64).ln(), p.match_cost.ln()))
        .collect();
    let inside = pts
        .iter()
        .filter(|(x, _)| (x - u).abs() <= SMOOTH_HALF_WIDTH + 1e-12)
        .count();
    if inside >= 3 {
        pts.retain(|(x, _)| (x - u).abs() <= SMOOTH_HALF_WIDTH + 1e-12);
    } else {
        pts.sort_by(|a, b| (a.0 - u).abs().total_cmp(&(b.0 - u).abs()));
        pts.truncate(3);
    }
    let k = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let slope = if sxx > 0.0 {
        pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum::<f64>() / sxx
    } else {
        0.0
    };
    (ybar + slope * (u - xbar)).exp()
}

fn plan_row(n: u64, mut curve: Vec<CurvePoint>) -> Result<PlanRow> {
    if curve.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: curve.len(),
        });
    }
    if let Some(p) = curve.iter().find(|p| !(p.match_cost > 0.0)) {
        return Err(Error::NonPositive(p.match_cost));
    }
    curve.sort_by_key(|p| p.m);
    let (best, min) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total.total_cmp(&b.1.total))
        .map(|(i, p)| (i, *p))
        .expect("non-empty");
    let raw_boundary = best == 0 || best + 1 == curve.len();

    let lo = (curve[0].m as f64).ln();
    let hi = (curve[curve.len() - 1].m as f64).ln();
    let at = |i: usize| lo + (hi - lo) * i as f64 / (FINE_GRID - 1) as f64;
    let (mut arg, mut val) = (0usize, f64::INFINITY);
    for i in 0..FINE_GRID {
        let u = at(i);
        let t = u.exp() / n as f64 + smoothed_match_cost(&curve, u);
        if t < val {
            (arg, val) = (i, t);
        }
    }
    Ok(PlanRow {
        n,
        m_star: min.m,
        m_star_smoothed: at(arg).exp(),
        total_cost: min.total,
        at_boundary: raw_boundary || arg == 0 || arg + 1 == FINE_GRID,
        curve,
    })
}

/// Minimizes the cost curve `evaluate(n, m_grid(n))` for every `n` and fits
/// the smoothed optimum against `n`.
pub fn capacity_plan_with(
    n_grid: &[u64],
    m_grid: impl Fn(u64) -> Vec<u64>,
    mut evaluate: impl FnMut(u64, &[u64]) -> Result<Vec<CurvePoint>>,
) -> Result<CapacityPlan> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n grid must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let ms = m_grid(n);
        rows.push(plan_row(n, evaluate(n, &ms)?)?);
    }
    let points: Vec<ScalePoint> = rows
        .iter()
        .map(|r| ScalePoint {
            scale: r.n as f64,
            cost: r.m_star_smoothed,
            stderr: None,
        })
        .collect();
    let fit = fit_scaling(&points)?;
    let boundary_hit = rows.iter().any(|r| r.at_boundary);
    Ok(CapacityPlan {
        rows,
        fit,
        boundary_hit,
    })
}

/// Simulated capacity plan. `base` supplies `d`, policy, seed and
/// replications; every `(n, m)` runs `horizon_per_free * m` periods. The
/// random streams depend on `(seed, replication)` only, so all grid points
/// share their randomness.
pub fn capacity_plan(
    base: &SimConfig,
    n_grid: &[u64],
    m_grid: impl Fn(u64) -> Vec<u64>,
    horizon_per_free: u64,
) -> Result<CapacityPlan> {
    let mut all = Vec::new();
    for &n in n_grid {
        for m in m_grid(n) {
            all.push(SimConfig {
                model: Model::Capacity,
                free_supply: Some(m),
                load: Some(n),
                horizon: horizon_per_free * m,
                ..base.clone()
            });
        }
    }
    let reports: Vec<CostReport> = run_configs(&all)?;
    let mut lookup = all.iter().zip(reports);
    capacity_plan_with(n_grid, m_grid, |_, ms| {
        ms.iter()
            .map(|_| {
                let (cfg, r) = lookup.next().expect("one report per grid point");
                Ok(CurvePoint::new(
                    cfg.load.expect("set above"),
                    cfg.free_supply.expect("set above"),
                    r.mean_cost,
                    r.stderr,
                ))
            })
            .collect()
    })
}

/// Geometric grid of `count` integers from `lo` to `hi`, deduplicated.
pub fn geometric_grid(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<u64> = (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            (a + t * (b - a)).exp().round() as u64
        })
        .collect();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n_grid: &[u64], c: impl Fn(f64) -> f64) -> CapacityPlan {
        let grid = |n: u64| {
            let guess = (n as f64 / 2.0).powf(2.0 / 3.0);
            geometric_grid((guess / 4.0).max(2.0) as u64, (guess * 4.0) as u64, 25)
        };
        capacity_plan_with(n_grid, grid, |n, ms| {
            Ok(ms.iter().map(|&m| CurvePoint::new(n, m, c(m as f64), None)).collect())
        })
        .unwrap()
    }

    #[test]
    fn synthetic_optimum_is_recovered() {
        // m/n + m^{-1/2} is minimized at m = (n/2)^{2/3}.
        let n_grid: Vec<u64> = (8..=13).map(|k| 1u64 << k).collect();
        let plan = synthetic(&n_grid, |m| m.powf(-0.5));
        assert!(!plan.boundary_hit);
        let spacing = (16f64.ln() / 24.0).exp();
        for row in &plan.rows {
            let exact = (row.n as f64 / 2.0).powf(2.0 / 3.0);
            let r = row.m_star as f64 / exact;
            assert!(r < spacing * 1.05 && 1.0 / r < spacing * 1.05);
            assert!(
                (row.m_star_smoothed / exact - 1.0).abs() < 0.03,
                "{} vs {exact}",
                row.m_star_smoothed
            );
        }
        assert!((plan.fit.exponent - 2.0 / 3.0).abs() < 0.01, "{}", plan.fit.exponent);
    }

    #[test]
    fn smoothing_absorbs_periodic_steps() {
        // The constant jumps at every power of 4, as the hierarchy depth does.
        let n_grid: Vec<u64> = (8..=13).map(|k| 1u64 << k).collect();
        let step = |m: f64| 1.0 + 0.4 * (m.ln() / 4f64.ln()).fract();
        let plan = synthetic(&n_grid, |m| step(m) * m.powf(-0.5));
        assert!((plan.fit.exponent - 2.0 / 3.0).abs() < 0.06, "{}", plan.fit.exponent);
    }

    #[test]
    fn boundary_optimum_is_flagged() {
        let plan = capacity_plan_with(&[10, 20, 40], |_| vec![2, 4, 8], |n, ms| {
            Ok(ms.iter().map(|&m| CurvePoint::new(n, m, 100.0 / m as f64, None)).collect())
        })
        .unwrap();
        assert!(plan.boundary_hit);
        assert!(plan.rows.iter().all(|r| r.at_boundary && r.m_star == 8));
    }
}
