//! Per-level minimum-supply thresholds for hierarchical greedy matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack growth factor used for the fully dynamic schedule when `d >= 2`.
pub const BETA_MULTI_DIM: f64 = 2.01;
/// Slack growth factor used for the fully dynamic schedule when `d = 1`.
pub const BETA_LINE: f64 = 2.0;

pub fn default_beta(dim: usize) -> f64 {
    if dim >= 2 {
        BETA_MULTI_DIM
    } else {
        BETA_LINE
    }
}

/// Thresholds `gamma[l]` for levels `0..=depth` and the derived quantities
/// used by the analysis of the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub dim: usize,
    pub gammas: Vec<f64>,
    /// `eta[l] = gamma[l + 1] / 2^d` for `l < depth`.
    pub etas: Vec<f64>,
    /// `floor(gamma[l])`.
    pub lower_bounds: Vec<i64>,
    /// `ceil(eta[l]) - 1` for `l < depth`.
    pub upper_bounds: Vec<i64>,
    pub beta: Option<f64>,
}

impl GammaSchedule {
    /// Builds a schedule from explicit thresholds. Structural constraints
    /// are checked by [`GammaSchedule::validate`].
    pub fn from_gammas(dim: usize, gammas: Vec<f64>, beta: Option<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if gammas.is_empty() {
            return Err(Error::InvalidSchedule("no levels".into()));
        }
        if let Some(g) = gammas.iter().find(|g| !g.is_finite()) {
            return Err(Error::InvalidSchedule(format!("non-finite threshold {g}")));
        }
        let scale = (-(dim as f64)).exp2();
        let etas: Vec<f64> = gammas.windows(2).map(|w| w[1] * scale).collect();
        let lower_bounds = gammas.iter().map(|g| g.floor() as i64).collect();
        let upper_bounds = etas.iter().map(|e| e.ceil() as i64 - 1).collect();
        Ok(GammaSchedule {
            dim,
            gammas,
            etas,
            lower_bounds,
            upper_bounds,
            beta,
        })
    }

    /// All thresholds zero: match at the lowest ancestor with any supply.
    pub fn zero(dim: usize, depth: u32) -> Self {
        GammaSchedule::from_gammas(dim, vec![0.0; depth as usize + 1], None)
            .expect("zero schedule is well formed")
    }

    /// Thresholds for the fully dynamic model with `m` free supply units:
    ///
    /// `gamma[l] = m 2^{-(depth-l)d} - sum_{l'=l}^{depth} beta^{l'} 2^{-d(l'-l)}`
    ///
    /// so that `eta[l] - gamma[l] = beta^l` at every level. A negative
    /// threshold is an error.
    pub fn fully_dynamic(dim: usize, m: u64, depth: u32, beta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidSchedule(format!("beta must be positive, got {beta}")));
        }
        let d = dim as f64;
        let gammas: Vec<f64> = (0..=depth)
            .map(|l| {
                let share = m as f64 * (-(f64::from(depth - l) * d)).exp2();
                let slack: f64 = (l..=depth)
                    .map(|lp| beta.powi(lp as i32) * (-(d * f64::from(lp - l))).exp2())
                    .sum();
                share - slack
            })
            .collect();
        if let Some((level, &value)) = gammas.iter().enumerate().find(|(_, g)| **g < 0.0) {
            return Err(Error::NegativeThreshold {
                level: level as u32,
                value,
            });
        }
        GammaSchedule::from_gammas(dim, gammas, Some(beta))
    }

    pub fn depth(&self) -> u32 {
        (self.gammas.len() - 1) as u32
    }

    #[inline]
    pub fn gamma(&self, level: u32) -> f64 {
        self.gammas[level as usize]
    }

    /// Checks `0 <= gamma[depth] < total_supply` and
    /// `0 <= gamma[l] <= 2^{-d} gamma[l+1]` for every lower level.
    pub fn validate(&self, total_supply: u64) -> Result<()> {
        let top = *self.gammas.last().expect("non-empty");
        if !(0.0..(total_supply as f64)).contains(&top) {
            return Err(Error::InvalidSchedule(format!(
                "root threshold {top} must lie in [0, {total_supply})"
            )));
        }
        for (l, (&g, &eta)) in self.gammas.iter().zip(&self.etas).enumerate() {
            // Relative slack for rounding in schedules built from sums.
            let tol = 1e-12 * eta.abs().max(1.0);
            if g < 0.0 || g > eta + tol {
                return Err(Error::InvalidSchedule(format!(
                    "threshold {g} at level {l} outside [0, {eta}]"
                )));
            }
        }
        Ok(())
    }
}

/// Depth used for the semi-dynamic model: the largest `l` with `2^{ld} <= n`.
pub fn semi_dynamic_depth(dim: usize, horizon: u64) -> u32 {
    largest_depth(dim, |leaves| leaves <= horizon as f64)
}

/// Depth used for the fully dynamic model with `m` free units: the largest
/// `l` with `2^{dl} <= m/4` for `d >= 2`, and with `2^l <= m/(1 + log2 m)`
/// for `d = 1`. Falls back to 0 when even one leaf violates the bound.
pub fn fully_dynamic_depth(dim: usize, m: u64) -> u32 {
    let m = m as f64;
    if dim >= 2 {
        largest_depth(dim, |leaves| leaves <= m / 4.0)
    } else {
        largest_depth(dim, |leaves| leaves <= m / (1.0 + m.log2()))
    }
}

fn largest_depth(dim: usize, fits: impl Fn(f64) -> bool) -> u32 {
    let mut depth = 0u32;
    while depth < 30 && fits((f64::from(depth + 1) * dim as f64).exp2()) {
        depth += 1;
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_schedule() {
        let s = GammaSchedule::zero(2, 3);
        assert_eq!(s.gammas, vec![0.0; 4]);
        assert_eq!(s.etas, vec![0.0; 3]);
        assert!(s.validate(1).is_ok());
    }

    #[test]
    fn line_schedule_example() {
        let depth = fully_dynamic_depth(1, 16);
        assert_eq!(depth, 1);
        let s = GammaSchedule::fully_dynamic(1, 16, depth, 2.0).unwrap();
        // closed form for the line: m 2^{-(depth-l)} - 2^l (depth - l + 1)
        let closed: Vec<f64> = (0..=1u32)
            .map(|l| 16.0 * 0.5f64.powi((1 - l) as i32) - 2f64.powi(l as i32) * f64::from(1 - l + 1))
            .collect();
        assert_eq!(closed, vec![6.0, 14.0]);
        assert_eq!(s.gammas, closed);
        assert!(s.gammas[0] <= s.gammas[1] / 2.0);
        assert_eq!(s.lower_bounds, vec![6, 14]);
        assert_eq!(s.upper_bounds, vec![6]);
        assert!(s.validate(16).is_ok());
    }

    #[test]
    fn plane_schedule_example() {
        let depth = fully_dynamic_depth(2, 1024);
        assert_eq!(depth, 4);
        let s = GammaSchedule::fully_dynamic(2, 1024, depth, BETA_MULTI_DIM).unwrap();
        assert!((s.gammas[4] - (1024.0 - 2.01f64.powi(4))).abs() < 1e-9);
        assert!((s.gammas[4] - 1007.68).abs() < 0.01);
        for l in 0..4 {
            let slack = s.etas[l] - s.gammas[l];
            assert!((slack - 2.01f64.powi(l as i32)).abs() < 1e-9);
        }
        assert!(s.validate(1024).is_ok());
    }

    #[test]
    fn slack_identity_on_a_grid() {
        for d in 1..=4usize {
            for m in [4u64, 16, 64, 256, 1000, 4096, 1 << 16] {
                let depth = fully_dynamic_depth(d, m);
                let beta = default_beta(d);
                let Ok(s) = GammaSchedule::fully_dynamic(d, m, depth, beta) else {
                    continue;
                };
                for l in 0..depth as usize {
                    let slack = s.gammas[l + 1] * (-(d as f64)).exp2() - s.gammas[l];
                    assert!((slack - beta.powi(l as i32)).abs() < 1e-9 * s.gammas[l + 1].max(1.0));
                }
                assert!(s.gammas.iter().all(|&g| g >= 0.0));
                assert!(s.validate(m).is_ok(), "d={d} m={m}");
            }
        }
    }

    #[test]
    fn negative_threshold_is_reported() {
        // Depth too deep for the free supply.
        let err = GammaSchedule::fully_dynamic(1, 16, 4, 2.0).unwrap_err();
        assert!(matches!(err, Error::NegativeThreshold { .. }));
    }

    #[test]
    fn validate_rejects_violations() {
        let s = GammaSchedule::from_gammas(1, vec![3.0, 4.0], None).unwrap();
        assert!(s.validate(10).is_err());
        let s = GammaSchedule::from_gammas(1, vec![1.0, 4.0], None).unwrap();
        assert!(s.validate(4).is_err());
        assert!(s.validate(5).is_ok());
    }

    #[test]
    fn depth_rules() {
        assert_eq!(semi_dynamic_depth(1, 4096), 12);
        assert_eq!(semi_dynamic_depth(3, 1 << 9), 3);
        assert_eq!(semi_dynamic_depth(3, 1 << 11), 3);
        assert_eq!(semi_dynamic_depth(3, 1 << 12), 4);
        assert_eq!(fully_dynamic_depth(2, 64), 2);
        assert_eq!(fully_dynamic_depth(2, 4096), 5);
        assert_eq!(fully_dynamic_depth(1, 4096), 8);
        assert_eq!(fully_dynamic_depth(3, 2), 0);
    }
}
