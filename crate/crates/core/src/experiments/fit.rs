use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engines::stream;
use crate::error::{Error, Result};
use crate::stats;

/// One `(scale, mean cost, standard error)` observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub scale: f64,
    pub cost: f64,
    pub stderr: Option<f64>,
}

/// Power-law fit `cost ~ exp(intercept) * scale^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Standard error of the exponent.
    pub stderr: f64,
    pub r2: f64,
    /// Whether the fit used inverse-variance weights.
    pub weighted: bool,
    pub points: Vec<ScalePoint>,
    /// Replication bootstrap interval for the exponent, when computed.
    pub exponent_ci: Option<(f64, f64)>,
}

/// Least squares fit of `ln cost` against `ln scale`.
///
/// Points are weighted by the inverse variance of `ln cost`, which is
/// approximately `(cost / stderr)^2`. The fit is unweighted when any point
/// lacks a positive standard error.
pub fn fit_scaling(points: &[ScalePoint]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    for p in points {
        for v in [p.scale, p.cost] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositive(v));
            }
        }
    }
    let weighted = points
        .iter()
        .all(|p| p.stderr.is_some_and(|s| s.is_finite() && s > 0.0));
    let xs: Vec<f64> = points.iter().map(|p| p.scale.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.cost.ln()).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|p| match (weighted, p.stderr) {
            (true, Some(s)) => (p.cost / s).powi(2),
            _ => 1.0,
        })
        .collect();

    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(&ys).zip(&ws) {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
        syy += w * (y - ybar) * (y - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::Config("all scales are equal".into()));
    }
    let exponent = sxy / sxx;
    let intercept = ybar - exponent * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (y - intercept - exponent * x).powi(2))
        .sum();
    let dof = (points.len() - 2) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        exponent,
        intercept,
        stderr,
        r2,
        weighted,
        points: points.to_vec(),
        exponent_ci: None,
    })
}

/// Percentile interval of the fitted exponent when the replication means
/// at each scale are resampled with replacement.
pub fn bootstrap_exponent_ci(
    scales: &[f64],
    replication_means: &[Vec<f64>],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if scales.len() != replication_means.len() {
        return Err(Error::LengthMismatch {
            supply: scales.len(),
            demand: replication_means.len(),
        });
    }
    let mut rng = stream(seed, 0);
    let mut exps = Vec::with_capacity(resamples);
    let mut buf = Vec::new();
    for _ in 0..resamples {
        let mut pts = Vec::with_capacity(scales.len());
        for (&scale, means) in scales.iter().zip(replication_means) {
            if means.is_empty() {
                return Err(Error::EmptyInstance);
            }
            buf.clear();
            buf.extend((0..means.len()).map(|_| means[rng.gen_range(0..means.len())]));
            pts.push(ScalePoint {
                scale,
                cost: stats::mean(&buf),
                stderr: stats::stderr(&buf),
            });
        }
        exps.push(fit_scaling(&pts)?.exponent);
    }
    exps.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| exps[((q * (exps.len() - 1) as f64).round() as usize).min(exps.len() - 1)];
    Ok((pick(tail), pick(1.0 - tail)))
}
