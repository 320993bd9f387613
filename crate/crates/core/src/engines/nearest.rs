use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::geometry::Norm;
use crate::stats;

use super::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of the expected distance from a uniform demand
/// point to the nearest of `m` independent uniform supply points.
pub fn estimate_nn_distance(d: usize, m: u64, samples: u64, seed: u64, norm: Norm) -> NnEstimate {
    let mut rng = rng::stream(seed, 0);
    let mut draws = Vec::with_capacity(samples as usize);
    let mut q: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, d);
    for _ in 0..samples {
        q.iter_mut().for_each(|x| *x = rng.gen());
        let mut nearest = f64::INFINITY;
        for _ in 0..m.max(1) {
            let dist = norm.of_components(q.iter().map(|&x| x - rng.gen::<f64>()));
            nearest = nearest.min(dist);
        }
        draws.push(nearest);
    }
    NnEstimate {
        mean: stats::mean(&draws),
        stderr: stats::stderr(&draws).unwrap_or(f64::NAN),
    }
}
