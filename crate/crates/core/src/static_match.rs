//! Exact minimum-cost matchings for the static model, where all `N` demand
//! locations and all `N + M` supply locations are known up front.
//!
//! Three independent routes are provided so they can check each other:
//!
//! * [`match_line_excess`]: a banded dynamic program for points on a line,
//!   relying on the existence of an order-preserving optimal matching.
//! * [`match_exact_flow`]: a shortest-augmenting-path assignment solver
//!   (Hungarian method with dual potentials) that certifies its own
//!   optimality through the dual solution.
//! * [`brute_force_match`]: exhaustive search over injections, for tiny
//!   instances only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_unchecked, Norm, Point};

/// Default cap on the number of demand points for [`match_exact_flow`].
pub const DEFAULT_EXACT_CAP: usize = 4096;
/// Largest demand set accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX_DEMAND: usize = 8;
/// Largest supply set accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX_SUPPLY: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    /// `(demand index, supply index)`, sorted by demand index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
    pub avg_cost: f64,
}

impl MatchingResult {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, cost: impl Fn(usize, usize) -> f64) -> Self {
        pairs.sort_unstable();
        let total_cost: f64 = pairs.iter().map(|&(i, j)| cost(i, j)).sum();
        let avg_cost = total_cost / pairs.len() as f64;
        MatchingResult {
            pairs,
            total_cost,
            avg_cost,
        }
    }

    /// Supply indices left unmatched, in increasing order.
    pub fn unmatched_supply(&self, supply_len: usize) -> Vec<usize> {
        let mut used = vec![false; supply_len];
        for &(_, j) in &self.pairs {
            used[j] = true;
        }
        (0..supply_len).filter(|&j| !used[j]).collect()
    }
}

fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    idx
}

/// Rank matching on the line: k-th smallest demand to k-th smallest supply.
pub fn match_line_balanced(supply: &[f64], demand: &[f64]) -> Result<MatchingResult> {
    if supply.len() != demand.len() {
        return Err(Error::LengthMismatch {
            supply: supply.len(),
            demand: demand.len(),
        });
    }
    if demand.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let s = argsort(supply);
    let d = argsort(demand);
    let pairs = d.into_iter().zip(s).collect();
    Ok(MatchingResult::from_pairs(pairs, |i, j| {
        (demand[i] - supply[j]).abs()
    }))
}

/// Optimal matching on the line with `M = supply.len() - demand.len() >= 0`
/// leftover supply units, in `O(N (M + 1))` time after sorting.
///
/// With both sides sorted, the i-th demand is matched to a supply of rank
/// between `i` and `i + M`; `best[k]` holds the optimum for the first `i`
/// demands using the first `i + k` supplies.
pub fn match_line_excess(supply: &[f64], demand: &[f64]) -> Result<MatchingResult> {
    let n = demand.len();
    if supply.len() < n {
        return Err(Error::InsufficientSupply {
            supply: supply.len(),
            demand: n,
        });
    }
    if n == 0 {
        return Err(Error::EmptyInstance);
    }
    let excess = supply.len() - n;
    let width = excess + 1;
    let s_order = argsort(supply);
    let d_order = argsort(demand);
    let a: Vec<f64> = d_order.iter().map(|&i| demand[i]).collect();
    let b: Vec<f64> = s_order.iter().map(|&j| supply[j]).collect();

    // took[i * width + k]: whether demand i (1-based) takes supply i + k.
    let mut took = vec![0u64; (n * width).div_ceil(64)];
    let set = |bits: &mut [u64], pos: usize| bits[pos / 64] |= 1 << (pos % 64);
    let get = |bits: &[u64], pos: usize| bits[pos / 64] >> (pos % 64) & 1 == 1;

    let mut prev = vec![0.0f64; width];
    let mut cur = vec![0.0f64; width];
    for i in 1..=n {
        for k in 0..width {
            let take = prev[k] + (a[i - 1] - b[i - 1 + k]).abs();
            if k > 0 && cur[k - 1] <= take {
                cur[k] = cur[k - 1];
            } else {
                cur[k] = take;
                set(&mut took, (i - 1) * width + k);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut pairs = Vec::with_capacity(n);
    let (mut i, mut k) = (n, excess);
    while i > 0 {
        if get(&took, (i - 1) * width + k) {
            pairs.push((d_order[i - 1], s_order[i - 1 + k]));
            i -= 1;
        } else {
            k -= 1;
        }
    }
    Ok(MatchingResult::from_pairs(pairs, |i, j| {
        (demand[i] - supply[j]).abs()
    }))
}

fn check_instance(supply: &[Point], demand: &[Point]) -> Result<()> {
    if demand.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if supply.len() < demand.len() {
        return Err(Error::InsufficientSupply {
            supply: supply.len(),
            demand: demand.len(),
        });
    }
    let d = demand[0].dim();
    if let Some(p) = supply.iter().chain(demand).find(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.dim(),
        });
    }
    Ok(())
}

/// Exact assignment of every demand point to a distinct supply point,
/// using the default size cap.
pub fn match_exact_flow(supply: &[Point], demand: &[Point], norm: Norm) -> Result<MatchingResult> {
    match_exact_flow_capped(supply, demand, norm, DEFAULT_EXACT_CAP)
}

/// Exact assignment with an explicit cap on `demand.len()`.
///
/// Runs `N` shortest-augmenting-path phases over the dense bipartite graph
/// and then verifies the dual potentials: every reduced cost is
/// non-negative, matched arcs are tight and unmatched supply carries zero
/// potential. A failed check is reported as [`Error::CertificateFailed`].
pub fn match_exact_flow_capped(
    supply: &[Point],
    demand: &[Point],
    norm: Norm,
    cap: usize,
) -> Result<MatchingResult> {
    check_instance(supply, demand)?;
    if demand.len() > cap {
        return Err(Error::InstanceTooLarge {
            solver: "exact flow",
            size: demand.len(),
            limit: cap,
        });
    }
    let n = demand.len();
    let m = supply.len();
    let cost: Vec<f64> = demand
        .iter()
        .flat_map(|p| supply.iter().map(move |q| distance_unchecked(p, q, norm)))
        .collect();
    let (row_of_col, u, v) = assign(&cost, n, m);
    certify(&cost, n, m, &row_of_col, &u, &v)?;

    let pairs = (1..=m)
        .filter(|&j| row_of_col[j] != 0)
        .map(|j| (row_of_col[j] - 1, j - 1))
        .collect();
    Ok(MatchingResult::from_pairs(pairs, |i, j| cost[i * m + j]))
}

/// Rectangular assignment, rows `1..=n` onto columns `1..=m`, `n <= m`.
/// Returns the row assigned to each column (0 = none) and the potentials.
fn assign(cost: &[f64], n: usize, m: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let row = &cost[(i0 - 1) * m..i0 * m];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = row[j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (row_of_col, u, v)
}

fn certify(
    cost: &[f64],
    n: usize,
    m: usize,
    row_of_col: &[usize],
    u: &[f64],
    v: &[f64],
) -> Result<()> {
    let scale = cost.iter().fold(1.0f64, |a, &c| a.max(c));
    let tol = 1e-9 * scale;
    let mut matched_rows = vec![false; n + 1];
    for j in 1..=m {
        let i = row_of_col[j];
        if i == 0 {
            if v[j].abs() > tol {
                return Err(Error::CertificateFailed(format!(
                    "unmatched supply {} has potential {}",
                    j - 1,
                    v[j]
                )));
            }
            continue;
        }
        matched_rows[i] = true;
        let slack = cost[(i - 1) * m + j - 1] - u[i] - v[j];
        if slack.abs() > tol {
            return Err(Error::CertificateFailed(format!(
                "matched arc ({}, {}) not tight: slack {slack}",
                i - 1,
                j - 1
            )));
        }
    }
    if matched_rows[1..].iter().any(|&b| !b) {
        return Err(Error::CertificateFailed("a demand is unmatched".into()));
    }
    for i in 1..=n {
        for j in 1..=m {
            let reduced = cost[(i - 1) * m + j - 1] - u[i] - v[j];
            if reduced < -tol || v[j] > tol {
                return Err(Error::CertificateFailed(format!(
                    "negative reduced cost {reduced} on arc ({}, {})",
                    i - 1,
                    j - 1
                )));
            }
        }
    }
    Ok(())
}

/// Exhaustive search over all injections demand -> supply. Branches whose
/// partial cost already reaches the incumbent are cut, which keeps the
/// result exact.
pub fn brute_force_match(supply: &[Point], demand: &[Point], norm: Norm) -> Result<MatchingResult> {
    check_instance(supply, demand)?;
    if demand.len() > BRUTE_FORCE_MAX_DEMAND {
        return Err(Error::InstanceTooLarge {
            solver: "brute force (demand)",
            size: demand.len(),
            limit: BRUTE_FORCE_MAX_DEMAND,
        });
    }
    if supply.len() > BRUTE_FORCE_MAX_SUPPLY {
        return Err(Error::InstanceTooLarge {
            solver: "brute force (supply)",
            size: supply.len(),
            limit: BRUTE_FORCE_MAX_SUPPLY,
        });
    }
    let m = supply.len();
    let cost: Vec<f64> = demand
        .iter()
        .flat_map(|p| supply.iter().map(move |q| distance_unchecked(p, q, norm)))
        .collect();

    struct Search<'a> {
        cost: &'a [f64],
        m: usize,
        n: usize,
        current: Vec<usize>,
        best: Vec<usize>,
        best_cost: f64,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, used: u32, partial: f64) {
            if partial >= self.best_cost {
                return;
            }
            if i == self.n {
                self.best_cost = partial;
                self.best.clone_from(&self.current);
                return;
            }
            for j in 0..self.m {
                if used & (1 << j) == 0 {
                    self.current.push(j);
                    self.go(i + 1, used | (1 << j), partial + self.cost[i * self.m + j]);
                    self.current.pop();
                }
            }
        }
    }
    let mut search = Search {
        cost: &cost,
        m,
        n: demand.len(),
        current: Vec::with_capacity(demand.len()),
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    search.go(0, 0, 0.0);
    let pairs = search.best.iter().copied().enumerate().collect();
    Ok(MatchingResult::from_pairs(pairs, |i, j| cost[i * m + j]))
}
