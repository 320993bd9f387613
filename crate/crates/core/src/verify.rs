//! Acceptance checks shared by the `acceptance` test target and the
//! `verify` command. Every check is deterministic for a given seed.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::engines::{
    estimate_nn_distance, run_fully_dynamic_replication, stream, uniform_points, CostReport,
    Model, SimConfig,
};
use crate::error::{Error, Result};
use crate::experiments::{
    capacity_plan, fit_sweep, geometric_grid, simulate_walk, sweep, walk_domination_all,
    SweepParam, SweepSpec, WalkSpec,
};
use crate::geometry::Norm;
use crate::policies::{default_beta, fully_dynamic_depth, GammaSchedule, Policy};
use crate::static_match::{brute_force_match, match_exact_flow, match_line_excess};

/// Outcome of one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {} ({:.1}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Groups of checks runnable as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracles,
    Invariants,
    ExponentsFast,
    ExponentsFull,
    Capacity,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracles" => Ok(Suite::Oracles),
            "invariants" => Ok(Suite::Invariants),
            "exponents-fast" => Ok(Suite::ExponentsFast),
            "exponents-full" => Ok(Suite::ExponentsFull),
            "capacity" => Ok(Suite::Capacity),
            other => Err(Error::Config(format!("unknown suite `{other}`"))),
        }
    }
}

impl Suite {
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Suite::Oracles => &[1],
            Suite::Invariants => &[8],
            Suite::ExponentsFast => &[2, 3, 7],
            Suite::ExponentsFull => &[2, 3, 4, 5, 6, 7],
            Suite::Capacity => &[9],
        }
    }
}

/// Line printed for the scale-separation claims that cannot be checked at
/// desk scale.
pub const NOT_REPRODUCIBLE: &str = "criterion 10 [NOT REPRODUCIBLE] d=2 sqrt(log N) separation \
between small and large excess is a log factor invisible at feasible N; gravitational matching \
for d=2, M <= N^(1-eps) is out of scope. Covered in substance by criteria 1-9.";

pub fn run_criterion(id: u32, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let (name, passed, detail) = match id {
        1 => oracle_equivalence(seed)?,
        2 => static_line_exponent(seed)?,
        3 => semi_dynamic_line_large_excess(seed)?,
        4 => semi_dynamic_cube_exponent(seed)?,
        5 => fully_dynamic_plane_band(seed)?,
        6 => fully_dynamic_line_sandwich(seed)?,
        7 => nearest_neighbor_baseline(seed)?,
        8 => invariant_suite(seed)?,
        9 => capacity_exponent(seed)?,
        other => return Err(Error::Config(format!("no criterion {other}"))),
    };
    Ok(CheckResult {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    })
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    suite.criteria().iter().map(|&id| run_criterion(id, seed)).collect()
}

type Outcome = Result<(&'static str, bool, String)>;

fn oracle_equivalence(seed: u64) -> Outcome {
    use rand::Rng;
    let mut rng = stream(seed, 1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let d = 1 + i % 3;
        let n = rng.gen_range(1..=8u64);
        let m = rng.gen_range(0..=3u64);
        let supply = uniform_points(&mut rng, d, n + m);
        let demand = uniform_points(&mut rng, d, n);
        let brute = brute_force_match(&supply, &demand, Norm::Euclidean)?.total_cost;
        let flow = match_exact_flow(&supply, &demand, Norm::Euclidean)?.total_cost;
        worst = worst.max((brute - flow).abs());
        if d == 1 {
            let s: Vec<f64> = supply.iter().map(|p| p.coords()[0]).collect();
            let q: Vec<f64> = demand.iter().map(|p| p.coords()[0]).collect();
            let line = match_line_excess(&s, &q)?.total_cost;
            worst = worst.max((brute - line).abs());
        }
    }
    Ok((
        "oracle equivalence",
        worst <= 1e-9,
        format!("1000 instances, max total-cost gap {worst:.2e} (tol 1e-9)"),
    ))
}

fn exponent_check(
    points: &[crate::experiments::SweepPoint],
    seed: u64,
    target: f64,
    tol: f64,
) -> Result<(bool, String)> {
    let fit = fit_sweep(points, seed)?;
    let ok = (fit.exponent - target).abs() <= tol;
    let ci = fit
        .exponent_ci
        .map(|(a, b)| format!(", 95% CI [{a:.3}, {b:.3}]"))
        .unwrap_or_default();
    Ok((
        ok,
        format!(
            "exponent {:.3} +- {:.3}{ci}, target {target:.3} +- {tol}",
            fit.exponent, fit.stderr
        ),
    ))
}

fn powers(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

fn static_line_exponent(seed: u64) -> Outcome {
    let base = SimConfig {
        model: Model::Static,
        d: 1,
        replications: 200,
        seed,
        ..SimConfig::default()
    };
    let points = sweep(&base, &SweepSpec::new(SweepParam::Horizon, powers(8, 14)))?;
    let (ok, detail) = exponent_check(&points, seed, -0.5, 0.07)?;
    Ok(("static d=1 M=0 cost exponent in N", ok, detail))
}

fn semi_dynamic_line_large_excess(seed: u64) -> Outcome {
    let base = SimConfig {
        model: Model::SemiDynamic,
        d: 1,
        replications: 50,
        seed,
        ..SimConfig::default()
    };
    let mut spec = SweepSpec::new(SweepParam::Horizon, powers(8, 14));
    spec.excess_per_horizon = Some(1.0);
    let points = sweep(&base, &spec)?;
    let (ok, detail) = exponent_check(&points, seed, -1.0, 0.15)?;
    Ok(("semi-dynamic HG d=1 M=N cost exponent in N", ok, detail))
}

fn semi_dynamic_cube_exponent(seed: u64) -> Outcome {
    let base = SimConfig {
        model: Model::SemiDynamic,
        d: 3,
        replications: 8,
        seed,
        ..SimConfig::default()
    };
    let points = sweep(&base, &SweepSpec::new(SweepParam::Horizon, powers(9, 18)))?;
    let (ok, detail) = exponent_check(&points, seed, -1.0 / 3.0, 0.08)?;
    Ok(("semi-dynamic HG d=3 M=0 cost exponent in N", ok, detail))
}

fn fully_dynamic_sweep(d: usize, beta: Option<f64>, reps: u32, seed: u64) -> Result<Vec<(u64, CostReport)>> {
    let base = SimConfig {
        model: Model::FullyDynamic,
        d,
        replications: reps,
        beta,
        seed,
        ..SimConfig::default()
    };
    let mut spec = SweepSpec::new(SweepParam::FreeSupply, powers(6, 12));
    spec.horizon_per_free = Some(200);
    Ok(sweep(&base, &spec)?
        .into_iter()
        .map(|p| (p.value, p.report))
        .collect())
}

fn band(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Slack growth factor used for the d=2 band check.
pub const PLANE_BAND_BETA: f64 = 2.9;

fn fully_dynamic_plane_band(seed: u64) -> Outcome {
    let scaled = |rows: &[(u64, CostReport)]| -> Vec<f64> {
        rows.iter().map(|(m, r)| r.mean_cost * (*m as f64).sqrt()).collect()
    };
    let rows = fully_dynamic_sweep(2, Some(PLANE_BAND_BETA), 4, seed)?;
    let reference = fully_dynamic_sweep(2, None, 2, seed)?;
    let b = band(&scaled(&rows));
    let clamped = rows.iter().any(|(_, r)| r.warmup_clamped);
    let series: Vec<String> = scaled(&rows).iter().map(|v| format!("{v:.3}")).collect();
    Ok((
        "fully dynamic HG d=2 cost*sqrt(m) band",
        b <= 2.0 && !clamped,
        format!(
            "beta={PLANE_BAND_BETA}: band {b:.3} (max 2.0), series [{}]; beta=2.01 band {:.3}",
            series.join(", "),
            band(&scaled(&reference))
        ),
    ))
}

fn fully_dynamic_line_sandwich(seed: u64) -> Outcome {
    let rows = fully_dynamic_sweep(1, None, 4, seed)?;
    let lower: Vec<f64> = rows
        .iter()
        .map(|(m, r)| r.mean_cost * *m as f64 / (*m as f64).log2())
        .collect();
    let upper: Vec<f64> = rows
        .iter()
        .map(|(m, r)| r.mean_cost * *m as f64 / (*m as f64).log2().powi(2))
        .collect();
    let (bl, bu) = (band(&lower), band(&upper));
    let min_lower = lower.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        "fully dynamic HG d=1 log sandwich",
        bl <= 4.0 && bu <= 4.0 && min_lower > 0.0,
        format!("c*m/log2 m band {bl:.3}, c*m/(log2 m)^2 band {bu:.3} (max 4 each)"),
    ))
}

fn nearest_neighbor_baseline(seed: u64) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 1..=3usize {
        let ms = powers(4, 12);
        let est: Vec<_> = ms
            .iter()
            .map(|&m| estimate_nn_distance(d, m, 2000, seed ^ m, Norm::Euclidean))
            .collect();
        let scaled: Vec<f64> = ms
            .iter()
            .zip(&est)
            .map(|(&m, e)| e.mean * (m as f64).powf(1.0 / d as f64))
            .collect();
        let b = band(&scaled);
        ok &= b <= 1.5;
        // HG never beats the nearest-neighbor distance of its own free supply.
        let fd = fully_dynamic_sweep(d, None, 2, seed)?;
        let mut below = 0;
        for (m, r) in &fd {
            let i = ms.iter().position(|x| x == m).expect("same grid");
            if r.mean_cost < est[i].mean - 3.0 * est[i].stderr {
                below += 1;
            }
        }
        ok &= below == 0;
        parts.push(format!("d={d}: band {b:.3}, HG below baseline at {below} of {} m", fd.len()));
    }
    Ok(("nearest-neighbor baseline", ok, parts.join("; ")))
}

fn invariant_suite(seed: u64) -> Outcome {
    let mut violations = 0u64;
    let mut checks = 0u64;
    let mut cells = 0u64;
    let mut failures = 0usize;
    let mut walks = 0usize;
    let mut walk_misses = Vec::new();
    for d in 1..=3usize {
        for m in [16u64, 64, 256] {
            let cfg = SimConfig {
                model: Model::FullyDynamic,
                d,
                horizon: 100_000,
                free_supply: Some(m),
                audit: true,
                seed,
                ..SimConfig::default()
            };
            cfg.validate()?;
            let (out, trace) = run_fully_dynamic_replication(&cfg, 0)?;
            let audit = out.audit.expect("audit requested");
            violations += audit.violations();
            checks += audit.checks;
            let depth = fully_dynamic_depth(d, m);
            let schedule = GammaSchedule::fully_dynamic(d, m, depth, default_beta(d))?;
            let trace = trace.expect("trace requested");
            let summary = walk_domination_all(&trace, &schedule)?;
            cells += summary.cells_checked;
            failures += summary.failures.len();
            for level in 0..depth {
                let spec = WalkSpec::for_level(&schedule, level)?;
                let occ = simulate_walk(&spec, 1_000_000, 10_000, seed ^ (m << 8) ^ d as u64)?;
                walks += 1;
                if !occ.within(3.0) {
                    walk_misses.push(format!(
                        "d={d} m={m} l={level}: {:.4} vs {:.4} (approx {:.4}) se {:.4}",
                        occ.fraction,
                        occ.exact,
                        (1.0 - spec.q) / spec.states() as f64,
                        occ.stderr
                    ));
                }
            }
        }
    }
    let ok = violations == 0 && failures == 0 && walk_misses.is_empty();
    let mut detail = format!(
        "(a) {violations} violations in {checks} assertions; (b) {failures} domination failures over {cells} cells; (c) {} of {walks} walks outside 3 se",
        walk_misses.len()
    );
    if !walk_misses.is_empty() {
        detail.push_str(&format!(": {}", walk_misses.join("; ")));
    }
    Ok(("invariant suite", ok, detail))
}

fn capacity_exponent(seed: u64) -> Outcome {
    let grid = |n: u64| {
        let g = (n as f64).powf(2.0 / 3.0);
        geometric_grid((g / 8.0).max(4.0) as u64, (g * 2.0) as u64, 25)
    };
    let n_grid = powers(8, 13);
    let base = SimConfig {
        model: Model::Capacity,
        d: 2,
        replications: 4,
        policy: Policy::Greedy,
        seed,
        ..SimConfig::default()
    };
    let plan = capacity_plan(&base, &n_grid, grid, 200)?;
    let hg = capacity_plan(
        &SimConfig {
            policy: Policy::HierarchicalGreedy,
            replications: 2,
            ..base.clone()
        },
        &n_grid,
        grid,
        200,
    )?;
    let e = plan.fit.exponent;
    let ms: Vec<String> = plan.rows.iter().map(|r| format!("{:.0}", r.m_star_smoothed)).collect();
    Ok((
        "capacity planning d=2 m* exponent in n",
        (e - 2.0 / 3.0).abs() <= 0.10 && !plan.boundary_hit,
        format!(
            "greedy: exponent {e:.3} (target 0.667 +- 0.10), m* [{}], boundary {}; hierarchical greedy exponent {:.3}",
            ms.join(", "),
            plan.boundary_hit,
            hg.fit.exponent
        ),
    ))
}
