//! Scaling fits, parameter sweeps, capacity planning and the analytic
//! diagnostics used to check simulations: the reflected-walk coupling and
//! the demand-surplus envelope.

mod capacity;
mod fit;
mod sweep;
mod tail;
mod walk;

pub use capacity::{
    capacity_plan, capacity_plan_with, geometric_grid, CapacityPlan, CurvePoint, PlanRow,
    SMOOTH_HALF_WIDTH,
};
pub use fit::{bootstrap_exponent_ci, fit_scaling, ScalePoint, ScalingFit};
pub use sweep::{fit_sweep, run_configs, sweep, sweep_points, SweepParam, SweepPoint, SweepSpec};
pub use tail::{crossover_level, tail_bound_diagnostic, TailRow};
pub use walk::{
    simulate_walk, walk_domination_all, walk_domination_check, DominationSummary, WalkOccupancy,
    WalkSpec,
};
