//! Finite-scale laboratory for optimal transport duality.
//!
//! Costs live in the extended reals with the convention `inf - inf = inf`.
//! The crate solves discrete transport problems exactly, extracts dual
//! potentials, certifies (or refutes) cyclical monotonicity with explicit
//! cycles, builds subsidy functions for suboptimal plans and checks the
//! multi-marginal improvement bound against candidate couplings.

pub mod cli;
pub mod error;
pub mod ext;
pub mod gallery;
mod graph;
pub mod model;
pub mod monotonicity;
pub mod multimarginal;
pub mod potentials;
pub mod solver;
pub mod subsidy;

pub use error::{Error, Result};
pub use ext::{ext_add, ext_sub, ExtReal};
pub use model::{
    check_feasible_potentials, check_marginals, evaluate_j, plan_cost, shift_cost, truncate_potentials, CostMatrix,
    DiscreteMeasure, Domain, FeasibilityVerdict, PotentialPair, Shift, TransportPlan, Violation,
};
pub use monotonicity::{
    check_cyclical_monotonicity, improve_plan, solve_by_cycle_canceling, CycleCertificate, CycleVerdict, SupportSet,
};
pub use multimarginal::{build_e, candidate_couplings, mm_bound_check, symmetrize, BoundVerdict, CyclicGain, MultiCoupling};
pub use potentials::{
    check_w3, decompose_exact, potentials_from_support, sandwich_potentials, verify_strong_monotonicity, Decomposition,
    RectangleCertificate, SandwichInput,
};
pub use solver::{brute_force_value, solve_min_cost, truncation_sweep, SolveResult, SolveStatus, SweepResult};
pub use subsidy::{compute_subsidy, verify_lower_bound, verify_subsidy_constraint, ConstraintTag, SubsidyFunction};

/// Pointwise slack allowed in `phi + psi <= c`.
pub const FEAS_TOL: f64 = 1e-9;
/// Allowed deviation of a weight sum from 1 after normalization.
pub const NORM_TOL: f64 = 1e-12;
/// Allowed deviation of plan marginals from the prescribed measures.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Cycles weighing at least `-CYCLE_TOL` count as nonnegative.
pub const CYCLE_TOL: f64 = 1e-9;
/// Allowed gap between `phi + psi` and `c` on a support.
pub const STRONG_TOL: f64 = 1e-8;
/// Tolerance for subsidy totals, rectangle residuals and the coupling bound.
pub const SUBSIDY_TOL: f64 = 1e-8;
/// Masses at or below this are treated as zero.
pub const MASS_EPS: f64 = 1e-13;

/// Zero-mass cutoff for problems whose smallest weight is `min_weight`:
/// [`MASS_EPS`], lowered so that no genuine point is mistaken for a crumb.
pub(crate) fn mass_eps(min_weight: f64) -> f64 {
    MASS_EPS.min(min_weight * 1e-3)
}
