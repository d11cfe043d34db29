//! Subsidy functions: the cheapest `f >= 0` under which rerouting a plan
//! stops paying off, and the four incentive constraints on `f`.
//!
//! Cycle weights per constraint, for support pairs `p -> q` or the sandwich
//! digraph on `X`:
//!
//! * `W1`: support only, `c(x_q, y_p) - (c - f)(p)`
//! * `S1`: support only, `(c - f)(x_q, y_p) - (c - f)(p)`
//! * `W2`: all chains, upper `c`, lower `c - f`
//! * `S2`: all chains, upper and lower both `c - f`

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{ext_sub, weighted, ExtReal};
use crate::model::{evaluate_j, plan_cost, CostMatrix, FeasibilityVerdict, PotentialPair, TransportPlan, Violation};
use crate::monotonicity::{support_cycle_check, CycleVerdict, SupportSet};
use crate::potentials::{check_w3, potentials_from_support, SandwichInput};
use crate::solver::solve_min_cost;
use crate::{FEAS_TOL, SUBSIDY_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct SubsidyFunction {
    /// `c - (phi + psi)`, clamped at zero, `+inf` where `c` is.
    pub entries: CostMatrix,
    /// `sum pi f`.
    pub total_under_plan: f64,
    /// `I_c[pi] - I_c`.
    pub alpha: f64,
    /// `I_c`.
    pub optimum: f64,
    /// The dual maximizers the subsidy was built from.
    pub potentials: PotentialPair,
    /// Largest negative rounding residue that was clamped to zero.
    pub max_clamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    W1,
    S1,
    S2,
    W2,
}

impl ConstraintTag {
    pub const ALL: [ConstraintTag; 4] = [ConstraintTag::W1, ConstraintTag::S1, ConstraintTag::S2, ConstraintTag::W2];
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintTag::W1 => "W1",
            ConstraintTag::S1 => "S1",
            ConstraintTag::S2 => "S2",
            ConstraintTag::W2 => "W2",
        })
    }
}

impl FromStr for ConstraintTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "W1" => Ok(ConstraintTag::W1),
            "S1" => Ok(ConstraintTag::S1),
            "S2" => Ok(ConstraintTag::S2),
            "W2" => Ok(ConstraintTag::W2),
            other => Err(Error::invalid("tag", format!("unknown constraint `{other}`"))),
        }
    }
}

/// Builds `f = c - (phi + psi)` from dual maximizers of the problem whose
/// marginals are those of `pi`.
pub fn compute_subsidy(pi: &TransportPlan, c: &CostMatrix) -> Result<SubsidyFunction> {
    let cost = plan_cost(pi, c)?;
    let Some(cost) = cost.finite() else {
        return Err(Error::invalid("plan", "plan cost is not finite"));
    };
    let (mu, nu) = pi.marginals()?;
    let solved = solve_min_cost(&mu, &nu, c)?;
    let opt_plan = solved.optimal_plan()?;
    let optimum = solved.value.value();
    let pp = potentials_from_support(&SupportSet::from_plan(opt_plan), c)?;

    let mut max_clamp: f64 = 0.0;
    let entries = CostMatrix::from_fn(c.rows(), c.cols(), |x, y| {
        let v = ext_sub(c.get(x, y), pp.sum_at(x, y));
        if v < 0.0 {
            max_clamp = max_clamp.max(-v);
            0.0
        } else {
            v
        }
    })?;
    if max_clamp > FEAS_TOL {
        return Err(Error::Internal(format!("dual potentials exceed the cost by {max_clamp:e}")));
    }
    let total_under_plan = integrate(&entries, pi)?;
    let alpha = cost - optimum;
    let j = evaluate_j(&pp, pi)?.value();
    if (total_under_plan - alpha).abs() > SUBSIDY_TOL || (j - optimum).abs() > SUBSIDY_TOL * (1.0 + optimum.abs()) {
        return Err(Error::Internal(format!(
            "subsidy total {total_under_plan} does not match the gap {alpha}"
        )));
    }
    Ok(SubsidyFunction {
        entries,
        total_under_plan,
        alpha,
        optimum,
        potentials: pp,
        max_clamp,
    })
}

fn integrate(f: &CostMatrix, pi: &TransportPlan) -> Result<f64> {
    Ok(plan_cost(pi, f)?.value())
}

/// Checks one of the four incentive constraints for subsidy `f` and plan `pi`.
pub fn verify_subsidy_constraint(f: &CostMatrix, pi: &TransportPlan, c: &CostMatrix, tag: ConstraintTag) -> Result<CycleVerdict> {
    f.check_same_shape(c)?;
    if pi.rows() != c.rows() || pi.cols() != c.cols() {
        return Err(Error::DimensionMismatch("plan vs cost".into()));
    }
    let reduced = c.ext_minus(f)?;
    Ok(match tag {
        ConstraintTag::W1 => support_cycle_check(SupportSet::from_plan(pi).pairs(), c, &reduced),
        ConstraintTag::S1 => support_cycle_check(SupportSet::from_plan(pi).pairs(), &reduced, &reduced),
        ConstraintTag::W2 => check_w3(&SandwichInput::new(c.clone(), reduced)?),
        ConstraintTag::S2 => check_w3(&SandwichInput::new(reduced.clone(), reduced)?),
    })
}

/// `sum pi f >= (I_c[pi] - I_c) - 1e-8`.
pub fn verify_lower_bound(f: &CostMatrix, pi: &TransportPlan, c: &CostMatrix, optimum: f64) -> Result<FeasibilityVerdict> {
    f.check_same_shape(c)?;
    let cost = plan_cost(pi, c)?;
    let Some(cost) = cost.finite() else {
        return Err(Error::invalid("plan", "plan cost is not finite"));
    };
    let mut paid = 0.0;
    for (i, j, m) in pi.triplets() {
        paid += weighted(m, f.get(i, j));
    }
    let slack = paid - (cost - optimum);
    let violations = if slack < -SUBSIDY_TOL {
        vec![Violation {
            x: None,
            y: None,
            slack: ExtReal::from_f64(slack),
        }]
    } else {
        Vec::new()
    };
    Ok(FeasibilityVerdict::from_violations(violations))
}
