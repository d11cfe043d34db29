//! Rerouting graph on the support of a plan: cyclical-monotonicity
//! certificates, cyclic mass shifts, and a cycle-canceling solver.
//!
//! A node of the rerouting graph is a support pair `p = (x_p, y_p)`. The
//! edge `p -> q` weighs `c(x_q, y_p) - c(x_p, y_p)`: the change in cost when
//! the mass arriving at `y_p` is sent from `x_q` instead. A cycle
//! `p_1 -> ... -> p_k -> p_1` therefore weighs
//! `sum_i c(x_{i+1}, y_i) - c(x_i, y_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{ext_add, ext_sub, ExtReal};
use crate::graph::Digraph;
use crate::model::{plan_cost, CostMatrix, DiscreteMeasure, TransportPlan};
use crate::solver::{SolveResult, SolveStatus};
use crate::{mass_eps, CYCLE_TOL};

/// Upper bound on cancellations before [`solve_by_cycle_canceling`] gives up.
pub const CANCEL_CAP: usize = 100_000;

/// Support pairs `(x, y)` of a plan, row-major and distinct.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pairs: Vec<(usize, usize)>,
}

impl SupportSet {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        SupportSet { pairs }
    }

    /// Cells carrying mass, ignoring rounding crumbs far below the
    /// smallest marginal weight.
    pub fn from_plan(pi: &TransportPlan) -> Self {
        let min_weight = pi
            .row_sums()
            .into_iter()
            .chain(pi.col_sums())
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min);
        SupportSet {
            pairs: pi.support(mass_eps(min_weight)),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, p: (usize, usize)) -> bool {
        self.pairs.binary_search(&p).is_ok()
    }
}

/// A cyclically ordered list of pairs `(x_1, y_1), ..., (x_k, y_k)` whose
/// chain sum `sum_i upper(x_{i+1}, y_i) - lower(x_i, y_i)` is negative.
///
/// For plain monotonicity `upper = lower = c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CycleCertificate {
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: ExtReal,
}

impl CycleCertificate {
    pub(crate) fn from_pairs(pairs: Vec<(usize, usize)>, upper: &CostMatrix, lower: &CostMatrix) -> Self {
        let total_weight = chain_sum(&pairs, upper, lower);
        CycleCertificate { pairs, total_weight }
    }

    /// Chain sum against a single cost.
    pub fn recompute(&self, c: &CostMatrix) -> ExtReal {
        chain_sum(&self.pairs, c, c)
    }

    /// Chain sum against an upper/lower pair.
    pub fn recompute_with(&self, upper: &CostMatrix, lower: &CostMatrix) -> ExtReal {
        chain_sum(&self.pairs, upper, lower)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub(crate) fn chain_sum(pairs: &[(usize, usize)], upper: &CostMatrix, lower: &CostMatrix) -> ExtReal {
    let k = pairs.len();
    let mut total = 0.0;
    for i in 0..k {
        let (x, y) = pairs[i];
        let (x_next, _) = pairs[(i + 1) % k];
        total = ext_add(total, ext_sub(upper.get(x_next, y), lower.get(x, y)));
    }
    ExtReal::from_f64(total)
}

/// Outcome of a cycle condition check.
#[derive(Clone, Debug, PartialEq)]
pub enum CycleVerdict {
    Holds,
    Violated(CycleCertificate),
}

impl CycleVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, CycleVerdict::Holds)
    }

    pub fn certificate(&self) -> Option<&CycleCertificate> {
        match self {
            CycleVerdict::Holds => None,
            CycleVerdict::Violated(c) => Some(c),
        }
    }
}

/// Rerouting digraph for a generic pair of grids: `p -> q` weighs
/// `upper(x_q, y_p) - lower(x_p, y_p)`. 1-cycles are excluded.
pub(crate) fn rerouting_graph(pairs: &[(usize, usize)], upper: &CostMatrix, lower: &CostMatrix) -> Digraph {
    Digraph::from_fn(pairs.len(), false, |p, q| {
        let (xp, yp) = pairs[p];
        let (xq, _) = pairs[q];
        ext_sub(upper.get(xq, yp), lower.get(xp, yp))
    })
}

pub(crate) fn support_cycle_check(pairs: &[(usize, usize)], upper: &CostMatrix, lower: &CostMatrix) -> CycleVerdict {
    let g = rerouting_graph(pairs, upper, lower);
    match g.find_negative_cycle(CYCLE_TOL) {
        None => CycleVerdict::Holds,
        Some(cyc) => {
            let ordered = cyc.into_iter().map(|p| pairs[p]).collect();
            CycleVerdict::Violated(CycleCertificate::from_pairs(ordered, upper, lower))
        }
    }
}

fn check_support_in_range(support: &SupportSet, c: &CostMatrix) -> Result<()> {
    for &(x, y) in support.pairs() {
        if x >= c.rows() || y >= c.cols() {
            return Err(Error::DimensionMismatch(format!(
                "support pair ({x}, {y}) outside a {}x{} cost",
                c.rows(),
                c.cols()
            )));
        }
        if c.get(x, y) == f64::INFINITY {
            return Err(Error::InfiniteOnSupport(x, y));
        }
    }
    Ok(())
}

/// `Holds` iff no rerouting cycle on the support weighs less than `-1e-9`;
/// otherwise a certificate with a shortest violating cycle.
pub fn check_cyclical_monotonicity(support: &SupportSet, c: &CostMatrix) -> Result<CycleVerdict> {
    check_support_in_range(support, c)?;
    Ok(support_cycle_check(support.pairs(), c, c))
}

/// Shifts `delta = min_i pi(x_i, y_i)` from each `(x_i, y_i)` to
/// `(x_{i+1}, y_i)`. Marginals are unchanged and the cost drops by
/// `delta * |total weight|`.
pub fn improve_plan(pi: &TransportPlan, cert: &CycleCertificate, c: &CostMatrix) -> Result<TransportPlan> {
    if pi.rows() != c.rows() || pi.cols() != c.cols() {
        return Err(Error::DimensionMismatch("plan vs cost".into()));
    }
    if cert.pairs.len() < 2 {
        return Err(Error::invalid("certificate", "a rerouting cycle needs at least two pairs"));
    }
    let mut delta = f64::INFINITY;
    for &(x, y) in &cert.pairs {
        if x >= pi.rows() || y >= pi.cols() {
            return Err(Error::DimensionMismatch(format!("certificate pair ({x}, {y}) out of range")));
        }
        let m = pi.get(x, y);
        if m <= 0.0 {
            return Err(Error::ZeroMassOnCycle(x, y));
        }
        delta = delta.min(m);
    }
    let k = cert.pairs.len();
    let mut out = pi.clone();
    for &(x, y) in &cert.pairs {
        let m = out.get(x, y);
        // the minimizing pair lands on exact zero
        out.set(x, y, if m == delta { 0.0 } else { m - delta });
    }
    for i in 0..k {
        let (_, y) = cert.pairs[i];
        let (x_next, _) = cert.pairs[(i + 1) % k];
        out.set(x_next, y, out.get(x_next, y) + delta);
    }
    Ok(out)
}

/// Feasible starting plan using finite-cost cells only: north-west corner
/// rule that skips `+inf` cells, falling back to a zero-cost flow when the
/// greedy sweep gets stuck.
pub(crate) fn finite_northwest_corner(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
) -> Result<Option<TransportPlan>> {
    let (n, m) = (mu.len(), nu.len());
    let mut supply = mu.weights().to_vec();
    let mut demand = nu.weights().to_vec();
    let mut plan = TransportPlan::zeros(n, m);
    let min_weight = supply.iter().chain(&demand).copied().fold(f64::INFINITY, f64::min);
    let eps = mass_eps(min_weight);
    for i in 0..n {
        for j in 0..m {
            if supply[i] <= eps {
                break;
            }
            if demand[j] <= eps || c.get(i, j) == f64::INFINITY {
                continue;
            }
            let t = supply[i].min(demand[j]);
            plan.set(i, j, plan.get(i, j) + t);
            supply[i] -= t;
            demand[j] -= t;
        }
    }
    let left: f64 = supply.iter().sum();
    if left <= crate::MARGINAL_TOL {
        return Ok(Some(plan));
    }
    let reach = CostMatrix::from_fn(n, m, |i, j| if c.get(i, j) == f64::INFINITY { f64::INFINITY } else { 0.0 })?;
    let r = crate::solver::solve_min_cost(mu, nu, &reach)?;
    Ok(r.plan)
}

/// Solves by repeatedly canceling the minimum-mean rerouting cycle of the
/// current support until the support is cyclically monotone.
pub fn solve_by_cycle_canceling(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<SolveResult> {
    c.check_measures(mu, nu)?;
    if c.data().contains(&f64::NEG_INFINITY) {
        return Err(Error::invalid("cost", "-inf entries make the problem unbounded"));
    }
    let Some(mut plan) = finite_northwest_corner(mu, nu, c)? else {
        return Ok(SolveResult::infeasible());
    };
    let mut iterations = 0;
    let status = loop {
        let support = SupportSet::from_plan(&plan);
        let g = rerouting_graph(support.pairs(), c, c);
        let cycle = match g.min_mean_cycle() {
            Some((cyc, mean)) if mean < 0.0 && g.cycle_weight(&cyc) < -CYCLE_TOL => cyc,
            _ => break SolveStatus::Optimal,
        };
        if iterations >= CANCEL_CAP {
            break SolveStatus::Stalled;
        }
        let pairs = cycle.into_iter().map(|p| support.pairs()[p]).collect();
        let cert = CycleCertificate::from_pairs(pairs, c, c);
        plan = improve_plan(&plan, &cert, c)?;
        iterations += 1;
    };
    let value = plan_cost(&plan, c)?;
    Ok(SolveResult {
        plan: Some(plan),
        value,
        status,
        iterations,
    })
}
