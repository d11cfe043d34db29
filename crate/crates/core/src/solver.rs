//! Exact primal solver for the finite transportation problem.
//!
//! Successive shortest paths with node potentials on the bipartite network
//! `X -> Y`. Flows are real-valued; `+inf` cells are absent edges. Each
//! round runs a dense Dijkstra on reduced costs from every source with
//! remaining supply and augments along the path to the nearest sink with
//! remaining demand (lowest index on ties).

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{weighted, ExtReal};
use crate::model::{plan_cost, CostMatrix, DiscreteMeasure, TransportPlan};
use crate::{mass_eps, MARGINAL_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Iteration cap reached by the cycle-canceling solver.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub plan: Option<TransportPlan>,
    pub value: ExtReal,
    pub status: SolveStatus,
    /// Augmentations (flow solver) or cancellations (cycle canceling).
    pub iterations: usize,
}

impl SolveResult {
    pub(crate) fn infeasible() -> Self {
        SolveResult {
            plan: None,
            value: ExtReal::INFINITY,
            status: SolveStatus::Infeasible,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// The optimal plan, or an error for infeasible/stalled results.
    pub fn optimal_plan(&self) -> Result<&TransportPlan> {
        match (&self.plan, self.status) {
            (Some(p), SolveStatus::Optimal) => Ok(p),
            _ => Err(Error::Unsupported(format!("no optimal plan (status {:?})", self.status))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cutoffs: Vec<f64>,
    pub values: Vec<ExtReal>,
}

/// Minimum of `sum pi c` over couplings of `(mu, nu)`.
pub fn solve_min_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<SolveResult> {
    c.check_measures(mu, nu)?;
    if c.data().contains(&f64::NEG_INFINITY) {
        return Err(Error::invalid("cost", "-inf entries make the problem unbounded"));
    }
    let mut net = Network::new(mu, nu, c);
    let iterations = match net.run()? {
        Some(k) => k,
        None => return Ok(SolveResult::infeasible()),
    };
    let plan = net.into_plan();
    let value = plan_cost(&plan, c)?;
    Ok(SolveResult {
        plan: Some(plan),
        value,
        status: SolveStatus::Optimal,
        iterations,
    })
}

/// Optimal values for the truncated costs `min(c, n)` at each cutoff `n`.
///
/// Cutoffs are solved independently (in parallel on the current rayon
/// pool); the output order follows the input order.
pub fn truncation_sweep(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    cutoffs: &[f64],
) -> Result<SweepResult> {
    c.check_measures(mu, nu)?;
    if cutoffs.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(Error::invalid("cutoffs", "must be positive and finite"));
    }
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("cutoffs", "must be strictly increasing"));
    }
    let values = cutoffs
        .par_iter()
        .map(|&n| solve_min_cost(mu, nu, &c.truncated(n)).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        cutoffs: cutoffs.to_vec(),
        values,
    })
}

/// Largest size accepted by [`brute_force_value`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Minimum cost over all permutation plans; for uniform square problems
/// these are exactly the vertices of the transport polytope.
pub fn brute_force_value(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<ExtReal> {
    c.check_measures(mu, nu)?;
    let n = mu.len();
    if nu.len() != n || n > BRUTE_FORCE_MAX || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Unsupported(format!(
            "brute force needs uniform square problems with at most {BRUTE_FORCE_MAX} points"
        )));
    }
    let w = 1.0 / n as f64;
    let mut best = f64::INFINITY;
    for perm in (0..n).permutations(n) {
        let v: f64 = perm.iter().enumerate().map(|(i, &j)| weighted(w, c.get(i, j))).sum();
        best = best.min(v);
    }
    Ok(ExtReal::from_f64(best))
}

/// Residual network state for successive shortest paths.
struct Network<'a> {
    c: &'a CostMatrix,
    n: usize,
    m: usize,
    supply: Vec<f64>,
    demand: Vec<f64>,
    flow: Vec<f64>,
    pot_x: Vec<f64>,
    pot_y: Vec<f64>,
    eps: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Node {
    X(usize),
    Y(usize),
}

impl<'a> Network<'a> {
    fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &'a CostMatrix) -> Self {
        let (n, m) = (mu.len(), nu.len());
        // initial potentials: pot_y(j) = min_i c(i, j) keeps reduced costs >= 0
        let pot_y = (0..m)
            .map(|j| {
                let v = (0..n).map(|i| c.get(i, j)).fold(f64::INFINITY, f64::min);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        let min_weight = mu.weights().iter().chain(nu.weights()).copied().fold(f64::INFINITY, f64::min);
        Network {
            eps: mass_eps(min_weight),
            c,
            n,
            m,
            supply: mu.weights().to_vec(),
            demand: nu.weights().to_vec(),
            flow: vec![0.0; n * m],
            pot_x: vec![0.0; n],
            pot_y,
        }
    }

    /// Returns the number of augmentations, or `None` when the finite
    /// edges cannot carry all the mass.
    fn run(&mut self) -> Result<Option<usize>> {
        let cap = 4 * (self.n + self.m + 1) * (self.n * self.m + 1);
        let mut rounds = 0;
        loop {
            let remaining: f64 = self.supply.iter().filter(|&&s| s > self.eps).sum();
            if remaining <= self.eps {
                return Ok(Some(rounds));
            }
            if !self.augment() {
                return Ok(if remaining > MARGINAL_TOL { None } else { Some(rounds) });
            }
            rounds += 1;
            if rounds > cap {
                return Err(Error::Internal("successive shortest paths did not terminate".into()));
            }
        }
    }

    fn augment(&mut self) -> bool {
        let (n, m) = (self.n, self.m);
        let inf = f64::INFINITY;
        let mut dist_x = vec![inf; n];
        let mut dist_y = vec![inf; m];
        let mut done_x = vec![false; n];
        let mut done_y = vec![false; m];
        let mut prev_x = vec![usize::MAX; n]; // y that reached x via a reverse arc
        let mut prev_y = vec![usize::MAX; m]; // x that reached y
        for i in 0..n {
            if self.supply[i] > self.eps {
                dist_x[i] = 0.0;
            }
        }
        loop {
            let mut best: Option<(Node, f64)> = None;
            for (i, &d) in dist_x.iter().enumerate() {
                if !done_x[i] && d < best.map_or(inf, |b| b.1) {
                    best = Some((Node::X(i), d));
                }
            }
            for (j, &d) in dist_y.iter().enumerate() {
                if !done_y[j] && d < best.map_or(inf, |b| b.1) {
                    best = Some((Node::Y(j), d));
                }
            }
            let Some((node, d)) = best else { break };
            match node {
                Node::X(i) => {
                    done_x[i] = true;
                    for j in 0..m {
                        let cij = self.c.get(i, j);
                        if done_y[j] || cij == inf {
                            continue;
                        }
                        let nd = d + (cij + self.pot_x[i] - self.pot_y[j]).max(0.0);
                        if nd < dist_y[j] {
                            dist_y[j] = nd;
                            prev_y[j] = i;
                        }
                    }
                }
                Node::Y(j) => {
                    done_y[j] = true;
                    for i in 0..n {
                        if done_x[i] || self.flow[i * m + j] <= self.eps {
                            continue;
                        }
                        let nd = d + (self.pot_y[j] - self.c.get(i, j) - self.pot_x[i]).max(0.0);
                        if nd < dist_x[i] {
                            dist_x[i] = nd;
                            prev_x[i] = j;
                        }
                    }
                }
            }
        }
        let mut target: Option<usize> = None;
        for j in 0..m {
            if self.demand[j] > self.eps && dist_y[j] < target.map_or(inf, |t| dist_y[t]) {
                target = Some(j);
            }
        }
        let Some(t) = target else { return false };
        let reach = dist_y[t];
        for i in 0..n {
            self.pot_x[i] += dist_x[i].min(reach);
        }
        for j in 0..m {
            self.pot_y[j] += dist_y[j].min(reach);
        }

        // walk back from the sink side to a source with supply
        let mut path = Vec::new(); // forward arcs (i, j) and reverse arcs flagged
        let mut delta = self.demand[t];
        let mut j = t;
        let source = loop {
            let i = prev_y[j];
            path.push((i, j, true));
            if prev_x[i] == usize::MAX {
                break i;
            }
            let j_prev = prev_x[i];
            path.push((i, j_prev, false));
            delta = delta.min(self.flow[i * m + j_prev]);
            j = j_prev;
        };
        delta = delta.min(self.supply[source]);
        for &(i, j, forward) in &path {
            let f = &mut self.flow[i * m + j];
            if forward {
                *f += delta;
            } else {
                *f = if *f - delta <= self.eps { 0.0 } else { *f - delta };
            }
        }
        self.supply[source] -= delta;
        self.demand[t] -= delta;
        true
    }

    fn into_plan(self) -> TransportPlan {
        let eps = self.eps;
        let mass = self.flow.into_iter().map(|f| if f <= eps { 0.0 } else { f }).collect();
        TransportPlan::new(self.n, self.m, mass).expect("flow matrix has plan shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_marginals;

    const INF: f64 = f64::INFINITY;

    fn fix_a() -> CostMatrix {
        CostMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn fix_b() -> CostMatrix {
        CostMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn triangular(n: usize) -> CostMatrix {
        CostMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => INF,
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => 0.0,
        })
        .unwrap()
    }

    #[test]
    fn solve_fixtures() {
        let u2 = DiscreteMeasure::uniform(2).unwrap();
        let r = solve_min_cost(&u2, &u2, &fix_a()).unwrap();
        assert_eq!(r.value.value(), 0.0);
        assert_eq!(r.plan.unwrap().to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);

        let u3 = DiscreteMeasure::uniform(3).unwrap();
        let r = solve_min_cost(&u3, &u3, &triangular(3)).unwrap();
        assert!((r.value.value() - 1.0).abs() < 1e-15);
        assert_eq!(r.plan.unwrap().support(0.0), vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn all_infinite_column_is_infeasible() {
        let u2 = DiscreteMeasure::uniform(2).unwrap();
        let c = CostMatrix::from_rows(vec![vec![0.0, INF], vec![1.0, INF]]).unwrap();
        let r = solve_min_cost(&u2, &u2, &c).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.plan.is_none());
        assert!(r.value.is_pos_inf());
    }

    #[test]
    fn rejects_bad_input() {
        let u2 = DiscreteMeasure::uniform(2).unwrap();
        let u3 = DiscreteMeasure::uniform(3).unwrap();
        assert!(solve_min_cost(&u2, &u3, &fix_a()).is_err());
        let c = CostMatrix::from_rows(vec![vec![f64::NEG_INFINITY, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(solve_min_cost(&u2, &u2, &c).is_err());
    }

    #[test]
    fn unequal_weights() {
        let mu = DiscreteMeasure::new(vec![0.7, 0.3]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let c = CostMatrix::from_rows(vec![vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0]]).unwrap();
        let r = solve_min_cost(&mu, &nu, &c).unwrap();
        let plan = r.plan.unwrap();
        assert!(check_marginals(&plan, &mu, &nu).feasible);
        // 0.2 at cost 0, 0.5 at cost 1, 0.3 at cost 0
        assert!((r.value.value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_examples() {
        let u2 = DiscreteMeasure::uniform(2).unwrap();
        let s = truncation_sweep(&u2, &u2, &fix_a(), &[1.0, 10.0]).unwrap();
        assert_eq!(s.values, vec![ExtReal::ZERO, ExtReal::ZERO]);

        let u3 = DiscreteMeasure::uniform(3).unwrap();
        let s = truncation_sweep(&u3, &u3, &triangular(3), &[1.0]).unwrap();
        assert!((s.values[0].value() - 1.0 / 3.0).abs() < 1e-12);

        assert!(truncation_sweep(&u2, &u2, &fix_a(), &[2.0, 1.0]).is_err());
        assert!(truncation_sweep(&u2, &u2, &fix_a(), &[0.0]).is_err());
    }

    #[test]
    fn brute_force_fixtures() {
        let u2 = DiscreteMeasure::uniform(2).unwrap();
        assert_eq!(brute_force_value(&u2, &u2, &fix_a()).unwrap().value(), 0.0);
        assert_eq!(brute_force_value(&u2, &u2, &fix_b()).unwrap().value(), 0.0);
        let u3 = DiscreteMeasure::uniform(3).unwrap();
        assert!((brute_force_value(&u3, &u3, &triangular(3)).unwrap().value() - 1.0).abs() < 1e-15);
        let u9 = DiscreteMeasure::uniform(9).unwrap();
        let c9 = CostMatrix::from_fn(9, 9, |_, _| 0.0).unwrap();
        assert!(brute_force_value(&u9, &u9, &c9).is_err());
        let mu = DiscreteMeasure::new(vec![0.25, 0.75]).unwrap();
        assert!(brute_force_value(&mu, &mu, &fix_a()).is_err());
    }
}
