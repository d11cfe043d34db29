//! Constructive duality on finite spaces.
//!
//! The central object is the sandwich digraph on `X`: the edge `x -> x'`
//! weighs `min_y upper(x', y) - lower(x, y)`, so its cycles are exactly the
//! chain sums `sum_i upper(x_{i+1}, y_i) - lower(x_i, y_i)`. When no cycle is
//! negative, shortest distances from a virtual source solve the difference
//! constraints `phi(x') <= phi(x) + upper(x', y) - lower(x, y)`, and
//! `psi(y) = min_x upper(x, y) - phi(x)` completes a pair with
//! `lower <= phi + psi <= upper`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{ext_sub, ExtReal};
use crate::graph::Digraph;
use crate::model::{check_feasible_potentials, CostMatrix, Domain, FeasibilityVerdict, PotentialPair, TransportPlan, Violation};
use crate::monotonicity::{CycleCertificate, CycleVerdict, SupportSet};
use crate::{FEAS_TOL, CYCLE_TOL, STRONG_TOL};

/// Upper grid with entries in `(-inf, +inf]` and lower grid with entries in
/// `[-inf, +inf)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichInput {
    pub upper: CostMatrix,
    pub lower: CostMatrix,
}

impl SandwichInput {
    pub fn new(upper: CostMatrix, lower: CostMatrix) -> Result<Self> {
        upper.check_same_shape(&lower)?;
        Ok(SandwichInput { upper, lower })
    }

    fn check_ranges(&self) -> Result<()> {
        if self.upper.data().contains(&f64::NEG_INFINITY) {
            return Err(Error::invalid("upper", "entries must lie in (-inf, +inf]"));
        }
        if self.lower.data().contains(&f64::INFINITY) {
            return Err(Error::invalid("lower", "entries must lie in [-inf, +inf)"));
        }
        Ok(())
    }
}

/// A violated rectangle: `d(x, y) + d(x2, y2) - d(x, y2) - d(x2, y) = residual != 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleCertificate {
    pub x: usize,
    pub y: usize,
    pub x2: usize,
    pub y2: usize,
    pub residual: f64,
}

impl RectangleCertificate {
    pub fn recompute(&self, d: &CostMatrix) -> f64 {
        d.get(self.x, self.y) + d.get(self.x2, self.y2) - d.get(self.x, self.y2) - d.get(self.x2, self.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decomposition {
    Exact(PotentialPair),
    Rectangle(RectangleCertificate),
}

struct SandwichGraph {
    graph: Digraph,
    /// column realizing the minimum for each edge, row-major over (x, x')
    argmin: Vec<usize>,
}

fn sandwich_graph(s: &SandwichInput) -> SandwichGraph {
    let (n, m) = (s.upper.rows(), s.upper.cols());
    let mut w = vec![f64::INFINITY; n * n];
    let mut argmin = vec![0; n * n];
    for x in 0..n {
        for xp in 0..n {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for y in 0..m {
                let v = ext_sub(s.upper.get(xp, y), s.lower.get(x, y));
                if v < best {
                    best = v;
                    arg = y;
                }
            }
            w[x * n + xp] = best;
            argmin[x * n + xp] = arg;
        }
    }
    SandwichGraph {
        graph: Digraph::from_fn(n, true, |u, v| w[u * n + v]),
        argmin,
    }
}

/// Cycle condition between an upper and a lower grid: every chain sum
/// `sum_i upper(x_{i+1}, y_i) - lower(x_i, y_i)` is at least `-1e-9`.
/// Violations expand to explicit `(x_i, y_i)` pairs.
pub fn check_w3(s: &SandwichInput) -> CycleVerdict {
    let sg = sandwich_graph(s);
    w3_verdict(s, &sg)
}

fn w3_verdict(s: &SandwichInput, sg: &SandwichGraph) -> CycleVerdict {
    let n = s.upper.rows();
    match sg.graph.find_negative_cycle(CYCLE_TOL) {
        None => CycleVerdict::Holds,
        Some(cyc) => {
            let k = cyc.len();
            let pairs = (0..k)
                .map(|i| {
                    let (x, xn) = (cyc[i], cyc[(i + 1) % k]);
                    (x, sg.argmin[x * n + xn])
                })
                .collect();
            CycleVerdict::Violated(CycleCertificate::from_pairs(pairs, &s.upper, &s.lower))
        }
    }
}

/// Potentials with `lower <= phi + psi <= upper`, or the violated cycle.
///
/// `phi` is the super-source shortest-path solution, so `phi <= 0`.
/// Columns where `upper` is identically `+inf` get the smallest `psi`
/// meeting the lower bound (or `-inf` when `lower` is `-inf` there too).
pub fn sandwich_potentials(s: &SandwichInput) -> Result<PotentialPair> {
    s.check_ranges()?;
    let sg = sandwich_graph(s);
    if let CycleVerdict::Violated(cert) = w3_verdict(s, &sg) {
        return Err(Error::CycleViolation(cert));
    }
    let (n, m) = (s.upper.rows(), s.upper.cols());
    let phi = sg.graph.super_source_distances();
    let mut psi = Vec::with_capacity(m);
    for y in 0..m {
        let from_upper = (0..n).map(|x| ext_sub(s.upper.get(x, y), phi[x])).fold(f64::INFINITY, f64::min);
        if from_upper < f64::INFINITY {
            psi.push(from_upper);
        } else {
            psi.push((0..n).map(|x| ext_sub(s.lower.get(x, y), phi[x])).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    let pp = PotentialPair::new(phi, psi)?;
    let worst = sandwich_violation(s, &pp);
    if worst > FEAS_TOL {
        return Err(Error::Internal(format!("sandwich bounds violated by {worst:e}")));
    }
    Ok(pp)
}

/// Largest amount by which `pp` breaks either bound (0 when it satisfies both).
pub fn sandwich_violation(s: &SandwichInput, pp: &PotentialPair) -> f64 {
    let mut worst: f64 = 0.0;
    for x in 0..s.upper.rows() {
        for y in 0..s.upper.cols() {
            let v = pp.sum_at(x, y);
            if v == f64::NEG_INFINITY {
                if s.lower.get(x, y) > f64::NEG_INFINITY {
                    worst = f64::INFINITY;
                }
                continue;
            }
            worst = worst.max(-ext_sub(s.upper.get(x, y), v));
            worst = worst.max(-ext_sub(v, s.lower.get(x, y)));
        }
    }
    worst
}

/// Lower grid equal to `c` on the support and `-inf` elsewhere.
pub fn support_lower_bound(support: &SupportSet, c: &CostMatrix) -> Result<CostMatrix> {
    let mut lower = vec![f64::NEG_INFINITY; c.rows() * c.cols()];
    for &(x, y) in support.pairs() {
        if x >= c.rows() || y >= c.cols() {
            return Err(Error::DimensionMismatch(format!("support pair ({x}, {y}) out of range")));
        }
        let v = c.get(x, y);
        if v == f64::INFINITY {
            return Err(Error::InfiniteOnSupport(x, y));
        }
        lower[x * c.cols() + y] = v;
    }
    CostMatrix::new(c.rows(), c.cols(), lower)
}

/// Potentials below `c` everywhere and equal to `c` on the support: the
/// strong monotonicity witness of a cyclically monotone support.
pub fn potentials_from_support(support: &SupportSet, c: &CostMatrix) -> Result<PotentialPair> {
    if c.data().contains(&f64::NEG_INFINITY) {
        return Err(Error::invalid("cost", "entries must lie in (-inf, +inf]"));
    }
    let lower = support_lower_bound(support, c)?;
    sandwich_potentials(&SandwichInput::new(c.clone(), lower)?)
}

/// Writes a finite grid as `phi(x) + psi(y)` anchored at `phi(x_1) = 0`,
/// or returns a rectangle on which it fails.
pub fn decompose_exact(d: &CostMatrix) -> Result<Decomposition> {
    if let Some(k) = d.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid("d", format!("infinite entry at ({}, {})", k / d.cols(), k % d.cols())));
    }
    let (n, m) = (d.rows(), d.cols());
    if n == 0 || m == 0 {
        return Ok(Decomposition::Exact(PotentialPair::zeros(n, m)));
    }
    let psi: Vec<f64> = (0..m).map(|y| d.get(0, y)).collect();
    let phi: Vec<f64> = (0..n).map(|x| d.get(x, 0) - psi[0]).collect();
    for x in 0..n {
        for y in 0..m {
            if (phi[x] + psi[y] - d.get(x, y)).abs() > FEAS_TOL {
                let mut cert = RectangleCertificate {
                    x: 0,
                    y: 0,
                    x2: x,
                    y2: y,
                    residual: 0.0,
                };
                cert.residual = cert.recompute(d);
                return Ok(Decomposition::Rectangle(cert));
            }
        }
    }
    Ok(Decomposition::Exact(PotentialPair::new(phi, psi)?))
}

/// `pp` lies below `c` everywhere and meets it (within `1e-8`) on every
/// cell carrying mass.
pub fn verify_strong_monotonicity(pi: &TransportPlan, c: &CostMatrix, pp: &PotentialPair) -> Result<FeasibilityVerdict> {
    let mut verdict = check_feasible_potentials(pp, c, Domain::Everywhere)?;
    for x in 0..pi.rows() {
        for y in 0..pi.cols() {
            if pi.get(x, y) <= 0.0 {
                continue;
            }
            let gap = ext_sub(c.get(x, y), pp.sum_at(x, y));
            if gap.abs() > STRONG_TOL && !verdict.violations.iter().any(|v| v.x == Some(x) && v.y == Some(y)) {
                verdict.violations.push(Violation {
                    x: Some(x),
                    y: Some(y),
                    slack: ExtReal::from_f64(-gap.abs()),
                });
            }
        }
    }
    Ok(FeasibilityVerdict::from_violations(verdict.violations))
}
