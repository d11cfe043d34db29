//! Discretized counterexamples with machine-checked facts.
//!
//! Each generator returns a finite instance; [`run_gallery`] solves it and
//! evaluates the facts attached to that name. Facts that only hold in the
//! continuum are reported as trends over a sweep of grid sizes.

use std::collections::BTreeMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_feasible_potentials, evaluate_j, plan_cost, CostMatrix, DiscreteMeasure, Domain, PotentialPair, TransportPlan,
};
use crate::monotonicity::SupportSet;
use crate::potentials::{potentials_from_support, verify_strong_monotonicity};
use crate::solver::{solve_min_cost, SolveResult};

pub type Params = BTreeMap<String, String>;

/// Names accepted by [`gen_instance`] and [`run_gallery`].
pub const NAMES: [&str; 6] = [
    "zero_one_infty",
    "discrete_omega",
    "rotation",
    "quadratic_shift",
    "reciprocal",
    "no_optimizer",
];

const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub params: Params,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub c: CostMatrix,
}

/// Where a fact's expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Stated in the published example.
    Published,
    /// Computed independently (hand arithmetic, brute force, constructions).
    Derived,
    /// Immediate from the definitions.
    Trivial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `|observed - expected| <= tolerance`
    Equal,
    /// `observed <= expected + tolerance`
    AtMost,
    /// `observed >= expected - tolerance`
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub description: String,
    pub expected: f64,
    pub observed: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
    pub basis: Basis,
}

impl Fact {
    pub fn new(description: impl Into<String>, relation: Relation, expected: f64, observed: f64, tolerance: f64, basis: Basis) -> Self {
        let pass = match relation {
            Relation::Equal => (observed - expected).abs() <= tolerance || observed == expected,
            Relation::AtMost => observed <= expected + tolerance,
            Relation::AtLeast => observed >= expected - tolerance,
        };
        Fact {
            description: description.into(),
            expected,
            observed,
            relation,
            tolerance,
            pass,
            basis,
        }
    }

    fn check(description: impl Into<String>, holds: bool, basis: Basis) -> Self {
        Fact::new(description, Relation::Equal, 1.0, if holds { 1.0 } else { 0.0 }, 0.0, basis)
    }
}

/// A column of observations over a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub label: String,
    pub parameter: String,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactReport {
    pub name: String,
    pub params: Params,
    pub facts: Vec<Fact>,
    pub sweeps: Vec<Sweep>,
}

impl FactReport {
    pub fn all_pass(&self) -> bool {
        self.facts.iter().all(|f| f.pass)
    }
}

struct ParamReader<'a> {
    params: &'a Params,
    known: &'static [&'static str],
}

impl<'a> ParamReader<'a> {
    fn new(params: &'a Params, known: &'static [&'static str]) -> Result<Self> {
        if let Some(k) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::invalid(k.clone(), format!("unknown parameter; expected one of {known:?}")));
        }
        Ok(ParamReader { params, known })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(self.known.contains(&key));
        self.params.get(key).map(String::as_str)
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.trim().parse().map_err(|_| Error::invalid(key, format!("`{v}` is not a nonnegative integer"))),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.trim().parse().map_err(|_| Error::invalid(key, format!("`{v}` is not a number"))),
        }
    }

    fn list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::invalid(key, format!("`{v}` is not a list of integers"))))
                .collect(),
        }
    }

    fn str(&self, key: &str, default: &'static str) -> &str {
        self.raw(key).unwrap_or(default)
    }
}

fn grid_size(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::invalid("N", "must be at least 2"));
    }
    Ok(n)
}

fn with_name(name: &str, params: &Params, mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostMatrix) -> Instance {
    Instance {
        name: name.to_string(),
        params: params.clone(),
        mu,
        nu,
        c,
    }
}

/// `+inf` above the diagonal, 1 on it, 0 below.
fn triangular(n: usize) -> Result<CostMatrix> {
    CostMatrix::from_fn(n, n, |x, y| match x.cmp(&y) {
        std::cmp::Ordering::Less => f64::INFINITY,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => 0.0,
    })
}

fn zero_one_infty(n: usize) -> Result<(DiscreteMeasure, CostMatrix)> {
    Ok((DiscreteMeasure::uniform(grid_size(n)?)?, triangular(n)?))
}

fn discrete_omega(n: usize, r: f64) -> Result<(DiscreteMeasure, CostMatrix)> {
    let n = grid_size(n)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("r", "ratio must lie in (0, 1)"));
    }
    let mut labels: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
    labels.push("omega".into());
    let raw: Vec<f64> = (0..=n).map(|k| r.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    let mu = DiscreteMeasure::with_labels(labels, raw.iter().map(|w| w / total).collect())?;
    Ok((mu, triangular(n + 1)?))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn rotation(p: usize, q: usize) -> Result<(DiscreteMeasure, CostMatrix)> {
    if q < 2 {
        return Err(Error::invalid("q", "must be at least 2"));
    }
    if p == 0 || p >= q || gcd(p, q) != 1 {
        return Err(Error::invalid("p", "need 0 < p < q with gcd(p, q) = 1"));
    }
    let labels = (0..q).map(|k| format!("{k}/{q}")).collect();
    let mu = DiscreteMeasure::with_labels(labels, vec![1.0 / q as f64; q])?;
    let c = CostMatrix::from_fn(q, q, |x, y| {
        if x == y {
            if 2 * x <= q {
                0.0
            } else {
                2.0
            }
        } else if y == (x + p) % q {
            1.0
        } else {
            f64::INFINITY
        }
    })?;
    Ok((mu, c))
}

fn tail_weights(n: usize, tail: &str) -> Result<Vec<f64>> {
    match tail {
        "uniform" => Ok(vec![1.0 / n as f64; n]),
        "heavy" => {
            let raw: Vec<f64> = (0..n).map(|k| 1.0 / ((k + 1) as f64).powi(2)).collect();
            let total: f64 = raw.iter().sum();
            Ok(raw.into_iter().map(|w| w / total).collect())
        }
        other => Err(Error::invalid("tail", format!("`{other}` is not one of uniform, heavy"))),
    }
}

fn quadratic_shift(n: usize, tail: &str) -> Result<(DiscreteMeasure, DiscreteMeasure, CostMatrix)> {
    let n = grid_size(n)?;
    let w = tail_weights(n, tail)?;
    let xs: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    let mu = DiscreteMeasure::with_labels(xs.iter().map(|x| format!("{x}")).collect(), w.clone())?;
    let nu = DiscreteMeasure::with_labels(xs.iter().map(|x| format!("{}", x + 1.0)).collect(), w)?;
    let c = CostMatrix::from_fn(n, n, |i, j| (xs[i] - (xs[j] + 1.0)).powi(2))?;
    Ok((mu, nu, c))
}

fn reciprocal_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

fn reciprocal(n: usize) -> Result<(DiscreteMeasure, CostMatrix)> {
    let n = grid_size(n)?;
    let xs = reciprocal_grid(n);
    let mu = DiscreteMeasure::with_labels(xs.iter().map(|x| format!("{x}")).collect(), vec![1.0 / n as f64; n])?;
    let c = CostMatrix::from_fn(n, n, |i, j| (1.0 / xs[i] - 1.0 / xs[j] + 1.0).abs())?;
    Ok((mu, c))
}

fn no_optimizer(n: usize) -> Result<(DiscreteMeasure, CostMatrix)> {
    let n = grid_size(n)?;
    let h = 1.0 / n as f64;
    let c = CostMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            ((i as f64 - j as f64) * h).powi(2)
        }
    })?;
    Ok((DiscreteMeasure::uniform(n)?, c))
}

/// Builds the named instance. Parameters are strings keyed by name;
/// unknown keys are rejected.
pub fn gen_instance(name: &str, params: &Params) -> Result<Instance> {
    match name {
        "zero_one_infty" => {
            let p = ParamReader::new(params, &["N", "cutoff", "sweep"])?;
            let (mu, c) = zero_one_infty(p.usize("N", 100)?)?;
            Ok(with_name(name, params, mu.clone(), mu, c))
        }
        "discrete_omega" => {
            let p = ParamReader::new(params, &["N", "r", "sweep"])?;
            let (mu, c) = discrete_omega(p.usize("N", 50)?, p.f64("r", 0.5)?)?;
            Ok(with_name(name, params, mu.clone(), mu, c))
        }
        "rotation" => {
            let p = ParamReader::new(params, &["p", "q"])?;
            let (mu, c) = rotation(p.usize("p", 1)?, p.usize("q", 5)?)?;
            Ok(with_name(name, params, mu.clone(), mu, c))
        }
        "quadratic_shift" => {
            let p = ParamReader::new(params, &["N", "tail"])?;
            let (mu, nu, c) = quadratic_shift(p.usize("N", 200)?, p.str("tail", "uniform"))?;
            Ok(with_name(name, params, mu, nu, c))
        }
        "reciprocal" => {
            let p = ParamReader::new(params, &["N", "sweep"])?;
            let (mu, c) = reciprocal(p.usize("N", 100)?)?;
            Ok(with_name(name, params, mu.clone(), mu, c))
        }
        "no_optimizer" => {
            let p = ParamReader::new(params, &["N", "sweep"])?;
            let (mu, c) = no_optimizer(p.usize("N", 20)?)?;
            Ok(with_name(name, params, mu.clone(), mu, c))
        }
        other => Err(Error::UnknownInstance(other.to_string())),
    }
}

/// Generates, solves and checks the named example.
pub fn run_gallery(name: &str, params: &Params) -> Result<FactReport> {
    let inst = gen_instance(name, params)?;
    let (facts, sweeps) = match name {
        "zero_one_infty" => facts_zero_one_infty(&inst)?,
        "discrete_omega" => facts_discrete_omega(&inst)?,
        "rotation" => facts_rotation(&inst)?,
        "quadratic_shift" => facts_quadratic_shift(&inst)?,
        "reciprocal" => facts_reciprocal(&inst)?,
        "no_optimizer" => facts_no_optimizer(&inst)?,
        other => return Err(Error::UnknownInstance(other.to_string())),
    };
    Ok(FactReport {
        name: name.to_string(),
        params: params.clone(),
        facts,
        sweeps,
    })
}

type Facts = (Vec<Fact>, Vec<Sweep>);

fn solve(inst: &Instance) -> Result<(SolveResult, f64)> {
    let r = solve_min_cost(&inst.mu, &inst.nu, &inst.c)?;
    let value = r.value.value();
    Ok((r, value))
}

fn solver_potentials(inst: &Instance, r: &SolveResult) -> Result<PotentialPair> {
    potentials_from_support(&SupportSet::from_plan(r.optimal_plan()?), &inst.c)
}

/// Number of permutations with finite cost, or `None` above the brute-force size.
fn finite_permutations(c: &CostMatrix) -> Option<Vec<Vec<usize>>> {
    let n = c.rows();
    (n <= 6 && c.cols() == n).then(|| {
        (0..n)
            .permutations(n)
            .filter(|p| p.iter().enumerate().all(|(i, &j)| c.get(i, j).is_finite()))
            .collect()
    })
}

fn max_increase(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares line through `(x, y)`; returns intercept, slope and the
/// largest residual relative to `|y|`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rel = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| ((a + b * xi) - yi).abs() / yi.abs())
        .fold(0.0, f64::max);
    (a, b, rel)
}

fn sweep_values(points: &[usize], f: impl Fn(usize) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    points.par_iter().map(|&n| f(n)).collect()
}

fn facts_zero_one_infty(inst: &Instance) -> Result<Facts> {
    let p = ParamReader::new(&inst.params, &["N", "cutoff", "sweep"])?;
    let n = inst.c.rows();
    let cutoff = p.f64("cutoff", 10.0)?;
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::invalid("cutoff", "must be positive and finite"));
    }
    let sweep_n = p.list("sweep", &[20, 50, 100, 200])?;
    let mut facts = Vec::new();

    match finite_permutations(&inst.c) {
        Some(perms) => {
            let identity = perms.len() == 1 && perms[0].iter().enumerate().all(|(i, &j)| i == j);
            facts.push(Fact::check("only finite permutation plan is the identity (brute force)", identity, Basis::Derived));
        }
        None => {
            let finite_above = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| inst.c.get(i, j).is_finite()).count();
            facts.push(Fact::new(
                "finite entries above the diagonal (lower-triangular support forces the identity)",
                Relation::Equal,
                0.0,
                finite_above as f64,
                0.0,
                Basis::Derived,
            ));
        }
    }

    let (_, ic) = solve(inst)?;
    facts.push(Fact::new("I_c = 1", Relation::Equal, 1.0, ic, EXACT_TOL, Basis::Published));

    let capped = inst.c.truncated(cutoff);
    let capped_value = solve_min_cost(&inst.mu, &inst.nu, &capped)?.value.value();
    let bound = cutoff / n as f64;
    facts.push(Fact::new(
        format!("I_(c^{cutoff}) <= cutoff/N"),
        Relation::AtMost,
        bound,
        capped_value,
        1e-9,
        Basis::Derived,
    ));
    let shift: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let shift_plan = TransportPlan::from_permutation(&shift, inst.mu.weights())?;
    facts.push(Fact::new(
        "cyclic shift plan costs cutoff/N under the capped cost",
        Relation::Equal,
        cutoff / n as f64,
        plan_cost(&shift_plan, &capped)?.value(),
        1e-12,
        Basis::Derived,
    ));

    let values = sweep_values(&sweep_n, |m| {
        let (mu, c) = zero_one_infty(m)?;
        Ok(solve_min_cost(&mu, &mu, &c.truncated(cutoff))?.value.value())
    })?;
    facts.push(Fact::new(
        "I_(c^cutoff) is nonincreasing in N (trend toward the continuum value 0)",
        Relation::AtMost,
        0.0,
        max_increase(&values),
        1e-12,
        Basis::Derived,
    ));
    let last = *sweep_n.last().unwrap_or(&n);
    facts.push(Fact::new(
        "largest sweep grid: I_(c^cutoff) <= cutoff/N",
        Relation::AtMost,
        cutoff / last as f64,
        *values.last().unwrap_or(&0.0),
        1e-9,
        Basis::Derived,
    ));
    let sweeps = vec![Sweep {
        label: format!("I_(c^{cutoff})"),
        parameter: "N".into(),
        points: sweep_n.iter().map(|&m| m as f64).collect(),
        values,
    }];
    Ok((facts, sweeps))
}

fn potential_range(pp: &PotentialPair) -> f64 {
    let max = pp.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = pp.phi.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn facts_discrete_omega(inst: &Instance) -> Result<Facts> {
    let p = ParamReader::new(&inst.params, &["N", "r", "sweep"])?;
    let n = inst.c.rows() - 1;
    let r = p.f64("r", 0.5)?;
    let sweep_n = p.list("sweep", &[10, 20, 50])?;
    let mut facts = Vec::new();

    let (res, ic) = solve(inst)?;
    facts.push(Fact::new("I_c = 1", Relation::Equal, 1.0, ic, EXACT_TOL, Basis::Published));
    let pp = solver_potentials(inst, &res)?;
    let strong = verify_strong_monotonicity(res.optimal_plan()?, &inst.c, &pp)?;
    facts.push(Fact::check("dual potentials are feasible and tight on the diagonal", strong.feasible, Basis::Derived));
    facts.push(Fact::new(
        "max phi - min phi >= N",
        Relation::AtLeast,
        n as f64,
        potential_range(&pp),
        1e-6,
        Basis::Published,
    ));

    let ranges = sweep_values(&sweep_n, |m| {
        let (mu, c) = discrete_omega(m, r)?;
        let res = solve_min_cost(&mu, &mu, &c)?;
        Ok(potential_range(&potentials_from_support(&SupportSet::from_plan(res.optimal_plan()?), &c)?))
    })?;
    let below = sweep_n.iter().zip(&ranges).map(|(&m, &v)| m as f64 - v).fold(f64::NEG_INFINITY, f64::max);
    facts.push(Fact::new("range >= N across the sweep", Relation::AtMost, 0.0, below, 1e-6, Basis::Published));
    if sweep_n.len() >= 2 {
        let xs: Vec<f64> = sweep_n.iter().map(|&m| m as f64).collect();
        let (_, slope, _) = linear_fit(&xs, &ranges);
        facts.push(Fact::new("range grows linearly in N (fitted slope)", Relation::AtLeast, 1.0, slope, 1e-6, Basis::Derived));
    }
    let sweeps = vec![Sweep {
        label: "max phi - min phi".into(),
        parameter: "N".into(),
        points: sweep_n.iter().map(|&m| m as f64).collect(),
        values: ranges,
    }];
    Ok((facts, sweeps))
}

/// Replays `psi(x + p/q) = psi(x) +- 1` along the orbit of 0, returning the
/// partial sums (starting at 0).
fn drift_replay(p: usize, q: usize) -> Vec<f64> {
    let mut psi = vec![0.0];
    let mut x = 0;
    for _ in 0..q {
        let step = if 2 * x <= q { 1.0 } else { -1.0 };
        psi.push(psi.last().unwrap() + step);
        x = (x + p) % q;
    }
    psi
}

fn facts_rotation(inst: &Instance) -> Result<Facts> {
    let p = ParamReader::new(&inst.params, &["p", "q"])?;
    let (step, q) = (p.usize("p", 1)?, inst.c.rows());
    let c = &inst.c;
    let mut facts = Vec::new();

    let ones = c.data().iter().filter(|&&v| v == 1.0).count();
    let diag_ok = (0..q).all(|x| c.get(x, x) == 0.0 || c.get(x, x) == 2.0);
    facts.push(Fact::new("entries equal to 1 (the shifted graph)", Relation::Equal, q as f64, ones as f64, 0.0, Basis::Trivial));
    facts.push(Fact::check("diagonal entries lie in {0, 2}", diag_ok, Basis::Trivial));

    let on_graphs = |x: usize, y: usize| y == x || y == (x + step) % q;
    let (res, ic) = solve(inst)?;
    match finite_permutations(c) {
        Some(perms) => {
            let ok = perms.len() == 2 && perms.iter().all(|p| p.iter().enumerate().all(|(x, &y)| on_graphs(x, y)));
            facts.push(Fact::check(
                "finite permutation plans are exactly the diagonal and the shift (brute force)",
                ok,
                Basis::Derived,
            ));
        }
        None => {
            let plan = res.optimal_plan()?;
            let ok = plan.triplets().iter().all(|&(x, y, _)| on_graphs(x, y));
            facts.push(Fact::check("solver plan is supported on the two graphs", ok, Basis::Derived));
        }
    }

    let w = inst.mu.weights();
    let pi0 = TransportPlan::from_permutation(&(0..q).collect::<Vec<_>>(), w)?;
    let pi1 = TransportPlan::from_permutation(&(0..q).map(|x| (x + step) % q).collect::<Vec<_>>(), w)?;
    let i0 = plan_cost(&pi0, c)?.value();
    let i1 = plan_cost(&pi1, c)?.value();
    facts.push(Fact::new("I[pi_1] = 1", Relation::Equal, 1.0, i1, EXACT_TOL, Basis::Published));
    let high = (0..q).filter(|&x| 2 * x > q).count();
    facts.push(Fact::new(
        "I[pi_0] = 2 * share of grid points in (1/2, 1)",
        Relation::Equal,
        2.0 * high as f64 / q as f64,
        i0,
        EXACT_TOL,
        Basis::Derived,
    ));
    facts.push(Fact::new("I_c = min(I[pi_0], I[pi_1])", Relation::Equal, i0.min(i1), ic, 1e-9, Basis::Derived));

    let psi = drift_replay(step, q);
    let closing = *psi.last().unwrap();
    let max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = psi.iter().copied().fold(f64::INFINITY, f64::min);
    facts.push(Fact::new(
        "recursion drift over one orbit = q (1 - I[pi_0])",
        Relation::Equal,
        q as f64 * (1.0 - i0),
        closing,
        1e-9,
        Basis::Derived,
    ));
    facts.push(Fact::new(
        "oscillation of the replayed psi (max - min) covers the closing drift",
        Relation::AtLeast,
        closing.abs(),
        max - min,
        0.0,
        Basis::Derived,
    ));
    let sweeps = vec![Sweep {
        label: "replayed psi along the orbit".into(),
        parameter: "step".into(),
        points: (0..psi.len()).map(|k| k as f64).collect(),
        values: psi,
    }];
    Ok((facts, sweeps))
}

fn facts_quadratic_shift(inst: &Instance) -> Result<Facts> {
    let n = inst.c.rows();
    let h = 1.0 / n as f64;
    let xs: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
    let mut facts = Vec::new();

    facts.push(Fact::check(
        "nu carries the weights of mu, shifted by 1",
        inst.mu.weights() == inst.nu.weights(),
        Basis::Trivial,
    ));
    let graph = TransportPlan::from_permutation(&(0..n).collect::<Vec<_>>(), inst.mu.weights())?;
    let witness = PotentialPair::new(xs.iter().map(|x| -2.0 * x).collect(), ys.iter().map(|y| 2.0 * y - 1.0).collect())?;
    let strong = verify_strong_monotonicity(&graph, &inst.c, &witness)?;
    facts.push(Fact::check("(-2x, 2y - 1) is feasible and tight on the graph", strong.feasible, Basis::Published));

    let (res, ic) = solve(inst)?;
    facts.push(Fact::new("I_c = 1", Relation::Equal, 1.0, ic, 1e-9, Basis::Derived));
    let pp = solver_potentials(inst, &res)?;
    let beta = pp.phi[0] - witness.phi[0];
    let err_phi = pp.phi.iter().zip(&witness.phi).map(|(a, b)| (a - beta - b).abs()).fold(0.0, f64::max);
    let err_psi = pp.psi.iter().zip(&witness.psi).map(|(a, b)| (a + beta - b).abs()).fold(0.0, f64::max);
    facts.push(Fact::new(
        "solver duals match (-2x, 2y - 1) up to one constant, sup norm <= 5h",
        Relation::AtMost,
        5.0 * h,
        err_phi.max(err_psi),
        0.0,
        Basis::Published,
    ));
    Ok((facts, Vec::new()))
}

/// `sum mu |1/x|` on the `N`-point grid, which is the harmonic number `H_N`.
fn reciprocal_mass(n: usize) -> f64 {
    reciprocal_grid(n).iter().map(|x| (1.0 / x).abs() / n as f64).sum()
}

fn facts_reciprocal(inst: &Instance) -> Result<Facts> {
    let p = ParamReader::new(&inst.params, &["N", "sweep"])?;
    let n = inst.c.rows();
    let sweep_n = p.list("sweep", &[100, 1000, 10_000])?;
    let xs = reciprocal_grid(n);
    let mut facts = Vec::new();

    let analytic = PotentialPair::new(xs.iter().map(|x| 1.0 / x).collect(), xs.iter().map(|y| 1.0 - 1.0 / y).collect())?;
    let feas = check_feasible_potentials(&analytic, &inst.c, Domain::Everywhere)?;
    facts.push(Fact::check("(1/x, 1 - 1/y) is feasible everywhere", feas.feasible, Basis::Published));
    let diag = TransportPlan::from_permutation(&(0..n).collect::<Vec<_>>(), inst.mu.weights())?;
    let j = evaluate_j(&analytic, &diag)?.value();
    facts.push(Fact::new("J(1/x, 1 - 1/y) = 1", Relation::Equal, 1.0, j, EXACT_TOL, Basis::Published));
    let (_, ic) = solve(inst)?;
    facts.push(Fact::new("I_c = 1", Relation::Equal, 1.0, ic, EXACT_TOL, Basis::Published));

    let masses: Vec<f64> = sweep_n.par_iter().map(|&m| reciprocal_mass(m)).collect();
    if sweep_n.len() >= 2 {
        let logs: Vec<f64> = sweep_n.iter().map(|&m| (m as f64).ln()).collect();
        let (_, slope, rel) = linear_fit(&logs, &masses);
        facts.push(Fact::new(
            "sum mu |phi| fits a + b ln N (largest relative residual)",
            Relation::AtMost,
            0.05,
            rel,
            0.0,
            Basis::Derived,
        ));
        facts.push(Fact::new("fitted growth rate b > 0 (not integrable in the limit)", Relation::AtLeast, 0.5, slope, 0.0, Basis::Derived));
    }
    let sweeps = vec![Sweep {
        label: "sum mu |phi|".into(),
        parameter: "N".into(),
        points: sweep_n.iter().map(|&m| m as f64).collect(),
        values: masses,
    }];
    Ok((facts, sweeps))
}

/// Neighbor swaps `(0 1)(2 3)...`, closing with a 3-cycle when `n` is odd.
fn swap_permutation(n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let pairs_end = if n.is_multiple_of(2) { n } else { n - 3 };
    for k in (0..pairs_end).step_by(2) {
        perm.swap(k, k + 1);
    }
    if n % 2 == 1 {
        perm[n - 3] = n - 2;
        perm[n - 2] = n - 1;
        perm[n - 1] = n - 3;
    }
    perm
}

fn facts_no_optimizer(inst: &Instance) -> Result<Facts> {
    let p = ParamReader::new(&inst.params, &["N", "sweep"])?;
    let n = inst.c.rows();
    let sweep_n = p.list("sweep", &[10, 20, 40, 80])?;
    let mut facts = Vec::new();

    let swap = TransportPlan::from_permutation(&swap_permutation(n), inst.mu.weights())?;
    let swap_cost = plan_cost(&swap, &inst.c)?.value();
    facts.push(Fact::new("neighbor-swap plan costs at most 1/N", Relation::AtMost, 1.0 / n as f64, swap_cost, 1e-12, Basis::Derived));
    let (res, ic) = solve(inst)?;
    facts.push(Fact::new("I_c <= 1/N", Relation::AtMost, 1.0 / n as f64, ic, 1e-12, Basis::Derived));
    facts.push(Fact::new("I_c > 0 (every entry is positive)", Relation::AtLeast, f64::MIN_POSITIVE, ic, 0.0, Basis::Derived));
    let zero = PotentialPair::zeros(n, n);
    let feas = check_feasible_potentials(&zero, &inst.c, Domain::Everywhere)?;
    let j = evaluate_j(&zero, res.optimal_plan()?)?.value();
    facts.push(Fact::check("zero potentials are feasible", feas.feasible, Basis::Published));
    facts.push(Fact::new("J(0, 0) = 0", Relation::Equal, 0.0, j, 0.0, Basis::Published));

    let values = sweep_values(&sweep_n, |m| {
        let (mu, c) = no_optimizer(m)?;
        Ok(solve_min_cost(&mu, &mu, &c)?.value.value())
    })?;
    facts.push(Fact::new(
        "gap I_c - J(0, 0) is nonincreasing in N (trend toward 0)",
        Relation::AtMost,
        0.0,
        max_increase(&values),
        1e-12,
        Basis::Derived,
    ));
    let sweeps = vec![Sweep {
        label: "I_c - J(0, 0)".into(),
        parameter: "N".into(),
        points: sweep_n.iter().map(|&m| m as f64).collect(),
        values,
    }];
    Ok((facts, sweeps))
}
