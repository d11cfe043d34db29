//! Measures, cost grids, plans, potential pairs and the primal/dual functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{ext_add, ext_sub, weighted, ExtReal};
use crate::{FEAS_TOL, MARGINAL_TOL, NORM_TOL};

/// A finite probability measure with strictly positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| i.to_string()).collect();
        Self::with_labels(labels, weights)
    }

    pub fn with_labels(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure has no points".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("weight {i} is {w}, expected a positive finite value")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasure { labels, weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMeasure("measure has no points".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Normalizes positive weights to total mass one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("cannot normalize total mass {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= NORM_TOL)
    }
}

/// Offsets subtracted from a cost grid by [`shift_cost`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Dense extended-real grid over `X x Y`.
///
/// Houses primal costs (entries in `[0, +inf]`) as well as the signed grids
/// the crate derives from them (bounds, subsidies, shifted costs). NaN is
/// rejected at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    shift: Option<Shift>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| v.is_nan()) {
            return Err(Error::invalid("cost", format!("NaN at ({}, {})", k / cols.max(1), k % cols.max(1))));
        }
        Ok(CostMatrix {
            rows,
            cols,
            data,
            shift: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {m}", rows[i].len())));
        }
        Self::new(n, m, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn ext(&self, i: usize, j: usize) -> ExtReal {
        ExtReal::from_f64(self.get(i, j))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_shifted(&self) -> bool {
        self.shift.is_some()
    }

    pub fn shift(&self) -> Option<&Shift> {
        self.shift.as_ref()
    }

    /// Entries all lie in `[0, +inf]`.
    pub fn is_primal(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn max_finite_abs(&self) -> f64 {
        self.data.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entrywise `min(c, level)`.
    pub fn truncated(&self, level: f64) -> CostMatrix {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v.min(level)).collect(),
            shift: None,
        }
    }

    /// Entrywise `self - other` under the extended-real convention.
    pub fn ext_minus(&self, other: &CostMatrix) -> Result<CostMatrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| ext_sub(a, b)).collect();
        CostMatrix::new(self.rows, self.cols, data)
    }

    pub(crate) fn check_same_shape(&self, other: &CostMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} grid vs {}x{} grid",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub(crate) fn check_measures(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        if self.rows != mu.len() || self.cols != nu.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} cost for measures with {} and {} points",
                self.rows,
                self.cols,
                mu.len(),
                nu.len()
            )));
        }
        Ok(())
    }

    /// Adds the recorded shift back onto a dual pair computed for the shifted cost.
    pub fn unshift_potentials(&self, pp: &PotentialPair) -> Result<PotentialPair> {
        match &self.shift {
            None => Ok(pp.clone()),
            Some(s) => PotentialPair::new(
                pp.phi.iter().zip(&s.a).map(|(&p, &a)| ext_add(p, a)).collect(),
                pp.psi.iter().zip(&s.b).map(|(&p, &b)| ext_add(p, b)).collect(),
            ),
        }
    }

    /// Adds `sum a mu + sum b nu` back onto a value computed for the shifted cost.
    pub fn unshift_value(&self, value: ExtReal, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> ExtReal {
        match &self.shift {
            None => value,
            Some(s) => {
                let offset: f64 = dot(&s.a, mu.weights()) + dot(&s.b, nu.weights());
                value + ExtReal::from_f64(offset)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonnegative mass matrix over `X x Y`.
///
/// Any real matrix can be stored; [`check_marginals`] decides whether it is a
/// coupling of a given pair of measures.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl TransportPlan {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} plan",
                mass.len()
            )));
        }
        if mass.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("plan", "entries must be finite"));
        }
        Ok(TransportPlan { rows, cols, mass })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged plan rows".into()));
        }
        Self::new(n, m, rows.into_iter().flatten().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TransportPlan {
            rows,
            cols,
            mass: vec![0.0; rows * cols],
        }
    }

    /// Independent coupling `mu x nu`.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let mut p = Self::zeros(mu.len(), nu.len());
        for (i, a) in mu.weights().iter().enumerate() {
            for (j, b) in nu.weights().iter().enumerate() {
                p.mass[i * p.cols + j] = a * b;
            }
        }
        p
    }

    /// Plan moving `weights[i]` from `x_i` to `y_{perm[i]}`.
    pub fn from_permutation(perm: &[usize], weights: &[f64]) -> Result<Self> {
        let n = perm.len();
        if weights.len() != n {
            return Err(Error::DimensionMismatch("permutation and weights differ in length".into()));
        }
        let mut p = Self::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            if j >= n {
                return Err(Error::invalid("permutation", format!("target {j} out of range")));
            }
            p.mass[i * n + j] += weights[i];
        }
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.mass[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.mass
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.mass[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.mass[i * self.cols..(i + 1) * self.cols].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (j, acc) in s.iter_mut().enumerate() {
                *acc += self.get(i, j);
            }
        }
        s
    }

    /// Cells with mass strictly above `threshold`, row-major.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) > threshold {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `(i, j, mass)` for every cell with positive mass.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.support(0.0).into_iter().map(|(i, j)| (i, j, self.get(i, j))).collect()
    }

    /// The two marginals as measures, for plans that are valid couplings.
    pub fn marginals(&self) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        Ok((
            DiscreteMeasure::normalized(self.row_sums())?,
            DiscreteMeasure::normalized(self.col_sums())?,
        ))
    }

    fn check_cost(&self, c: &CostMatrix) -> Result<()> {
        if self.rows != c.rows() || self.cols != c.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} plan vs {}x{} cost",
                self.rows,
                self.cols,
                c.rows(),
                c.cols()
            )));
        }
        Ok(())
    }
}

/// Dual variables over `X` and `Y` with values in `[-inf, +inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPair {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl PotentialPair {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        for (name, v) in [("phi", &phi), ("psi", &psi)] {
            if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(Error::invalid(name, "entries must lie in [-inf, +inf)"));
            }
        }
        Ok(PotentialPair { phi, psi })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        PotentialPair {
            phi: vec![0.0; n],
            psi: vec![0.0; m],
        }
    }

    #[inline]
    pub fn sum_at(&self, i: usize, j: usize) -> f64 {
        self.phi[i] + self.psi[j]
    }

    /// `sum phi mu + sum psi nu`; `-inf` if any potential is `-inf`.
    pub fn dual_value(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ExtReal> {
        if self.phi.len() != mu.len() || self.psi.len() != nu.len() {
            return Err(Error::DimensionMismatch("potentials vs measures".into()));
        }
        let v = dot(&self.phi, mu.weights()) + dot(&self.psi, nu.weights());
        Ok(ExtReal::from_f64(if v.is_nan() { f64::NEG_INFINITY } else { v }))
    }

    fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if self.phi.len() != rows || self.psi.len() != cols {
            return Err(Error::DimensionMismatch(format!(
                "potentials of length ({}, {}) on a {rows}x{cols} grid",
                self.phi.len(),
                self.psi.len()
            )));
        }
        Ok(())
    }
}

/// One failed check. `x`/`y` are `None` when the failure is a whole row,
/// column or aggregate rather than a single cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub slack: ExtReal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityVerdict {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        FeasibilityVerdict {
            feasible: violations.is_empty(),
            violations,
        }
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().fold(0.0, |m, v| m.max(-v.slack.value()))
    }
}

/// Where a potential pair has to lie below the cost.
#[derive(Clone, Copy, Debug)]
pub enum Domain<'a> {
    Everywhere,
    Support(&'a TransportPlan),
}

/// `sum pi(x, y) c(x, y)` with `0 * (+inf) = 0`.
pub fn plan_cost(pi: &TransportPlan, c: &CostMatrix) -> Result<ExtReal> {
    pi.check_cost(c)?;
    let mut finite = 0.0;
    let mut pos_inf = false;
    let mut neg_inf = false;
    for (&m, &v) in pi.mass.iter().zip(c.data()) {
        let t = weighted(m, v);
        if t == f64::INFINITY {
            pos_inf = true;
        } else if t == f64::NEG_INFINITY {
            neg_inf = true;
        } else {
            finite += t;
        }
    }
    Ok(if pos_inf {
        ExtReal::INFINITY
    } else if neg_inf {
        ExtReal::NEG_INFINITY
    } else {
        ExtReal::from_f64(finite)
    })
}

/// Checks nonnegativity and both marginals against `(mu, nu)`.
pub fn check_marginals(pi: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> FeasibilityVerdict {
    let mut violations = Vec::new();
    if pi.rows() != mu.len() || pi.cols() != nu.len() {
        violations.push(Violation {
            x: None,
            y: None,
            slack: ExtReal::NEG_INFINITY,
        });
        return FeasibilityVerdict::from_violations(violations);
    }
    for i in 0..pi.rows() {
        for j in 0..pi.cols() {
            let v = pi.get(i, j);
            if v < 0.0 {
                violations.push(Violation {
                    x: Some(i),
                    y: Some(j),
                    slack: ExtReal::from_f64(v),
                });
            }
        }
    }
    for (i, (s, w)) in pi.row_sums().iter().zip(mu.weights()).enumerate() {
        if (s - w).abs() > MARGINAL_TOL {
            violations.push(Violation {
                x: Some(i),
                y: None,
                slack: ExtReal::from_f64(-(s - w).abs()),
            });
        }
    }
    for (j, (s, w)) in pi.col_sums().iter().zip(nu.weights()).enumerate() {
        if (s - w).abs() > MARGINAL_TOL {
            violations.push(Violation {
                x: None,
                y: Some(j),
                slack: ExtReal::from_f64(-(s - w).abs()),
            });
        }
    }
    FeasibilityVerdict::from_violations(violations)
}

/// `J(phi, psi) = sum pi(x, y) [phi(x) + psi(y)]`.
///
/// Positive and negative parts are summed separately; a `-inf` value on a
/// cell carrying mass makes the result `-inf`. With potentials bounded
/// above by a finite-cost plan's cost, the positive part is always finite
/// on a finite space, so `+inf - inf` never arises.
pub fn evaluate_j(pp: &PotentialPair, pi: &TransportPlan) -> Result<ExtReal> {
    pp.check_dims(pi.rows(), pi.cols())?;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for i in 0..pi.rows() {
        for j in 0..pi.cols() {
            let m = pi.get(i, j);
            if m <= 0.0 {
                continue;
            }
            let s = pp.sum_at(i, j);
            if s == f64::NEG_INFINITY {
                return Ok(ExtReal::NEG_INFINITY);
            }
            if s >= 0.0 {
                pos += m * s;
            } else {
                neg += m * s;
            }
        }
    }
    Ok(ExtReal::from_f64(pos + neg))
}

/// Checks `phi(x) + psi(y) <= c(x, y) + tol` on the requested cells.
pub fn check_feasible_potentials(pp: &PotentialPair, c: &CostMatrix, domain: Domain<'_>) -> Result<FeasibilityVerdict> {
    pp.check_dims(c.rows(), c.cols())?;
    if let Domain::Support(pi) = domain {
        pi.check_cost(c)?;
    }
    let mut violations = Vec::new();
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            if let Domain::Support(pi) = domain {
                if pi.get(i, j) <= 0.0 {
                    continue;
                }
            }
            let s = pp.sum_at(i, j);
            if s == f64::NEG_INFINITY {
                continue;
            }
            let slack = ext_sub(c.get(i, j), s);
            if slack < -FEAS_TOL {
                violations.push(Violation {
                    x: Some(i),
                    y: Some(j),
                    slack: ExtReal::from_f64(slack),
                });
            }
        }
    }
    Ok(FeasibilityVerdict::from_violations(violations))
}

/// Clamps both potentials to `[-level, level]`; `-inf` becomes `-level`.
pub fn truncate_potentials(pp: &PotentialPair, level: f64) -> Result<PotentialPair> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::invalid("level", format!("{level} must be positive and finite")));
    }
    let clamp = |v: &Vec<f64>| v.iter().map(|x| x.clamp(-level, level)).collect();
    PotentialPair::new(clamp(&pp.phi), clamp(&pp.psi))
}

/// `c'(x, y) = c(x, y) - a(x) - b(y)`, requiring `a(x) + b(y) <= c(x, y)`.
///
/// The result is flagged as shifted and remembers `(a, b)`; shifting an
/// already shifted grid composes the offsets.
pub fn shift_cost(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<CostMatrix> {
    if a.len() != c.rows() || b.len() != c.cols() {
        return Err(Error::DimensionMismatch(format!(
            "offsets of length ({}, {}) for a {}x{} cost",
            a.len(),
            b.len(),
            c.rows(),
            c.cols()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("shift", "offsets must be finite"));
    }
    let mut data = Vec::with_capacity(c.rows() * c.cols());
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            let v = ext_sub(ext_sub(c.get(i, j), a[i]), b[j]);
            if v < -FEAS_TOL {
                return Err(Error::Precondition {
                    x: i,
                    y: j,
                    reason: format!("a(x) + b(y) = {} exceeds c(x, y) = {}", a[i] + b[j], c.get(i, j)),
                });
            }
            data.push(v.max(0.0));
        }
    }
    let mut out = CostMatrix::new(c.rows(), c.cols(), data)?;
    let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
    if let Some(prev) = c.shift() {
        sa.iter_mut().zip(&prev.a).for_each(|(x, p)| *x += p);
        sb.iter_mut().zip(&prev.b).for_each(|(x, p)| *x += p);
    }
    out.shift = Some(Shift { a: sa, b: sb });
    Ok(out)
}
