//! Cyclic gains over tuples of support pairs and the bound
//! `int e dk <= n * alpha` for couplings `k` with every marginal equal to
//! the plan.
//!
//! Base points are the support pairs of the plan, indexed in the order of
//! [`SupportSet::pairs`]. Tuples are stored densely, so `s^n` is capped.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostMatrix, TransportPlan};
use crate::monotonicity::SupportSet;
use crate::{MARGINAL_TOL, MASS_EPS, SUBSIDY_TOL};

/// Largest number of tuples `s^n` handled densely.
pub const TUPLE_CAP: usize = 1_000_000;

const SHIFT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CyclicGain {
    n: usize,
    support: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl CyclicGain {
    /// Tuple length.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// Values in lexicographic tuple order, first coordinate most significant.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.values[tuple_index(tuple, self.support.len())]
    }

    /// Every tuple together with its value.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let s = self.support.len();
        self.values.iter().enumerate().map(move |(i, &v)| (index_tuple(i, s, self.n), v))
    }

    /// Replaces one value; used to fabricate counterexamples.
    pub fn set(&mut self, tuple: &[usize], value: f64) {
        let i = tuple_index(tuple, self.support.len());
        self.values[i] = value;
    }
}

fn tuple_index(tuple: &[usize], s: usize) -> usize {
    tuple.iter().fold(0, |acc, &z| acc * s + z)
}

fn index_tuple(mut i: usize, s: usize, n: usize) -> Vec<usize> {
    let mut t = vec![0; n];
    for k in (0..n).rev() {
        t[k] = i % s;
        i /= s;
    }
    t
}

fn tuple_count(s: usize, n: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total
            .checked_mul(s)
            .filter(|&t| t <= TUPLE_CAP)
            .ok_or_else(|| Error::SizeCap(format!("{s}^{n} tuples exceed {TUPLE_CAP}")))?;
    }
    Ok(total)
}

/// `e(p_1..p_n) = max(0, -sum_i [c(x_{i+1}, y_i) - c(x_i, y_i)])`, indices mod `n`.
pub fn build_e(c: &CostMatrix, support: &SupportSet, n: usize) -> Result<CyclicGain> {
    if n < 2 {
        return Err(Error::invalid("n", "tuple length must be at least 2"));
    }
    let pairs = support.pairs().to_vec();
    for &(x, y) in &pairs {
        if x >= c.rows() || y >= c.cols() {
            return Err(Error::DimensionMismatch(format!("support pair ({x}, {y}) outside the cost grid")));
        }
        if !c.get(x, y).is_finite() {
            return Err(Error::InfiniteOnSupport(x, y));
        }
    }
    let s = pairs.len();
    let total = tuple_count(s, n)?;
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| {
            let t = index_tuple(i, s, n);
            let mut sum = 0.0;
            for k in 0..n {
                let (xk, yk) = pairs[t[k]];
                let (xn, _) = pairs[t[(k + 1) % n]];
                sum += c.get(xn, yk) - c.get(xk, yk);
            }
            if sum < 0.0 {
                -sum
            } else {
                0.0
            }
        })
        .collect();
    let e = CyclicGain { n, support: pairs, values };
    for (t, v) in e.iter() {
        let mut r = t.clone();
        r.rotate_left(1);
        let w = e.get(&r);
        if (v - w).abs() > SHIFT_TOL * (1.0 + v.abs()) {
            return Err(Error::Internal(format!("cyclic gain not shift invariant at {t:?}")));
        }
    }
    Ok(e)
}

/// A measure on `n`-tuples of base points, stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiCoupling {
    pub kind: String,
    pub n: usize,
    /// Mass of each base point.
    pub base: Vec<f64>,
    /// Tuples with their masses, sorted by tuple.
    pub atoms: Vec<(Vec<usize>, f64)>,
}

impl MultiCoupling {
    fn from_atoms(kind: impl Into<String>, n: usize, base: Vec<f64>, mut atoms: Vec<(Vec<usize>, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::with_capacity(atoms.len());
        for (t, m) in atoms {
            match merged.last_mut() {
                Some((lt, lm)) if *lt == t => *lm += m,
                _ => merged.push((t, m)),
            }
        }
        merged.retain(|(_, m)| *m > MASS_EPS);
        MultiCoupling {
            kind: kind.into(),
            n,
            base,
            atoms: merged,
        }
    }

    /// The `k`-th one-dimensional marginal.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.base.len()];
        for (t, w) in &self.atoms {
            m[t[k]] += w;
        }
        m
    }

    /// Largest deviation of any marginal from the base measure.
    pub fn marginal_error(&self) -> f64 {
        (0..self.n)
            .flat_map(|k| {
                self.marginal(k)
                    .into_iter()
                    .zip(&self.base)
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub fn integrate(&self, e: &CyclicGain) -> f64 {
        self.atoms.iter().map(|(t, m)| m * e.get(t)).sum()
    }
}

/// Product, diagonal, then cyclic-shift averages of random Markov-chain
/// couplings, `count` in total. Deterministic for a fixed seed.
pub fn candidate_couplings(pi: &TransportPlan, n: usize, seed: u64, count: usize) -> Result<Vec<MultiCoupling>> {
    if n < 2 {
        return Err(Error::invalid("n", "tuple length must be at least 2"));
    }
    let support = SupportSet::from_plan(pi);
    let base: Vec<f64> = support.pairs().iter().map(|&(x, y)| pi.get(x, y)).collect();
    let s = base.len();
    let total = tuple_count(s, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let kappa = match idx {
            0 => {
                let atoms = (0..total)
                    .map(|i| {
                        let t = index_tuple(i, s, n);
                        let m = t.iter().map(|&z| base[z]).product();
                        (t, m)
                    })
                    .collect();
                MultiCoupling::from_atoms("product", n, base.clone(), atoms)
            }
            1 => {
                let atoms = (0..s).map(|z| (vec![z; n], base[z])).collect();
                MultiCoupling::from_atoms("diagonal", n, base.clone(), atoms)
            }
            _ => {
                let kernel = random_kernel(&base, &mut rng);
                markov_coupling(&base, &kernel, n, format!("random-{}", idx - 1))
            }
        };
        let err = kappa.marginal_error();
        if err > MARGINAL_TOL {
            return Err(Error::Internal(format!("coupling `{}` misses its marginals by {err:e}", kappa.kind)));
        }
        out.push(kappa);
    }
    Ok(out)
}

/// Two-coupling of `w` with itself from the northwest corner rule on
/// shuffled row and column orders, as a sparse transition kernel.
fn random_kernel(w: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, f64)>> {
    let s = w.len();
    let mut rows: Vec<usize> = (0..s).collect();
    let mut cols: Vec<usize> = (0..s).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let mut supply: Vec<f64> = rows.iter().map(|&r| w[r]).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&c| w[c]).collect();
    let mut kernel = vec![Vec::new(); s];
    let (mut i, mut j) = (0, 0);
    while i < s && j < s {
        let m = supply[i].min(demand[j]);
        if m > MASS_EPS {
            kernel[rows[i]].push((cols[j], m / w[rows[i]]));
        }
        supply[i] -= m;
        demand[j] -= m;
        if supply[i] <= MASS_EPS && i + 1 < s {
            i += 1;
        } else if demand[j] <= MASS_EPS {
            j += 1;
        } else {
            i += 1;
        }
    }
    kernel
}

fn markov_coupling(base: &[f64], kernel: &[Vec<(usize, f64)>], n: usize, kind: String) -> MultiCoupling {
    let mut paths: Vec<(Vec<usize>, f64)> = (0..base.len()).map(|z| (vec![z], base[z])).collect();
    for _ in 1..n {
        paths = paths
            .into_iter()
            .flat_map(|(t, m)| {
                let last = *t.last().unwrap();
                kernel[last]
                    .iter()
                    .map(move |&(q, p)| {
                        let mut u = t.clone();
                        u.push(q);
                        (u, m * p)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    let mut atoms = Vec::with_capacity(paths.len() * n);
    for (t, m) in paths {
        for k in 0..n {
            let mut r = t.clone();
            r.rotate_left(k);
            atoms.push((r, m / n as f64));
        }
    }
    MultiCoupling::from_atoms(kind, n, base.to_vec(), atoms)
}

/// A candidate whose integral exceeds the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub coupling: usize,
    pub kind: String,
    pub integral: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub feasible: bool,
    pub integrals: Vec<f64>,
    pub violations: Vec<BoundViolation>,
}

/// Checks `int e dk <= n * alpha + 1e-8` for every candidate.
pub fn mm_bound_check(pi: &TransportPlan, e: &CyclicGain, alpha: f64, candidates: &[MultiCoupling]) -> Result<BoundVerdict> {
    let support = SupportSet::from_plan(pi);
    if support.pairs() != e.support() {
        return Err(Error::DimensionMismatch("cyclic gain built on a different support".into()));
    }
    let bound = e.n() as f64 * alpha;
    let mut integrals = Vec::with_capacity(candidates.len());
    let mut violations = Vec::new();
    for (i, k) in candidates.iter().enumerate() {
        if k.n != e.n() || k.base.len() != e.support().len() {
            return Err(Error::DimensionMismatch(format!("coupling {i} has the wrong shape")));
        }
        let v = k.integrate(e);
        if v > bound + SUBSIDY_TOL {
            violations.push(BoundViolation {
                coupling: i,
                kind: k.kind.clone(),
                integral: v,
                bound,
            });
        }
        integrals.push(v);
    }
    Ok(BoundVerdict {
        feasible: violations.is_empty(),
        integrals,
        violations,
    })
}

/// Arithmetic mean of `fs`. With `e`, first checks
/// `e(z) <= sum_i f_i(z_i)` on every tuple, then that the mean still covers
/// `e` in the form `e(z) <= sum_k f(z_k)`.
pub fn symmetrize(fs: &[Vec<f64>], e: Option<&CyclicGain>) -> Result<Vec<f64>> {
    let Some(first) = fs.first() else {
        return Err(Error::invalid("fs", "no vectors given"));
    };
    let len = first.len();
    if fs.iter().any(|f| f.len() != len) {
        return Err(Error::DimensionMismatch("vectors of different lengths".into()));
    }
    let k = fs.len() as f64;
    let f: Vec<f64> = (0..len).map(|z| fs.iter().map(|g| g[z]).sum::<f64>() / k).collect();
    if let Some(e) = e {
        if fs.len() != e.n() || len != e.support().len() {
            return Err(Error::DimensionMismatch("vectors do not match the cyclic gain".into()));
        }
        for (t, v) in e.iter() {
            let cover: f64 = t.iter().enumerate().map(|(i, &z)| fs[i][z]).sum();
            if v > cover + SUBSIDY_TOL {
                return Err(Error::invalid("fs", format!("e{t:?} = {v} exceeds the cover {cover}")));
            }
        }
        for (t, v) in e.iter() {
            let cover: f64 = t.iter().map(|&z| f[z]).sum();
            if v > cover + SUBSIDY_TOL {
                return Err(Error::Internal(format!("symmetrized cover fails at {t:?}")));
            }
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix_a() -> CostMatrix {
        CostMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn full_support() -> SupportSet {
        SupportSet::new(vec![(0, 0), (0, 1), (1, 0), (1, 1)])
    }

    fn anti() -> TransportPlan {
        TransportPlan::from_rows(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    #[test]
    fn e_examples() {
        let s = full_support();
        let e = build_e(&fix_a(), &s, 2).unwrap();
        // indices: 0=(0,0) 1=(0,1) 2=(1,0) 3=(1,1)
        assert_eq!(e.get(&[1, 2]), 2.0);
        assert_eq!(e.get(&[0, 3]), 0.0);
        for z in 0..4 {
            assert_eq!(e.get(&[z, z]), 0.0);
        }
        assert!(e.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn e_rejects_bad_input() {
        assert!(build_e(&fix_a(), &full_support(), 1).is_err());
        let c = CostMatrix::from_rows(vec![vec![f64::INFINITY, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(build_e(&c, &full_support(), 2), Err(Error::InfiniteOnSupport(0, 0))));
        let big = SupportSet::new((0..11).map(|i| (i, i)).collect());
        let c = CostMatrix::from_fn(11, 11, |_, _| 0.0).unwrap();
        assert!(matches!(build_e(&c, &big, 6), Err(Error::SizeCap(_))));
    }

    #[test]
    fn couplings_have_marginals_and_are_reproducible() {
        let pi = TransportPlan::from_rows(vec![vec![0.2, 0.1, 0.0], vec![0.0, 0.3, 0.1], vec![0.1, 0.0, 0.2]]).unwrap();
        let a = candidate_couplings(&pi, 3, 7, 6).unwrap();
        let b = candidate_couplings(&pi, 3, 7, 6).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert_eq!(a[0].kind, "product");
        assert_eq!(a[1].kind, "diagonal");
        for k in &a {
            assert!(k.marginal_error() <= 1e-12);
        }
    }

    #[test]
    fn tight_case_reaches_the_bound() {
        let pi = anti();
        let e = build_e(&fix_a(), &SupportSet::from_plan(&pi), 2).unwrap();
        let tight = MultiCoupling::from_atoms("swap", 2, vec![0.5, 0.5], vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)]);
        assert_eq!(tight.integrate(&e), 2.0);
        let v = mm_bound_check(&pi, &e, 1.0, std::slice::from_ref(&tight)).unwrap();
        assert!(v.feasible);

        let mut inflated = e.clone();
        inflated.set(&[0, 1], 3.0);
        let v = mm_bound_check(&pi, &inflated, 1.0, &[tight]).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.violations[0].coupling, 0);
        assert_eq!(v.violations[0].integral, 2.5);
    }

    #[test]
    fn optimal_plan_has_zero_integrals() {
        let pi = TransportPlan::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let e = build_e(&fix_a(), &SupportSet::from_plan(&pi), 2).unwrap();
        let ks = candidate_couplings(&pi, 2, 1, 5).unwrap();
        let v = mm_bound_check(&pi, &e, 0.0, &ks).unwrap();
        assert!(v.feasible);
        assert!(v.integrals.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn symmetrize_examples() {
        assert_eq!(symmetrize(&[vec![1.0, 3.0], vec![1.0, 3.0]], None).unwrap(), vec![1.0, 3.0]);
        assert_eq!(symmetrize(&[vec![0.0, 2.0], vec![2.0, 0.0]], None).unwrap(), vec![1.0, 1.0]);
        assert!(symmetrize(&[vec![0.0], vec![1.0, 2.0]], None).is_err());

        let e = build_e(&fix_a(), &full_support(), 2).unwrap();
        let ones = vec![1.0; 4];
        let f = symmetrize(&[ones.clone(), ones.clone()], Some(&e)).unwrap();
        assert_eq!(f, ones);
        let skew = symmetrize(&[vec![0.0, 2.0, 0.0, 0.0], vec![0.0, 2.0, 2.0, 0.0]], Some(&e)).unwrap();
        assert_eq!(skew, vec![0.0, 2.0, 1.0, 0.0]);
        assert!(symmetrize(&[vec![0.0; 4], vec![0.0; 4]], Some(&e)).is_err());
    }
}
