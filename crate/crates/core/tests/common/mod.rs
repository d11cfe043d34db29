//! Instance generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use duality_lab::{ext_sub, CostMatrix, DiscreteMeasure, PotentialPair, TransportPlan};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform weights, costs uniform on `[0, 1)`, `+inf` with probability `inf_density`.
pub fn uniform_square(n: usize, rng: &mut ChaCha8Rng, inf_density: f64) -> (DiscreteMeasure, CostMatrix) {
    let c = CostMatrix::from_fn(n, n, |_, _| {
        let v: f64 = rng.gen();
        if rng.gen::<f64>() < inf_density {
            f64::INFINITY
        } else {
            v
        }
    })
    .unwrap();
    (DiscreteMeasure::uniform(n).unwrap(), c)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    (0..n).permutations(n).collect()
}

pub fn perm_cost(c: &CostMatrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>() / perm.len() as f64
}

/// Minimum over all permutations: the assignment value under uniform weights.
pub fn assignment_oracle(c: &CostMatrix) -> f64 {
    permutations(c.rows()).iter().map(|p| perm_cost(c, p)).fold(f64::INFINITY, f64::min)
}

pub fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn perm_plan(perm: &[usize]) -> TransportPlan {
    TransportPlan::from_permutation(perm, &vec![1.0 / perm.len() as f64; perm.len()]).unwrap()
}

/// `sum_i upper(x_{i+1}, y_i) - lower(x_i, y_i)` over a closed chain, in
/// extended arithmetic.
pub fn chain_sum(pairs: &[(usize, usize)], upper: &CostMatrix, lower: &CostMatrix) -> f64 {
    let k = pairs.len();
    (0..k)
        .map(|i| {
            let (x, y) = pairs[i];
            let (xn, _) = pairs[(i + 1) % k];
            ext_sub(upper.get(xn, y), lower.get(x, y))
        })
        .fold(0.0, |a, b| if a == f64::INFINITY || b == f64::INFINITY { f64::INFINITY } else { a + b })
}

/// Largest `|d(x,y) + d(x',y') - d(x,y') - d(x',y)|` over finite rectangles.
pub fn max_rectangle_residual(d: &CostMatrix) -> f64 {
    let (n, m) = (d.rows(), d.cols());
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for x2 in 0..n {
            for y in 0..m {
                for y2 in 0..m {
                    let r = d.get(x, y) + d.get(x2, y2) - d.get(x, y2) - d.get(x2, y);
                    if r.is_finite() {
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
    }
    worst
}

/// Largest excess of `phi + psi` over `upper` or shortfall below `lower`.
pub fn sandwich_gap(pp: &PotentialPair, upper: &CostMatrix, lower: &CostMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for x in 0..upper.rows() {
        for y in 0..upper.cols() {
            let s = pp.phi[x] + pp.psi[y];
            worst = worst.max(s - upper.get(x, y)).max(lower.get(x, y) - s);
        }
    }
    worst
}

/// Least squares `a + b t`; returns `(a, b, largest relative residual)`.
pub fn fit_line(t: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let k = t.len() as f64;
    let (mt, mv) = (t.iter().sum::<f64>() / k, v.iter().sum::<f64>() / k);
    let sxy: f64 = t.iter().zip(v).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let b = sxy / sxx;
    let a = mv - b * mt;
    let rel = t.iter().zip(v).map(|(x, y)| ((a + b * x - y) / y).abs()).fold(0.0, f64::max);
    (a, b, rel)
}
