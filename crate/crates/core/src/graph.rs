//! Dense-digraph cycle searches shared by the monotonicity, sandwich and
//! subsidy checks.
//!
//! Weights are `f64` with `+inf` meaning "no edge" and `-inf` allowed.

use std::collections::VecDeque;

use crate::ext::ext_add;

#[derive(Clone, Debug)]
pub(crate) struct Digraph {
    n: usize,
    w: Vec<f64>,
    self_loops: bool,
}

impl Digraph {
    /// Builds the complete digraph from a weight function. When
    /// `self_loops` is false, 1-cycles are not considered at all.
    pub fn from_fn(n: usize, self_loops: bool, mut weight: impl FnMut(usize, usize) -> f64) -> Self {
        let mut w = Vec::with_capacity(n * n);
        for u in 0..n {
            for v in 0..n {
                w.push(if u == v && !self_loops { f64::INFINITY } else { weight(u, v) });
            }
        }
        Digraph { n, w, self_loops }
    }

    #[inline]
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.w[u * self.n + v]
    }

    /// Total weight of the closed walk `cycle[0] -> cycle[1] -> ... -> cycle[0]`.
    pub fn cycle_weight(&self, cycle: &[usize]) -> f64 {
        let k = cycle.len();
        (0..k).fold(0.0, |acc, i| ext_add(acc, self.weight(cycle[i], cycle[(i + 1) % k])))
    }

    /// Shortest distances from a virtual source joined to every node by a
    /// zero-weight edge, after at most `n` relaxation rounds.
    pub fn super_source_distances(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n];
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                let du = d[u];
                for v in 0..n {
                    let w = self.weight(u, v);
                    if w == f64::INFINITY {
                        continue;
                    }
                    let nd = du + w;
                    if nd < d[v] {
                        d[v] = nd;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        d
    }

    /// Minimum mean cycle over finite-weight edges (Karp). Returns the
    /// cycle's node sequence and its mean.
    pub fn min_mean_cycle(&self) -> Option<(Vec<usize>, f64)> {
        let n = self.n;
        if n == 0 {
            return None;
        }
        // d[k][v]: lightest walk with exactly k edges ending at v.
        let mut d = vec![vec![f64::INFINITY; n]; n + 1];
        let mut parent = vec![vec![usize::MAX; n]; n + 1];
        d[0].iter_mut().for_each(|x| *x = 0.0);
        for k in 1..=n {
            for u in 0..n {
                let du = d[k - 1][u];
                if du == f64::INFINITY {
                    continue;
                }
                for v in 0..n {
                    let w = self.weight(u, v);
                    if !w.is_finite() {
                        continue;
                    }
                    let nd = du + w;
                    if nd < d[k][v] {
                        d[k][v] = nd;
                        parent[k][v] = u;
                    }
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for v in 0..n {
            if d[n][v] == f64::INFINITY {
                continue;
            }
            let mut worst = f64::NEG_INFINITY;
            for k in 0..n {
                if d[k][v] < f64::INFINITY {
                    worst = worst.max((d[n][v] - d[k][v]) / (n - k) as f64);
                }
            }
            if best.is_none_or(|(_, b)| worst < b) {
                best = Some((v, worst));
            }
        }
        let (v, _) = best?;
        let mut walk = vec![v];
        let mut cur = v;
        for k in (1..=n).rev() {
            cur = parent[k][cur];
            walk.push(cur);
        }
        walk.reverse();
        self.decompose(&walk)
            .into_iter()
            .map(|c| {
                let mean = self.cycle_weight(&c) / c.len() as f64;
                (c, mean)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// A cycle of total weight below `-tol`, with as few edges as the
    /// search can certify. `None` when every cycle weighs at least `-tol`.
    pub fn find_negative_cycle(&self, tol: f64) -> Option<Vec<usize>> {
        if let Some(c) = self.shortest_cycle_through_neg_inf() {
            return Some(c);
        }
        let (karp, mean) = self.min_mean_cycle()?;
        if mean * self.n as f64 >= -tol {
            return None;
        }
        match self.shortest_negative_cycle(karp.len(), tol) {
            Some(c) => Some(c),
            None => (self.cycle_weight(&karp) < -tol).then_some(karp),
        }
    }

    /// Splits a closed walk given as `v0, v1, ..., vk` (with `vk == v0`,
    /// or any walk with a repeated node) into its simple cycles.
    fn decompose(&self, walk: &[usize]) -> Vec<Vec<usize>> {
        let mut cycles = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        let mut pos = vec![usize::MAX; self.n];
        for &v in walk {
            if pos[v] != usize::MAX {
                let start = pos[v];
                let cyc: Vec<usize> = stack[start..].to_vec();
                for &u in &cyc {
                    pos[u] = usize::MAX;
                }
                stack.truncate(start);
                cycles.push(cyc);
            }
            pos[v] = stack.len();
            stack.push(v);
        }
        cycles
    }

    /// Any cycle using a `-inf` edge weighs `-inf`; the shortest such cycle
    /// closes the edge with a fewest-edge return path.
    fn shortest_cycle_through_neg_inf(&self) -> Option<Vec<usize>> {
        let n = self.n;
        let mut best: Option<Vec<usize>> = None;
        for u in 0..n {
            for v in 0..n {
                if self.weight(u, v) != f64::NEG_INFINITY {
                    continue;
                }
                if u == v {
                    return Some(vec![u]);
                }
                if let Some(path) = self.bfs_path(v, u) {
                    // path runs v -> ... -> u
                    let mut cyc = vec![u];
                    cyc.extend(&path[..path.len() - 1]);
                    if best.as_ref().is_none_or(|b| cyc.len() < b.len()) {
                        best = Some(cyc);
                    }
                }
            }
        }
        best
    }

    fn bfs_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.n;
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = q.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for v in 0..n {
                if !seen[v] && u != v && self.weight(u, v) < f64::INFINITY {
                    seen[v] = true;
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        None
    }

    /// Fewest-edge simple cycle weighing below `-tol`, searching closed
    /// walks of at most `limit` edges from every start node. Ties in length
    /// go to the more negative cycle.
    fn shortest_negative_cycle(&self, mut limit: usize, tol: f64) -> Option<Vec<usize>> {
        let n = self.n;
        let min_len = if self.self_loops { 1 } else { 2 };
        let mut best: Option<(Vec<usize>, f64)> = None;
        for s in 0..n {
            let mut d = vec![f64::INFINITY; n];
            d[s] = 0.0;
            let mut parents: Vec<Vec<usize>> = Vec::with_capacity(limit);
            let mut k = 0;
            while k < limit {
                k += 1;
                let mut nd = vec![f64::INFINITY; n];
                let mut layer = vec![usize::MAX; n];
                for u in 0..n {
                    if d[u] == f64::INFINITY {
                        continue;
                    }
                    for v in 0..n {
                        let w = self.weight(u, v);
                        if !w.is_finite() {
                            continue;
                        }
                        let cand = d[u] + w;
                        if cand < nd[v] {
                            nd[v] = cand;
                            layer[v] = u;
                        }
                    }
                }
                d = nd;
                parents.push(layer);
                if k < min_len || d[s] >= -tol {
                    continue;
                }
                let mut walk = vec![s];
                let mut cur = s;
                for layer in parents.iter().rev() {
                    cur = layer[cur];
                    walk.push(cur);
                }
                walk.reverse();
                let mut improved = false;
                for c in self.decompose(&walk) {
                    let w = self.cycle_weight(&c);
                    if w >= -tol {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((b, bw)) => c.len() < b.len() || (c.len() == b.len() && w < *bw),
                    };
                    if better {
                        best = Some((c, w));
                        improved = true;
                    }
                }
                if improved {
                    limit = best.as_ref().map_or(limit, |(b, _)| b.len());
                    break;
                }
            }
        }
        best.map(|(c, _)| c)
    }
}
