//! Envelope (skyline) LDL^T factorization for sparse symmetric matrices.
//!
//! Fill-in never leaves the envelope, so the cost is governed by the
//! profile `sum_i (i - first_i)`. A reverse Cuthill-McKee ordering is used
//! when it gives a smaller profile than the natural one.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct SkylineLdl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLdl {
    /// Allocates storage for the symmetric pattern given by `entries`
    /// (either triangle; the diagonal is always included).
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for nbrs in adj.iter_mut() {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        let natural: Vec<usize> = (0..n).collect();
        let rcm = reverse_cuthill_mckee(&adj);
        let perm = if profile(&adj, &rcm) < profile(&adj, &natural) {
            rcm
        } else {
            natural
        };
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, nbrs) in adj.iter().enumerate() {
            let i = iperm[old];
            for &o in nbrs {
                let j = iperm[o];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        Self {
            n,
            perm,
            iperm,
            first,
            start,
            data: vec![0.0; len],
            diag: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries in the lower envelope, diagonal included.
    pub fn envelope_len(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`); indices are in
    /// the caller's ordering. Panics if the entry is outside the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        assert!(c >= self.first[r], "entry ({i}, {j}) outside the symbolic pattern");
        self.data[self.start[r] + c - self.first[r]] += v;
    }

    /// In-place LDL^T. On failure returns the (caller-ordered) index of the
    /// first pivot that was zero or not finite.
    pub fn factor(&mut self) -> Result<(), usize> {
        for i in 0..self.n {
            let fi = self.first[i];
            let (head, tail) = self.data.split_at_mut(self.start[i]);
            let row_i = &mut tail[..i - fi + 1];
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                if lo < j {
                    let row_j = &head[self.start[j]..self.start[j] + (j - fj)];
                    let dot: f64 = row_i[lo - fi..j - fi]
                        .iter()
                        .zip(&row_j[lo - fj..j - fj])
                        .map(|(a, b)| a * b)
                        .sum();
                    row_i[j - fi] -= dot;
                }
            }
            let mut d = row_i[i - fi];
            for j in fi..i {
                let u = row_i[j - fi];
                let l = u / self.diag[j];
                row_i[j - fi] = l;
                d -= u * l;
            }
            if d == 0.0 || !d.is_finite() {
                return Err(self.perm[i]);
            }
            row_i[i - fi] = d;
            self.diag[i] = d;
        }
        Ok(())
    }

    /// Solves `K x = b` in place using the last successful factorization.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i] + (i - fi)];
            let dot: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] -= dot;
        }
        for (v, d) in y.iter_mut().zip(&self.diag) {
            *v /= d;
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let xi = y[i];
            let row = &self.data[self.start[i]..self.start[i] + (i - fi)];
            for (v, l) in y[fi..i].iter_mut().zip(row) {
                *v -= l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Number of negative pivots in the last factorization.
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }
}

fn profile(adj: &[Vec<usize>], perm: &[usize]) -> usize {
    let mut iperm = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    (0..perm.len())
        .map(|new| {
            let old = perm[new];
            adj[old]
                .iter()
                .map(|&o| iperm[o])
                .filter(|&j| j < new)
                .min()
                .map_or(0, |f| new - f)
        })
        .sum()
}

fn bfs_levels(adj: &[Vec<usize>], root: usize, seen: &mut [bool]) -> Vec<usize> {
    let mut order = vec![root];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
        nbrs.sort_by_key(|&w| adj[w].len());
        for w in nbrs {
            if !seen[w] {
                seen[w] = true;
                order.push(w);
            }
        }
    }
    order
}

/// Eccentricity proxy: last node reached by BFS from `root`, within its
/// connected component.
fn far_node(adj: &[Vec<usize>], root: usize) -> usize {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([root]);
    dist[root] = 0;
    let mut last = root;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    last
}

pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| adj[v].len());
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        let root = far_node(adj, far_node(adj, start));
        order.extend(bfs_levels(adj, root, &mut seen));
    }
    order.reverse();
    order
}
