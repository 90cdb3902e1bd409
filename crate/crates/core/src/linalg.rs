//! Small linear solvers: dense LU for kriging systems and an envelope
//! (skyline) Cholesky for the sparse symmetric systems of the hydraulic
//! solver.

use std::collections::VecDeque;

/// Solves `a x = b` in place by LU with partial pivoting. `a` is row-major
/// `n x n`. Returns `None` when a pivot falls below `pivot_tol` times the
/// largest absolute entry of `a`.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize, pivot_tol: f64) -> Option<()> {
    debug_assert_eq!(b.len(), n);
    lu_solve_many(a, b, n, 1, pivot_tol)
}

/// As [`lu_solve`] for `m` right-hand sides stored row-major in `b` (`n x m`).
pub fn lu_solve_many(a: &mut [f64], b: &mut [f64], n: usize, m: usize, pivot_tol: f64) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= pivot_tol * scale {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            for c in 0..m {
                b.swap(col * m + c, pivot_row * m + c);
            }
        }
        let pivot = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for c in col + 1..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            for c in 0..m {
                b[r * m + c] -= factor * b[col * m + c];
            }
        }
    }
    for row in (0..n).rev() {
        for j in 0..m {
            let mut acc = b[row * m + j];
            for c in row + 1..n {
                acc -= a[row * n + c] * b[c * m + j];
            }
            b[row * m + j] = acc / a[row * n + row];
        }
    }
    Some(())
}

/// Symmetric positive definite matrix with a fixed sparsity pattern,
/// stored in envelope form after a reverse Cuthill-McKee reordering.
#[derive(Debug, Clone)]
pub struct EnvelopeMatrix {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    /// First column stored for each (permuted) row.
    first: Vec<usize>,
    /// Offset of each row's first stored entry in `values`.
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeMatrix {
    /// Builds the pattern from the off-diagonal adjacency of an `n`-unknown system.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, list) in adj.iter().enumerate() {
            let i = inv[old];
            for &nb in list {
                let j = inv[nb];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        Self { n, perm, inv, first, offset, values: vec![0.0; total] }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to entry `(i, j)` (and `(j, i)`), indices in original order.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (mut a, mut b) = (self.inv[i], self.inv[j]);
        if b > a {
            std::mem::swap(&mut a, &mut b);
        }
        debug_assert!(b >= self.first[a], "entry outside envelope");
        self.values[self.offset[a] + b - self.first[a]] += v;
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.offset[i] + j - self.first[i]]
    }

    /// Factorizes in place and solves for `rhs` (original ordering).
    /// Returns `None` if the matrix is not positive definite.
    pub fn factor_solve(&mut self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let mut s = self.at(i, j);
                for k in start..j {
                    s -= self.at(i, k) * self.at(j, k);
                }
                let idx = self.offset[i] + j - fi;
                self.values[idx] = s / self.at(j, j);
            }
            let mut d = self.at(i, i);
            for k in fi..i {
                let l = self.at(i, k);
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let idx = self.offset[i] + i - fi;
            self.values[idx] = d.sqrt();
        }
        // forward: L y = P b
        let mut y: Vec<f64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            y[i] /= self.at(i, i);
            let yi = y[i];
            let fi = self.first[i];
            for k in fi..i {
                y[k] -= self.at(i, k) * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Some(x)
    }
}

/// Returns `perm[new] = old`.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !seen[v]).collect();
            next.sort_by_key(|&v| (adj[v].len(), v));
            for v in next {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}
