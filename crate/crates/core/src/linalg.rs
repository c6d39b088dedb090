//! Sparse symmetric storage and a direct envelope (skyline) Cholesky solver.
//!
//! The matrix keeps both triangles in CSR form so products and symmetry
//! checks are cheap. Factorization reorders with reverse Cuthill-McKee and
//! factors `P A P^T = L L^T` inside the row envelope of the lower triangle.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Immutable CSR sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Pattern from per-row column sets; the diagonal is always included.
    pub fn from_rows(rows: Vec<BTreeSet<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, mut cols) in rows.into_iter().enumerate() {
            cols.insert(i);
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows = a
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect())
            .collect();
        let mut m = Self::zeros(Arc::new(CsrPattern::from_rows(rows)));
        for (i, r) in a.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    m.add(i, j, v);
                }
            }
        }
        m
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let start = self.pattern.row_ptr[i];
        self.pattern
            .row(i)
            .iter()
            .enumerate()
            .map(move |(k, &j)| (j, self.values[start + k]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |K_ij - K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for (j, v) in self.row_entries(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.dim()]; self.dim()];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in self.row_entries(i) {
                row[j] = v;
            }
        }
        a
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric pattern; `perm[new] = old`.
pub fn reverse_cuthill_mckee(pattern: &CsrPattern) -> Vec<usize> {
    let n = pattern.dim();
    let degree = |i: usize| pattern.row(i).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last_level = |start: usize| -> (usize, usize) {
        let mut level = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(i) = queue.pop_front() {
            last = i;
            for &j in pattern.row(i) {
                if level[j] == usize::MAX {
                    level[j] = level[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        (last, level[last])
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start node by repeated BFS.
        let mut start = seed;
        let (mut far, mut ecc) = bfs_last_level(start);
        loop {
            let (next_far, next_ecc) = bfs_last_level(far);
            if next_ecc <= ecc {
                break;
            }
            start = far;
            far = next_far;
            ecc = next_ecc;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut nbrs: Vec<usize> = pattern.row(i).iter().copied().filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree(j), j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor of a permuted SPD matrix.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    /// First column of row `i` of `L` (in permuted numbering).
    first: Vec<usize>,
    /// Offset of `L[i][first[i]]` in `values`.
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineCholesky {
    /// Computes the ordering and envelope for a pattern.
    pub fn symbolic(pattern: &CsrPattern) -> Self {
        let n = pattern.dim();
        let perm = reverse_cuthill_mckee(pattern);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            first[new] = pattern
                .row(old)
                .iter()
                .map(|&j| inv_perm[j])
                .min()
                .unwrap_or(new)
                .min(new);
        }
        let mut offset = Vec::with_capacity(n);
        let mut total = 0;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        Self {
            perm,
            inv_perm,
            first,
            offset,
            values: vec![0.0; total],
        }
    }

    /// Number of stored entries in the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        self.offset[i] + (j - self.first[i])
    }

    /// Numeric factorization. Fails on the first pivot that is not clearly positive.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        let n = self.perm.len();
        assert_eq!(a.dim(), n, "matrix does not match symbolic factor");
        self.values.iter_mut().for_each(|v| *v = 0.0);
        let mut diag_scale = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            for (j_old, v) in a.row_entries(old) {
                let j = self.inv_perm[j_old];
                if j <= new {
                    let k = self.at(new, j);
                    self.values[k] = v;
                }
                if j == new {
                    diag_scale[new] = v.abs();
                }
            }
        }
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let ri = self.at(i, start);
                let rj = self.at(j, start);
                let len = j - start;
                let dot: f64 = self.values[ri..ri + len]
                    .iter()
                    .zip(&self.values[rj..rj + len])
                    .map(|(x, y)| x * y)
                    .sum();
                let ljj = self.values[self.at(j, j)];
                let k = self.at(i, j);
                self.values[k] = (self.values[k] - dot) / ljj;
            }
            let row = &self.values[self.at(i, fi)..self.at(i, i)];
            let sq: f64 = row.iter().map(|x| x * x).sum();
            let k = self.at(i, i);
            let d = self.values[k] - sq;
            if !(d > 1e-13 * diag_scale[i]) || !d.is_finite() {
                return Err(Error::Indefinite {
                    pivot: self.perm[i],
                    value: d,
                });
            }
            self.values[k] = d.sqrt();
        }
        Ok(())
    }

    /// Solves `A x = b` with the stored factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.at(i, fi)..self.at(i, i)];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - s) / self.values[self.at(i, i)];
        }
        // L^T z = y, column-oriented sweep over the rows of L.
        for i in (0..n).rev() {
            y[i] /= self.values[self.at(i, i)];
            let fi = self.first[i];
            let yi = y[i];
            let base = self.at(i, fi);
            for (k, j) in (fi..i).enumerate() {
                y[j] -= self.values[base + k] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Factors and solves, then refines until `||A x - b|| <= 1e-12 ||b||`
/// (at most three refinement sweeps).
pub fn solve_with(factor: &mut SkylineCholesky, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    factor.factor(a)?;
    let bn = norm2(b);
    let mut x = factor.solve(b);
    for _ in 0..3 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm2(&r) <= 1e-12 * bn {
            break;
        }
        let dx = factor.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    Ok(x)
}

/// Banded LU factorization with partial pivoting, for symmetric systems
/// that are not positive definite. Rows are first reordered with reverse
/// Cuthill-McKee so the bandwidth is small.
#[derive(Debug, Clone)]
pub struct BandedLu {
    perm: Vec<usize>,
    bw: usize,
    width: usize,
    values: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.bw - i)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a.pattern());
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0;
        for (new, &old) in perm.iter().enumerate() {
            for &j in a.pattern().row(old) {
                bw = bw.max(new.abs_diff(inv[j]));
            }
        }
        let width = 3 * bw + 1;
        let mut lu = Self {
            perm,
            bw,
            width,
            values: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for new in 0..n {
            for (j, v) in a.row_entries(lu.perm[new]) {
                let k = lu.idx(new, inv[j]);
                lu.values[k] = v;
            }
        }
        let scale = a.max_abs();
        for k in 0..n {
            let last_row = (k + bw + 1).min(n);
            let last_col = (k + 2 * bw + 1).min(n);
            let mut p = k;
            let mut best = lu.values[lu.idx(k, k)].abs();
            for i in k + 1..last_row {
                let v = lu.values[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 1e-14 * scale) {
                return Err(Error::Singular { element: None });
            }
            lu.pivots[k] = p;
            if p != k {
                for j in k..last_col {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.values.swap(x, y);
                }
            }
            let pivot = lu.values[lu.idx(k, k)];
            for i in k + 1..last_row {
                let ik = lu.idx(i, k);
                let l = lu.values[ik] / pivot;
                lu.values[ik] = l;
                if l != 0.0 {
                    for j in k + 1..last_col {
                        let (ij, kj) = (lu.idx(i, j), lu.idx(k, j));
                        lu.values[ij] -= l * lu.values[kj];
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            for i in k + 1..(k + self.bw + 1).min(n) {
                y[i] -= self.values[self.idx(i, k)] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..(k + 2 * self.bw + 1).min(n) {
                s -= self.values[self.idx(k, j)] * y[j];
            }
            y[k] = s / self.values[self.idx(k, k)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Solves a nonsingular (possibly indefinite) system with banded LU and
/// the same refinement target as [`solve_with`].
pub fn solve_general(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = BandedLu::factor(a)?;
    let bn = norm2(b);
    let mut x = lu.solve(b);
    for _ in 0..3 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm2(&r) <= 1e-12 * bn {
            break;
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    Ok(x)
}
