//! Compressed-row symmetric matrices and an envelope Cholesky factorization
//! under reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square sparse matrix in CSR form with both triangles stored and column
/// indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // Stable sort keeps the accumulation order of duplicates fixed.
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Computes `D M D` for a diagonal `D`.
    pub fn scale_symmetric(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= d[i] * d[self.col_idx[p]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Reverse Cuthill-McKee ordering of the sparsity graph. `order[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let neighbors = |i: usize| a.row(i).map(|(j, _)| j).filter(move |&j| j != i);
    let degree: Vec<usize> = (0..n).map(|i| neighbors(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last = |start: usize, visited: &[bool]| -> usize {
        let mut seen = visited.to_vec();
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for u in neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    q.push_back(u);
                }
            }
        }
        last
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // Two BFS sweeps approximate a peripheral start vertex.
        let start = bfs_last(bfs_last(seed, &visited), &visited);
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = neighbors(v).filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                q.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factor `P A P^T = L L^T` of an SPD matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    order: Vec<usize>,
    inverse: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let order = reverse_cuthill_mckee(a);
        let mut inverse = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let mut first = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            first[new] = a.row(old).map(|(j, _)| inverse[j]).min().unwrap_or(new).min(new);
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (new, &old) in order.iter().enumerate() {
            for (j, v) in a.row(old) {
                let c = inverse[j];
                if c <= new {
                    data[offset[new] + c - first[new]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let (ri, rj) = (offset[i] - fi, offset[j] - fj);
                let dot: f64 = (lo..j).map(|k| data[ri + k] * data[rj + k]).sum();
                let ljj = data[rj + j];
                data[ri + j] = (data[ri + j] - dot) / ljj;
            }
            let ri = offset[i] - fi;
            let sq: f64 = (fi..i).map(|k| data[ri + k] * data[ri + k]).sum();
            let d = data[ri + i] - sq;
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {d:.3e} at row {i})"
                )));
            }
            data[ri + i] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            order,
            inverse,
            first,
            offset,
            data,
        })
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order.len();
        let mut y: Vec<f64> = self.order.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let (fi, ri) = (self.first[i], self.offset[i] - self.first[i]);
            let s: f64 = (fi..i).map(|k| self.data[ri + k] * y[k]).sum();
            y[i] = (y[i] - s) / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let (fi, ri) = (self.first[i], self.offset[i] - self.first[i]);
            y[i] /= self.data[ri + i];
            let yi = y[i];
            for (yk, a) in y[fi..i].iter_mut().zip(&self.data[ri + fi..ri + i]) {
                *yk -= a * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solves `A X = B` for all columns of `B` at once. Rows are processed in
    /// the same order as [`EnvelopeCholesky::solve`], with the right-hand
    /// sides held row-major so the inner updates are contiguous.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, p) = (self.order.len(), b.ncols());
        assert_eq!(b.nrows(), n, "right-hand side has wrong length");
        let mut y = vec![0.0; n * p];
        for (new, &old) in self.order.iter().enumerate() {
            for c in 0..p {
                y[new * p + c] = b[(old, c)];
            }
        }
        for i in 0..n {
            let (fi, ri) = (self.first[i], self.offset[i] - self.first[i]);
            let (done, rest) = y.split_at_mut(i * p);
            let row = &mut rest[..p];
            for k in fi..i {
                let l = self.data[ri + k];
                for (t, s) in row.iter_mut().zip(&done[k * p..(k + 1) * p]) {
                    *t -= l * s;
                }
            }
            let d = self.data[ri + i];
            row.iter_mut().for_each(|t| *t /= d);
        }
        for i in (0..n).rev() {
            let (fi, ri) = (self.first[i], self.offset[i] - self.first[i]);
            let d = self.data[ri + i];
            let (head, rest) = y.split_at_mut(i * p);
            let row = &mut rest[..p];
            row.iter_mut().for_each(|t| *t /= d);
            for k in fi..i {
                let l = self.data[ri + k];
                for (t, s) in head[k * p..(k + 1) * p].iter_mut().zip(row.iter()) {
                    *t -= l * s;
                }
            }
        }
        DMatrix::from_fn(n, p, |old, c| y[self.inverse[old] * p + c])
    }
}
