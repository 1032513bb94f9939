use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate entries in the order they are given, so a fixed input
    /// order gives bitwise-reproducible values.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for row in rows.iter_mut() {
            // Stable sort keeps insertion order among duplicates.
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.iter().copied().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &Mat<f64>) -> Self {
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                col[j] += v.abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// `max |A - Aᵀ|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, v)));
            t.push((i, i, shift));
        }
        Self::from_triplets(self.n, &t)
    }

    /// `self * diag(scale) * other`, accumulated row by row in ascending
    /// inner index order.
    pub fn mul_scaled(&self, scale: &[f64], other: &SparseMatrix) -> Self {
        let n = self.n;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut cols = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            cols.clear();
            for (k, a) in self.row(i) {
                let a = a * scale[k];
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Principal submatrix on `keep` (ascending), re-indexed to `0..keep.len()`.
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (r, &v) in keep.iter().enumerate() {
            map[v] = r;
        }
        let mut t = Vec::new();
        for (r, &v) in keep.iter().enumerate() {
            for (j, a) in self.row(v) {
                if map[j] != usize::MAX {
                    t.push((r, map[j], a));
                }
            }
        }
        Self::from_triplets(keep.len(), &t)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::Numerical(format!("sparse conversion failed: {e:?}")))
    }
}
