//! Small dense LU factorization with partial pivoting for the K×K systems.

use faer::{Mat, MatMut, MatRef};

/// `P·A = L·U` stored compactly; `perm[i]` is the original row now at row `i`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat<f64>,
    perm: Vec<usize>,
    norm_one: f64,
}

/// Elimination met a pivot below the relative threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    /// Original row index whose pivot collapsed.
    pub row: usize,
}

impl Lu {
    pub fn factor(a: MatRef<'_, f64>) -> Result<Self, SingularPivot> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut lu = a.to_owned();
        let norm_one = norm_one(a);
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = n.max(1) as f64 * f64::EPSILON * max_abs(a);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tol) {
                return Err(SingularPivot { row: perm[p] });
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm, norm_one })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A·X = B` in place for every column of `b`.
    pub fn solve_in_place(&self, mut b: MatMut<'_, f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let mut tmp = vec![0.0; n];
        for c in 0..b.ncols() {
            for i in 0..n {
                tmp[i] = b[(self.perm[i], c)];
            }
            for i in 0..n {
                let mut s = tmp[i];
                for j in 0..i {
                    s -= self.lu[(i, j)] * tmp[j];
                }
                tmp[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = tmp[i];
                for j in i + 1..n {
                    s -= self.lu[(i, j)] * tmp[j];
                }
                tmp[i] = s / self.lu[(i, i)];
            }
            for i in 0..n {
                b[(i, c)] = tmp[i];
            }
        }
    }

    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = b.to_owned();
        self.solve_in_place(x.as_mut());
        x
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.solve(Mat::<f64>::identity(self.dim(), self.dim()).as_ref())
    }

    /// `‖A‖₁ · ‖A⁻¹‖₁` from the explicit inverse.
    pub fn condition(&self) -> f64 {
        self.norm_one * norm_one(self.inverse().as_ref())
    }
}

pub(crate) fn norm_one(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_permuted_system() {
        let a = Mat::from_fn(3, 3, |i, j| [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]][i][j]);
        let lu = Lu::factor(a.as_ref()).unwrap();
        let x_true = Mat::from_fn(3, 2, |i, j| (i as f64 + 1.0) * if j == 0 { 1.0 } else { -2.0 });
        let b = &a * &x_true;
        let x = lu.solve(b.as_ref());
        for i in 0..3 {
            for j in 0..2 {
                assert!((x[(i, j)] - x_true[(i, j)]).abs() < 1e-14);
            }
        }
        let inv = lu.inverse();
        let id = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-14);
            }
        }
        assert!(lu.condition() >= 1.0);
    }

    #[test]
    fn duplicate_rows_are_singular() {
        let a = Mat::from_fn(3, 3, |i, j| if i == 2 { (j + 1) as f64 } else { (i * 3 + j + 1) as f64 });
        assert!(Lu::factor(a.as_ref()).is_err());
        let b = Mat::from_fn(2, 2, |i, _| (i + 1) as f64);
        assert!(Lu::factor(b.as_ref()).is_err());
    }
}
