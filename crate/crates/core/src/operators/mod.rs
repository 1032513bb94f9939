//! Discrete operators on a tetrahedral mesh.
//!
//! The Bilaplacian is `A = L · Mass⁻¹ · L` with `L` the linear (P1) FEM
//! stiffness matrix and `Mass` the barycentrically lumped mass matrix. `A`
//! is symmetric positive semidefinite with the constant vector in its null
//! space, so it is singular. Two invertible variants are provided:
//! [`BilaplacianOperator`] regularizes with `A + εI` and precomputes the dense
//! inverse; [`ShavedOperator`] removes one vertex's row and column.

pub mod cache;
mod sparse;

use faer::linalg::solvers::{DenseSolveCore, Llt};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::mesh::{geom, TetMesh, Vec3};

pub use sparse::SparseMatrix;

/// Symmetric P1 stiffness matrix (positive semidefinite sign convention).
#[derive(Debug, Clone)]
pub struct StiffnessMatrix(pub SparseMatrix);

/// Diagonal lumped mass: each vertex receives a quarter of every adjacent tet's volume.
#[derive(Debug, Clone)]
pub struct MassMatrix(pub Vec<f64>);

impl MassMatrix {
    pub fn assemble(mesh: &TetMesh) -> Result<Self> {
        let mut m = vec![0.0; mesh.num_vertices()];
        for (t, tet) in mesh.tets().iter().enumerate() {
            let q = mesh.tet_volume(t) / 4.0;
            for &v in tet {
                m[v] += q;
            }
        }
        if let Some(v) = m.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InvalidMesh(format!("vertex {v} has no volume")));
        }
        Ok(Self(m))
    }

    pub fn trace(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Gradients of the four barycentric basis functions of a tet, plus its volume.
fn basis_gradients(p: [Vec3; 4]) -> Option<([Vec3; 4], f64)> {
    let a = geom::sub(p[1], p[0]);
    let b = geom::sub(p[2], p[0]);
    let c = geom::sub(p[3], p[0]);
    let det = geom::dot(a, geom::cross(b, c));
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    // Rows of the inverse of the column matrix [a b c].
    let g1 = geom::scale(geom::cross(b, c), inv);
    let g2 = geom::scale(geom::cross(c, a), inv);
    let g3 = geom::scale(geom::cross(a, b), inv);
    let g0 = geom::scale(geom::add(geom::add(g1, g2), g3), -1.0);
    Some(([g0, g1, g2, g3], det / 6.0))
}

impl StiffnessMatrix {
    /// Accumulates element matrices `vol · ∇φᵢ·∇φⱼ` in tet index order.
    pub fn assemble(mesh: &TetMesh) -> Result<Self> {
        let pos = mesh.positions();
        let min_vol = 1e-12 * mesh.bbox_diagonal().powi(3);
        let mut t = Vec::with_capacity(16 * mesh.num_tets());
        for (e, tet) in mesh.tets().iter().enumerate() {
            let p = tet.map(|v| pos[v]);
            let (g, vol) = basis_gradients(p)
                .filter(|(_, vol)| vol.abs() > min_vol)
                .ok_or_else(|| Error::InvalidMesh(format!("tet {e} is degenerate")))?;
            for i in 0..4 {
                for j in 0..4 {
                    t.push((tet[i], tet[j], vol.abs() * geom::dot(g[i], g[j])));
                }
            }
        }
        Ok(Self(SparseMatrix::from_triplets(mesh.num_vertices(), &t)))
    }
}

/// `A = L · Mass⁻¹ · L` for the mesh.
pub fn assemble_bilaplacian_matrix(mesh: &TetMesh) -> Result<SparseMatrix> {
    let l = StiffnessMatrix::assemble(mesh)?.0;
    let mass = MassMatrix::assemble(mesh)?;
    let inv_mass: Vec<f64> = mass.0.iter().map(|m| 1.0 / m).collect();
    Ok(l.mul_scaled(&inv_mass, &l))
}

/// Default regularization weight: `1e-8 · trace(A) / N`.
pub fn default_epsilon(a: &SparseMatrix) -> f64 {
    1e-8 * a.trace() / a.dim() as f64
}

/// The Bilaplacian together with its ε-regularized dense inverse.
///
/// The constant vector is an eigenvector of `A_ε` with eigenvalue `ε`, so
/// `A_ε⁻¹` carries a dominant `11ᵀ/(Nε)` term. The inverse is therefore kept
/// split as `A_ε⁻¹ = P⁻¹ + γ·11ᵀ` with `P = A_ε + (β/N)·11ᵀ`, `β = trace(A)/N`
/// and `γ = 1/(Nε) − 1/(N(ε + β))`. `P` has no outlying eigenvalue and its
/// inverse is computed to full working accuracy.
#[derive(Debug, Clone)]
pub struct BilaplacianOperator {
    a: SparseMatrix,
    epsilon: f64,
    a_eps: SparseMatrix,
    base_inv: Mat<f64>,
    gamma: f64,
}

impl BilaplacianOperator {
    /// Assembles `A` from the mesh and inverts `A + εI`. `None` selects
    /// [`default_epsilon`].
    pub fn assemble(mesh: &TetMesh, epsilon: Option<f64>) -> Result<Self> {
        Self::from_matrix(assemble_bilaplacian_matrix(mesh)?, epsilon)
    }

    pub fn from_matrix(a: SparseMatrix, epsilon: Option<f64>) -> Result<Self> {
        let epsilon = resolve_epsilon(&a, epsilon)?;
        let a_eps = a.shifted(epsilon);
        let n = a.dim();
        let rank_one = deflation_shift(&a) / n as f64;
        let mut dense = a_eps.to_dense();
        for j in 0..n {
            for i in 0..n {
                dense[(i, j)] += rank_one;
            }
        }
        let llt = Llt::new(dense.as_ref(), Side::Lower).map_err(|e| {
            Error::Numerical(format!(
                "Cholesky of A + εI failed ({e:?}); condition estimate ≥ {:.3e}",
                a_eps.norm_one() / epsilon
            ))
        })?;
        Self::with_inverse(a, epsilon, llt.inverse())
    }

    /// Reuses a previously computed `P⁻¹` (for example from the disk cache).
    pub fn with_inverse(a: SparseMatrix, epsilon: f64, base_inv: Mat<f64>) -> Result<Self> {
        let n = a.dim();
        if base_inv.nrows() != n || base_inv.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "inverse is {}x{}, expected {n}x{n}",
                base_inv.nrows(),
                base_inv.ncols()
            )));
        }
        if base_inv.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("inverse of A + εI is not finite".into()));
        }
        let epsilon = resolve_epsilon(&a, Some(epsilon))?;
        let a_eps = a.shifted(epsilon);
        let beta = deflation_shift(&a);
        let nf = n as f64;
        let gamma = 1.0 / (nf * epsilon) - 1.0 / (nf * (epsilon + beta));
        Ok(Self {
            a,
            epsilon,
            a_eps,
            base_inv,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// The unregularized Bilaplacian.
    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn a_eps(&self) -> &SparseMatrix {
        &self.a_eps
    }

    /// `P⁻¹`, the well-conditioned part of `A_ε⁻¹`.
    pub fn base_inverse(&self) -> &Mat<f64> {
        &self.base_inv
    }

    /// Weight `γ` of the `11ᵀ` part of `A_ε⁻¹`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Entry `(i, j)` of `A_ε⁻¹`.
    pub fn inverse_entry(&self, i: usize, j: usize) -> f64 {
        self.base_inv[(i, j)] + self.gamma
    }

    /// `A_ε⁻¹` as one dense matrix.
    pub fn dense_inverse(&self) -> Mat<f64> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.inverse_entry(i, j))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `‖A_ε‖₁ · ‖A_ε⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        let inv_norm = self
            .base_inv
            .col_iter()
            .map(|c| c.iter().map(|v| (v + self.gamma).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        self.a_eps.norm_one() * inv_norm
    }
}

fn deflation_shift(a: &SparseMatrix) -> f64 {
    let beta = a.trace() / a.dim() as f64;
    if beta > 0.0 {
        beta
    } else {
        1.0
    }
}

fn resolve_epsilon(a: &SparseMatrix, epsilon: Option<f64>) -> Result<f64> {
    let eps = epsilon.unwrap_or_else(|| default_epsilon(a));
    if eps == 0.0 {
        return Err(Error::InvalidArgument(
            "ε = 0 leaves A singular; use the shaved operator for the exact path".into(),
        ));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid ε = {eps}")));
    }
    Ok(eps)
}

pub(crate) fn dense_norm_one(m: &Mat<f64>) -> f64 {
    m.col_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `A` with one vertex's row and column removed, and the dense inverse of the rest.
#[derive(Debug, Clone)]
pub struct ShavedOperator {
    fixed_vertex: usize,
    free: Vec<usize>,
    a_tilde: SparseMatrix,
    a_tilde_inv: Mat<f64>,
    shaved_row: Vec<f64>,
    solved_row: Vec<f64>,
    shaved_diag: f64,
    condition: f64,
}

/// Above this the shaved matrix is treated as singular.
pub const SHAVED_CONDITION_LIMIT: f64 = 1e14;

impl ShavedOperator {
    pub fn new(a: &SparseMatrix, fixed_vertex: usize) -> Result<Self> {
        let n = a.dim();
        if fixed_vertex >= n {
            return Err(Error::InvalidArgument(format!(
                "fixed vertex {fixed_vertex} out of range for {n} vertices"
            )));
        }
        let free: Vec<usize> = (0..n).filter(|&v| v != fixed_vertex).collect();
        let a_tilde = a.principal_submatrix(&free);
        let mut shaved_row = vec![0.0; n - 1];
        for (j, v) in a.row(fixed_vertex) {
            if j != fixed_vertex {
                shaved_row[if j < fixed_vertex { j } else { j - 1 }] = v;
            }
        }
        let dense = a_tilde.to_dense();
        let llt = Llt::new(dense.as_ref(), Side::Lower).map_err(|e| {
            Error::Numerical(format!(
                "shaved Bilaplacian is not positive definite ({e:?}); is the mesh connected?"
            ))
        })?;
        let a_tilde_inv = llt.inverse();
        let condition = a_tilde.norm_one() * dense_norm_one(&a_tilde_inv);
        if !(condition <= SHAVED_CONDITION_LIMIT) {
            return Err(Error::Numerical(format!(
                "shaved Bilaplacian is numerically singular (condition estimate {condition:.3e})"
            )));
        }
        let solved_row = (0..n - 1)
            .map(|i| (0..n - 1).map(|j| a_tilde_inv[(i, j)] * shaved_row[j]).sum())
            .collect();
        Ok(Self {
            fixed_vertex,
            free,
            a_tilde,
            a_tilde_inv,
            shaved_row,
            solved_row,
            shaved_diag: a.get(fixed_vertex, fixed_vertex),
            condition,
        })
    }

    pub fn fixed_vertex(&self) -> usize {
        self.fixed_vertex
    }

    /// Full vertex count `N`.
    pub fn dim(&self) -> usize {
        self.free.len() + 1
    }

    /// Vertex of reduced index `r`.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Reduced index of vertex `v`; `None` for the fixed vertex.
    pub fn reduced_index(&self, v: usize) -> Option<usize> {
        match v.cmp(&self.fixed_vertex) {
            std::cmp::Ordering::Less => Some(v),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(v - 1),
        }
    }

    pub fn a_tilde(&self) -> &SparseMatrix {
        &self.a_tilde
    }

    pub fn a_tilde_inv(&self) -> &Mat<f64> {
        &self.a_tilde_inv
    }

    /// Row `fixed_vertex` of `A` restricted to the free vertices.
    pub fn shaved_row(&self) -> &[f64] {
        &self.shaved_row
    }

    /// `Ã⁻¹ · shaved_row`.
    pub fn solved_row(&self) -> &[f64] {
        &self.solved_row
    }

    /// `A[fixed, fixed]`.
    pub fn shaved_diag(&self) -> f64 {
        self.shaved_diag
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }
}

/// `½ · trace(Xᵀ A X)`.
pub fn energy(a: &SparseMatrix, x: &[Vec3]) -> f64 {
    assert_eq!(a.dim(), x.len(), "dimension mismatch");
    let mut e = 0.0;
    for i in 0..a.dim() {
        let mut ax = [0.0; 3];
        for (j, v) in a.row(i) {
            for c in 0..3 {
                ax[c] += v * x[j][c];
            }
        }
        e += geom::dot(ax, x[i]);
    }
    0.5 * e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> TetMesh {
        TetMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn unit_tet_stiffness_matches_hand_assembly() {
        // ∇φ₀ = (-1,-1,-1), ∇φ₁ = e₁, ∇φ₂ = e₂, ∇φ₃ = e₃ and volume 1/6.
        let expected = [
            [3.0, -1.0, -1.0, -1.0],
            [-1.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
        ];
        let l = StiffnessMatrix::assemble(&unit_tet()).unwrap().0;
        for i in 0..4 {
            for j in 0..4 {
                assert!((l.get(i, j) - expected[i][j] / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn regular_tet_stiffness_has_constant_nullspace() {
        let s = 1.0 / 2f64.sqrt();
        let m = TetMesh::new(
            vec![[1.0, 0.0, -s], [-1.0, 0.0, -s], [0.0, 1.0, s], [0.0, -1.0, s]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let l = StiffnessMatrix::assemble(&m).unwrap().0;
        assert!(l.max_asymmetry() == 0.0);
        for r in l.mul_vec(&[1.0; 4]) {
            assert!(r.abs() < 1e-9 * l.max_abs());
        }
    }

    #[test]
    fn mass_trace_is_volume() {
        let m = TetMesh::box_grid([3, 2, 2], [1.5, 1.0, 0.7]).unwrap();
        let mass = MassMatrix::assemble(&m).unwrap();
        assert!((mass.trace() - m.total_volume()).abs() < 1e-12);
        assert!(mass.0.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let m = TetMesh::box_grid([2, 1, 1], [2.0, 1.0, 1.0]).unwrap();
        let err = BilaplacianOperator::assemble(&m, Some(0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn shaving_single_tet_is_principal_submatrix() {
        let a = assemble_bilaplacian_matrix(&unit_tet()).unwrap();
        let s = ShavedOperator::new(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.a_tilde().get(i, j), a.get(i, j));
            }
            assert_eq!(s.shaved_row()[i], a.get(3, i));
        }
        assert_eq!(s.reduced_index(3), None);
        assert_eq!(s.reduced_index(2), Some(2));
    }

    #[test]
    fn energy_of_translation_vanishes() {
        let m = TetMesh::box_grid([3, 1, 1], [3.0, 1.0, 1.0]).unwrap();
        let a = assemble_bilaplacian_matrix(&m).unwrap();
        let x = vec![[0.3, -1.0, 2.0]; m.num_vertices()];
        let rest = energy(&a, m.positions());
        assert!(energy(&a, &x).abs() < 1e-12 * (1.0 + rest));
        let doubled: Vec<Vec3> = m.positions().iter().map(|&p| geom::scale(p, 2.0)).collect();
        assert!((energy(&a, &doubled) - 4.0 * rest).abs() <= 1e-12 * rest.max(1.0));
    }
}
