//! Biharmonic weights `W` (N×K) and deformations `V = W·C`.
//!
//! Four solves produce the same quantity and are cross-checked in tests:
//!
//! * [`kkt_solve`]: the full saddle-point system, used as ground truth.
//! * [`weights_naive`]: eliminates the free vertices with one sparse
//!   factorization of the free-free block of `A`.
//! * [`weights_fast`]: only touches `K` columns of a precomputed inverse and
//!   a K×K system. Production path.
//! * [`weights_shaved`]: the fast algebra on the exact singular `A`, made
//!   invertible by removing one control vertex from the unknowns.
//!
//! Selector matrices are never materialized; applying `S` or `T` is a row
//! gather at the selected or complementary indices.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::dense::{self, Lu};
use crate::error::{Error, Result};
use crate::mesh::Vec3;
use crate::operators::{BilaplacianOperator, ShavedOperator, SparseMatrix};

/// Condition numbers above this are reported with the weights.
pub const CONDITION_WARNING: f64 = 1e12;

/// Ordered, duplicate-free control vertex indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selector {
    indices: Vec<usize>,
    n: usize,
}

impl Selector {
    /// Requires `1 ≤ K < N`, distinct indices and every index below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("selector needs at least one index".into()));
        }
        if indices.len() >= n {
            return Err(Error::InvalidArgument(format!(
                "K = {} must be smaller than N = {n}",
                indices.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!("index {i} out of range for N = {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("index {i} selected twice")));
            }
        }
        Ok(Self { indices, n })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn contains(&self, v: usize) -> bool {
        self.indices.contains(&v)
    }

    /// Ascending indices not in the selector.
    pub fn complement(&self) -> Vec<usize> {
        let mut mask = vec![false; self.n];
        for &i in &self.indices {
            mask[i] = true;
        }
        (0..self.n).filter(|&v| !mask[v]).collect()
    }

    /// Same selector with position `k` replaced by `v`.
    pub fn with_replaced(&self, k: usize, v: usize) -> Result<Self> {
        let mut indices = self.indices.clone();
        indices[k] = v;
        Self::new(indices, self.n)
    }
}

/// Which solve produced a set of weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Naive,
    Fast,
    Shaved,
}

/// Dense N×K weights; row `s_k` is the `k`-th unit row.
#[derive(Debug, Clone)]
pub struct BiharmonicWeights {
    w: Mat<f64>,
    selector: Selector,
    path: SolvePath,
    condition: Option<f64>,
}

impl BiharmonicWeights {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.w
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn path(&self) -> SolvePath {
        self.path
    }

    /// Condition estimate of the reduced control system, when one was solved.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    /// True when the reduced system's condition exceeds [`CONDITION_WARNING`].
    pub fn is_ill_conditioned(&self) -> bool {
        self.condition.is_some_and(|c| c > CONDITION_WARNING)
    }

    /// Row-major ASCII dump with an `N K` header line.
    pub fn to_ascii(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("{} {}\n", self.w.nrows(), self.w.ncols());
        for i in 0..self.w.nrows() {
            for j in 0..self.w.ncols() {
                if j > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{:e}", self.w[(i, j)]);
            }
            s.push('\n');
        }
        s
    }
}

/// Target positions of the `K` control points, row `k` for `s_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPositions(Vec<Vec3>);

impl ControlPositions {
    pub fn new(rows: Vec<Vec3>) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("control positions must be finite".into()));
        }
        Ok(Self(rows))
    }

    /// Rows of `positions` at the selected indices.
    pub fn gather(sel: &Selector, positions: &[Vec3]) -> Self {
        Self(sel.indices().iter().map(|&i| positions[i]).collect())
    }

    pub fn rows(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn translated(&self, t: Vec3) -> Self {
        Self(self.0.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect())
    }

    fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.0.len(), 3, |i, c| self.0[i][c])
    }
}

fn check_controls(sel: &Selector, c: &ControlPositions) -> Result<()> {
    if sel.len() != c.len() {
        return Err(Error::InvalidArgument(format!(
            "{} control positions for {} control points",
            c.len(),
            sel.len()
        )));
    }
    Ok(())
}

fn check_dim(a_dim: usize, sel: &Selector) -> Result<()> {
    if a_dim != sel.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "selector built for N = {}, operator has N = {a_dim}",
            sel.num_vertices()
        )));
    }
    Ok(())
}

fn mat_to_points(x: MatRef<'_, f64>) -> Vec<Vec3> {
    (0..x.nrows()).map(|i| [x[(i, 0)], x[(i, 1)], x[(i, 2)]]).collect()
}

fn set_unit_rows(w: &mut Mat<f64>, sel: &Selector) {
    for (k, &s) in sel.indices().iter().enumerate() {
        for j in 0..w.ncols() {
            w[(s, j)] = if j == k { 1.0 } else { 0.0 };
        }
    }
}

fn singular(sel: &Selector, condition: f64) -> Error {
    Error::SingularControls {
        indices: sel.indices().to_vec(),
        condition,
    }
}

/// `W = Sᵀ − Tᵀ(T·A·Tᵀ)⁻¹·T·A·Sᵀ` via a sparse Cholesky of the free block.
pub fn weights_naive(a: &SparseMatrix, sel: &Selector) -> Result<BiharmonicWeights> {
    check_dim(a.dim(), sel)?;
    let free = sel.complement();
    let k = sel.len();
    let att = a.principal_submatrix(&free).to_faer()?;
    let llt = att.sp_cholesky(Side::Lower).map_err(|e| {
        Error::Numerical(format!(
            "free-vertex block of A is not positive definite ({e:?}); is the mesh connected?"
        ))
    })?;
    let rhs = Mat::from_fn(free.len(), k, |r, j| a.get(free[r], sel.indices()[j]));
    let z = llt.solve(rhs.as_ref());
    let mut w = Mat::zeros(a.dim(), k);
    for (r, &v) in free.iter().enumerate() {
        for j in 0..k {
            w[(v, j)] = -z[(r, j)];
        }
    }
    set_unit_rows(&mut w, sel);
    ensure_finite(&w, sel)?;
    Ok(BiharmonicWeights {
        w,
        selector: sel.clone(),
        path: SolvePath::Naive,
        condition: None,
    })
}

fn ensure_finite(w: &Mat<f64>, sel: &Selector) -> Result<()> {
    if w.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(singular(sel, f64::INFINITY));
    }
    Ok(())
}

/// Solves `[[A, Sᵀ], [S, 0]]·[X; Λ] = [0; C]` densely and returns `X`.
pub fn kkt_solve(a: &SparseMatrix, sel: &Selector, c: &ControlPositions) -> Result<Vec<Vec3>> {
    check_dim(a.dim(), sel)?;
    check_controls(sel, c)?;
    let n = a.dim();
    let k = sel.len();
    let mut m = Mat::<f64>::zeros(n + k, n + k);
    for i in 0..n {
        for (j, v) in a.row(i) {
            m[(i, j)] = v;
        }
    }
    for (r, &s) in sel.indices().iter().enumerate() {
        m[(n + r, s)] = 1.0;
        m[(s, n + r)] = 1.0;
    }
    let mut rhs = Mat::<f64>::zeros(n + k, 3);
    for (r, p) in c.rows().iter().enumerate() {
        for d in 0..3 {
            rhs[(n + r, d)] = p[d];
        }
    }
    let x = PartialPivLu::new(m.as_ref()).solve(rhs.as_ref());
    let residual = &m * &x - &rhs;
    let scale = dense::max_abs(m.as_ref()) * dense::max_abs(x.as_ref()) + dense::max_abs(rhs.as_ref());
    let res = dense::max_abs(residual.as_ref());
    if !res.is_finite() || res > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "saddle-point system is singular (relative residual {:.3e})",
            res / scale
        )));
    }
    Ok(mat_to_points(x.as_ref().subrows(0, n)))
}

/// The fast path's K×K system in deflated form.
///
/// With `A_ε⁻¹ = Q + γ·11ᵀ`, `Y = Q_S + γ·1·1ᵀ` and `G = G₀ + γ·1·1ᵀ` where
/// `Q_S = Q·Sᵀ` and `G₀ = S·Q·Sᵀ`. Sherman-Morrison gives
/// `G⁻¹ = G₀⁻¹ − τ·g·gᵀ` with `g = G₀⁻¹·1` and `τ = γ/(1 + γ·1ᵀg)`, and
/// then `Y·G⁻¹·C = Q_S·(G₀⁻¹C − τ·g·gᵀC) + τ·1·gᵀC`. Only `G₀` is factored.
struct FastSystem {
    q_s: Mat<f64>,
    lu: Lu,
    g: Mat<f64>,
    tau: f64,
}

impl FastSystem {
    fn new(op: &BilaplacianOperator, sel: &Selector) -> Result<Self> {
        let q = op.base_inverse();
        let idx = sel.indices();
        let k = idx.len();
        let q_s = Mat::from_fn(q.nrows(), k, |i, j| q[(i, idx[j])]);
        let g0 = Mat::from_fn(k, k, |i, j| q_s[(idx[i], j)]);
        let lu = Lu::factor(g0.as_ref()).map_err(|p| Error::SingularControls {
            indices: vec![idx[p.row]],
            condition: f64::INFINITY,
        })?;
        let g = lu.solve(Mat::<f64>::from_fn(k, 1, |_, _| 1.0).as_ref());
        let sigma: f64 = g.col(0).iter().sum();
        let gamma = op.gamma();
        let tau = gamma / (1.0 + gamma * sigma);
        Ok(Self { q_s, lu, g, tau })
    }

    /// `Y·G⁻¹·C` for a K×D block `C`.
    fn apply(&self, c: MatRef<'_, f64>) -> Mat<f64> {
        let k = self.g.nrows();
        let mut z = self.lu.solve(c);
        let r: Vec<f64> = (0..c.ncols())
            .map(|j| (0..k).map(|i| self.g[(i, 0)] * c[(i, j)]).sum())
            .collect();
        for j in 0..c.ncols() {
            for i in 0..k {
                z[(i, j)] -= self.tau * self.g[(i, 0)] * r[j];
            }
        }
        let mut x = Mat::zeros(self.q_s.nrows(), c.ncols());
        matmul(x.as_mut(), Accum::Replace, self.q_s.as_ref(), z.as_ref(), 1.0, Par::Seq);
        for j in 0..c.ncols() {
            let shift = self.tau * r[j];
            for v in 0..x.nrows() {
                x[(v, j)] += shift;
            }
        }
        x
    }
}

/// `W = Y·G⁻¹` with `Y = A_ε⁻¹·Sᵀ` and `G = S·A_ε⁻¹·Sᵀ`.
///
/// The reported condition is that of the deflated system `G₀`, which is what
/// is actually factored.
pub fn weights_fast(op: &BilaplacianOperator, sel: &Selector) -> Result<BiharmonicWeights> {
    check_dim(op.dim(), sel)?;
    let sys = FastSystem::new(op, sel)?;
    let condition = sys.lu.condition();
    if !(condition < 1.0 / f64::EPSILON) {
        return Err(singular(sel, condition));
    }
    let mut w = sys.apply(Mat::<f64>::identity(sel.len(), sel.len()).as_ref());
    set_unit_rows(&mut w, sel);
    ensure_finite(&w, sel)?;
    Ok(BiharmonicWeights {
        w,
        selector: sel.clone(),
        path: SolvePath::Fast,
        condition: Some(condition),
    })
}

/// Weights on the exact singular `A`, using the operator with the fixed
/// vertex removed. The fixed vertex must be one of the control points.
///
/// Unknowns are the free positions `u` and the multipliers
/// `Λ̃ = [x_f; λ]`. With `a` the shaved row, `S̃ = [aᵀ; e_{r(s_k)}]` (the row
/// of the fixed control point zeroed) and `Z̃` holding `A[f,f]` at `(0,0)` and
/// the coupling `1` between `x_f` and its own multiplier, the stationarity
/// conditions reduce to `u = H·G̃⁻¹·C̃` with `H = Ã⁻¹S̃ᵀ`, `G̃ = S̃H − Z̃` and
/// `C̃ = [0; C]`.
pub fn weights_shaved(shaved: &ShavedOperator, sel: &Selector) -> Result<BiharmonicWeights> {
    check_dim(shaved.dim(), sel)?;
    let f = shaved.fixed_vertex();
    let kf = sel.indices().iter().position(|&s| s == f).ok_or_else(|| {
        Error::InvalidArgument(format!("fixed vertex {f} is not one of the control points"))
    })?;
    let k = sel.len();
    let m = shaved.dim() - 1;
    let inv = shaved.a_tilde_inv();
    let c = shaved.solved_row();
    // Reduced indices of the selected vertices; `None` marks the fixed one.
    let red: Vec<Option<usize>> = sel.indices().iter().map(|&s| shaved.reduced_index(s)).collect();

    let h = Mat::from_fn(m, k + 1, |i, j| match j {
        0 => c[i],
        _ => red[j - 1].map_or(0.0, |r| inv[(i, r)]),
    });
    let mut g = Mat::from_fn(k + 1, k + 1, |i, j| match (i, j) {
        (0, 0) => shaved.shaved_row().iter().zip(c).map(|(a, b)| a * b).sum(),
        (0, j) => red[j - 1].map_or(0.0, |r| c[r]),
        (i, j) => red[i - 1].map_or(0.0, |r| h[(r, j)]),
    });
    g[(0, 0)] -= shaved.shaved_diag();
    g[(0, 1 + kf)] -= 1.0;
    g[(1 + kf, 0)] -= 1.0;

    let lu = Lu::factor(g.as_ref()).map_err(|p| Error::SingularControls {
        indices: vec![if p.row == 0 { f } else { sel.indices()[p.row - 1] }],
        condition: f64::INFINITY,
    })?;
    let g_inv = lu.inverse();
    let condition = dense::norm_one(g.as_ref()) * dense::norm_one(g_inv.as_ref());
    if !(condition < 1.0 / f64::EPSILON) {
        return Err(singular(sel, condition));
    }
    let g_inv_c = g_inv.as_ref().subcols(1, k);
    let mut w_free = Mat::zeros(m, k);
    matmul(w_free.as_mut(), Accum::Replace, h.as_ref(), g_inv_c, 1.0, Par::Seq);

    let mut w = Mat::zeros(shaved.dim(), k);
    for (r, &v) in shaved.free_vertices().iter().enumerate() {
        for j in 0..k {
            w[(v, j)] = w_free[(r, j)];
        }
    }
    set_unit_rows(&mut w, sel);
    ensure_finite(&w, sel)?;
    Ok(BiharmonicWeights {
        w,
        selector: sel.clone(),
        path: SolvePath::Shaved,
        condition: Some(condition),
    })
}

/// `V = W·C`.
pub fn deform(w: &BiharmonicWeights, c: &ControlPositions) -> Result<Vec<Vec3>> {
    check_controls(&w.selector, c)?;
    let cm = c.to_mat();
    let mut v = Mat::zeros(w.w.nrows(), 3);
    matmul(v.as_mut(), Accum::Replace, w.w.as_ref(), cm.as_ref(), 1.0, Par::Seq);
    Ok(mat_to_points(v.as_ref()))
}

/// `V = Y·(G⁻¹·C)` without forming `W`.
pub fn deform_fast(op: &BilaplacianOperator, sel: &Selector, c: &ControlPositions) -> Result<Vec<Vec3>> {
    check_dim(op.dim(), sel)?;
    check_controls(sel, c)?;
    let cm = c.to_mat();
    let x = deform_fast_mat(op, sel, cm.as_ref())?;
    Ok(mat_to_points(x.as_ref()))
}

/// Multi-column form of [`deform_fast`]: `C` is K×D, the result N×D, and
/// selected rows are copied exactly from `C`.
pub(crate) fn deform_fast_mat(op: &BilaplacianOperator, sel: &Selector, c: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let mut x = FastSystem::new(op, sel)?.apply(c);
    for (k, &s) in sel.indices().iter().enumerate() {
        for d in 0..c.ncols() {
            x[(s, d)] = c[(k, d)];
        }
    }
    if x.col_iter().any(|col| col.iter().any(|v| !v.is_finite())) {
        return Err(singular(sel, f64::INFINITY));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TetMesh;
    use crate::operators::{assemble_bilaplacian_matrix, energy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bar(cells: [usize; 3]) -> (TetMesh, SparseMatrix) {
        let mesh = TetMesh::box_grid(cells, [cells[0] as f64, cells[1] as f64, cells[2] as f64])
            .unwrap()
            .normalize_unit_sphere()
            .unwrap()
            .0;
        let a = assemble_bilaplacian_matrix(&mesh).unwrap();
        (mesh, a)
    }

    fn random_controls(rng: &mut ChaCha8Rng, k: usize) -> ControlPositions {
        ControlPositions::new(
            (0..k)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect(),
        )
        .unwrap()
    }

    fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn selector_validation() {
        assert!(Selector::new(vec![], 4).is_err());
        assert!(Selector::new(vec![0, 0], 4).is_err());
        assert!(Selector::new(vec![4], 4).is_err());
        assert!(Selector::new(vec![0, 1, 2, 3], 4).is_err());
        let s = Selector::new(vec![3, 1], 4).unwrap();
        assert_eq!(s.complement(), vec![0, 2]);
    }

    #[test]
    fn naive_single_free_vertex_matches_scalar_formula() {
        let mesh = TetMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let a = assemble_bilaplacian_matrix(&mesh).unwrap();
        let sel = Selector::new(vec![0, 1, 3], 4).unwrap();
        let w = weights_naive(&a, &sel).unwrap();
        let att = a.get(2, 2);
        for (k, &s) in sel.indices().iter().enumerate() {
            let expected = -a.get(2, s) / att;
            assert!((w.matrix()[(2, k)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn kkt_matches_naive_and_constraints() {
        let (_, a) = bar([4, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sel = Selector::new(vec![0, 7, 22, 13], a.dim()).unwrap();
        let c = random_controls(&mut rng, 4);
        let x = kkt_solve(&a, &sel, &c).unwrap();
        for (k, &s) in sel.indices().iter().enumerate() {
            for d in 0..3 {
                assert!((x[s][d] - c.rows()[k][d]).abs() <= 1e-10);
            }
        }
        let v = deform(&weights_naive(&a, &sel).unwrap(), &c).unwrap();
        assert!(max_diff(&x, &v) < 1e-8);
    }

    #[test]
    fn kkt_constant_controls_give_constant_solution() {
        let (_, a) = bar([3, 1, 1]);
        let sel = Selector::new(vec![1, 5], a.dim()).unwrap();
        let c = ControlPositions::new(vec![[0.5, -2.0, 1.0]; 2]).unwrap();
        let x = kkt_solve(&a, &sel, &c).unwrap();
        assert!(max_diff(&x, &vec![[0.5, -2.0, 1.0]; a.dim()]) < 1e-9);
    }

    #[test]
    fn shaved_matches_kkt_and_row_of_fixed_vertex() {
        let (_, a) = bar([4, 2, 1]);
        let sel = Selector::new(vec![2, 11, 26, 17], a.dim()).unwrap();
        let shaved = ShavedOperator::new(&a, 17).unwrap();
        let w = weights_shaved(&shaved, &sel).unwrap();
        assert_eq!(w.path(), SolvePath::Shaved);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_controls(&mut rng, 4);
        let x = kkt_solve(&a, &sel, &c).unwrap();
        assert!(max_diff(&deform(&w, &c).unwrap(), &x) < 1e-8);
        for j in 0..4 {
            assert_eq!(w.matrix()[(17, j)], if j == 3 { 1.0 } else { 0.0 });
        }
        let err = weights_shaved(&shaved, &Selector::new(vec![0, 1], a.dim()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn fast_matches_naive_on_regularized_operator() {
        let (mesh, _) = bar([5, 2, 2]);
        let op = BilaplacianOperator::assemble(&mesh, None).unwrap();
        let sel = Selector::new(vec![0, 30, 12, 50], op.dim()).unwrap();
        let wf = weights_fast(&op, &sel).unwrap();
        let wn = weights_naive(op.a_eps(), &sel).unwrap();
        let diff = (wf.matrix() - wn.matrix()).norm_max();
        assert!(diff < 1e-8, "{diff}");
        assert!(!wf.is_ill_conditioned());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_controls(&mut rng, 4);
        let a = deform(&wf, &c).unwrap();
        let b = deform_fast(&op, &sel, &c).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn single_handle_moves_everything_rigidly() {
        let (_, a) = bar([3, 1, 1]);
        // Row sums of the regularized weights deviate from 1 by O(ε/λ₁).
        let eps = 1e-12 * a.trace() / a.dim() as f64;
        let op = BilaplacianOperator::from_matrix(a, Some(eps)).unwrap();
        let sel = Selector::new(vec![4], op.dim()).unwrap();
        let (mesh, _) = bar([3, 1, 1]);
        let p = mesh.positions()[4];
        let c = ControlPositions::new(vec![[p[0] + 1.0, p[1], p[2] - 0.5]]).unwrap();
        let v = deform_fast(&op, &sel, &c).unwrap();
        assert!(max_diff(&v, &vec![c.rows()[0]; op.dim()]) < 1e-6);
    }

    #[test]
    fn kkt_solution_minimizes_energy() {
        let (_, a) = bar([3, 2, 1]);
        let sel = Selector::new(vec![0, 23, 9], a.dim()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_controls(&mut rng, 3);
        let v = kkt_solve(&a, &sel, &c).unwrap();
        let e0 = energy(&a, &v);
        for _ in 0..10 {
            let mut x = v.clone();
            for t in sel.complement() {
                for d in 0..3 {
                    x[t][d] += rng.random_range(-0.1..0.1);
                }
            }
            let e = energy(&a, &x);
            assert!(e >= e0 - 1e-9 * e.max(1.0));
        }
    }

    #[test]
    fn ascii_export_has_header() {
        let (mesh, _) = bar([2, 1, 1]);
        let op = BilaplacianOperator::assemble(&mesh, None).unwrap();
        let w = weights_fast(&op, &Selector::new(vec![0, 5], op.dim()).unwrap()).unwrap();
        let text = w.to_ascii();
        assert!(text.starts_with("12 2\n"));
        assert_eq!(text.lines().count(), 13);
    }
}
