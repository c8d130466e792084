//! Dense symmetric linear algebra shared by every other module.
//!
//! [`SymMatrix`] is the carrier for correlation matrices, projectors and the
//! inputs to MTFA; [`Subspace`] stores an orthonormal basis; [`Partition`] is
//! the block structure used by the block variants of every problem.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Default relative threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Two subspaces are considered equal when their projectors are this close.
pub const SUBSPACE_EQ_TOL: f64 = 1e-8;

const ORTHONORMAL_TOL: f64 = 1e-12;
const EIG_MAX_SWEEPS: usize = 10_000;

/// A dense real symmetric matrix.
///
/// The stored matrix is exactly symmetric: every constructor averages the two
/// triangles, so `a[(i, j)] == a[(j, i)]` holds bit-for-bit.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square dense matrix by averaging it
    /// with its transpose.
    pub fn from_dense(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::usage(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("matrix has non-finite entries"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Like [`SymMatrix::from_dense`] but rejects inputs whose asymmetry
    /// exceeds `tol` in any entry.
    pub fn from_dense_checked(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() == m.ncols() {
            let n = m.nrows();
            for i in 0..n {
                for j in (i + 1)..n {
                    let gap = (m[(i, j)] - m[(j, i)]).abs();
                    if gap > tol {
                        return Err(Error::usage(format!(
                            "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:.3e}"
                        )));
                    }
                }
            }
        }
        Self::from_dense(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::usage("rows must form a square matrix"));
        }
        Self::from_dense(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    /// The all-ones matrix `J`.
    pub fn ones(n: usize) -> Self {
        SymMatrix(DMatrix::from_element(n, n, 1.0))
    }

    /// `diag*(d)`: the diagonal matrix with `d` on its diagonal.
    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix(DMatrix::from_diagonal(d))
    }

    /// `v vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMatrix(v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Trace inner product `⟨A, B⟩ = tr(AB)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    /// `Q A Qᵀ` for a square `Q` of matching size.
    pub fn congruence(&self, q: &DMatrix<f64>) -> SymMatrix {
        let m = q * &self.0 * q.transpose();
        SymMatrix::from_dense(m).expect("congruence preserves shape")
    }

    /// Principal submatrix indexed by `idx`.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            self.0[(idx[a], idx[b])]
        }))
    }

    /// Entry-wise (Hadamard) product.
    pub fn hadamard(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.component_mul(&other.0))
    }

    pub fn eig(&self) -> Result<SymEigen> {
        eig_sym(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = eig_sym(self)?;
        Ok(e.values[e.values.len() - 1])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values[0])
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending
/// order and orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted in descending order.
///
/// Fails with [`Error::NumericalFailure`] if the iteration does not converge
/// or any eigenpair residual `‖A v − λ v‖` exceeds `1e-10 (1 + ‖A‖_F)`.
pub fn eig_sym(a: &SymMatrix) -> Result<SymEigen> {
    let n = a.dim();
    let norm = a.frobenius_norm();
    let eig = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, EIG_MAX_SWEEPS).ok_or_else(
        || Error::NumericalFailure {
            context: "symmetric eigensolver did not converge".into(),
            residual: f64::NAN,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    let av = &a.0 * &vectors;
    let mut worst = 0.0f64;
    for i in 0..n {
        let r = (av.column(i) - vectors.column(i) * values[i]).norm();
        worst = worst.max(r);
    }
    if worst > 1e-10 * (1.0 + norm) {
        return Err(Error::NumericalFailure {
            context: "eigenpair residual above tolerance".into(),
            residual: worst,
        });
    }
    Ok(SymEigen { values, vectors })
}

/// `true` iff `λ_min(A) ≥ −tol`.
pub fn psd_check(a: &SymMatrix, tol: f64) -> bool {
    match a.min_eigenvalue() {
        Ok(l) => l >= -tol,
        Err(_) => false,
    }
}

/// Span of the eigenvectors whose eigenvalue magnitude exceeds
/// `rank_tol · max|λ|`. The zero matrix yields the zero subspace.
pub fn column_space(a: &SymMatrix, rank_tol: f64) -> Result<Subspace> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::usage("rank_tol must lie in (0, 1)"));
    }
    let e = eig_sym(a)?;
    let n = a.dim();
    let scale = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(Subspace::zero(n));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| e.values[i].abs() > rank_tol * scale)
        .collect();
    let basis = DMatrix::from_fn(n, keep.len(), |i, j| e.vectors[(i, keep[j])]);
    Ok(Subspace { basis })
}

/// Numerical rank of a symmetric matrix at a relative threshold.
pub fn numerical_rank(a: &SymMatrix, rank_tol: f64) -> Result<usize> {
    Ok(column_space(a, rank_tol)?.dim())
}

/// A linear subspace of `Rⁿ`, stored as an `n × r` matrix with orthonormal
/// columns.
#[derive(Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl fmt::Debug for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Subspace(n={}, r={}){}", self.ambient(), self.dim(), self.basis)
    }
}

impl Subspace {
    /// Orthonormalizes the columns of `spanning` (modified Gram–Schmidt with
    /// one reorthogonalization pass). Linearly dependent columns are an error.
    pub fn from_basis(spanning: &DMatrix<f64>) -> Result<Self> {
        let n = spanning.nrows();
        if n == 0 {
            return Err(Error::usage("ambient dimension must be positive"));
        }
        if spanning.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("basis has non-finite entries"));
        }
        let mut q = spanning.clone();
        for j in 0..q.ncols() {
            let original = spanning.column(j).norm();
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = q.column(i).dot(&q.column(j));
                    let qi = q.column(i).clone_owned();
                    q.column_mut(j).axpy(-proj, &qi, 1.0);
                }
            }
            let norm = q.column(j).norm();
            if norm <= 1e-10 * original.max(f64::MIN_POSITIVE) || norm == 0.0 {
                return Err(Error::degenerate(format!(
                    "basis column {j} is linearly dependent on the previous ones"
                )));
            }
            q.column_mut(j).unscale_mut(norm);
        }
        Ok(Subspace { basis: q })
    }

    /// Accepts a basis that is already orthonormal within `1e-12` per entry.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(r, r)).amax();
        if err > ORTHONORMAL_TOL * 10.0 {
            return Err(Error::usage(format!(
                "basis is not orthonormal (max deviation {err:.3e})"
            )));
        }
        Ok(Subspace { basis })
    }

    /// Span of a list of vectors.
    pub fn span(vectors: &[DVector<f64>]) -> Result<Self> {
        let n = vectors
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::usage("span of an empty list; use Subspace::zero"))?;
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::usage("vectors have different lengths"));
        }
        Self::from_basis(&DMatrix::from_columns(vectors))
    }

    pub fn zero(n: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub fn full(n: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P_U = B Bᵀ`.
    pub fn projector(&self) -> SymMatrix {
        SymMatrix::from_dense(&self.basis * self.basis.transpose())
            .expect("projector is square")
    }

    /// Orthogonal complement `U⊥`, from the eigenvectors of `P_U` with
    /// eigenvalue below one half.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient();
        if self.dim() == 0 {
            return Subspace::full(n);
        }
        if self.dim() == n {
            return Subspace::zero(n);
        }
        let e = eig_sym(&self.projector()).expect("projector eigendecomposition");
        let r = self.dim();
        let basis = DMatrix::from_fn(n, n - r, |i, j| e.vectors[(i, r + j)]);
        Subspace { basis }
    }

    /// Image under an invertible linear map.
    pub fn transform(&self, q: &DMatrix<f64>) -> Result<Subspace> {
        if q.nrows() != self.ambient() || q.ncols() != self.ambient() {
            return Err(Error::usage("transform has the wrong dimensions"));
        }
        if self.dim() == 0 {
            return Ok(self.clone());
        }
        Subspace::from_basis(&(q * &self.basis))
    }

    /// `‖P_U − P_V‖_F`.
    pub fn distance(&self, other: &Subspace) -> f64 {
        self.projector().sub(&other.projector()).frobenius_norm()
    }

    pub fn same_as(&self, other: &Subspace) -> bool {
        self.ambient() == other.ambient() && self.distance(other) <= SUBSPACE_EQ_TOL
    }

    /// `true` when `v` lies in the subspace up to `tol · ‖v‖`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let proj = &self.basis * (self.basis.transpose() * v);
        (v - proj).norm() <= tol * v.norm().max(1.0)
    }
}

/// A partition of `{0, …, n−1}` into disjoint nonempty blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Blocks use zero-based indices. Each block is sorted; block order is kept.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("partition of an empty set"));
        }
        let mut seen = vec![false; n];
        let mut blocks = blocks;
        for block in blocks.iter_mut() {
            if block.is_empty() {
                return Err(Error::usage("partition has an empty block"));
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i >= n {
                    return Err(Error::usage(format!("index {i} out of range for n = {n}")));
                }
                if seen[i] {
                    return Err(Error::usage(format!("index {i} appears in two blocks")));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::usage(format!("index {missing} is not covered")));
        }
        Ok(Partition { n, blocks })
    }

    /// Builds a partition from one-based indices, as used in the JSON format.
    pub fn from_one_based(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let shifted = blocks
            .into_iter()
            .map(|b| {
                b.into_iter()
                    .map(|i| {
                        i.checked_sub(1)
                            .ok_or_else(|| Error::usage("partition indices are 1-based"))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, shifted)
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn whole(n: usize) -> Self {
        Partition {
            n,
            blocks: vec![(0..n).collect()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|i| i + 1).collect())
            .collect()
    }

    /// Block label of every index.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (k, b) in self.blocks.iter().enumerate() {
            for &i in b {
                labels[i] = k;
            }
        }
        labels
    }

    /// All index pairs `(a, b)` with `a ≤ b` lying in a common block.
    pub fn block_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for b in &self.blocks {
            for (x, &a) in b.iter().enumerate() {
                for &c in &b[x..] {
                    pairs.push((a, c));
                }
            }
        }
        pairs
    }

    /// `true` when every entry outside the diagonal blocks is at most `tol`
    /// in magnitude.
    pub fn is_block_diagonal(&self, m: &DMatrix<f64>, tol: f64) -> bool {
        if m.nrows() != self.n || m.ncols() != self.n {
            return false;
        }
        let labels = self.labels();
        (0..self.n).all(|i| {
            (0..self.n).all(|j| labels[i] == labels[j] || m[(i, j)].abs() <= tol)
        })
    }

    /// Keeps the diagonal blocks of `m`, zeroing everything else.
    pub fn block_diagonal_part(&self, m: &SymMatrix) -> SymMatrix {
        let labels = self.labels();
        let n = self.n;
        SymMatrix(DMatrix::from_fn(n, n, |i, j| {
            if labels[i] == labels[j] {
                m.get(i, j)
            } else {
                0.0
            }
        }))
    }
}

/// Orthonormal basis of the nullspace of `a` (columns): the orthogonal
/// complement of the right singular vectors with singular value above
/// `rel_tol · σ_max`.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 || a.amax() == 0.0 {
        return DMatrix::identity(cols, cols);
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.max();
    let rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * top)
        .collect();
    let v = vt.select_rows(&rows).transpose();
    let proj = DMatrix::identity(cols, cols) - &v * v.transpose();
    let e = eig_sym(&SymMatrix::from_dense(proj).expect("projector is square")).expect("projector eigendecomposition");
    let keep: Vec<usize> = (0..cols).filter(|&i| e.values[i] > 0.5).collect();
    DMatrix::from_fn(cols, keep.len(), |i, j| e.vectors[(i, keep[j])])
}

/// Minimum-norm least-squares solution of `a x = b`, with a few steps of
/// iterative refinement.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    let solve = |r: &DVector<f64>| svd.solve(r, eps).expect("svd with both factors computed");
    let mut x = solve(b);
    let mut resid = b - a * &x;
    for _ in 0..3 {
        let step = solve(&resid);
        let next = &x + step;
        let r = b - a * &next;
        if r.norm() >= resid.norm() {
            break;
        }
        x = next;
        resid = r;
    }
    x
}

/// Maximum absolute entry of a matrix, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_spectrum() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert!(e.values.iter().all(|&v| close(v, 1.0, 1e-14)));
    }

    #[test]
    fn swap_matrix_spectrum_is_descending() {
        let a = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let e = eig_sym(&a).unwrap();
        assert!(close(e.values[0], 1.0, 1e-14));
        assert!(close(e.values[1], -1.0, 1e-14));
    }

    #[test]
    fn random_symmetric_residual() {
        let a = SymMatrix::from_dense(lcg_matrix(5, 5, 42)).unwrap();
        let e = eig_sym(&a).unwrap();
        for i in 0..5 {
            let r = (a.as_matrix() * e.vectors.column(i) - e.vectors.column(i) * e.values[i]).norm();
            assert!(r <= 1e-10);
        }
        assert!((e.reconstruct() - a.as_matrix()).norm() <= 1e-9 * (1.0 + a.frobenius_norm()));
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn projector_examples() {
        let e1 = Subspace::span(&[DVector::from_vec(vec![1.0, 0.0])]).unwrap();
        assert_eq!(e1.projector().as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));

        let diag = Subspace::span(&[DVector::from_vec(vec![1.0, 1.0])]).unwrap();
        let p = diag.projector();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(p.get(i, j), 0.5, 1e-15));
            }
        }

        let u = Subspace::from_basis(&lcg_matrix(6, 3, 7)).unwrap();
        let p = u.projector();
        let idem = (p.as_matrix() * p.as_matrix() - p.as_matrix()).norm();
        assert!(idem <= 1e-10);
        assert!(close(p.trace(), 3.0, 1e-10));
    }

    #[test]
    fn column_space_examples() {
        let j = SymMatrix::ones(3);
        let cs = column_space(&j, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(cs.dim(), 1);
        let ones = Subspace::span(&[DVector::from_element(3, 1.0)]).unwrap();
        assert!(cs.same_as(&ones));

        assert_eq!(column_space(&SymMatrix::identity(4), DEFAULT_RANK_TOL).unwrap().dim(), 4);

        let u = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let a = SymMatrix::outer(&u).add(&SymMatrix::identity(4).scale(1e-14));
        assert_eq!(column_space(&a, DEFAULT_RANK_TOL).unwrap().dim(), 1);

        assert_eq!(column_space(&SymMatrix::zeros(3), DEFAULT_RANK_TOL).unwrap().dim(), 0);
        assert!(column_space(&j, 0.0).is_err());
    }

    #[test]
    fn psd_examples() {
        assert!(psd_check(&SymMatrix::identity(2), 0.0));
        let indefinite = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(!psd_check(&indefinite, 1e-9));
        let pd = SymMatrix::from_rows(&[&[1.0, -0.5], &[-0.5, 1.0]]).unwrap();
        assert!(psd_check(&pd, 0.0));
    }

    #[test]
    fn complement_sums_to_identity() {
        let u = Subspace::from_basis(&lcg_matrix(7, 3, 11)).unwrap();
        let c = u.complement();
        assert_eq!(c.dim(), 4);
        let sum = u.projector().add(&c.projector());
        assert!((sum.as_matrix() - DMatrix::<f64>::identity(7, 7)).norm() <= 1e-10);
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(Subspace::from_basis(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetrization_by_averaging() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-10, 3.0]);
        let s = SymMatrix::from_dense_checked(m.clone(), 1e-9).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert!(SymMatrix::from_dense_checked(m, 1e-12).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![2]]).is_ok());
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
        let p = Partition::from_one_based(3, vec![vec![1, 2], vec![3]]).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2]]);
        assert_eq!(p.block_pairs(), vec![(0, 0), (0, 1), (1, 1), (2, 2)]);
        assert!(Partition::from_one_based(3, vec![vec![0, 1], vec![2]]).is_err());
    }

    #[test]
    fn null_space_and_lstsq() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&a, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).amax() < 1e-14);
        let x = lstsq(&a, &DVector::from_vec(vec![2.0]));
        assert!(close(x[0], 1.0, 1e-14) && close(x[1], 1.0, 1e-14) && close(x[2], 0.0, 1e-14));
    }
}
