//! Fitting a centered ellipsoid `{x : xᵀMx = 1}` exactly through points.
//!
//! `fit` solves the SDP feasibility problem `diag(VᵀMV) = 1, M ⪰ 0` by
//! phase-I and returns either `M` or a dual ray `d` with `Σ dᵢ > 0` and
//! `V diag(d) Vᵀ ⪯ 0`. `fit_blocks` is the partitioned variant where every
//! principal block `[VᵀMV]_ℐ` must equal the identity.

use nalgebra::{DMatrix, DVector};

use crate::conic::{
    lp_feasible, psd_feasibility, BlockMat, Cone, FarkasRay, FeasibilityVerdict, LpOutcome, Sense,
    Settings, DEFAULT_BOUNDARY_TOL,
};
use crate::numerics::{Partition, SymMatrix};
use crate::{Error, Result};

/// Columns are the points `v₁, …, vₙ ∈ Rᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    v: DMatrix<f64>,
}

impl PointSet {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.nrows() == 0 || v.ncols() == 0 {
            return Err(Error::usage("a point set needs k ≥ 1 and n ≥ 1"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::usage("points have non-finite coordinates"));
        }
        Ok(PointSet { v })
    }

    pub fn from_points(points: &[DVector<f64>]) -> Result<Self> {
        let k = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != k) {
            return Err(Error::usage("points have different dimensions"));
        }
        if k == 0 {
            return Err(Error::usage("a point set needs k ≥ 1 and n ≥ 1"));
        }
        Self::new(DMatrix::from_columns(points))
    }

    /// Ambient dimension.
    pub fn k(&self) -> usize {
        self.v.nrows()
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.v.column(i).into_owned()
    }

    /// Image under a linear map `T` (`k' × k`).
    pub fn transform(&self, t: &DMatrix<f64>) -> Result<PointSet> {
        if t.ncols() != self.k() {
            return Err(Error::usage("transform has the wrong number of columns"));
        }
        PointSet::new(t * &self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Fitted,
    Infeasible,
    BoundaryUncertain,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub status: FitStatus,
    /// The ellipsoid matrix when fitted.
    pub m: Option<SymMatrix>,
    /// Dual ray `D` when infeasible: diagonal for [`fit`], block-diagonal for
    /// [`fit_blocks`]; `tr D > 0` and `V D Vᵀ ⪯ 0`. Normalized to unit max
    /// entry.
    pub ray: Option<SymMatrix>,
    /// Phase-I certificate slack (smallest eigenvalue of the scaled `M`, or
    /// the scaled ray value).
    pub margin: f64,
}

impl FitResult {
    /// Diagonal of the ray, i.e. the vector `d`.
    pub fn d(&self) -> Option<DVector<f64>> {
        self.ray.as_ref().map(SymMatrix::diagonal)
    }

    /// Re-checks the certificate against `points` with plain linear algebra.
    pub fn verify(&self, points: &PointSet, p: &Partition) -> bool {
        match self.status {
            FitStatus::Fitted => self
                .m
                .as_ref()
                .is_some_and(|m| check_fit(points, p, m, 1e-7)),
            FitStatus::Infeasible => self.ray.as_ref().is_some_and(|d| check_ray(points, p, d)),
            FitStatus::BoundaryUncertain => true,
        }
    }
}

/// `M ⪰ −1e-8` and `[VᵀMV]_ℐ = I` within `tol` on every block.
pub fn check_fit(points: &PointSet, p: &Partition, m: &SymMatrix, tol: f64) -> bool {
    if m.dim() != points.k() || p.n() != points.n() {
        return false;
    }
    let g = m.congruence(&points.v.transpose());
    let dev = p
        .block_pairs()
        .iter()
        .map(|&(a, b)| (g.get(a, b) - if a == b { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    dev <= tol && m.min_eigenvalue().is_ok_and(|l| l >= -1e-8)
}

/// `tr D > 0`, `D` block-diagonal and `λ_max(V D Vᵀ) ≤ 1e-8 ‖D‖_F`.
pub fn check_ray(points: &PointSet, p: &Partition, d: &SymMatrix) -> bool {
    if d.dim() != points.n() || !p.is_block_diagonal(d.as_matrix(), 0.0) {
        return false;
    }
    let vdv = d.congruence(&points.v);
    d.trace() > 0.0 && vdv.max_eigenvalue().is_ok_and(|l| l <= 1e-8 * d.frobenius_norm())
}

/// Constraint data for `[VᵀMV]_ab = δ_ab` over the block pairs of `p`:
/// `G_ab = (v_a v_bᵀ + v_b v_aᵀ)/2`.
pub(crate) fn block_fit_constraints(
    v: &DMatrix<f64>,
    p: &Partition,
) -> (Vec<BlockMat>, DVector<f64>, Vec<(usize, usize)>) {
    let pairs = p.block_pairs();
    let g = pairs
        .iter()
        .map(|&(a, b)| {
            let va = v.column(a);
            let vb = v.column(b);
            let m = 0.5 * (va * vb.transpose() + vb * va.transpose());
            BlockMat::dense(&SymMatrix::from_dense(m).expect("square"))
        })
        .collect();
    let h = DVector::from_iterator(pairs.len(), pairs.iter().map(|(a, b)| if a == b { 1.0 } else { 0.0 }));
    (g, h, pairs)
}

/// Block-diagonal `D` from a ray over block pairs (`D_ab = d_ab / 2` off the
/// diagonal, matching `Σ d_ab G_ab = V D Vᵀ`).
pub(crate) fn ray_matrix(n: usize, pairs: &[(usize, usize)], d: &DVector<f64>) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    for (&(a, b), &x) in pairs.iter().zip(d.iter()) {
        if a == b {
            m[(a, a)] += x;
        } else {
            m[(a, b)] += 0.5 * x;
            m[(b, a)] += 0.5 * x;
        }
    }
    let scale = m.amax();
    if scale > 0.0 {
        m /= scale;
    }
    SymMatrix::from_dense(m).expect("square")
}

/// Fits a centered ellipsoid through every point.
pub fn fit(points: &PointSet) -> Result<FitResult> {
    fit_with(points, &Settings::default())
}

pub fn fit_with(points: &PointSet, settings: &Settings) -> Result<FitResult> {
    let n = points.n();
    // collapse duplicate and antipodal columns: they impose the same constraint
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        let vi = points.v.column(i);
        let dup = reps.iter().any(|&j| {
            let vj = points.v.column(j);
            let tol = 1e-14 * (1.0 + vi.norm());
            (vi - vj).amax() <= tol || (vi + vj).amax() <= tol
        });
        if !dup {
            reps.push(i);
        }
    }
    let sub = PointSet::new(points.v.select_columns(&reps))?;
    let r = fit_blocks_with(&sub, &Partition::singletons(reps.len()), settings)?;
    let ray = r.ray.map(|d| {
        let mut full = DVector::zeros(n);
        for (pos, &i) in reps.iter().enumerate() {
            full[i] = d.get(pos, pos);
        }
        SymMatrix::from_diagonal(&full)
    });
    Ok(FitResult { ray, ..r })
}

/// Fits `M ⪰ 0` with `[VᵀMV]_ℐ = I` for every block `ℐ` of `p`.
pub fn fit_blocks(points: &PointSet, p: &Partition) -> Result<FitResult> {
    fit_blocks_with(points, p, &Settings::default())
}

pub fn fit_blocks_with(points: &PointSet, p: &Partition, settings: &Settings) -> Result<FitResult> {
    let (k, n) = (points.k(), points.n());
    if p.n() != n {
        return Err(Error::usage(format!("partition covers {} indices but there are {n} points", p.n())));
    }
    if let Some(i) = (0..n).find(|&i| points.v.column(i).amax() == 0.0) {
        let mut d = DVector::zeros(n);
        d[i] = 1.0;
        return Ok(FitResult {
            status: FitStatus::Infeasible,
            m: None,
            ray: Some(SymMatrix::from_diagonal(&d)),
            margin: 1.0,
        });
    }

    // whiten: V = U Σ Wᵀ, fit the orthonormal rows Wᵀ and map back
    let svd = points.v.clone().svd(true, true);
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-6 * top)
        .collect();
    let u = svd.u.expect("left singular vectors requested").select_columns(&keep);
    let w = svd.v_t.expect("right singular vectors requested").select_rows(&keep);
    let sigma_inv = DMatrix::from_diagonal(&DVector::from_iterator(
        keep.len(),
        keep.iter().map(|&i| 1.0 / svd.singular_values[i]),
    ));
    let rho = keep.len();

    let (g, h, pairs) = block_fit_constraints(&w, p);
    let f = psd_feasibility(&[Cone::Psd(rho)], &g, &h, settings, DEFAULT_BOUNDARY_TOL)?;
    Ok(match f.verdict {
        FeasibilityVerdict::Feasible => {
            let mt = f.witness.expect("feasible verdict carries a witness");
            let mt = mt.psd_block(0);
            let back = &u * &sigma_inv;
            let inner = &back * mt * back.transpose();
            let outer = DMatrix::identity(k, k) - &u * u.transpose();
            let m = SymMatrix::from_dense(inner + outer)?;
            FitResult {
                status: FitStatus::Fitted,
                m: Some(m),
                ray: None,
                margin: f.margin,
            }
        }
        FeasibilityVerdict::Infeasible => FitResult {
            status: FitStatus::Infeasible,
            m: None,
            ray: Some(ray_matrix(n, &pairs, &f.ray.expect("infeasible verdict carries a ray"))),
            margin: f.margin,
        },
        FeasibilityVerdict::Boundary => FitResult {
            status: FitStatus::BoundaryUncertain,
            m: None,
            ray: None,
            margin: f.margin,
        },
    })
}

/// β-sandwich condition: `β < vᵢᵀ(VVᵀ)⁻¹vᵢ ≤ 1` for every point.
pub fn sandwich_check(points: &PointSet, beta: f64) -> Result<bool> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::usage("beta must lie in (0, 1)"));
    }
    Ok(sandwich_forms(points)?.iter().all(|&q| q > beta && q <= 1.0 + 1e-12))
}

/// The quadratic forms `vᵢᵀ(VVᵀ)⁻¹vᵢ`.
pub fn sandwich_forms(points: &PointSet) -> Result<DVector<f64>> {
    let vvt = &points.v * points.v.transpose();
    let chol = vvt
        .clone()
        .cholesky()
        .filter(|ch| {
            let d = ch.l().diagonal();
            d.min() > 1e-12 * d.max()
        })
        .ok_or_else(|| Error::degenerate("the points do not span the ambient space"))?;
    let x = chol.solve(&points.v);
    Ok(DVector::from_iterator(
        points.n(),
        (0..points.n()).map(|i| points.v.column(i).dot(&x.column(i))),
    ))
}

/// Outcome of the boundary test for one point.
#[derive(Debug, Clone)]
pub struct HullPoint {
    pub on_boundary: bool,
    /// The LP could not be decided cleanly.
    pub uncertain: bool,
    /// Supporting functional `x` with `⟨x, vᵢ⟩ = 1`, `|⟨x, vⱼ⟩| ≤ 1`.
    pub witness: Option<DVector<f64>>,
    /// Farkas ray over the constraints of [`hull_system`] when interior.
    pub ray: Option<FarkasRay>,
}

/// Inequalities and equality describing supporting functionals at `vᵢ`:
/// `±⟨x, vⱼ⟩ ≤ 1` for `j ≠ i` (as `(vⱼ, ≤, 1), (vⱼ, ≥, −1)` pairs) and
/// `⟨x, vᵢ⟩ = 1`.
#[allow(clippy::type_complexity)]
pub fn hull_system(v: &DMatrix<f64>, i: usize) -> (Vec<(DVector<f64>, Sense, f64)>, Vec<(DVector<f64>, f64)>) {
    let mut ineq = Vec::with_capacity(2 * v.ncols());
    for j in (0..v.ncols()).filter(|&j| j != i) {
        let vj = v.column(j).into_owned();
        ineq.push((vj.clone(), Sense::Le, 1.0));
        ineq.push((vj, Sense::Ge, -1.0));
    }
    (ineq, vec![(v.column(i).into_owned(), 1.0)])
}

pub(crate) fn hull_lp(v: &DMatrix<f64>, i: usize) -> Result<LpOutcome> {
    let (ineq, eq) = hull_system(v, i);
    lp_feasible(&ineq, &eq, &Settings::default())
}

/// For each point, whether it lies on the boundary of the convex hull of
/// `±v₁, …, ±vₙ`.
pub fn hull_boundary(points: &PointSet) -> Result<Vec<HullPoint>> {
    (0..points.n())
        .map(|i| {
            let out = hull_lp(&points.v, i)?;
            Ok(HullPoint {
                on_boundary: out.feasible,
                uncertain: out.uncertain,
                witness: out.witness,
                ray: out.ray,
            })
        })
        .collect()
}

/// Region of `v` such that an ellipsoid passes through `e₁, …, e_k, v`:
/// `Σ|vⱼ| ≥ 1` and `|vᵢ| − Σ_{j≠i}|vⱼ| ≤ 1` for all `i`.
pub fn region_r(v: &[f64]) -> bool {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    l1 >= 1.0 && v.iter().all(|x| 2.0 * x.abs() - l1 <= 1.0)
}

/// Inner region `Σvⱼ² > 1` and `vᵢ² − Σ_{j≠i}vⱼ² < 1` for all `i`.
pub fn region_rprime(v: &[f64]) -> bool {
    let l2: f64 = v.iter().map(|x| x * x).sum();
    l2 > 1.0 && v.iter().all(|x| 2.0 * x * x - l2 < 1.0)
}
