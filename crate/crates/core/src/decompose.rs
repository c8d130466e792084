//! Diagonal + low-rank and block-diagonal + low-rank decomposition.
//!
//! Both programs are solved through their correlation-matrix form
//!
//! ```text
//! minimize ⟨X, Y⟩  s.t.  blkdiag_𝒫(Y) = (I, …, I),  Y ⪰ 0
//! ```
//!
//! whose dual is `maximize tr B  s.t.  X − B ⪰ 0` over block-diagonal `B`.
//! The block-diagonal part is read off the dual multipliers and
//! `L = X − B`, so `B + L = X` holds to roundoff.

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProblem, Settings, Status};
use crate::numerics::{lstsq, numerical_rank, Partition, SymEigen, SymMatrix, DEFAULT_RANK_TOL};
use crate::{Error, Result};

/// Default relative Frobenius tolerance for [`is_recovered`].
pub const RECOVERY_TOL: f64 = 1e-6;

/// Certificates with margin below this are flagged as near the boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// Diagonal or block-diagonal part.
    pub d: SymMatrix,
    /// PSD low-rank part, `L = X − D`.
    pub l: SymMatrix,
    pub trace_l: f64,
    /// Dual certificate: `Y ⪰ 0` with unit diagonal (identity diagonal blocks).
    pub y: SymMatrix,
    pub status: Status,
    /// `‖Y L‖_F`.
    pub complementarity_residual: f64,
    /// Dual objective `⟨X, I − Y⟩`, which equals `tr L` at optimality.
    pub dual_objective: f64,
    /// `λ_min(Y + L)`: strict complementarity slack.
    pub margin: f64,
    /// Set when `margin` is below [`BOUNDARY_MARGIN`].
    pub boundary: bool,
    /// Solver converged and the decomposition re-verifies: `L ⪰ 0`, `Y` dual
    /// feasible and `‖Y L‖_F` small.
    pub certified: bool,
    pub partition: Partition,
}

impl DecompositionResult {
    /// Diagonal of `D`.
    pub fn diagonal(&self) -> DVector<f64> {
        self.d.diagonal()
    }

    /// The decomposed input, `D + L`.
    pub fn input(&self) -> SymMatrix {
        self.d.add(&self.l)
    }

    pub fn rank_l(&self, rank_tol: f64) -> usize {
        numerical_rank(&self.l, rank_tol).unwrap_or(0)
    }
}

/// Settings used by [`mtfa`] and [`bmtfa`]; slightly tighter than the solver
/// defaults so that recovered factors are accurate to about `1e-7`.
pub fn default_settings() -> Settings {
    Settings::with_tol(1e-9)
}

/// Minimum trace factor analysis: `X = diag(d) + L` with `L ⪰ 0` of minimum
/// trace.
pub fn mtfa(x: &SymMatrix) -> Result<DecompositionResult> {
    bmtfa_with(x, &Partition::singletons(x.dim()), &default_settings())
}

pub fn mtfa_with(x: &SymMatrix, settings: &Settings) -> Result<DecompositionResult> {
    bmtfa_with(x, &Partition::singletons(x.dim()), settings)
}

/// Block MTFA: `X = B + L` with `B` block-diagonal along `p` and `L ⪰ 0` of
/// minimum trace.
pub fn bmtfa(x: &SymMatrix, p: &Partition) -> Result<DecompositionResult> {
    bmtfa_with(x, p, &default_settings())
}

pub fn bmtfa_with(x: &SymMatrix, p: &Partition, settings: &Settings) -> Result<DecompositionResult> {
    let n = x.dim();
    if p.n() != n {
        return Err(Error::usage(format!(
            "partition covers {} indices but the matrix is {n}x{n}",
            p.n()
        )));
    }
    let scale = x.as_matrix().amax().max(f64::MIN_POSITIVE);
    let xs = x.scale(1.0 / scale);
    let pairs = p.block_pairs();
    let constraints: Vec<SymMatrix> = pairs
        .iter()
        .map(|&(a, b)| {
            let mut m = DMatrix::zeros(n, n);
            if a == b {
                m[(a, a)] = 1.0;
            } else {
                m[(a, b)] = 0.5;
                m[(b, a)] = 0.5;
            }
            SymMatrix::from_dense(m).expect("square")
        })
        .collect();
    let rhs = DVector::from_iterator(pairs.len(), pairs.iter().map(|(a, b)| if a == b { 1.0 } else { 0.0 }));
    let problem = ConicProblem::dense(&xs, &constraints, rhs)?;
    let sol = conic::solve(&problem, settings)?;

    let mut delta = sol.y.clone();
    let mut y = SymMatrix::from_dense(sol.x.psd_block(0).clone())?;
    if sol.status == Status::Optimal {
        if let Some((d, yp)) = polish_face(&xs, &y, &delta, &constraints, problem.rhs()) {
            delta = d;
            y = yp;
        }
    }
    let b = SymMatrix::from_dense(problem.adjoint(&delta).to_dense().into_inner())?;
    let d = b.scale(scale);
    let l = x.sub(&d);
    let trace_l = l.trace();
    let complementarity_residual = (y.as_matrix() * l.as_matrix()).norm();
    let margin = y.add(&l.scale(1.0 / scale)).min_eigenvalue().unwrap_or(f64::NAN);
    let dual_feasible = constraints
        .iter()
        .zip(problem.rhs().iter())
        .all(|(c, &r)| (c.dot(&y) - r).abs() <= 1e-8)
        && y.min_eigenvalue().is_ok_and(|e| e >= -1e-8);
    let certified = sol.status == Status::Optimal
        && dual_feasible
        && l.min_eigenvalue().is_ok_and(|e| e >= -1e-8 * (1.0 + scale))
        && complementarity_residual <= 1e-6 * (1.0 + l.frobenius_norm());
    Ok(DecompositionResult {
        d,
        trace_l,
        dual_objective: x.trace() - x.dot(&y),
        complementarity_residual,
        boundary: !(margin >= BOUNDARY_MARGIN),
        margin,
        certified,
        status: sol.status,
        l,
        y,
        partition: p.clone(),
    })
}

/// Newton refinement on the optimal face. With `W` spanning the range of
/// `Y`, the optimum solves
///
/// ```text
/// (X − Σ δ_c E_c) W = 0,   ⟨E_c, W M Wᵀ⟩ = b_c
/// ```
///
/// in `δ`, `W = W₀ + N K` and symmetric `M`. Damped Gauss-Newton from the solver's
/// iterate; returns the refined `(δ, Y)` only if `Y ⪰ 0`, `X − B ⪰ 0`, the
/// constraints hold and `‖Y L‖_F` decreased.
fn polish_face(
    x: &SymMatrix,
    y: &SymMatrix,
    delta: &DVector<f64>,
    constraints: &[SymMatrix],
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, SymMatrix)> {
    let n = x.dim();
    let e = y.eig().ok()?;
    let top = e.values[0].max(1.0);
    let s0 = (0..n).filter(|&i| e.values[i] > POLISH_RANK_TOL * top).count();
    let mut best: Option<(DVector<f64>, SymMatrix, f64)> = None;
    for s in [s0, s0.wrapping_sub(1), s0 + 1] {
        if s == 0 || s > n {
            continue;
        }
        if let Some(found) = polish_rank(x, y, &e, s, delta, constraints, rhs) {
            let converged = found.2 <= 1e-12 * (1.0 + x.frobenius_norm());
            if best.as_ref().is_none_or(|b| found.2 < b.2) {
                best = Some(found);
            }
            if converged {
                break;
            }
        }
    }
    best.map(|(d, y, _)| (d, y))
}

/// [`polish_face`] with the rank of `Y` fixed at `s`; also returns the final
/// `‖Y L‖_F`.
fn polish_rank(
    x: &SymMatrix,
    y: &SymMatrix,
    e: &SymEigen,
    s: usize,
    delta: &DVector<f64>,
    constraints: &[SymMatrix],
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, SymMatrix, f64)> {
    let n = x.dim();
    let mc = constraints.len();
    let top = e.values[0].max(1.0);
    let r = n - s;
    let nm = s * (s + 1) / 2;
    let (rows, cols) = (n * s + mc, mc + r * s + nm);
    if rows * cols > POLISH_MAX_ENTRIES {
        return None;
    }
    let w0 = e.vectors.columns(0, s).into_owned();
    let null = e.vectors.columns(s, r).into_owned();
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|a| (a..s).map(move |b| (a, b))).collect();

    let combine = |d: &DVector<f64>| {
        constraints
            .iter()
            .zip(d.iter())
            .fold(DMatrix::zeros(n, n), |acc, (c, dc)| acc + c.as_matrix() * *dc)
    };
    let unpack = |z: &DVector<f64>| {
        let d = z.rows(0, mc).into_owned();
        let k = DMatrix::from_column_slice(r, s, z.rows(mc, r * s).as_slice());
        let mut m = DMatrix::zeros(s, s);
        for (idx, &(a, b)) in pairs.iter().enumerate() {
            m[(a, b)] = z[mc + r * s + idx];
            m[(b, a)] = z[mc + r * s + idx];
        }
        (d, &w0 + &null * k, m)
    };
    let residual = |z: &DVector<f64>| {
        let (d, w, m) = unpack(z);
        let lw = (x.as_matrix() - combine(&d)) * &w;
        let ywm = &w * m * w.transpose();
        let mut f = DVector::zeros(rows);
        f.rows_mut(0, n * s).copy_from_slice(lw.as_slice());
        for (c, con) in constraints.iter().enumerate() {
            f[n * s + c] = con.as_matrix().dot(&ywm) - rhs[c];
        }
        f
    };

    let m0 = w0.transpose() * y.as_matrix() * &w0;
    let mut z = DVector::zeros(cols);
    z.rows_mut(0, mc).copy_from(delta);
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        z[mc + r * s + idx] = m0[(a, b)];
    }
    let mut f = residual(&z);
    for _ in 0..POLISH_ITERS {
        let (d, w, m) = unpack(&z);
        let l = x.as_matrix() - combine(&d);
        let ln = &l * &null;
        let mut jac = DMatrix::zeros(rows, cols);
        for (c, con) in constraints.iter().enumerate() {
            let ew = con.as_matrix() * &w;
            for (i, v) in ew.iter().enumerate() {
                jac[(i, c)] = -v;
            }
            let dk = null.transpose() * &ew * &m * 2.0;
            for (i, v) in dk.iter().enumerate() {
                jac[(n * s + c, mc + i)] = *v;
            }
            let wew = w.transpose() * &ew;
            for (idx, &(a, b)) in pairs.iter().enumerate() {
                let v = if a == b { wew[(a, a)] } else { 2.0 * wew[(a, b)] };
                jac[(n * s + c, mc + r * s + idx)] = v;
            }
        }
        for p in 0..r {
            for q in 0..s {
                for i in 0..n {
                    jac[(q * n + i, mc + q * r + p)] = ln[(i, p)];
                }
            }
        }
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        let damping = 1e-12 * normal.diagonal().max().max(1.0);
        for i in 0..cols {
            normal[(i, i)] += damping;
        }
        let step = match normal.cholesky() {
            Some(ch) => ch.solve(&-(&jt * &f)),
            None => lstsq(&jac, &(-&f)),
        };
        let next = &z + step;
        let fn_next = residual(&next);
        if !(fn_next.norm() < f.norm()) {
            break;
        }
        z = next;
        f = fn_next;
        if f.norm() <= 1e-15 * (1.0 + x.frobenius_norm()) {
            break;
        }
    }

    let (d, w, m) = unpack(&z);
    let y_new = SymMatrix::from_dense(&w * m * w.transpose()).ok()?;
    let l_new = SymMatrix::from_dense(x.as_matrix() - combine(&d)).ok()?;
    let l_old = SymMatrix::from_dense(x.as_matrix() - combine(delta)).ok()?;
    let feasible = constraints
        .iter()
        .zip(rhs.iter())
        .all(|(c, b)| (c.dot(&y_new) - b).abs() <= 1e-10);
    let psd = y_new.min_eigenvalue().ok()? >= -1e-12 * top
        && l_new.min_eigenvalue().ok()? >= -1e-12 * (1.0 + x.frobenius_norm());
    let before = (y.as_matrix() * l_old.as_matrix()).norm();
    let after = (y_new.as_matrix() * l_new.as_matrix()).norm();
    (feasible && psd && after < before).then_some((d, y_new, after))
}

/// Relative eigenvalue level above which a direction is treated as in the
/// range of `Y` during polishing.
const POLISH_RANK_TOL: f64 = 1e-6;

const POLISH_ITERS: usize = 8;

/// Largest Jacobian (in entries) the face refinement will form.
const POLISH_MAX_ENTRIES: usize = 4_000_000;

/// `true` when the recovered `L` matches `l_true` within
/// `tol · (1 + ‖L_true‖_F)` in Frobenius norm.
pub fn is_recovered(
    d_true: &SymMatrix,
    l_true: &SymMatrix,
    result: &DecompositionResult,
    tol: f64,
) -> Result<bool> {
    let n = result.l.dim();
    if d_true.dim() != n || l_true.dim() != n {
        return Err(Error::usage("ground truth dimensions do not match the result"));
    }
    let x = result.input();
    let mismatch = d_true.add(l_true).sub(&x).frobenius_norm();
    if mismatch > tol.max(1e-9) * (1.0 + x.frobenius_norm()) {
        return Err(Error::usage(format!(
            "ground truth does not add up to the decomposed matrix (off by {mismatch:.3e})"
        )));
    }
    Ok(result.l.sub(l_true).frobenius_norm() <= tol * (1.0 + l_true.frobenius_norm()))
}

/// Default rank tolerance used when reporting `rank(L)`.
pub const RANK_TOL: f64 = DEFAULT_RANK_TOL;

/// Checks that `y` is a valid dual certificate for the partition: `Y ⪰ −tol`
/// and `blkdiag_𝒫(Y) = I` within `tol`.
pub fn dual_feasible(y: &SymMatrix, p: &Partition, tol: f64) -> bool {
    let blk = p.block_diagonal_part(y);
    let dev = blk.sub(&SymMatrix::identity(y.dim())).as_matrix().amax();
    dev <= tol && y.min_eigenvalue().map(|l| l >= -tol).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(n: usize) -> SymMatrix {
        SymMatrix::ones(n)
    }

    #[test]
    fn diagonal_input_has_zero_low_rank_part() {
        let x = SymMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let r = mtfa(&x).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(r.trace_l.abs() < 1e-7);
        assert!(r.d.sub(&x).frobenius_norm() < 1e-7);
        assert!(is_recovered(&x, &SymMatrix::zeros(3), &r, 1e-6).unwrap());
    }

    #[test]
    fn ones_plus_identity() {
        let x = j(3).add(&SymMatrix::identity(3));
        let r = mtfa(&x).unwrap();
        assert!(r.certified);
        assert!(r.d.sub(&SymMatrix::identity(3)).frobenius_norm() < 1e-7);
        assert!(r.l.sub(&j(3)).frobenius_norm() < 1e-7);
        // Y = 1.5 (I − J/3) annihilates the ones vector and has unit diagonal
        let y_expected = SymMatrix::identity(3).sub(&j(3).scale(1.0 / 3.0)).scale(1.5);
        assert!(r.y.sub(&y_expected).frobenius_norm() < 1e-6);
        assert!((r.trace_l - r.dual_objective).abs() < 1e-6 * (1.0 + r.trace_l.abs()));
        assert!(is_recovered(&SymMatrix::identity(3), &j(3), &r, 1e-6).unwrap());
        assert!(dual_feasible(&r.y, &Partition::singletons(3), 1e-8));
    }

    #[test]
    fn unbalanced_rank_one_is_not_recovered() {
        let u = DVector::from_vec(vec![3f64.sqrt() / 2.0, 0.5]);
        let x = SymMatrix::outer(&u);
        let r = mtfa(&x).unwrap();
        // 2×2 oracle: maximizing d1 + d2 subject to uuᵀ − diag(d) ⪰ 0 gives
        // (u1 − u2)², so tr L = 1 − (u1 − u2)² = u1 u2 · 2 = √3/2.
        let oracle = 1.0 - (u[0] - u[1]).powi(2);
        assert!((oracle - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((r.trace_l - oracle).abs() < 1e-6);
        assert!(!is_recovered(&SymMatrix::zeros(2), &x, &r, 1e-6).unwrap());
    }

    #[test]
    fn singleton_partition_matches_mtfa() {
        let x = SymMatrix::from_rows(&[&[2.0, 0.5, 0.3], &[0.5, 1.5, -0.2], &[0.3, -0.2, 1.0]]).unwrap();
        let a = mtfa(&x).unwrap();
        let b = bmtfa(&x, &Partition::singletons(3)).unwrap();
        assert!(a.l.sub(&b.l).frobenius_norm() < 1e-7);
    }

    #[test]
    fn whole_block_absorbs_everything() {
        let x = SymMatrix::from_rows(&[&[2.0, 0.5, 0.3], &[0.5, 1.5, -0.2], &[0.3, -0.2, 1.0]]).unwrap();
        let r = bmtfa(&x, &Partition::whole(3)).unwrap();
        assert!(r.d.sub(&x).frobenius_norm() < 1e-7);
        assert!(r.l.frobenius_norm() < 1e-7);
    }

    #[test]
    fn block_decomposition_of_ones_with_unbalanced_blocks() {
        // 1₃ is not balanced for {{1,2},{3}} (‖u₁₂‖ = √2 > 1 = ‖u₃‖), so the
        // block program does not return J. Among L = wwᵀ with w = (t, t, s)
        // matching the off-block entries (ts = 1), tr L = 2t² + 1/t² is
        // minimized at t² = 1/√2 with value 2√2.
        let blk = SymMatrix::from_rows(&[&[1.0, 0.5, 0.0], &[0.5, 1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        let x = j(3).add(&blk);
        let p = Partition::from_one_based(3, vec![vec![1, 2], vec![3]]).unwrap();
        let r = bmtfa(&x, &p).unwrap();
        assert!((r.trace_l - 2.0 * 2f64.sqrt()).abs() < 1e-6);
        assert!(!is_recovered(&blk, &j(3), &r, 1e-6).unwrap());
        assert!(dual_feasible(&r.y, &p, 1e-8));
        assert!(p.is_block_diagonal(r.d.as_matrix(), 1e-12));
    }

    #[test]
    fn block_recovery_of_ones() {
        // for pairs {1,2},{3,4},{5,6} the block coherence of span{1₆} is 1/3
        let blk = SymMatrix::from_rows(&[
            &[2.0, 0.7, 0.0, 0.0, 0.0, 0.0],
            &[0.7, 1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.5, -0.4, 0.0, 0.0],
            &[0.0, 0.0, -0.4, 1.2, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 1.0, 0.3],
            &[0.0, 0.0, 0.0, 0.0, 0.3, 3.0],
        ])
        .unwrap();
        let x = j(6).add(&blk);
        let p = Partition::from_one_based(6, vec![vec![1, 2], vec![3, 4], vec![5, 6]]).unwrap();
        let r = bmtfa(&x, &p).unwrap();
        assert!(r.certified);
        assert!(is_recovered(&blk, &j(6), &r, 1e-6).unwrap());
        assert!(dual_feasible(&r.y, &p, 1e-8));
    }

    #[test]
    fn mismatched_truth_is_a_usage_error() {
        let x = SymMatrix::identity(2);
        let r = mtfa(&x).unwrap();
        assert!(is_recovered(&SymMatrix::identity(3), &SymMatrix::zeros(3), &r, 1e-6).is_err());
        assert!(is_recovered(&SymMatrix::zeros(2), &SymMatrix::zeros(2), &r, 1e-6).is_err());
    }
}
