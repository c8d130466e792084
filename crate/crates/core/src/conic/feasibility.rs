//! Phase-I feasibility for `{M in K : ⟨G_c, M⟩ = h_c}`.
//!
//! The affine set is parameterized as `M(z) = M₀ + Σ z_j N_j` over a
//! nullspace basis, and the solver maximizes the smallest eigenvalue:
//! minimize `s` subject to `M(z) + s I ⪰ 0`. That problem is always strictly
//! feasible. A negative optimum yields a witness, a positive one yields a
//! ray `d` with `⟨h, d⟩ > 0` and `Σ d_c G_c ⪯ 0` read off the primal
//! variable of the phase-I problem.

use nalgebra::{DMatrix, DVector};

use super::block::{Block, BlockMat, Cone};
use super::{ipm, ConicProblem, Settings};
use crate::numerics::{lstsq, null_space};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityVerdict {
    Feasible,
    Infeasible,
    /// Neither certificate clears the boundary tolerance.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Feasibility {
    pub verdict: FeasibilityVerdict,
    /// Estimated phase-I optimum `s*` (negative when feasible).
    pub s_star: f64,
    /// Verified slack of the returned certificate: `λ_min(M)` for a witness,
    /// `⟨h, d⟩` for a ray (with `‖Σ d_c G_c‖_F = 1`).
    pub margin: f64,
    pub witness: Option<BlockMat>,
    pub ray: Option<DVector<f64>>,
}

const LINEAR_TOL: f64 = 1e-9;

/// Decides whether some `M` in the product cone satisfies `⟨G_c, M⟩ = h_c`.
pub fn psd_feasibility(
    cones: &[Cone],
    g: &[BlockMat],
    h: &DVector<f64>,
    settings: &Settings,
    boundary_tol: f64,
) -> Result<Feasibility> {
    let dim: usize = cones.iter().map(Cone::svec_len).sum();
    let mut gmat = DMatrix::zeros(g.len(), dim);
    for (c, gc) in g.iter().enumerate() {
        gmat.row_mut(c).copy_from(&gc.svec().transpose());
    }

    let m0 = lstsq(&gmat, h);
    let resid = h - &gmat * &m0;
    let combo = gmat.transpose() * &resid;
    let exact = combo.norm() <= 1e-12 * gmat.norm() * resid.norm() && h.dot(&resid) > 0.0;
    if resid.norm() > LINEAR_TOL * (1.0 + h.norm()) && exact {
        let scale = combo.norm().max(resid.norm());
        return Ok(Feasibility {
            verdict: FeasibilityVerdict::Infeasible,
            s_star: f64::INFINITY,
            margin: h.dot(&resid) / scale,
            witness: None,
            ray: Some(resid),
        });
    }

    let null = null_space(&gmat, 1e-7);
    let k = null.ncols();
    let base = BlockMat::smat(m0.as_slice(), cones);
    let cap = 1e3 * (1.0 + base.norm());

    // dual form: y = (z, s); slack = M₀ + Σ z_j N_j + s I on the original
    // cones, and s + cap ≥ 0 on an extra orthant coordinate
    let mut ext: Vec<Cone> = cones.to_vec();
    ext.push(Cone::NonNeg(1));
    let extend = |m: BlockMat, tail: f64| {
        let mut blocks = m.blocks().to_vec();
        blocks.push(Block::NonNeg(DVector::from_element(1, tail)));
        BlockMat::from_blocks(blocks)
    };
    let cost = extend(base.clone(), cap);
    let mut constraints = Vec::with_capacity(k + 1);
    for j in 0..k {
        let nj = BlockMat::smat(null.column(j).as_slice(), cones);
        constraints.push(extend(nj.scaled(-1.0), 0.0));
    }
    constraints.push(extend(BlockMat::identity(cones).scaled(-1.0), -1.0));
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = -1.0;
    let problem = ConicProblem::new(ext, cost, constraints, rhs)?;
    let out = ipm::run(&problem, settings);
    let it = out.best;
    let s_star = it.y[k];

    // witness from the dual variables
    let z = it.y.rows(0, k).into_owned();
    let mvec = &m0 + &null * &z;
    let witness = BlockMat::smat(mvec.as_slice(), cones);
    let lmin = witness.min_eigenvalue();
    let consistent = (h - &gmat * &mvec).norm() <= LINEAR_TOL * (1.0 + h.norm());
    if lmin > boundary_tol && consistent {
        return Ok(Feasibility {
            verdict: FeasibilityVerdict::Feasible,
            s_star,
            margin: lmin,
            witness: Some(witness),
            ray: None,
        });
    }

    // ray from the primal variable: X ⟂ nullspace, tr X = 1, ⟨M₀, X⟩ = −s*
    let x = BlockMat::from_blocks(it.x.blocks()[..cones.len()].to_vec());
    let d = -lstsq(&gmat.transpose(), &x.svec());
    if let Some((d, margin)) = clean_ray(g, &gmat, h, d, cones) {
        if margin > boundary_tol {
            return Ok(Feasibility {
                verdict: FeasibilityVerdict::Infeasible,
                s_star,
                margin,
                witness: None,
                ray: Some(d),
            });
        }
    }
    Ok(Feasibility {
        verdict: FeasibilityVerdict::Boundary,
        s_star,
        margin: s_star.abs(),
        witness: None,
        ray: None,
    })
}

/// Pushes `Σ d_c G_c` strictly into the negative cone by subtracting a
/// multiple of a positive combination of the PSD constraint matrices, then
/// normalizes so that `‖Σ d_c G_c‖_F = 1`. Returns the ray and `⟨h, d⟩`.
fn clean_ray(
    g: &[BlockMat],
    gmat: &DMatrix<f64>,
    h: &DVector<f64>,
    mut d: DVector<f64>,
    cones: &[Cone],
) -> Option<(DVector<f64>, f64)> {
    let combo = |d: &DVector<f64>| BlockMat::smat((gmat.transpose() * d).as_slice(), cones);
    let norm = combo(&d).norm();
    if !(norm > 0.0) {
        return None;
    }
    d /= norm;
    let lmax = combo(&d).max_eigenvalue();
    if lmax > -1e-12 {
        let w = DVector::from_iterator(
            g.len(),
            g.iter().map(|gc| if gc.min_eigenvalue() >= -1e-14 { 1.0 } else { 0.0 }),
        );
        let wmin = combo(&w).min_eigenvalue();
        if wmin > 0.0 {
            let delta = (lmax.max(0.0) + 1e-12) / wmin;
            d -= delta * &w;
        }
    }
    let norm = combo(&d).norm();
    if !(norm > 0.0) || combo(&d).max_eigenvalue() > 1e-9 * norm {
        return None;
    }
    d /= norm;
    let margin = h.dot(&d);
    Some((d, margin))
}
