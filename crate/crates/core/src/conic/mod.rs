//! Conic solver for the standard-form pair
//!
//! ```text
//! minimize ⟨C, X⟩  s.t. 𝒜(X) = b, X ⪰ 0
//! maximize ⟨b, y⟩  s.t. C − 𝒜*(y) = S, S ⪰ 0
//! ```
//!
//! over products of PSD blocks and nonnegative orthants, plus phase-I
//! feasibility with infeasibility rays and LP feasibility on the same
//! interior-point engine.

mod block;
mod feasibility;
mod ipm;
mod lp;

use nalgebra::DVector;

pub use block::{Block, BlockMat, Cone};
pub use feasibility::{psd_feasibility, Feasibility, FeasibilityVerdict};
pub use lp::{lp_feasible, FarkasRay, LpOutcome, Sense};

use crate::numerics::SymMatrix;
use crate::{Error, Result};

/// Phase-I optima with magnitude at or below this are reported as boundary
/// cases rather than decided.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl Settings {
    /// Both tolerances set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        Settings {
            feas_tol: tol,
            gap_tol: tol,
            ..Settings::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |t: f64| t > 0.0 && t < 1.0;
        if !ok(self.feas_tol) || !ok(self.gap_tol) {
            return Err(Error::usage("solver tolerances must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::usage("iteration cap must be positive"));
        }
        Ok(())
    }
}

/// A standard-form conic problem over a product of blocks.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub(crate) cones: Vec<Cone>,
    pub(crate) cost: BlockMat,
    pub(crate) constraints: Vec<BlockMat>,
    pub(crate) rhs: DVector<f64>,
}

impl ConicProblem {
    pub fn new(
        cones: Vec<Cone>,
        cost: BlockMat,
        constraints: Vec<BlockMat>,
        rhs: DVector<f64>,
    ) -> Result<Self> {
        if cones.is_empty() || cones.iter().any(|c| c.size() == 0) {
            return Err(Error::usage("every block must have positive size"));
        }
        if constraints.is_empty() {
            return Err(Error::usage("at least one constraint is required"));
        }
        if constraints.len() != rhs.len() {
            return Err(Error::usage(format!(
                "{} constraint matrices but rhs has length {}",
                constraints.len(),
                rhs.len()
            )));
        }
        if cost.cones() != cones {
            return Err(Error::usage("cost block structure does not match the cones"));
        }
        if let Some(i) = constraints.iter().position(|a| a.cones() != cones) {
            return Err(Error::usage(format!(
                "constraint {i} block structure does not match the cones"
            )));
        }
        let finite = |b: &BlockMat| b.svec().iter().all(|v| v.is_finite());
        if !finite(&cost) || !constraints.iter().all(finite) || rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("problem data has non-finite entries"));
        }
        Ok(ConicProblem {
            cones,
            cost,
            constraints,
            rhs,
        })
    }

    /// A problem with a single dense PSD block.
    pub fn dense(cost: &SymMatrix, constraints: &[SymMatrix], rhs: DVector<f64>) -> Result<Self> {
        let n = cost.dim();
        if constraints.iter().any(|a| a.dim() != n) {
            return Err(Error::usage("constraint matrices must match the cost dimension"));
        }
        Self::new(
            vec![Cone::Psd(n)],
            BlockMat::dense(cost),
            constraints.iter().map(BlockMat::dense).collect(),
            rhs,
        )
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn cost(&self) -> &BlockMat {
        &self.cost
    }

    pub fn constraints(&self) -> &[BlockMat] {
        &self.constraints
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// `𝒜(X)`.
    pub fn apply(&self, x: &BlockMat) -> DVector<f64> {
        ipm::Operator::new(self).apply(x)
    }

    /// `𝒜*(y)`.
    pub fn adjoint(&self, y: &DVector<f64>) -> BlockMat {
        ipm::Operator::new(self).adjoint(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalLimit,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: BlockMat,
    pub y: DVector<f64>,
    pub s: BlockMat,
    pub status: Status,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `‖𝒜(X) − b‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    /// `‖C − 𝒜*(y) − S‖_F / (1 + ‖C‖_F)`.
    pub dual_residual: f64,
    /// `|⟨X, S⟩| / (1 + |⟨C,X⟩| + |⟨b,y⟩|)`.
    pub gap: f64,
    pub iterations: usize,
    /// Improving dual ray `d` (`⟨b, d⟩ > 0`, `𝒜*(d) ⪯ 0`) when primal infeasible.
    pub ray: Option<DVector<f64>>,
    /// Primal ray `Z ⪰ 0`, `𝒜(Z) = 0`, `⟨C, Z⟩ < 0` when dual infeasible.
    pub primal_ray: Option<BlockMat>,
}

/// Solves the primal-dual pair. Returns [`Status::Optimal`] only when the
/// residual and gap tolerances are met; otherwise the problem is classified
/// through phase-I (primal infeasibility ray) and a normalized recession
/// problem (dual infeasibility), falling back to [`Status::NumericalLimit`]
/// with the best iterate.
pub fn solve(p: &ConicProblem, settings: &Settings) -> Result<ConicSolution> {
    settings.validate()?;
    let out = ipm::run(p, settings);
    let it = out.best;
    let mut sol = ConicSolution {
        status: Status::NumericalLimit,
        primal_objective: it.pobj,
        dual_objective: it.dobj,
        primal_residual: it.pinf,
        dual_residual: it.dinf,
        gap: it.relgap,
        iterations: out.iterations,
        x: it.x,
        y: it.y,
        s: it.s,
        ray: None,
        primal_ray: None,
    };
    if out.exit == ipm::Exit::Converged {
        sol.status = Status::Optimal;
        return Ok(sol);
    }

    let phase1 = psd_feasibility(&p.cones, &p.constraints, &p.rhs, settings, DEFAULT_BOUNDARY_TOL)?;
    match phase1.verdict {
        FeasibilityVerdict::Infeasible => {
            sol.status = Status::PrimalInfeasible;
            sol.ray = phase1.ray;
            return Ok(sol);
        }
        FeasibilityVerdict::Feasible => {
            if let Some(z) = dual_infeasibility_ray(p, settings) {
                sol.status = Status::DualInfeasible;
                sol.primal_ray = Some(z);
            }
        }
        _ => {}
    }
    Ok(sol)
}

/// Looks for `Z ⪰ 0` with `𝒜(Z) = 0`, `tr Z = 1` and `⟨C, Z⟩ < 0`.
fn dual_infeasibility_ray(p: &ConicProblem, settings: &Settings) -> Option<BlockMat> {
    let mut constraints = p.constraints.clone();
    constraints.push(BlockMat::identity(&p.cones));
    let mut rhs = DVector::zeros(constraints.len());
    rhs[constraints.len() - 1] = 1.0;
    let rec = ConicProblem::new(p.cones.clone(), p.cost.clone(), constraints, rhs).ok()?;
    let out = ipm::run(&rec, settings);
    if out.exit != ipm::Exit::Converged || out.best.pobj >= -DEFAULT_BOUNDARY_TOL {
        return None;
    }
    let z = out.best.x;
    let az = p.apply(&z);
    (az.norm() <= 1e-6 && z.min_eigenvalue() >= -1e-10).then_some(z)
}

/// Breakdown of an optimality check.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCheck {
    pub holds: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}

/// Checks primal feasibility, dual feasibility and `X S = 0`:
///
/// - `‖𝒜(X) − b‖ ≤ tol (1 + ‖b‖)` and `X ⪰ −tol`
/// - `‖C − 𝒜*(y) − S‖_F ≤ tol (1 + ‖C‖_F)` and `S ⪰ −tol`
/// - `‖X S‖_F ≤ tol (1 + ‖X‖_F ‖S‖_F)`
pub fn verify_optimality(p: &ConicProblem, sol: &ConicSolution, tol: f64) -> OptimalityCheck {
    let primal_residual = (p.apply(&sol.x) - &p.rhs).norm();
    let dual_residual = p.cost.sub(&p.adjoint(&sol.y)).sub(&sol.s).norm();
    let complementarity = sol.x.product_norm(&sol.s);
    let min_eig_x = sol.x.min_eigenvalue();
    let min_eig_s = sol.s.min_eigenvalue();
    let holds = primal_residual <= tol * (1.0 + p.rhs.norm())
        && min_eig_x >= -tol
        && dual_residual <= tol * (1.0 + p.cost.norm())
        && min_eig_s >= -tol
        && complementarity <= tol * (1.0 + sol.x.norm() * sol.s.norm());
    OptimalityCheck {
        holds,
        primal_residual,
        dual_residual,
        complementarity,
        min_eig_x,
        min_eig_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_problem() -> ConicProblem {
        let one = SymMatrix::identity(1);
        ConicProblem::dense(&one, std::slice::from_ref(&one), DVector::from_vec(vec![1.0])).unwrap()
    }

    #[test]
    fn one_by_one() {
        let p = scalar_problem();
        let sol = solve(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x.psd_block(0)[(0, 0)] - 1.0).abs() < 1e-7);
        assert!(verify_optimality(&p, &sol, 1e-7).holds);
    }

    #[test]
    fn two_by_two_elliptope_minimum() {
        // Parameterizing Y by its off-diagonal y ∈ [−1, 1], ⟨C, Y⟩ = 2y is
        // minimized at y = −1 with value −2.
        let c = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let e = |i: usize| {
            let mut m = DMatrix::zeros(2, 2);
            m[(i, i)] = 1.0;
            SymMatrix::from_dense(m).unwrap()
        };
        let p = ConicProblem::dense(&c, &[e(0), e(1)], DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let sol = solve(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal_objective + 2.0).abs() < 1e-7);
        let y = sol.x.psd_block(0);
        assert!((y[(0, 1)] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn hand_built_pair_and_perturbation() {
        let p = scalar_problem();
        let mut sol = solve(&p, &Settings::default()).unwrap();
        sol.x = BlockMat::dense(&SymMatrix::identity(1));
        sol.y = DVector::from_vec(vec![1.0]);
        sol.s = BlockMat::dense(&SymMatrix::zeros(1));
        assert!(verify_optimality(&p, &sol, 1e-9).holds);
        sol.x = BlockMat::dense(&SymMatrix::identity(1).scale(1.1));
        sol.s = BlockMat::dense(&SymMatrix::identity(1).scale(0.5));
        sol.y = DVector::from_vec(vec![0.5]);
        assert!(!verify_optimality(&p, &sol, 1e-9).holds);
    }

    #[test]
    fn ellipse_through_collinear_pair_is_primal_infeasible() {
        // v = e1, e2, (3, 0): minimize 0 subject to v_iᵀ M v_i = 1, M ⪰ 0.
        let pts = [[1.0, 0.0], [0.0, 1.0], [3.0, 0.0]];
        let a: Vec<SymMatrix> = pts
            .iter()
            .map(|v| SymMatrix::outer(&DVector::from_row_slice(v)))
            .collect();
        let p = ConicProblem::dense(&SymMatrix::zeros(2), &a, DVector::from_element(3, 1.0)).unwrap();
        let sol = solve(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::PrimalInfeasible);
        let d = sol.ray.unwrap();
        assert!(d.sum() > 0.0);
        let ad = p.adjoint(&d);
        assert!(ad.max_eigenvalue() <= 1e-8 * (1.0 + d.norm()));
    }

    #[test]
    fn unbounded_objective_is_dual_infeasible() {
        // minimize −x11 subject to x22 = 1 over 2×2 PSD: x11 can grow freely.
        let c = SymMatrix::from_rows(&[&[-1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let a = SymMatrix::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]).unwrap();
        let p = ConicProblem::dense(&c, &[a], DVector::from_vec(vec![1.0])).unwrap();
        let sol = solve(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::DualInfeasible);
        let z = sol.primal_ray.unwrap();
        assert!(p.cost().dot(&z) < 0.0);
    }

    #[test]
    fn inconsistent_dimensions_are_usage_errors() {
        let c = SymMatrix::identity(2);
        let a = SymMatrix::identity(3);
        assert!(matches!(
            ConicProblem::dense(&c, &[a], DVector::from_vec(vec![1.0])),
            Err(Error::Usage(_))
        ));
        let p = scalar_problem();
        assert!(solve(&p, &Settings::with_tol(2.0)).is_err());
    }

    #[test]
    fn deterministic() {
        let c = SymMatrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, -1.0], &[0.0, -1.0, 1.0]]).unwrap();
        let cons: Vec<SymMatrix> = (0..3)
            .map(|i| {
                let mut m = DMatrix::zeros(3, 3);
                m[(i, i)] = 1.0;
                SymMatrix::from_dense(m).unwrap()
            })
            .collect();
        let p = ConicProblem::dense(&c, &cons, DVector::from_element(3, 1.0)).unwrap();
        let a = solve(&p, &Settings::default()).unwrap();
        let b = solve(&p, &Settings::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.primal_objective.to_bits(), b.primal_objective.to_bits());
        assert_eq!(a.dual_objective.to_bits(), b.dual_objective.to_bits());
        // weak duality at the optimum
        assert!(a.primal_objective >= a.dual_objective - 1e-7 * (1.0 + a.primal_objective.abs()));
    }
}
