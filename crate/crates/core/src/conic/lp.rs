//! LP feasibility with Farkas certificates, solved by the same interior-point
//! method on an orthant cone.
//!
//! Equalities are eliminated (`x = x₀ + N z`), inequalities are normalized to
//! unit rows, and the phase-I problem `min t  s.t.  g̃ᵢᵀz ≤ h̃ᵢ + t` is solved
//! in dual form. Its primal multipliers give the Farkas ray on infeasibility.

use nalgebra::{DMatrix, DVector};

use super::block::{Block, BlockMat, Cone};
use super::{ipm, ConicProblem, Settings};
use crate::numerics::{lstsq, null_space};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `aᵀx ≤ b`
    Le,
    /// `aᵀx ≥ b`
    Ge,
}

/// Certificate of infeasibility: `λ ≥ 0` on the inequalities (in `≤` form)
/// and free `ν` on the equalities with `Σ λᵢ aᵢ + Σ νⱼ eⱼ = 0` and
/// `Σ λᵢ bᵢ + Σ νⱼ cⱼ < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasRay {
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
}

impl FarkasRay {
    /// Residual `‖Σ λ a + Σ ν e‖` and the value `Σ λ b + Σ ν c`, both after
    /// normalizing `‖(λ, ν)‖₁ = 1`.
    pub fn residuals(
        &self,
        inequalities: &[(DVector<f64>, Sense, f64)],
        equalities: &[(DVector<f64>, f64)],
    ) -> (f64, f64) {
        let n = dimension(inequalities, equalities);
        let scale = self.lambda.lp_norm(1) + self.nu.lp_norm(1);
        if n == 0 || scale == 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let mut combo = DVector::zeros(n);
        let mut value = 0.0;
        for ((a, sense, b), l) in inequalities.iter().zip(self.lambda.iter()) {
            let sign = if *sense == Sense::Le { 1.0 } else { -1.0 };
            combo.axpy(sign * l, a, 1.0);
            value += sign * l * b;
        }
        for ((e, c), v) in equalities.iter().zip(self.nu.iter()) {
            combo.axpy(*v, e, 1.0);
            value += v * c;
        }
        (combo.norm() / scale, value / scale)
    }

    /// True when `λ ≥ 0`, the combination vanishes within `tol` and the
    /// right-hand side is negative beyond `tol` (relative to `‖(λ, ν)‖₁`).
    pub fn verify(
        &self,
        inequalities: &[(DVector<f64>, Sense, f64)],
        equalities: &[(DVector<f64>, f64)],
        tol: f64,
    ) -> bool {
        if self.lambda.len() != inequalities.len() || self.nu.len() != equalities.len() {
            return false;
        }
        if self.lambda.iter().any(|l| *l < 0.0) {
            return false;
        }
        let scale = 1.0
            + inequalities
                .iter()
                .map(|(a, _, _)| a.amax())
                .chain(equalities.iter().map(|(e, _)| e.amax()))
                .fold(0.0, f64::max);
        let (resid, value) = self.residuals(inequalities, equalities);
        resid <= tol * scale && value < -tol
    }
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub feasible: bool,
    pub witness: Option<DVector<f64>>,
    pub ray: Option<FarkasRay>,
    /// Phase-I optimum `t*`: the smallest uniform relaxation (in units of
    /// normalized rows) that makes the system feasible.
    pub t_star: f64,
    /// Neither a witness within `1e-8` nor a verified ray was found.
    pub uncertain: bool,
}

const BOX: f64 = 1e6;
const WITNESS_TOL: f64 = 1e-8;

fn dimension(ineq: &[(DVector<f64>, Sense, f64)], eq: &[(DVector<f64>, f64)]) -> usize {
    ineq.first()
        .map(|(a, _, _)| a.len())
        .or_else(|| eq.first().map(|(e, _)| e.len()))
        .unwrap_or(0)
}

/// Decides feasibility of `{x : aᵢᵀx (≤|≥) bᵢ, eⱼᵀx = cⱼ}`.
pub fn lp_feasible(
    inequalities: &[(DVector<f64>, Sense, f64)],
    equalities: &[(DVector<f64>, f64)],
    settings: &Settings,
) -> Result<LpOutcome> {
    let n = dimension(inequalities, equalities);
    if inequalities.is_empty() && equalities.is_empty() {
        return Err(Error::usage("at least one constraint is required"));
    }
    if n == 0
        || inequalities.iter().any(|(a, _, _)| a.len() != n)
        || equalities.iter().any(|(e, _)| e.len() != n)
    {
        return Err(Error::usage("constraint vectors must share a positive dimension"));
    }
    let finite = |v: &DVector<f64>, b: f64| b.is_finite() && v.iter().all(|x| x.is_finite());
    if !inequalities.iter().all(|(a, _, b)| finite(a, *b)) || !equalities.iter().all(|(e, c)| finite(e, *c)) {
        return Err(Error::usage("constraint data has non-finite entries"));
    }

    // ≤ form
    let rows: Vec<(DVector<f64>, f64)> = inequalities
        .iter()
        .map(|(a, s, b)| match s {
            Sense::Le => (a.clone(), *b),
            Sense::Ge => (-a, -b),
        })
        .collect();
    let p = equalities.len();
    let e = DMatrix::from_fn(p, n, |i, j| equalities[i].0[j]);
    let c = DVector::from_iterator(p, equalities.iter().map(|(_, c)| *c));

    let (x0, null) = if p == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let x0 = lstsq(&e, &c);
        let r = &c - &e * &x0;
        if r.norm() > 1e-10 * (1.0 + c.norm()) {
            return Ok(LpOutcome {
                feasible: false,
                witness: None,
                ray: Some(FarkasRay {
                    lambda: DVector::zeros(rows.len()),
                    nu: -r,
                }),
                t_star: f64::INFINITY,
                uncertain: false,
            });
        }
        (x0, null_space(&e, 1e-9))
    };
    let k = null.ncols();
    let nu_for = |lambda: &DVector<f64>| -> DVector<f64> {
        if p == 0 {
            return DVector::zeros(0);
        }
        let mut target = DVector::zeros(n);
        for ((a, _), l) in rows.iter().zip(lambda.iter()) {
            target.axpy(-l, a, 1.0);
        }
        lstsq(&e.transpose(), &target)
    };
    let to_ray = |lambda: DVector<f64>| FarkasRay {
        nu: nu_for(&lambda),
        lambda,
    };

    // reduced rows g̃ᵢ = Nᵀaᵢ / ‖Nᵀaᵢ‖, h̃ᵢ = (bᵢ − aᵢᵀx₀) / ‖Nᵀaᵢ‖
    let mut active = Vec::new();
    let mut gt = Vec::new();
    let mut ht = Vec::new();
    let mut norms = Vec::new();
    for (i, (a, b)) in rows.iter().enumerate() {
        let g = null.transpose() * a;
        let h = b - a.dot(&x0);
        let gn = g.norm();
        if gn <= 1e-12 * (1.0 + a.norm()) {
            if h < -WITNESS_TOL {
                let mut lambda = DVector::zeros(rows.len());
                lambda[i] = 1.0;
                return Ok(LpOutcome {
                    feasible: false,
                    witness: None,
                    ray: Some(to_ray(lambda)),
                    t_star: f64::INFINITY,
                    uncertain: false,
                });
            }
            continue;
        }
        active.push(i);
        gt.push(g / gn);
        ht.push(h / gn);
        norms.push(gn);
    }
    if active.is_empty() || k == 0 {
        return Ok(LpOutcome {
            feasible: true,
            witness: Some(x0),
            ray: None,
            t_star: f64::NEG_INFINITY,
            uncertain: false,
        });
    }

    // dual form over y = (z, t), slack ∈ R₊^{q + 1 + 2k}:
    //   h̃ᵢ − g̃ᵢᵀz + t ≥ 0,  t + 1 ≥ 0,  BOX ∓ z_j ≥ 0
    let q = active.len();
    let len = q + 1 + 2 * k;
    let mut cost = DVector::zeros(len);
    for i in 0..q {
        cost[i] = ht[i];
    }
    cost[q] = 1.0;
    for j in 0..2 * k {
        cost[q + 1 + j] = BOX;
    }
    let mut constraints = Vec::with_capacity(k + 1);
    for j in 0..k {
        let mut a = DVector::zeros(len);
        for i in 0..q {
            a[i] = gt[i][j];
        }
        a[q + 1 + j] = 1.0;
        a[q + 1 + k + j] = -1.0;
        constraints.push(a);
    }
    let mut at = DVector::zeros(len);
    for i in 0..=q {
        at[i] = -1.0;
    }
    constraints.push(at);
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = -1.0;
    let wrap = |v: DVector<f64>| BlockMat::from_blocks(vec![Block::NonNeg(v)]);
    let problem = ConicProblem::new(
        vec![Cone::NonNeg(len)],
        wrap(cost),
        constraints.into_iter().map(wrap).collect(),
        rhs,
    )?;
    let lp_settings = Settings {
        feas_tol: settings.feas_tol.min(1e-10),
        gap_tol: settings.gap_tol.min(1e-10),
        ..settings.clone()
    };
    let out = ipm::run(&problem, &lp_settings);
    let it = out.best;
    let t_star = it.y[k];

    let z = it.y.rows(0, k).into_owned();
    let x = &x0 + &null * z;
    let worst = rows
        .iter()
        .map(|(a, b)| (a.dot(&x) - b) / (1.0 + a.norm()))
        .fold(f64::NEG_INFINITY, f64::max);
    if t_star <= WITNESS_TOL && worst <= WITNESS_TOL {
        return Ok(LpOutcome {
            feasible: true,
            witness: Some(x),
            ray: None,
            t_star,
            uncertain: false,
        });
    }

    let xs = it.x.nonneg_block(0);
    let mut lambda = DVector::zeros(rows.len());
    for (pos, &i) in active.iter().enumerate() {
        lambda[i] = xs[pos].max(0.0) / norms[pos];
    }
    let ray = to_ray(lambda);
    if t_star > WITNESS_TOL && ray.verify(inequalities, equalities, WITNESS_TOL) {
        return Ok(LpOutcome {
            feasible: false,
            witness: None,
            ray: Some(ray),
            t_star,
            uncertain: false,
        });
    }
    Ok(LpOutcome {
        feasible: t_star <= WITNESS_TOL,
        witness: (t_star <= WITNESS_TOL).then_some(x),
        ray: None,
        t_star,
        uncertain: true,
    })
}
