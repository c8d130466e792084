//! Realizability of subspaces as nullspaces of correlation matrices.
//!
//! A subspace `U ⊆ Rⁿ` is realizable when some `Y ⪰ 0` with `diag(Y) = 1`
//! satisfies `Y P_U = 0`; in the partitioned variant the diagonal blocks of
//! `Y` must be identities. Decisions are backed by certificates:
//!
//! - [`CorrelationCertificate`]: the matrix `Y` itself.
//! - [`FailureCertificate`]: a (block-)diagonal `D` with `tr D > 0` that is
//!   negative semidefinite on `U⊥`.
//!
//! Low coherence (`μ(U) < ½`) gives a constructive certificate from the
//! linear system `(P⊥∘P⊥) λ = 1`; otherwise the decision goes through the
//! ellipsoid-fitting SDP on a basis of `U⊥`.

use nalgebra::{DMatrix, DVector};

use crate::conic::Settings;
use crate::ellipsoid::{fit_blocks_with, hull_lp, FitStatus, PointSet};
use crate::numerics::{Partition, Subspace, SymMatrix};
use crate::{Error, Result};

/// Coherence threshold margin below which the constructive route is skipped.
pub const THRESHOLD_GUARD: f64 = 1e-3;

/// `μ(U) = max_i ‖P_U e_i‖²`, the largest diagonal entry of the projector.
pub fn coherence(u: &Subspace) -> f64 {
    let b = u.basis();
    (0..u.ambient())
        .map(|i| b.row(i).norm_squared())
        .fold(0.0, f64::max)
}

/// `μ_𝒫(U)`: the largest spectral norm of a diagonal block `[P_U]_ℐ`.
pub fn p_coherence(u: &Subspace, p: &Partition) -> Result<f64> {
    if p.n() != u.ambient() {
        return Err(Error::usage("partition and subspace dimensions differ"));
    }
    let proj = u.projector();
    let mut best = 0.0f64;
    for block in p.blocks() {
        let sub = proj.principal(block);
        best = best.max(sub.max_eigenvalue()?);
    }
    Ok(best)
}

fn check_nonzero(u: &DVector<f64>) -> Result<()> {
    if u.is_empty() || u.iter().all(|x| *x == 0.0) {
        return Err(Error::usage("balance is undefined for the zero vector"));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage("vector has non-finite entries"));
    }
    Ok(())
}

/// `|uᵢ| ≤ Σ_{j≠i} |uⱼ|` for all `i` (strict with `strict`).
pub fn is_balanced(u: &DVector<f64>, strict: bool) -> Result<bool> {
    check_nonzero(u)?;
    let l1: f64 = u.iter().map(|x| x.abs()).sum();
    Ok(u.iter().all(|x| {
        let rest = l1 - x.abs();
        if strict {
            x.abs() < rest
        } else {
            x.abs() <= rest
        }
    }))
}

/// `min_i (Σ_{j≠i}|uⱼ| − |uᵢ|) / ‖u‖₁`: positive iff strictly balanced.
pub fn balance_margin(u: &DVector<f64>) -> f64 {
    let l1: f64 = u.iter().map(|x| x.abs()).sum();
    if l1 == 0.0 {
        return f64::NEG_INFINITY;
    }
    u.iter()
        .map(|x| (l1 - 2.0 * x.abs()) / l1)
        .fold(f64::INFINITY, f64::min)
}

/// Block analogue of [`is_balanced`] with `‖u_ℐ‖₂` in place of `|uᵢ|`.
pub fn is_p_balanced(u: &DVector<f64>, p: &Partition, strict: bool) -> Result<bool> {
    check_nonzero(u)?;
    if p.n() != u.len() {
        return Err(Error::usage("partition and vector dimensions differ"));
    }
    let norms = block_norms(u, p);
    is_balanced(&norms, strict)
}

fn block_norms(u: &DVector<f64>, p: &Partition) -> DVector<f64> {
    DVector::from_iterator(
        p.blocks().len(),
        p.blocks()
            .iter()
            .map(|b| b.iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt()),
    )
}

/// Outcome of [`all_balanced`].
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub holds: bool,
    /// Some per-index LP could not be decided cleanly.
    pub uncertain: bool,
    /// An index `i` and `u ∈ U` with `|uᵢ| > Σ_{j≠i}|uⱼ|`.
    pub violation: Option<(usize, DVector<f64>)>,
}

/// Decides whether every `u ∈ U` is balanced: for each `i`, `vᵢ` (the `i`-th
/// row of a basis of `U⊥`) must lie on the boundary of the hull of `±vⱼ`.
/// An interior `vᵢ` yields an unbalanced vector from the LP's Farkas ray.
pub fn all_balanced(u: &Subspace) -> Result<BalanceReport> {
    let n = u.ambient();
    if u.dim() == n {
        return Err(Error::usage("U is the whole space; its complement is zero"));
    }
    if u.dim() == 0 {
        return Ok(BalanceReport { holds: true, uncertain: false, violation: None });
    }
    let v = u.complement().basis().transpose();
    let mut uncertain = false;
    for i in 0..n {
        let out = hull_lp(&v, i)?;
        uncertain |= out.uncertain;
        if out.feasible || out.uncertain {
            continue;
        }
        let Some(ray) = out.ray else { continue };
        // ray over (vⱼ ≤ 1, vⱼ ≥ −1) pairs and the equality at i
        let mut w = DVector::zeros(n);
        w[i] = ray.nu[0];
        for (pos, j) in (0..n).filter(|&j| j != i).enumerate() {
            w[j] = ray.lambda[2 * pos] - ray.lambda[2 * pos + 1];
        }
        // project onto U to remove the LP residual
        let w = u.basis() * (u.basis().transpose() * w);
        let scale = w.amax();
        if scale == 0.0 {
            uncertain = true;
            continue;
        }
        let w = w / scale;
        let rest: f64 = w.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.abs()).sum();
        if w[i].abs() > rest {
            return Ok(BalanceReport { holds: false, uncertain, violation: Some((i, w)) });
        }
        uncertain = true;
    }
    Ok(BalanceReport { holds: !uncertain, uncertain, violation: None })
}

/// `μ(U) < ½`: the squared-entry balance condition that guarantees
/// realizability.
pub fn squared_balance_check(u: &Subspace) -> bool {
    coherence(u) < 0.5
}

/// Solves `A x = y` under Walters' hypotheses (`A ≥ 0` entrywise, positive
/// diagonal, `y > 0`, `2y − A D⁻¹ y > 0` with `D = diag(A)`), which guarantee
/// that `A` is invertible and `x > 0`.
pub fn walters_solve(a: &SymMatrix, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.dim();
    if y.len() != n {
        return Err(Error::usage("right-hand side has the wrong length"));
    }
    let m = a.as_matrix();
    if let Some(((i, j), v)) = m
        .iter()
        .enumerate()
        .map(|(k, v)| ((k % n, k / n), v))
        .find(|(_, v)| **v < 0.0)
    {
        return Err(Error::precondition(format!("A[{i},{j}] = {v:.3e} is negative")));
    }
    if let Some(i) = (0..n).find(|&i| !(m[(i, i)] > 0.0)) {
        return Err(Error::precondition(format!("diagonal entry A[{i},{i}] is not positive")));
    }
    if let Some(i) = (0..n).find(|&i| !(y[i] > 0.0)) {
        return Err(Error::precondition(format!("y[{i}] is not positive")));
    }
    let dinv_y = DVector::from_fn(n, |i, _| y[i] / m[(i, i)]);
    let test = 2.0 * y - m * &dinv_y;
    if let Some(i) = (0..n).find(|&i| !(test[i] > 0.0)) {
        return Err(Error::precondition(format!(
            "2y − A·D⁻¹·y has entry {i} equal to {:.3e}, not positive",
            test[i]
        )));
    }
    let x = m
        .clone()
        .lu()
        .solve(y)
        .ok_or_else(|| Error::degenerate("the matrix is singular"))?;
    let resid = (m * &x - y).norm();
    if resid > 1e-10 * (1.0 + y.norm()) || x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NumericalFailure {
            context: "solution of the Walters system is inaccurate or not positive".into(),
            residual: resid,
        });
    }
    Ok(x)
}

/// A realizing correlation matrix: `Y ⪰ 0`, unit diagonal (identity blocks
/// in the partitioned case) and `Y P_U = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCertificate {
    pub y: SymMatrix,
}

/// Residuals of a certificate check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationCheck {
    pub min_eigenvalue: f64,
    /// Largest deviation of the constrained entries from the identity.
    pub constraint_deviation: f64,
    /// `‖Y P_U‖_F`.
    pub annihilation: f64,
}

impl CorrelationCheck {
    pub fn holds(&self) -> bool {
        self.min_eigenvalue >= -1e-8 && self.constraint_deviation <= 1e-8 && self.annihilation <= 1e-7
    }
}

impl CorrelationCertificate {
    pub fn check(&self, u: &Subspace, p: Option<&Partition>) -> CorrelationCheck {
        let n = u.ambient();
        if self.y.dim() != n {
            return CorrelationCheck {
                min_eigenvalue: f64::NAN,
                constraint_deviation: f64::INFINITY,
                annihilation: f64::INFINITY,
            };
        }
        let single = Partition::singletons(n);
        let p = p.unwrap_or(&single);
        let constraint_deviation = p
            .block_pairs()
            .iter()
            .map(|&(a, b)| (self.y.get(a, b) - if a == b { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        CorrelationCheck {
            min_eigenvalue: self.y.min_eigenvalue().unwrap_or(f64::NAN),
            constraint_deviation,
            annihilation: (self.y.as_matrix() * u.projector().as_matrix()).norm(),
        }
    }

    pub fn verify(&self, u: &Subspace, p: Option<&Partition>) -> bool {
        self.check(u, p).holds()
    }
}

/// A (block-)diagonal `D` with `tr D > 0` and `P⊥ D P⊥ ⪯ 0`, normalized to
/// unit largest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureCertificate {
    pub d: SymMatrix,
    pub partition: Partition,
}

impl FailureCertificate {
    /// The diagonal of `D` (the whole certificate in the unpartitioned case).
    pub fn diagonal(&self) -> DVector<f64> {
        self.d.diagonal()
    }

    /// `λ_max(P⊥ D P⊥) / ‖D‖_F`.
    pub fn normalized_max_eigenvalue(&self, u: &Subspace) -> f64 {
        let pc = SymMatrix::identity(u.ambient()).sub(&u.projector());
        let m = self.d.congruence(pc.as_matrix());
        m.max_eigenvalue().unwrap_or(f64::NAN) / self.d.frobenius_norm()
    }

    pub fn verify(&self, u: &Subspace) -> bool {
        self.d.dim() == u.ambient()
            && self.partition.n() == u.ambient()
            && self.partition.is_block_diagonal(self.d.as_matrix(), 0.0)
            && self.d.trace() > 0.0
            && self.normalized_max_eigenvalue(u) <= 1e-8
    }

    /// Certificate from a vector `u ∈ U` that is not 𝒫-balanced at block `ℐ`:
    /// with `a = ‖u_ℐ‖`, `s = Σ_{𝒥≠ℐ} ‖u_𝒥‖ < a` and unit block directions
    /// `ûₓ`, the matrix `D_ℐ = ûℐûℐᵀ`, `D_𝒥 = −(s/a)‖u_𝒥‖ û𝒥û𝒥ᵀ` satisfies
    /// `xᵀDx ≤ 0` on `u⊥` by Cauchy–Schwarz and `tr D = 1 − s²/a² > 0`.
    pub fn from_unbalanced(u: &DVector<f64>, p: &Partition) -> Result<Self> {
        check_nonzero(u)?;
        let norms = block_norms(u, p);
        let (k, &a) = norms
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty partition");
        let s = norms.sum() - a;
        if !(a > s) {
            return Err(Error::precondition("vector is balanced"));
        }
        let n = u.len();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for (bi, block) in p.blocks().iter().enumerate() {
            let nb = norms[bi];
            if nb == 0.0 {
                continue;
            }
            let coef = if bi == k { 1.0 } else { -(s / a) * nb / a };
            for &i in block {
                for &j in block {
                    d[(i, j)] += coef * u[i] * u[j] / (nb * nb);
                }
            }
        }
        let scale = d.amax();
        Ok(FailureCertificate {
            d: SymMatrix::from_dense(d / scale)?,
            partition: p.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    Correlation(CorrelationCertificate),
    Failure(FailureCertificate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Realizable,
    NotRealizable,
    BoundaryUncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Constructive,
    Sdp,
    BalanceNecessity,
}

#[derive(Debug, Clone)]
pub struct RealizabilityReport {
    pub verdict: Verdict,
    pub certificate: Option<Certificate>,
    pub method: Method,
    /// Certificate slack: `½ − μ` for the constructive route, the phase-I
    /// margin for the SDP route, the balance gap for the balance route.
    pub margin: f64,
}

impl RealizabilityReport {
    /// Re-verifies the attached certificate with plain linear algebra.
    pub fn verify(&self, u: &Subspace, p: Option<&Partition>) -> bool {
        match (&self.verdict, &self.certificate) {
            (Verdict::Realizable, Some(Certificate::Correlation(c))) => c.verify(u, p),
            (Verdict::NotRealizable, Some(Certificate::Failure(f))) => f.verify(u),
            (Verdict::BoundaryUncertain, None) => true,
            _ => false,
        }
    }
}

/// `Y = P⊥ diag(λ) P⊥` with `(P⊥∘P⊥) λ = 1`, `λ > 0`. Requires
/// `μ(U) < ½`.
pub fn hadamard_certificate(u: &Subspace) -> Result<CorrelationCertificate> {
    let mu = coherence(u);
    if !(mu < 0.5 - 1e-9) {
        return Err(Error::precondition(format!("coherence {mu} is not below 1/2")));
    }
    let n = u.ambient();
    let pc = SymMatrix::identity(n).sub(&u.projector());
    let a = pc.hadamard(&pc);
    let lambda = walters_solve(&a, &DVector::from_element(n, 1.0))?;
    let y = SymMatrix::from_diagonal(&lambda).congruence(pc.as_matrix());
    Ok(CorrelationCertificate { y })
}

fn check_dims(u: &Subspace, p: Option<&Partition>) -> Result<()> {
    let (n, r) = (u.ambient(), u.dim());
    if r == 0 || r == n {
        return Err(Error::usage(format!("realizability needs 0 < dim U < n, got r = {r}, n = {n}")));
    }
    if p.is_some_and(|p| p.n() != n) {
        return Err(Error::usage("partition and subspace dimensions differ"));
    }
    Ok(())
}

/// Decides (𝒫-)realizability of `U`: the constructive route when the
/// (𝒫-)coherence is clearly below ½, otherwise the ellipsoid-fitting SDP on a
/// basis of `U⊥`, with balance necessity as a tie-breaker near the boundary.
/// Every certificate is re-verified before it is returned.
pub fn realizability_certificate(u: &Subspace, p: Option<&Partition>) -> Result<RealizabilityReport> {
    realizability_certificate_with(u, p, &Settings::default())
}

pub fn realizability_certificate_with(
    u: &Subspace,
    p: Option<&Partition>,
    settings: &Settings,
) -> Result<RealizabilityReport> {
    check_dims(u, p)?;
    let mu = match p {
        Some(p) => p_coherence(u, p)?,
        None => coherence(u),
    };
    if mu < 0.5 - THRESHOLD_GUARD {
        if let Ok(cert) = hadamard_certificate(u) {
            if cert.verify(u, p) {
                return Ok(RealizabilityReport {
                    verdict: Verdict::Realizable,
                    certificate: Some(Certificate::Correlation(cert)),
                    method: Method::Constructive,
                    margin: 0.5 - mu,
                });
            }
        }
    }
    let report = realizability_sdp_with(u, p, settings)?;
    if report.verdict != Verdict::BoundaryUncertain {
        return Ok(report);
    }
    if let Some(found) = balance_refutation(u, p)? {
        return Ok(found);
    }
    Ok(report)
}

/// Looks for an unbalanced (𝒫-unbalanced) vector in `U` and turns it into a
/// failure certificate.
fn balance_refutation(u: &Subspace, p: Option<&Partition>) -> Result<Option<RealizabilityReport>> {
    let single = Partition::singletons(u.ambient());
    let part = p.unwrap_or(&single);
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    if u.dim() == 1 {
        candidates.push(u.basis().column(0).into_owned());
    } else if part.is_singletons() {
        if let Some((_, w)) = all_balanced(u)?.violation {
            candidates.push(w);
        }
    }
    for w in candidates {
        let norms = block_norms(&w, part);
        let gap = -balance_margin(&norms);
        if gap > 1e-9 {
            let cert = FailureCertificate::from_unbalanced(&w, part)?;
            if cert.verify(u) {
                return Ok(Some(RealizabilityReport {
                    verdict: Verdict::NotRealizable,
                    certificate: Some(Certificate::Failure(cert)),
                    method: Method::BalanceNecessity,
                    margin: gap,
                }));
            }
        }
    }
    Ok(None)
}

/// The SDP route alone: fits `M ⪰ 0` with `[VᵀMV]_ℐ = I` on `V = Bᵀ` for an
/// orthonormal basis `B` of `U⊥`, giving `Y = B M Bᵀ`, or a ray `D`.
pub fn realizability_sdp(u: &Subspace, p: Option<&Partition>) -> Result<RealizabilityReport> {
    realizability_sdp_with(u, p, &Settings::default())
}

pub fn realizability_sdp_with(
    u: &Subspace,
    p: Option<&Partition>,
    settings: &Settings,
) -> Result<RealizabilityReport> {
    check_dims(u, p)?;
    let n = u.ambient();
    let single = Partition::singletons(n);
    let part = p.unwrap_or(&single);
    let b = u.complement().basis().clone();
    let fit = fit_blocks_with(&PointSet::new(b.transpose())?, part, settings)?;
    let (verdict, certificate) = match fit.status {
        FitStatus::Fitted => {
            let m = fit.m.expect("fitted result carries M");
            let y = m.congruence(&b);
            let cert = CorrelationCertificate { y };
            if cert.verify(u, p) {
                (Verdict::Realizable, Some(Certificate::Correlation(cert)))
            } else {
                (Verdict::BoundaryUncertain, None)
            }
        }
        FitStatus::Infeasible => {
            let d = fit.ray.expect("infeasible result carries a ray");
            let cert = FailureCertificate { d, partition: part.clone() };
            if cert.verify(u) {
                (Verdict::NotRealizable, Some(Certificate::Failure(cert)))
            } else {
                (Verdict::BoundaryUncertain, None)
            }
        }
        FitStatus::BoundaryUncertain => (Verdict::BoundaryUncertain, None),
    };
    Ok(RealizabilityReport { verdict, certificate, method: Method::Sdp, margin: fit.margin })
}

/// `Q U` for an orthogonal `Q` that is block-diagonal along `p`.
pub fn orbit_transform(u: &Subspace, q: &DMatrix<f64>, p: &Partition) -> Result<Subspace> {
    let n = u.ambient();
    if q.nrows() != n || q.ncols() != n || p.n() != n {
        return Err(Error::usage("transform, partition and subspace dimensions differ"));
    }
    let orth = (q.transpose() * q - DMatrix::<f64>::identity(n, n)).amax();
    if orth > 1e-10 {
        return Err(Error::usage(format!("Q is not orthogonal (deviation {orth:.3e})")));
    }
    if !p.is_block_diagonal(q, 1e-10) {
        return Err(Error::usage("Q is not block-diagonal along the partition"));
    }
    u.transform(q)
}
