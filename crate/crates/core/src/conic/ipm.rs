//! Infeasible-start primal-dual path following with Nesterov–Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! Each iteration solves the Schur complement system `M Δy = r` with
//! `M_ij = ⟨A_i, W A_j W⟩`. Constraint blocks with few nonzeros (the
//! `diag(Y) = 1` and block-identity families) use an entry-wise formula so
//! that `M` costs `O(nnz_i · nnz_j)` per pair instead of a dense congruence.

use nalgebra::{DMatrix, DVector};

use super::block::{Block, BlockMat, Cone};
use super::{ConicProblem, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exit {
    Converged,
    MaxIter,
    Stalled,
    Diverged,
}

#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub x: BlockMat,
    pub y: DVector<f64>,
    pub s: BlockMat,
    pub pobj: f64,
    pub dobj: f64,
    pub pinf: f64,
    pub dinf: f64,
    pub relgap: f64,
}

impl Iterate {
    fn merit(&self) -> f64 {
        self.pinf.max(self.dinf).max(self.relgap)
    }

    fn converged(&self, settings: &Settings) -> bool {
        self.pinf <= settings.feas_tol
            && self.dinf <= settings.feas_tol
            && self.relgap <= settings.gap_tol
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutput {
    pub best: Iterate,
    pub exit: Exit,
    pub iterations: usize,
}

enum Coef {
    Zero,
    /// Upper-triangular entries `(p, q, v)`, `p ≤ q`; off-diagonal entries
    /// stand for `v (e_p e_qᵀ + e_q e_pᵀ)`.
    Sparse(Vec<(usize, usize, f64)>),
    Dense,
}

pub(crate) struct Operator<'a> {
    p: &'a ConicProblem,
    coefs: Vec<Vec<Coef>>,
}

impl<'a> Operator<'a> {
    pub(crate) fn new(p: &'a ConicProblem) -> Self {
        let coefs = p
            .constraints
            .iter()
            .map(|a| {
                a.blocks()
                    .iter()
                    .map(|b| match b {
                        Block::Psd(m) => classify(m),
                        Block::NonNeg(v) => {
                            if v.iter().all(|x| *x == 0.0) {
                                Coef::Zero
                            } else {
                                Coef::Dense
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        Operator { p, coefs }
    }

    /// `𝒜(X)`.
    pub(crate) fn apply(&self, x: &BlockMat) -> DVector<f64> {
        let m = self.p.constraints.len();
        DVector::from_fn(m, |i, _| {
            let a = &self.p.constraints[i];
            let mut acc = 0.0;
            for (k, coef) in self.coefs[i].iter().enumerate() {
                match coef {
                    Coef::Zero => {}
                    Coef::Sparse(entries) => {
                        let xb = x.psd_block(k);
                        for &(p, q, v) in entries {
                            acc += if p == q { v * xb[(p, p)] } else { 2.0 * v * xb[(p, q)] };
                        }
                    }
                    Coef::Dense => match (&a.blocks()[k], &x.blocks()[k]) {
                        (Block::Psd(ab), Block::Psd(xb)) => acc += ab.dot(xb),
                        (Block::NonNeg(ab), Block::NonNeg(xb)) => acc += ab.dot(xb),
                        _ => unreachable!("validated block kinds"),
                    },
                }
            }
            acc
        })
    }

    /// `𝒜*(y) = Σ y_i A_i`.
    pub(crate) fn adjoint(&self, y: &DVector<f64>) -> BlockMat {
        let mut out = BlockMat::zeros(&self.p.cones);
        for (i, a) in self.p.constraints.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for (k, coef) in self.coefs[i].iter().enumerate() {
                match (coef, &mut out.blocks_mut()[k]) {
                    (Coef::Zero, _) => {}
                    (Coef::Sparse(entries), Block::Psd(ob)) => {
                        for &(p, q, v) in entries {
                            ob[(p, q)] += yi * v;
                            if p != q {
                                ob[(q, p)] += yi * v;
                            }
                        }
                    }
                    (Coef::Dense, Block::Psd(ob)) => ob.zip_apply(a.psd_block(k), |x, v| *x += yi * v),
                    (Coef::Dense, Block::NonNeg(ob)) => ob.axpy(yi, a.nonneg_block(k), 1.0),
                    _ => unreachable!("validated block kinds"),
                }
            }
        }
        out
    }

    /// Schur complement `M_ij = ⟨A_i, W A_j W⟩`.
    fn schur(&self, scal: &[Scaling]) -> DMatrix<f64> {
        let m = self.p.constraints.len();
        let mut out = DMatrix::zeros(m, m);
        for (k, sc) in scal.iter().enumerate() {
            let nz: Vec<usize> = (0..m)
                .filter(|&i| !matches!(self.coefs[i][k], Coef::Zero))
                .collect();
            if nz.is_empty() {
                continue;
            }
            match sc {
                Scaling::NonNeg { w, .. } => {
                    let w2 = w.component_mul(w);
                    for (a, &i) in nz.iter().enumerate() {
                        let ai = self.p.constraints[i].nonneg_block(k).component_mul(&w2);
                        for &j in &nz[..=a] {
                            let v = ai.dot(self.p.constraints[j].nonneg_block(k));
                            out[(i, j)] += v;
                            if i != j {
                                out[(j, i)] += v;
                            }
                        }
                    }
                }
                Scaling::Psd { w, .. } => {
                    let all_sparse = nz
                        .iter()
                        .all(|&i| matches!(self.coefs[i][k], Coef::Sparse(_)));
                    if all_sparse {
                        for (a, &i) in nz.iter().enumerate() {
                            let Coef::Sparse(ei) = &self.coefs[i][k] else { unreachable!() };
                            for &j in &nz[..=a] {
                                let Coef::Sparse(ej) = &self.coefs[j][k] else { unreachable!() };
                                let v = sparse_pair(ei, ej, w);
                                out[(i, j)] += v;
                                if i != j {
                                    out[(j, i)] += v;
                                }
                            }
                        }
                    } else {
                        for (a, &j) in nz.iter().enumerate() {
                            let t = self.congruence(j, k, w);
                            for &i in &nz[a..] {
                                let v = self.block_dot(i, k, &t);
                                out[(i, j)] += v;
                                if i != j {
                                    out[(j, i)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `W A_j W` on PSD block `k`.
    fn congruence(&self, j: usize, k: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.coefs[j][k] {
            Coef::Zero => DMatrix::zeros(w.nrows(), w.nrows()),
            Coef::Sparse(entries) => {
                let n = w.nrows();
                let mut t = DMatrix::zeros(n, n);
                for &(p, q, v) in entries {
                    let wp = w.column(p);
                    let wq = w.column(q);
                    if p == q {
                        t.ger(v, &wp, &wp, 1.0);
                    } else {
                        t.ger(v, &wp, &wq, 1.0);
                        t.ger(v, &wq, &wp, 1.0);
                    }
                }
                t
            }
            Coef::Dense => w * self.p.constraints[j].psd_block(k) * w,
        }
    }

    /// `⟨A_i, T⟩` restricted to PSD block `k`.
    fn block_dot(&self, i: usize, k: usize, t: &DMatrix<f64>) -> f64 {
        match &self.coefs[i][k] {
            Coef::Zero => 0.0,
            Coef::Sparse(entries) => entries
                .iter()
                .map(|&(p, q, v)| if p == q { v * t[(p, p)] } else { 2.0 * v * t[(p, q)] })
                .sum(),
            Coef::Dense => self.p.constraints[i].psd_block(k).dot(t),
        }
    }
}

fn classify(m: &DMatrix<f64>) -> Coef {
    let n = m.nrows();
    let mut entries = Vec::new();
    for q in 0..n {
        for p in 0..=q {
            let v = m[(p, q)];
            if v != 0.0 {
                entries.push((p, q, v));
            }
        }
    }
    if entries.is_empty() {
        Coef::Zero
    } else if entries.len() <= n.max(2) {
        Coef::Sparse(entries)
    } else {
        Coef::Dense
    }
}

/// `⟨A_i, W A_j W⟩` for two sparse coefficient lists.
fn sparse_pair(ei: &[(usize, usize, f64)], ej: &[(usize, usize, f64)], w: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for &(p, q, u) in ei {
        for &(r, s, v) in ej {
            let term = match (p == q, r == s) {
                (true, true) => w[(p, r)] * w[(p, r)],
                (true, false) => 2.0 * w[(p, r)] * w[(p, s)],
                (false, true) => 2.0 * w[(r, p)] * w[(r, q)],
                (false, false) => 2.0 * (w[(q, r)] * w[(s, p)] + w[(q, s)] * w[(r, p)]),
            };
            acc += u * v * term;
        }
    }
    acc
}

enum Scaling {
    /// `W = G Gᵀ`, `G⁻¹ X G⁻ᵀ = Gᵀ S G = diag(λ)`.
    Psd {
        g: DMatrix<f64>,
        ginv: DMatrix<f64>,
        w: DMatrix<f64>,
        lambda: DVector<f64>,
    },
    NonNeg {
        w: DVector<f64>,
        lambda: DVector<f64>,
    },
}

fn nt_scaling(x: &BlockMat, s: &BlockMat) -> Option<Vec<Scaling>> {
    x.blocks()
        .iter()
        .zip(s.blocks())
        .map(|(xb, sb)| match (xb, sb) {
            (Block::Psd(xm), Block::Psd(sm)) => {
                let lx = xm.clone().cholesky()?.l();
                let ls = sm.clone().cholesky()?.l();
                let svd = (ls.transpose() * &lx).svd(false, true);
                let v = svd.v_t?.transpose();
                let lambda = svd.singular_values;
                if lambda.iter().any(|l| !(*l > 0.0)) {
                    return None;
                }
                let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
                let sqrt = lambda.map(f64::sqrt);
                let g = &lx * &v * DMatrix::from_diagonal(&inv_sqrt);
                let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(xm.nrows(), xm.nrows()))?;
                let ginv = DMatrix::from_diagonal(&sqrt) * v.transpose() * lx_inv;
                let w = &g * g.transpose();
                let w = 0.5 * (&w + w.transpose());
                Some(Scaling::Psd { g, ginv, w, lambda })
            }
            (Block::NonNeg(xv), Block::NonNeg(sv)) => {
                if xv.iter().chain(sv.iter()).any(|v| !(*v > 0.0)) {
                    return None;
                }
                let w = xv.zip_map(sv, |a, b| (a / b).sqrt());
                let lambda = xv.zip_map(sv, |a, b| (a * b).sqrt());
                Some(Scaling::NonNeg { w, lambda })
            }
            _ => None,
        })
        .collect()
}

/// `W R W` per block.
fn apply_w(scal: &[Scaling], r: &BlockMat) -> BlockMat {
    BlockMat::from_blocks(
        scal.iter()
            .zip(r.blocks())
            .map(|(sc, rb)| match (sc, rb) {
                (Scaling::Psd { w, .. }, Block::Psd(m)) => {
                    let t = w * m * w;
                    Block::Psd(0.5 * (&t + t.transpose()))
                }
                (Scaling::NonNeg { w, .. }, Block::NonNeg(v)) => {
                    Block::NonNeg(v.component_mul(&w.component_mul(w)))
                }
                _ => unreachable!("scaling matches blocks"),
            })
            .collect(),
    )
}

/// Right-hand side `R_c` of the linearized centrality condition
/// `ΔX + W ΔS W = R_c`.
///
/// In scaled coordinates the condition reads `Λ R + R Λ = 2σμ I − 2Λ² − corr`
/// with `corr = ΔX̃ ΔS̃ + ΔS̃ ΔX̃` from the affine step (zero for the predictor),
/// and `R_c = G R Gᵀ`.
fn centrality_rhs(
    scal: &[Scaling],
    sigma_mu: f64,
    affine: Option<(&BlockMat, &BlockMat)>,
) -> BlockMat {
    let blocks = scal
        .iter()
        .enumerate()
        .map(|(k, sc)| match sc {
            Scaling::Psd { g, ginv, lambda, .. } => {
                let n = lambda.len();
                let mut rhs = DMatrix::zeros(n, n);
                for i in 0..n {
                    rhs[(i, i)] = 2.0 * sigma_mu - 2.0 * lambda[i] * lambda[i];
                }
                if let Some((dx, ds)) = affine {
                    let dxt = ginv * dx.psd_block(k) * ginv.transpose();
                    let dst = g.transpose() * ds.psd_block(k) * g;
                    let prod = &dxt * &dst;
                    rhs -= &prod + prod.transpose();
                }
                let r = DMatrix::from_fn(n, n, |i, j| rhs[(i, j)] / (lambda[i] + lambda[j]));
                let rc = g * r * g.transpose();
                Block::Psd(0.5 * (&rc + rc.transpose()))
            }
            Scaling::NonNeg { w, lambda } => {
                let mut rhs = lambda.map(|l| 2.0 * sigma_mu - 2.0 * l * l);
                if let Some((dx, ds)) = affine {
                    let dxt = dx.nonneg_block(k).component_div(w);
                    let dst = ds.nonneg_block(k).component_mul(w);
                    rhs -= 2.0 * dxt.component_mul(&dst);
                }
                let r = rhs.component_div(&(2.0 * lambda));
                Block::NonNeg(r.component_mul(w))
            }
        })
        .collect();
    BlockMat::from_blocks(blocks)
}

/// Largest `α` with `X + α ΔX` in the cone (may be infinite).
fn max_step(x: &BlockMat, dx: &BlockMat) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.blocks().iter().zip(dx.blocks()) {
        match (xb, db) {
            (Block::Psd(xm), Block::Psd(dm)) => {
                let Some(chol) = xm.clone().cholesky() else { return 0.0 };
                let l = chol.l();
                let Some(t) = l.solve_lower_triangular(dm) else { return 0.0 };
                let Some(t) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
                let t = 0.5 * (&t + t.transpose());
                let lmin = t.symmetric_eigenvalues().min();
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
            (Block::NonNeg(xv), Block::NonNeg(dv)) => {
                for (a, d) in xv.iter().zip(dv.iter()) {
                    if *d < 0.0 {
                        alpha = alpha.min(-a / d);
                    }
                }
            }
            _ => unreachable!("matching blocks"),
        }
    }
    alpha
}

fn solve_schur(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = m.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = reg.cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

fn starting_point(p: &ConicProblem) -> (BlockMat, DVector<f64>, BlockMat) {
    let mut xb = Vec::new();
    let mut sb = Vec::new();
    let bmax = p
        .constraints
        .iter()
        .zip(p.rhs.iter())
        .map(|(a, b)| (1.0 + b.abs()) / (1.0 + a.norm()))
        .fold(0.0f64, f64::max);
    let amax = p.constraints.iter().map(BlockMat::norm).fold(0.0f64, f64::max);
    for (k, c) in p.cones.iter().enumerate() {
        let n = c.size() as f64;
        let cnorm = match &p.cost.blocks()[k] {
            Block::Psd(m) => m.norm(),
            Block::NonNeg(v) => v.norm(),
        };
        let xi = 10f64.max(n.sqrt()).max(n * bmax);
        let eta = 10f64.max(n.sqrt()).max(cnorm.max(amax));
        xb.push(match *c {
            Cone::Psd(n) => Block::Psd(DMatrix::identity(n, n) * xi),
            Cone::NonNeg(q) => Block::NonNeg(DVector::from_element(q, xi)),
        });
        sb.push(match *c {
            Cone::Psd(n) => Block::Psd(DMatrix::identity(n, n) * eta),
            Cone::NonNeg(q) => Block::NonNeg(DVector::from_element(q, eta)),
        });
    }
    (
        BlockMat::from_blocks(xb),
        DVector::zeros(p.rhs.len()),
        BlockMat::from_blocks(sb),
    )
}

fn evaluate(p: &ConicProblem, op: &Operator, x: BlockMat, y: DVector<f64>, s: BlockMat) -> Iterate {
    let rp = &p.rhs - op.apply(&x);
    let rd = p.cost.sub(&op.adjoint(&y)).sub(&s);
    let pobj = p.cost.dot(&x);
    let dobj = p.rhs.dot(&y);
    let gap = x.dot(&s);
    Iterate {
        pinf: rp.norm() / (1.0 + p.rhs.norm()),
        dinf: rd.norm() / (1.0 + p.cost.norm()),
        relgap: gap.abs() / (1.0 + pobj.abs() + dobj.abs()),
        pobj,
        dobj,
        x,
        y,
        s,
    }
}

pub(crate) fn run(p: &ConicProblem, settings: &Settings) -> IpmOutput {
    let op = Operator::new(p);
    let nu: f64 = p.cones.iter().map(|c| c.size() as f64).sum();
    let (x0, y0, s0) = starting_point(p);
    let mut it = evaluate(p, &op, x0, y0, s0);
    let mut best = it.clone();
    let mut stall = 0usize;
    let blowup = 1e12 * (1.0 + p.rhs.norm() + p.cost.norm());

    for iter in 0..settings.max_iter {
        if it.converged(settings) {
            return IpmOutput { best: it, exit: Exit::Converged, iterations: iter };
        }
        if it.x.norm() > blowup || it.s.norm() > blowup || it.y.norm() > blowup {
            return IpmOutput { best, exit: Exit::Diverged, iterations: iter };
        }

        let Some(scal) = nt_scaling(&it.x, &it.s) else {
            return IpmOutput { best, exit: Exit::Stalled, iterations: iter };
        };
        let rp = &p.rhs - op.apply(&it.x);
        let rd = p.cost.sub(&op.adjoint(&it.y)).sub(&it.s);
        let mu = it.x.dot(&it.s) / nu;
        let schur = op.schur(&scal);
        let wrdw = apply_w(&scal, &rd);
        let a_wrdw = op.apply(&wrdw);

        let direction = |rc: &BlockMat| -> Option<(BlockMat, DVector<f64>, BlockMat)> {
            let rhs = &rp - op.apply(rc) + &a_wrdw;
            let dy = solve_schur(&schur, &rhs)?;
            let ds = rd.sub(&op.adjoint(&dy));
            let dx = rc.sub(&apply_w(&scal, &ds));
            Some((dx, dy, ds))
        };

        // predictor
        let rc = centrality_rhs(&scal, 0.0, None);
        let Some((dxa, _, dsa)) = direction(&rc) else {
            return IpmOutput { best, exit: Exit::Stalled, iterations: iter };
        };
        let ap = max_step(&it.x, &dxa).min(1.0);
        let ad = max_step(&it.s, &dsa).min(1.0);
        let mut xa = it.x.clone();
        xa.axpy(ap, &dxa);
        let mut sa = it.s.clone();
        sa.axpy(ad, &dsa);
        let mu_aff = xa.dot(&sa) / nu;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).min(1.0) } else { 0.0 };
        let gamma = 0.9 + 0.09 * ap.min(ad);

        // corrector
        let rc = centrality_rhs(&scal, sigma * mu, Some((&dxa, &dsa)));
        let Some((dx, dy, ds)) = direction(&rc) else {
            return IpmOutput { best, exit: Exit::Stalled, iterations: iter };
        };
        let ap = (gamma * max_step(&it.x, &dx)).min(1.0);
        let ad = (gamma * max_step(&it.s, &ds)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            return IpmOutput { best, exit: Exit::Stalled, iterations: iter };
        }

        let mut x = it.x.clone();
        x.axpy(ap, &dx);
        let y = &it.y + &dy * ad;
        let mut s = it.s.clone();
        s.axpy(ad, &ds);
        it = evaluate(p, &op, x, y, s);

        if it.merit() < 0.95 * best.merit() {
            stall = 0;
        } else {
            stall += 1;
        }
        if it.merit() <= best.merit() {
            best = it.clone();
        }
        if stall >= 12 {
            return IpmOutput { best, exit: Exit::Stalled, iterations: iter + 1 };
        }
    }
    if it.converged(settings) {
        return IpmOutput { best: it, exit: Exit::Converged, iterations: settings.max_iter };
    }
    IpmOutput { best, exit: Exit::MaxIter, iterations: settings.max_iter }
}
