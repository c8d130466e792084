//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Certificates collected along the way are re-validated at the end using
//! only eigenvalues and residuals from `numerics`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use mtfa::decompose::{is_recovered, mtfa, DecompositionResult, RECOVERY_TOL};
use mtfa::ellipsoid::{fit, region_r, region_rprime, FitStatus, PointSet};
use mtfa::elliptope::{
    coherence, is_balanced, is_p_balanced, p_coherence, realizability_certificate, realizability_sdp, Certificate,
    RealizabilityReport, Verdict,
};
use mtfa::harness::montecarlo::{montecarlo_coherence, ExperimentConfig};
use mtfa::harness::rng::{gaussian_matrix, gaussian_vector, orthogonal, stream, Stream};
use mtfa::numerics::{eig_sym, Partition, Subspace, SymMatrix};

const DECISIVE_MARGIN: f64 = 1e-6;

/// Certificates gathered for the final re-validation.
#[derive(Default)]
struct Ledger {
    correlation: Vec<(SymMatrix, Subspace, Partition)>,
    failure: Vec<(SymMatrix, Subspace, Partition)>,
    fits: Vec<(SymMatrix, DMatrix<f64>)>,
    rays: Vec<(DVector<f64>, DMatrix<f64>)>,
    decompositions: Vec<(SymMatrix, SymMatrix, SymMatrix, SymMatrix)>,
}

impl Ledger {
    fn record(&mut self, rep: &RealizabilityReport, u: &Subspace, p: Option<&Partition>) {
        let p = p.cloned().unwrap_or_else(|| Partition::singletons(u.ambient()));
        match &rep.certificate {
            Some(Certificate::Correlation(c)) => self.correlation.push((c.y.clone(), u.clone(), p)),
            Some(Certificate::Failure(f)) => self.failure.push((f.d.clone(), u.clone(), p)),
            None => {}
        }
    }

    fn record_decomposition(&mut self, x: &SymMatrix, r: &DecompositionResult) {
        self.decompositions.push((x.clone(), r.d.clone(), r.l.clone(), r.y.clone()));
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn min_eig(m: &SymMatrix) -> f64 {
    eig_sym(m).map(|e| e.values.min()).unwrap_or(f64::NAN)
}

fn max_eig(m: &SymMatrix) -> f64 {
    eig_sym(m).map(|e| e.values.max()).unwrap_or(f64::NAN)
}

/// Subspace whose rows are reweighted by log-normal factors, giving a wide
/// spread of coherences.
fn skewed_subspace(n: usize, r: usize, rng: &mut Stream) -> Subspace {
    let spread = rng.random_range(0.0..2.5);
    let g = gaussian_matrix(n, r, rng);
    let w = gaussian_vector(n, rng).map(|z| (spread * z).exp());
    Subspace::from_basis(&(DMatrix::from_diagonal(&w) * g)).unwrap()
}

fn random_truth(u: &Subspace, rng: &mut Stream) -> (SymMatrix, SymMatrix) {
    let n = u.ambient();
    let d = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
    let w = DVector::from_fn(u.dim(), |_, _| rng.random_range(0.5..2.0));
    let l = SymMatrix::from_diagonal(&w).congruence(u.basis());
    (SymMatrix::from_diagonal(&d), l)
}

fn well_conditioned(k: usize, rng: &mut Stream) -> DMatrix<f64> {
    let a = orthogonal(k, rng);
    let b = orthogonal(k, rng);
    let s = DVector::from_fn(k, |_, _| 10f64.powf(rng.random_range(-1.0..1.0)));
    a * DMatrix::from_diagonal(&s) * b
}

fn criterion_1(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let n = 8;
    let (mut decisive, mut disagree, mut realizable) = (0, 0, 0);
    let mut first_bad = String::new();
    for t in 0..200u64 {
        let mut rng = stream(101, t);
        let r = 1 + (t as usize % 4);
        let u = skewed_subspace(n, r, &mut rng);
        let rep = realizability_certificate(&u, None).unwrap();
        ledger.record(&rep, &u, None);

        let (d, l) = random_truth(&u, &mut rng);
        let x = d.add(&l);
        let dec = mtfa(&x).unwrap();
        ledger.record_decomposition(&x, &dec);
        let recovered = is_recovered(&d, &l, &dec, RECOVERY_TOL).unwrap();

        let b = u.complement().basis().clone();
        let t_mat = well_conditioned(b.ncols(), &mut rng);
        let pts = PointSet::new(&t_mat * b.transpose()).unwrap();
        let f = fit(&pts).unwrap();
        if let Some(m) = &f.m {
            ledger.fits.push((m.clone(), pts.matrix().clone()));
        }
        if let Some(dv) = f.d() {
            ledger.rays.push((dv, pts.matrix().clone()));
        }

        if rep.margin <= DECISIVE_MARGIN || rep.verdict == Verdict::BoundaryUncertain {
            continue;
        }
        decisive += 1;
        let sdp = rep.verdict == Verdict::Realizable;
        realizable += sdp as usize;
        let fitted = f.status == FitStatus::Fitted;
        if !(sdp == recovered && sdp == fitted && f.status != FitStatus::BoundaryUncertain) {
            disagree += 1;
            if first_bad.is_empty() {
                first_bad = format!(
                    "; first mismatch t={t}: sdp={sdp} recovered={recovered} fit={:?} margin={:.2e}",
                    f.status, rep.margin
                );
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: disagree == 0 && elapsed < Duration::from_secs(120) && decisive > 0,
        detail: format!(
            "{decisive}/200 decisive ({realizable} realizable), {disagree} disagreements, {:.1}s{first_bad}",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2(ledger: &mut Ledger) -> Outcome {
    let n = 20;
    let (mut accepted, mut ok, mut t) = (0, 0, 0u64);
    while accepted < 100 {
        let mut rng = stream(202, t);
        t += 1;
        let r = 2 + (t as usize % 7);
        let u = Subspace::from_basis(&gaussian_matrix(n, r, &mut rng)).unwrap();
        if coherence(&u) >= 0.5 - 1e-3 {
            continue;
        }
        accepted += 1;
        // λ from an independent dense solve of (P⊥∘P⊥) λ = 1
        let pc = DMatrix::<f64>::identity(n, n) - u.projector().as_matrix();
        let a = pc.component_mul(&pc);
        let lambda = a.lu().solve(&DVector::from_element(n, 1.0)).unwrap();
        let rep = realizability_certificate(&u, None).unwrap();
        ledger.record(&rep, &u, None);
        let Some(Certificate::Correlation(c)) = &rep.certificate else { continue };
        let y_oracle = &pc * DMatrix::from_diagonal(&lambda) * &pc;
        let matches = (c.y.as_matrix() - y_oracle).amax() < 1e-8;
        if lambda.min() >= 0.0 && matches && rep.verify(&u, None) {
            ok += 1;
        }
    }
    Outcome { pass: ok == 100, detail: format!("{ok}/100 constructive certificates valid ({t} draws)") }
}

fn criterion_3(ledger: &mut Ledger) -> Outcome {
    let mut ok = 0;
    let mut worst = 0.0f64;
    for k in 0..9 {
        let alpha = 0.55 + 0.05 * k as f64;
        let u = Subspace::span(&[DVector::from_row_slice(&[alpha.sqrt(), (1.0 - alpha).sqrt()])]).unwrap();
        let mu = coherence(&u);
        worst = worst.max((mu - alpha).abs());
        let rep = realizability_certificate(&u, None).unwrap();
        ledger.record(&rep, &u, None);
        if (mu - alpha).abs() <= 1e-12
            && rep.verdict == Verdict::NotRealizable
            && matches!(rep.certificate, Some(Certificate::Failure(_)))
        {
            ok += 1;
        }
    }
    Outcome { pass: ok == 9, detail: format!("{ok}/9 failure certificates, max |μ − α| = {worst:.1e}") }
}

fn criterion_4(ledger: &mut Ledger) -> Outcome {
    let n = 6;
    let (mut accepted, mut agree, mut balanced, mut t) = (0, 0, 0, 0u64);
    while accepted < 200 {
        let mut rng = stream(404, t);
        t += 1;
        let spread = rng.random_range(0.0..2.0);
        let v = gaussian_vector(n, &mut rng).component_mul(&gaussian_vector(n, &mut rng).map(|z| (spread * z).exp()));
        let v = v.normalize();
        let l1 = v.lp_norm(1);
        let margin = v.iter().map(|x| (l1 - 2.0 * x.abs()).abs()).fold(f64::INFINITY, f64::min);
        if margin <= 1e-4 {
            continue;
        }
        accepted += 1;
        let u = Subspace::span(std::slice::from_ref(&v)).unwrap();
        let rep = realizability_sdp(&u, None).unwrap();
        ledger.record(&rep, &u, None);
        let b = is_balanced(&v, false).unwrap();
        balanced += b as usize;
        let sdp_verdict = match rep.verdict {
            Verdict::Realizable => Some(true),
            Verdict::NotRealizable => Some(false),
            Verdict::BoundaryUncertain => None,
        };
        if sdp_verdict == Some(b) {
            agree += 1;
        }
    }
    Outcome { pass: agree == 200, detail: format!("{agree}/200 agree ({balanced} balanced)") }
}

fn criterion_5(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let (n, r) = (30, 7);
    let (mut accepted, mut t) = (0, 0u64);
    let (mut worst_err, mut worst_comp) = (0.0f64, 0.0f64);
    while accepted < 50 {
        let mut rng = stream(505, t);
        t += 1;
        let u = Subspace::from_basis(&gaussian_matrix(n, r, &mut rng)).unwrap();
        if coherence(&u) >= 0.5 {
            continue;
        }
        accepted += 1;
        let (d, l) = random_truth(&u, &mut rng);
        let x = d.add(&l);
        let dec = mtfa(&x).unwrap();
        ledger.record_decomposition(&x, &dec);
        worst_err = worst_err.max(dec.l.sub(&l).frobenius_norm() / l.frobenius_norm());
        worst_comp = worst_comp.max((dec.y.as_matrix() * dec.l.as_matrix()).norm());
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst_err <= 1e-6 && worst_comp <= 1e-6 && elapsed < Duration::from_secs(60),
        detail: format!(
            "max rel err {worst_err:.2e}, max ‖YL‖_F {worst_comp:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn sig3(x: f64) -> String {
    format!("{:.2e}", x)
}

fn criterion_6() -> Outcome {
    let cfg = ExperimentConfig { r: 50, ..ExperimentConfig::from_epsilon(200, 0.25, 500, 7) };
    let rep = montecarlo_coherence(&cfg).unwrap();
    let c_bar = 24.0 / (3.0 * std::f64::consts::PI).sqrt();
    let consts_ok = sig3(rep.constants.c_bar) == sig3(c_bar) && sig3(rep.constants.c_tilde) == sig3(1.0 / 24.0);
    let bound = rep.analytic_lower_bound.unwrap_or(f64::NAN);
    let bound_ok = (bound - 0.973).abs() < 5e-4;
    Outcome {
        pass: rep.observed_fraction >= 0.97 && consts_ok && bound_ok,
        detail: format!(
            "fraction {:.3}, bound {bound:.4}, c̄ = {:.4}, c̃ = {:.5}, {:.2}s",
            rep.observed_fraction,
            rep.constants.c_bar,
            rep.constants.c_tilde,
            rep.wall_time
        ),
    }
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

fn dist_to_ray(p: (f64, f64), a: (f64, f64), dir: (f64, f64)) -> f64 {
    let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    let t = (((p.0 - a.0) * dir.0 + (p.1 - a.1) * dir.1) / norm).max(0.0);
    ((p.0 - a.0 - t * dir.0 / norm).powi(2) + (p.1 - a.1 - t * dir.1 / norm).powi(2)).sqrt()
}

/// Distance to ∂R: the segment (1,0)–(0,1) and the rays from (1,0), (0,1)
/// along (1,1), reflected into all four quadrants.
fn dist_to_boundary(x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            let p = (sx * x, sy * y);
            best = best
                .min(dist_to_segment(p, (1.0, 0.0), (0.0, 1.0)))
                .min(dist_to_ray(p, (1.0, 0.0), (1.0, 1.0)))
                .min(dist_to_ray(p, (0.0, 1.0), (1.0, 1.0)));
        }
    }
    best
}

fn criterion_7(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let (mut decisive, mut mismatch, mut inclusion_fail, mut total) = (0, 0, 0, 0);
    let mut first_bad = String::new();
    for i in 0..=60 {
        for j in 0..=60 {
            let (x, y) = (-3.0 + 0.1 * i as f64, -3.0 + 0.1 * j as f64);
            total += 1;
            let (in_r, in_rp) = (region_r(&[x, y]), region_rprime(&[x, y]));
            if in_rp && !in_r {
                inclusion_fail += 1;
            }
            if dist_to_boundary(x, y) <= 1e-2 {
                continue;
            }
            decisive += 1;
            let pts = PointSet::new(DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, x, y])).unwrap();
            let f = fit(&pts).unwrap();
            if let Some(m) = &f.m {
                ledger.fits.push((m.clone(), pts.matrix().clone()));
            }
            if let Some(dv) = f.d() {
                ledger.rays.push((dv, pts.matrix().clone()));
            }
            let fitted = match f.status {
                FitStatus::Fitted => Some(true),
                FitStatus::Infeasible => Some(false),
                FitStatus::BoundaryUncertain => None,
            };
            if fitted != Some(in_r) {
                mismatch += 1;
                if first_bad.is_empty() {
                    first_bad = format!("; first mismatch at ({x:.1}, {y:.1}): {:?}, in_R = {in_r}", f.status);
                }
            }
        }
    }
    Outcome {
        pass: mismatch == 0 && inclusion_fail == 0,
        detail: format!(
            "{decisive}/{total} decisive points, {mismatch} mismatches, {inclusion_fail} R′⊄R, {:.1}s{first_bad}",
            start.elapsed().as_secs_f64()
        ),
    }
}

fn random_partition(n: usize, rng: &mut Stream) -> Partition {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut blocks = Vec::new();
    let mut rest = &perm[..];
    while !rest.is_empty() {
        let size = rng.random_range(1..=3.min(rest.len()));
        blocks.push(rest[..size].to_vec());
        rest = &rest[size..];
    }
    Partition::new(n, blocks).unwrap()
}

fn block_orthogonal(p: &Partition, rng: &mut Stream) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(p.n(), p.n());
    for b in p.blocks() {
        let o = orthogonal(b.len(), rng);
        for (a, &i) in b.iter().enumerate() {
            for (c, &j) in b.iter().enumerate() {
                q[(i, j)] = o[(a, c)];
            }
        }
    }
    q
}

fn criterion_8(ledger: &mut Ledger) -> Outcome {
    let (mut invariant, mut realizable, mut necessity_fail, mut uncertain) = (0, 0, 0, 0);
    let mut worst_mu = 0.0f64;
    let mut first_bad = String::new();
    for t in 0..100u64 {
        let mut rng = stream(808, t);
        let n = rng.random_range(5..=8);
        let r = rng.random_range(1..=n / 2);
        let p = random_partition(n, &mut rng);
        let u = skewed_subspace(n, r, &mut rng);
        let q = block_orthogonal(&p, &mut rng);
        let qu = u.transform(&q).unwrap();
        let a = realizability_certificate(&u, Some(&p)).unwrap();
        let b = realizability_certificate(&qu, Some(&p)).unwrap();
        ledger.record(&a, &u, Some(&p));
        ledger.record(&b, &qu, Some(&p));
        let dmu = (p_coherence(&u, &p).unwrap() - p_coherence(&qu, &p).unwrap()).abs();
        worst_mu = worst_mu.max(dmu);
        uncertain += (a.verdict == Verdict::BoundaryUncertain) as usize;
        if a.verdict == b.verdict && dmu <= 1e-9 {
            invariant += 1;
        } else if first_bad.is_empty() {
            first_bad = format!(
                "; first mismatch t={t}: {:?} ({:?}, {:.2e}) vs {:?} ({:?}, {:.2e})",
                a.verdict, a.method, a.margin, b.verdict, b.method, b.margin
            );
        }
        if a.verdict == Verdict::Realizable {
            realizable += 1;
            for _ in 0..20 {
                let w = u.basis() * gaussian_vector(r, &mut rng);
                if !is_p_balanced(&w, &p, false).unwrap() {
                    necessity_fail += 1;
                }
            }
        }
    }
    Outcome {
        pass: invariant == 100 && necessity_fail == 0,
        detail: format!(
            "{invariant}/100 invariant ({realizable} realizable, {uncertain} uncertain), max Δμ_P {worst_mu:.1e}, \
             {necessity_fail} unbalanced samples{first_bad}"
        ),
    }
}

fn criterion_9(ledger: &Ledger) -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    for (y, u, p) in &ledger.correlation {
        count += 1;
        let psd = min_eig(y) >= -1e-8;
        let diag = p
            .block_pairs()
            .iter()
            .all(|&(a, b)| (y.get(a, b) - if a == b { 1.0 } else { 0.0 }).abs() <= 1e-8);
        let null = (y.as_matrix() * u.basis()).norm() <= 1e-7;
        if !(psd && diag && null) {
            bad.push("correlation".to_string());
        }
    }
    for (d, u, p) in &ledger.failure {
        count += 1;
        let pc = DMatrix::<f64>::identity(u.ambient(), u.ambient()) - u.projector().as_matrix();
        let restricted = d.congruence(&pc);
        let block = p.is_block_diagonal(d.as_matrix(), 0.0);
        if !(d.trace() > 0.0 && max_eig(&restricted) <= 1e-8 * d.frobenius_norm() && block) {
            bad.push("failure".to_string());
        }
    }
    for (m, v) in &ledger.fits {
        count += 1;
        let forms = (v.transpose() * m.as_matrix() * v).diagonal();
        if !(min_eig(m) >= -1e-8 && forms.iter().all(|f| (f - 1.0).abs() <= 1e-7)) {
            bad.push("fit".to_string());
        }
    }
    for (d, v) in &ledger.rays {
        count += 1;
        let vdv = SymMatrix::from_dense(v * DMatrix::from_diagonal(d) * v.transpose()).unwrap();
        if !(d.sum() > 0.0 && max_eig(&vdv) <= 1e-8 * d.norm()) {
            bad.push(format!("ray (tr {:.2e}, λmax {:.2e})", d.sum(), max_eig(&vdv)));
        }
    }
    for (x, d, l, y) in &ledger.decompositions {
        count += 1;
        let n = x.dim();
        let resid = x.sub(&d.add(l)).frobenius_norm() <= 1e-9 * (1.0 + x.frobenius_norm());
        let diag_d = Partition::singletons(n).is_block_diagonal(d.as_matrix(), 0.0);
        let psd = min_eig(l) >= -1e-7 && min_eig(y) >= -1e-7;
        let unit = y.diagonal().iter().all(|v| (v - 1.0).abs() <= 1e-7);
        // strong duality: ⟨X, Y⟩ = tr D
        let gap = (x.dot(y) - d.trace()).abs() <= 1e-6 * (1.0 + d.trace().abs());
        if !(resid && diag_d && psd && unit && gap) {
            bad.push(format!(
                "decomposition (resid {resid}, diag {diag_d}, λmin L {:.2e}, λmin Y {:.2e}, unit {unit}, gap {:.2e})",
                min_eig(l),
                min_eig(y),
                x.dot(y) - d.trace()
            ));
        }
    }
    Outcome {
        pass: bad.is_empty() && count > 0,
        detail: format!(
            "{count} certificates re-validated, {} invalid{}",
            bad.len(),
            bad.first().map(|b| format!("; first: {b}")).unwrap_or_default()
        ),
    }
}

fn main() {
    let mut ledger = Ledger::default();
    let criteria: Vec<(&str, Outcome)> = vec![
        ("1 triad equivalence", criterion_1(&mut ledger)),
        ("2 coherence sufficiency", criterion_2(&mut ledger)),
        ("3 threshold sharpness", criterion_3(&mut ledger)),
        ("4 one-dimensional balance", criterion_4(&mut ledger)),
        ("5 recovery accuracy", criterion_5(&mut ledger)),
        ("6 monte carlo", criterion_6()),
        ("7 region reproduction", criterion_7(&mut ledger)),
        ("8 block symmetry", criterion_8(&mut ledger)),
    ];
    let last = criterion_9(&ledger);
    let mut failed = 0;
    for (name, o) in criteria.iter().map(|(n, o)| (*n, o)).chain([("9 certificate soundness", &last)]) {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
