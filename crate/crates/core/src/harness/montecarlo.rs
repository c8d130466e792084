//! Coherence of random Gaussian subspaces.
//!
//! A random `r`-dimensional subspace of `Rⁿ` with `r = (½ − ε)n` has
//! coherence below ½, and is therefore realizable, with probability at least
//! `1 − c̄ √n e^{−c̃ n}` once `n > 6/(ε² − 2ε³)`, where `a_ε = ε − 4ε²/3`,
//! `c̃ = a_ε(½ − ε)` and `c̄ = 1/(a_ε √(π(¼ − ε²)))`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{gaussian_matrix, stream};
use crate::conic::Settings;
use crate::elliptope::{coherence, realizability_sdp_with, Verdict};
use crate::numerics::Subspace;
use crate::{Error, Result};

/// Trials re-checked with the SDP when verification is requested.
pub const DEFAULT_SDP_SUBSAMPLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Solver tolerance for the SDP spot check.
    pub tolerance: Option<f64>,
    /// Number of trials with `μ < ½` to re-check with the SDP.
    pub verify_sdp: usize,
    /// Report progress on stderr.
    pub progress: bool,
}

impl ExperimentConfig {
    /// `r = ⌊(½ − ε) n⌋`.
    pub fn from_epsilon(n: usize, epsilon: f64, trials: usize, seed: u64) -> Self {
        let r = ((0.5 - epsilon) * n as f64).floor().max(0.0) as usize;
        ExperimentConfig {
            n,
            r,
            trials,
            seed,
            epsilon,
            tolerance: None,
            verify_sdp: 0,
            progress: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r > self.n {
            return Err(Error::usage(format!("need 0 ≤ r ≤ n, got n = {}, r = {}", self.n, self.r)));
        }
        if self.trials == 0 {
            return Err(Error::usage("trials must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::usage("epsilon must lie in (0, 1/2)"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::usage("tolerance must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub a_epsilon: f64,
    pub c_bar: f64,
    pub c_tilde: f64,
}

pub fn constants(epsilon: f64) -> Constants {
    let a = epsilon - 4.0 * epsilon * epsilon / 3.0;
    Constants {
        a_epsilon: a,
        c_bar: 1.0 / (a * (std::f64::consts::PI * (0.25 - epsilon * epsilon)).sqrt()),
        c_tilde: a * (0.5 - epsilon),
    }
}

/// `6/(ε² − 2ε³)`: the bound is stated for `n` above this.
pub fn validity_threshold(epsilon: f64) -> f64 {
    6.0 / (epsilon * epsilon - 2.0 * epsilon.powi(3))
}

/// `1 − c̄ √n e^{−c̃ n}` when `n` exceeds the validity threshold.
pub fn analytic_bound(n: usize, epsilon: f64) -> Option<f64> {
    if (n as f64) <= validity_threshold(epsilon) {
        return None;
    }
    let c = constants(epsilon);
    let nf = n as f64;
    Some(1.0 - c.c_bar * nf.sqrt() * (-c.c_tilde * nf).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub trials: usize,
    pub count_mu_below_half: usize,
    pub observed_fraction: f64,
    pub analytic_lower_bound: Option<f64>,
    pub constants: Constants,
    pub mean_coherence: f64,
    pub max_coherence: f64,
    pub sdp_checked: usize,
    pub sdp_realizable: usize,
    pub wall_time: f64,
}

/// Subspace for trial `t`: the first `r` columns of the trial's Gaussian
/// stream, so runs that differ only in `r` are nested.
pub fn trial_subspace(cfg: &ExperimentConfig, t: usize) -> Result<Subspace> {
    if cfg.r == 0 {
        return Ok(Subspace::zero(cfg.n));
    }
    let mut rng = stream(cfg.seed, t as u64);
    for _ in 0..2 {
        let u = Subspace::from_basis(&gaussian_matrix(cfg.n, cfg.r, &mut rng))?;
        if u.dim() == cfg.r {
            return Ok(u);
        }
    }
    Err(Error::degenerate(format!("trial {t}: Gaussian draw was rank deficient twice")))
}

pub fn montecarlo_coherence(cfg: &ExperimentConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let start = Instant::now();
    let done = AtomicUsize::new(0);
    let step = (cfg.trials / 10).max(1);
    let mus = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mu = coherence(&trial_subspace(cfg, t)?);
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if cfg.progress && k.is_multiple_of(step) {
                eprintln!("montecarlo: {k}/{} trials", cfg.trials);
            }
            Ok(mu)
        })
        .collect::<Result<Vec<f64>>>()?;
    let below: Vec<usize> = (0..cfg.trials).filter(|&t| mus[t] < 0.5).collect();
    let settings = cfg.tolerance.map_or_else(Settings::default, Settings::with_tol);
    let checks = below
        .iter()
        .take(cfg.verify_sdp)
        .filter(|_| cfg.r > 0)
        .map(|&t| {
            let u = trial_subspace(cfg, t)?;
            Ok(realizability_sdp_with(&u, None, &settings)?.verdict == Verdict::Realizable)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(MonteCarloReport {
        n: cfg.n,
        r: cfg.r,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        trials: cfg.trials,
        count_mu_below_half: below.len(),
        observed_fraction: below.len() as f64 / cfg.trials as f64,
        analytic_lower_bound: analytic_bound(cfg.n, cfg.epsilon),
        constants: constants(cfg.epsilon),
        mean_coherence: mus.iter().sum::<f64>() / cfg.trials as f64,
        max_coherence: mus.iter().copied().fold(0.0, f64::max),
        sdp_checked: checks.len(),
        sdp_realizable: checks.iter().filter(|&&b| b).count(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
