//! Seeded random instances.
//!
//! Every random path draws from a ChaCha8 stream selected by `(seed, stream)`,
//! so parallel trials are reproducible regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::Subspace;
use crate::{Error, Result};

pub type Stream = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n × r` standard Gaussian matrix filled column by column, so the first
/// `r` columns of a wider draw from the same stream coincide.
pub fn gaussian_matrix<R: Rng>(n: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    let data: Vec<f64> = (0..n * r).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(n, r, data)
}

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Column space of an `n × r` Gaussian matrix. A rank-deficient draw is
/// redrawn once.
pub fn sample_subspace<R: Rng>(n: usize, r: usize, rng: &mut R) -> Result<Subspace> {
    if r > n || n == 0 {
        return Err(Error::usage(format!("need 0 ≤ r ≤ n and n ≥ 1, got n = {n}, r = {r}")));
    }
    if r == 0 {
        return Ok(Subspace::zero(n));
    }
    for _ in 0..2 {
        let u = Subspace::from_basis(&gaussian_matrix(n, r, rng))?;
        if u.dim() == r {
            return Ok(u);
        }
    }
    Err(Error::degenerate("Gaussian draw was rank deficient twice"))
}

/// Random `n × n` orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
