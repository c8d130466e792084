//! Diagonal and block-diagonal plus low-rank decompositions by minimum trace
//! factor analysis, together with the two geometric problems it is equivalent
//! to: realizability of subspaces as faces of the elliptope, and fitting a
//! centered ellipsoid exactly through a set of points.
//!
//! Every decision the library makes is backed by a certificate that can be
//! checked with plain linear algebra: a correlation matrix annihilating the
//! subspace, or a diagonal (block-diagonal) matrix separating the elliptope
//! from the matrices whose nullspace contains it.
//!
//! Module map:
//!
//! - [`numerics`]: symmetric matrices, subspaces, partitions, eigensolver.
//! - [`conic`]: primal-dual interior-point solver for block SDPs and LPs,
//!   phase-I feasibility and infeasibility rays.
//! - [`decompose`]: MTFA and block MTFA.
//! - [`elliptope`]: coherence, balance, constructive and SDP certificates.
//! - [`ellipsoid`]: ellipsoid fitting, sandwich condition, hull tests, regions.
//! - [`harness`]: CSV/JSON I/O, seeded sampling, Monte Carlo, CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod decompose;
pub mod ellipsoid;
pub mod elliptope;
mod error;
pub mod harness;
pub mod numerics;

pub use error::{Error, Result};
