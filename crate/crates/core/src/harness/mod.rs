//! File formats, seeded instance generation, the Monte Carlo experiment and
//! the command-line interface.

pub mod cli;
pub mod io;
pub mod montecarlo;
pub mod rng;
