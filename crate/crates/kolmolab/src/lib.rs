//! Desk-scale numerical laboratory for the elliptic Kolmogorov operator
//! `-div(a grad u) + b . grad u` with singular, divergence-free-type drifts.
//!
//! The crate estimates form-bound constants of drifts and potentials as
//! discrete variational suprema, builds Friedrichs mollifications that
//! preserve those bounds, solves Dirichlet problems in weak form, and
//! measures Caccioppoli / Harnack / Hoelder / reverse-Hoelder constants on
//! the solutions. A config-driven runner ties the pieces into reproducible
//! batteries; see the `examples/` directory for one runnable entry point per
//! capability.

pub mod approximation;
pub mod error;
pub mod fields;
pub mod formbounds;
pub mod config;
pub mod cutoff;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mollify;
pub mod regularity;
pub mod runner;
pub mod solver;

pub use error::{Error, Result};

/// Sizes the global worker pool from `KOLMOLAB_THREADS`. Safe to call more
/// than once; only the first call configures the pool.
pub fn init_threads() {
    if let Ok(v) = std::env::var("KOLMOLAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
