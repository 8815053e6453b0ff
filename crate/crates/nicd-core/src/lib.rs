//! Exact evaluation of non-interactive correlation distillation (NICD)
//! protocols on trees, plus the analytic machinery the protocol bounds
//! rest on: Fourier analysis on the discrete cube, reversible-chain
//! spectral bounds, and Gaussian closed forms.
//!
//! The crate is organized around five subsystems:
//!
//! - [`cube`]: functions on {-1,1}^n, Walsh-Hadamard transform, the
//!   noise operator, p-norms for every real p, lazy-walk kernels;
//! - [`tree`]: NICD instances, exact protocol success probabilities by
//!   message passing, closed forms for paths and stars, monotone
//!   shifting and protocol searches;
//! - [`markov`]: reversible chains, spectral decompositions, exact
//!   stay-in-set probabilities and the spectral-gap upper bound with its
//!   equality characterization;
//! - [`gauss`]: normal cdf/quantile, the Gaussian isoperimetric
//!   function, bivariate orthants, correlated-set and random-walk lower
//!   bounds, star-majority asymptotics;
//! - [`verify`]: seeded property checks for every inequality the other
//!   modules implement, with counterexample reporting.
//!
//! All computations are deterministic; anything randomized draws from a
//! single 64-bit seed.

// Dense tables and small matrices are walked by index throughout; the
// iterator rewrites clippy suggests would obscure the stencils.
#![allow(clippy::needless_range_loop)]

pub mod cube;
pub mod gauss;
pub mod markov;
pub mod rng;
pub mod tree;
pub mod verify;
