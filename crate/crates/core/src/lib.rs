//! Nuclear norm distribution: densities, samplers, posterior models and
//! diagnostics.
//!
//! The density of `NND(lambda)` on `n x m` real matrices is proportional to
//! `exp(-lambda ||X||_*)`. This crate provides
//!
//! - exact relations for the law ([`distributions`]): the Gamma law of the
//!   nuclear norm, the singular-value density, Haar/Stiefel factors and the
//!   normal-product approximation;
//! - MCMC kernels ([`samplers`]): proximal Langevin for the prior, the
//!   Gaussian denoising posterior and masked completion, SVD-Gibbs with
//!   matrix von Mises-Fisher conditionals, and the `lambda` hierarchy;
//! - posterior models and metrics ([`models`]);
//! - diagnostics ([`diagnostics`]): ESS, KS, Wasserstein and spectral tests.
//!
//! ```
//! use nnd::models::{run_experiment, Problem};
//! use nnd::samplers::{chain_rng, ChainConfig, LambdaMode};
//!
//! let problem = Problem::denoising(8, 8, 1, 0.1, 1);
//! let spec = problem.spec(LambdaMode::Adaptive { initial: 1.0 });
//! let cfg = ChainConfig { iterations: 2_000, burn_in: 500, seed: 1, ..Default::default() };
//! let result = run_experiment(&spec, Some(&problem.truth), &cfg, &mut chain_rng(cfg.seed, 0)).unwrap();
//! assert!(result.metrics.unwrap().mse_all.is_finite());
//! ```

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod models;
pub mod samplers;
pub mod special;

pub use error::{NndError, Result};
pub use linalg::{DenseMatrix, SvdTriple};
