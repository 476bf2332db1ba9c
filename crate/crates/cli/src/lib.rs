//! Command-line surface for the `nnd` library: matrix IO (headerless CSV,
//! binary PGM), run manifests, and one function per subcommand.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{CliError, CliResult};
