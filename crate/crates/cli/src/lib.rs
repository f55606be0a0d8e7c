//! Command-line front end for `psi-core`: file-based setup, a TCP demo
//! service, a query client and the benchmark harness.

pub mod bench;
pub mod error;
pub mod input;
pub mod keyfile;
pub mod net;

pub use error::{CliError, Result};
