//! Campaign server and operator CLI.
//!
//! - [`auth`]: token sessions and the blinding policy
//! - [`http`]: the JSON/CSV API served by `fmeca serve`
//! - [`cli`]: the `fmeca` command line
//! - [`error`]: error classes, HTTP statuses and exit codes

pub mod auth;
pub mod cli;
pub mod error;
pub mod http;

pub use error::ServiceError;
