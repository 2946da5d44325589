//! File formats, parallel sweeps and the command-line front end built on
//! [`zigzag_core`].

#![warn(missing_docs)]
// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config_file;
pub mod image;
pub mod sweep;
pub mod tables;

pub use zigzag_core;
