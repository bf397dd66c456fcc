//! Command-line front end, file formats and the acceptance battery for
//! `carnot-core`.

pub mod catalog;
pub mod cli;
pub mod formats;
pub mod report;
pub mod suite;
