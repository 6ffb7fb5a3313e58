//! Command-line front end for `elastoray-core`: JSON configs, SGF field files,
//! CSV tables, run manifests and plot-data bundles.

pub mod cli;
pub mod config;
pub mod error;
pub mod fanfile;
pub mod manifest;
pub mod plot;
pub mod sgf;
pub mod tables;
