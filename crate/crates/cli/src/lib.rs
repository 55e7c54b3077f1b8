//! Library surface of the command-line front end: config parsing, run
//! manifests, and the experiment drivers behind each subcommand.

pub mod config;
pub mod manifest;
pub mod run;
