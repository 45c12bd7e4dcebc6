//! IO companion for the latentflow core: file formats, run configuration,
//! manifests, SVG plots and the command implementations behind the CLI.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
pub mod manifest;
pub mod plot;
pub mod pool;
