//! Configuration, dataset files and run manifests.

mod config;
mod manifest;
mod tables;

pub use config::*;
pub use manifest::*;
pub use tables::*;
