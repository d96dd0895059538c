//! Files, experiments, the streaming detector and the command line around
//! `slicewatch-core`.

pub mod campaign;
pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod registry;
pub mod report;
pub mod service;

pub use error::{Error, Result};
