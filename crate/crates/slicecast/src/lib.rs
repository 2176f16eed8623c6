//! Files, command line and HTTP replay around [`slicecast_core`].
//!
//! The core crate holds every algorithm; this crate adds what needs an
//! operating system: reading SNDlib archives from disk, artifact formats,
//! checkpoints, the run configuration, the bundled sample dataset and the
//! metrics endpoint.

pub mod archive;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod policy_doc;
pub mod replay;
pub mod sample;
pub mod stages;

pub use error::{Error, Result};
pub use slicecast_core;
