//! Slice-level network traffic forecasting core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, the HTTP
//! replay endpoint and the command line live in the `slicecast` crate.
//!
//! Pipeline order:
//!
//! 1. [`ingest`] parses SNDlib native network and demand snapshots.
//! 2. [`preprocess`] aligns, cleans, aggregates and scales series.
//! 3. [`slicing`] routes demands with Dijkstra and groups common paths.
//! 4. [`models`] holds the decomposition/auto-correlation forecaster and its
//!    baselines, built on the [`numerics`] engine.
//! 5. [`train`] splits, windows, fits and evaluates.
//! 6. [`policy`] turns forecasts into scaling actions.
//! 7. [`telemetry`] provides the replay clock behind the metrics endpoint.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod ingest;
pub mod models;
pub mod numerics;
pub mod policy;
pub mod preprocess;
pub mod slicing;
pub mod telemetry;
pub mod train;

mod math;

/// UTC instant in whole seconds since the Unix epoch.
pub type Instant = i64;

/// Seconds in one UTC day.
pub const SECONDS_PER_DAY: i64 = 86_400;
