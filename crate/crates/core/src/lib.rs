//! Weak-link signal scanner for npm-style registry metadata.
//!
//! The pipeline is ingest, exclusion, indexing, the six signal analyzers and
//! the combination engine. [`scan::run_scan`] drives all of it; [`synth`]
//! builds corpora with a known answer.

pub mod combination;
pub mod config;
pub mod exclusion;
pub mod ingest;
pub mod providers;
pub mod reach;
pub mod report;
pub mod scan;
pub mod signals;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;
