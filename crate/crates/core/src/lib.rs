//! Precinct-level election forensics.
//!
//! The crate is organised around an immutable [`Dataset`] of polling-station
//! records. Every analysis is a pure function over it:
//!
//! * [`histogram`]: station-voting diagrams and turnout distributions with
//!   exact rational binning.
//! * [`rational`]: fraction catalogues, coin-flip baselines for small
//!   stations, dent detection at round fractions and the falsification
//!   lower bound.
//! * [`mixture`]: Gaussian scale mixtures over station size, their moments
//!   and mode counting for sums of Gaussians.
//! * [`cloud`]: turnout/share clouds, the compressed cloud, 2-D modes and
//!   turnout-share association.
//! * [`region`]: per-region aggregation and subset decomposition.
//! * [`synth`]: synthetic honest elections and fraud injectors with ground
//!   truth manifests.
//!
//! Shares and turnouts are fractions in `[0, 1]` everywhere; percentages only
//! appear in human-readable exports.

pub mod cloud;
pub mod histogram;
pub mod ingest;
pub mod mixture;
pub mod rational;
pub mod region;
mod rng;
pub mod svg;
pub mod synth;

pub use ingest::{Dataset, PrecinctRecord, RegionInfo, ValidationReport};
pub use mixture::SizeMeasure;
