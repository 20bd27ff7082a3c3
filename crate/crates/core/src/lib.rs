//! Distance estimation from an event camera to a roadside LED bar.
//!
//! Events from two vertically separated LED groups are gated by a temporal
//! high-pass filter, accumulated into count frames, split at the weighted
//! mean row and registered against each other with phase-only correlation.
//! The resulting pixel separation `W` gives the distance by triangulation.
//!
//! [`synthgen`] produces drive-by streams with exact ground truth and
//! [`evaluation`] scores estimates against it.

pub mod accumulation;
pub mod config;
pub mod evaluation;
pub mod event;
pub mod filtering;
pub mod io;
pub mod pipeline;
pub mod poc;
pub mod ranging;
pub mod separation;
pub mod synthgen;

pub use event::{Event, EventStream, Polarity, SensorGeometry};
pub use pipeline::{estimate_stream, PipelineConfig};
pub use ranging::{triangulate, FailureReason, OpticalConfig, RangeEstimate};
