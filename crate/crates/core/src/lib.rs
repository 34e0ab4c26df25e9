//! Semantic change measurement over monthly embedding snapshots.
//!
//! The crate is organised as a chain of stages:
//!
//! * [`snapshot`] parses `YYYY-MM.vec` embedding tables into a [`TemporalDataset`].
//! * [`neighbors`] scores each token's drift against its first ("anchor") month
//!   by comparing second-order similarity profiles over its nearest neighbours.
//! * [`pipeline`] turns raw score series into interpolated, smoothed and
//!   z-normalised shape profiles.
//! * [`shape`] compares profiles with dynamic time warping and clusters them.
//! * [`cohort`] and [`concreteness`] provide the volatility and rating analyses.
//! * [`synth`] plants known drift patterns into synthetic datasets for validation.

pub mod cohort;
pub mod concreteness;
pub mod error;
pub mod format;
pub mod month;
pub mod neighbors;
pub mod pipeline;
pub mod shape;
pub mod snapshot;
pub mod synth;

pub use error::{Error, Result};
pub use month::Month;
pub use neighbors::{ChangeSeries, NeighborList, ScoringConfig, SecondOrderVector};
pub use pipeline::{ShapeProfile, SmootherConfig};
pub use shape::{ClusterReport, Linkage, ShapeDistanceMatrix};
pub use snapshot::{cosine, EmbeddingSnapshot, TemporalDataset, TokenFilter};
