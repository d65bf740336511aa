//! Performance modeling toolkit for edge ML accelerators.
//!
//! The crate models NASBench-101-style convolutional cells end to end:
//!
//! * [`cell`] — cell graphs (labeled DAGs of conv/pool operations),
//!   validation, structural metrics, canonical hashing and enumeration
//!   of the full ≤7-vertex / ≤9-edge space.
//! * [`network`] — expansion of a cell into a full CNN with exact
//!   MAC/parameter/activation accounting per layer.
//! * [`accel`] — parameterized accelerator configurations (2D PE array,
//!   cores, SIMD lanes, memory hierarchy) and the three studied presets.
//! * [`cost`] — an analytical roofline latency/energy estimator with
//!   parameter caching.
//! * [`gnn`] — an encoder/core/decoder graph network that learns to
//!   predict a performance metric directly from the cell graph,
//!   including exact reverse-mode gradients and an Adam training loop.
//! * [`analysis`] — correlation metrics, best-configuration buckets,
//!   structural trend summaries and operation-swap impact matrices.
//! * [`io`] — newline-delimited JSON cell files, results CSV, and model
//!   checkpoints.

pub mod accel;
pub mod analysis;
pub mod cell;
pub mod cost;
pub mod enumerate;
pub mod error;
pub mod gnn;
pub mod hash;
pub mod io;
pub mod network;

pub use accel::{AcceleratorConfig, EnergyCoefficients};
pub use cell::{CellGraph, OperationKind, ValidationReport, Violation};
pub use cost::{CachePlan, CostParams, EstimateMode, PerfEstimate};
pub use error::Error;
pub use network::{LayerKind, LayerWorkload, NetworkSpec, NetworkWorkload};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
