//! Capacity sizing for service-oriented platforms.
//!
//! Turns a description of the services to deploy (and optionally their
//! runtime workload) into machine plans for a set of hardware tiers:
//!
//! - [`perfmodel`] estimates per-service CPU and memory demand and fits its
//!   coefficients from load-test samples.
//! - [`packer`] places services on machines under a CPU cap and a memory cap,
//!   then spreads them over nodes and hosts.
//! - [`engine`] runs both for every tier and attaches performance curves and
//!   recommendations.
//! - [`report`] renders results as Graphviz, CSV and Markdown.

pub mod domain;
pub mod engine;
pub mod packer;
pub mod perfmodel;
pub mod report;

pub use domain::*;
pub use engine::{compare_tiers, recommend, size, EngineError, RunStamp, SizingError};
pub use perfmodel::{DemandModel, ModelCoefficients, ModelError, PairCoefficients};
