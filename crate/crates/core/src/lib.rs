//! V2V-enabled cooperative track management.
//!
//! A simulated ego vehicle fuses radar and camera detections into a local
//! track list, ingests Basic Safety Messages from connected vehicles into a
//! V2V track list, and promotes V2V sources that its own sensors have
//! corroborated into a priority track list. The three lists are scored
//! against ground truth with GOSPA.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod association;
pub mod cli;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod sensors;
pub mod tracker;
pub mod v2v;

pub use error::{Error, Result};
