//! Spatiotemporal alignment for spinning-LiDAR / multi-camera / INS rigs.
//!
//! The pipeline: per-point LiDAR timing and deskewing ([`scan`]), pose-chain
//! plus GICP registration between vehicles ([`registration`]), three
//! strategies for assigning LiDAR geometry to camera frames ([`alignment`]),
//! and projected-box metrics ([`evaluation`]). [`sim`] generates synthetic
//! two-vehicle recordings with exact ground truth.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod registration;
pub mod scan;
pub mod sim;
pub mod store;

pub use error::{Error, Result};
