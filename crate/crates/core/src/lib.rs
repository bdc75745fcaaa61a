//! Grid-based estimation of viability kernels, capture basins and the
//! full topology-of-sustainable-management (TSM) partition for controlled
//! dynamical systems, bundled with a three-dimensional climate–economy
//! model as the reference system.
//!
//! The pipeline is: compactify an unbounded state space onto the unit box
//! ([`geometry::CompactMap`]), homogenize the time scale so speeds are
//! bounded by one ([`geometry::Homogenized`]), discretize on a regular
//! lattice ([`grid::Grid`]), run the successor-ball fixed-point iterations
//! ([`viability`]), and compose the resulting sets into region labels
//! ([`tsm`]). [`analysis`] adds trajectory integration and parameter
//! sweeps on top.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod tsm;
pub mod viability;

pub use error::{Error, Result};
