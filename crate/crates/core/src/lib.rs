//! Feasible operation region sampling and monetization for distribution grids.
//!
//! The crate samples the region of reachable interconnection power flows of a
//! distribution grid with an angle-swept particle swarm, aggregates co-located
//! flexibility units into bus-level polygons, prices them by disaggregation
//! and turns the swarm metadata into a cost map over the region.

pub mod costmap;
pub mod disagg;
pub mod geometry;
pub mod grid;
pub mod market;
pub mod pipeline;
pub mod powerflow;
pub mod pso;
