//! Curiosity-driven mapless navigation.
//!
//! A 2D floorplan simulator with a 72-beam range sensor, an actor-critic
//! learner trained asynchronously on extrinsic reward plus an intrinsic
//! curiosity signal, and an evaluation bench for success ratio and episode
//! length on training and held-out maps.

// Validation uses `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod icm;
pub mod manifest;
pub mod plot;
pub mod policy;
pub mod rewards;
pub mod snapshot;
pub mod tensor;
pub mod trainer;
