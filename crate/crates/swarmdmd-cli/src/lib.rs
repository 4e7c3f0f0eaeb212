//! Experiment runner and I/O companion for the `swarmdmd` core crate:
//! scenario configs, the simulate -> fit -> rollout -> score pipeline, file
//! formats, tables, and charts. The `swarmdmd` binary is a thin wrapper over
//! this library.

// Config validation writes `!(x > 0.0)` so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod io;
pub mod svg;
