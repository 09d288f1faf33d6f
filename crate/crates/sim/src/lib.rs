//! Closed-loop simulation, logging, plotting and benchmarking around the
//! coupled course and vehicle planners.

// `!(a > b)` comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod courses;
pub mod log;
pub mod metrics;
pub mod plots;
pub mod sim;
