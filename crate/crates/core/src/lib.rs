//! Tail asymptotics of the stationary distribution of discrete-time 2d-QBD processes.

// NaN must fail range checks, so `!(x < y)` is intentional
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod qbd_core;
pub mod spectral;
pub mod tail;
