//! Continuous-time flexibility assessment at the transmission-distribution
//! interface of an active distribution network.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernstein;
pub mod blocks;
pub mod chance;
pub mod cli;
pub mod engine;
pub mod milp;
pub mod network;
pub mod pqbox;
