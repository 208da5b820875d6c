#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod couplings;
pub mod ctmc;
pub mod duals;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod randomness;
pub mod replicas;
pub mod report;
pub mod stats;
