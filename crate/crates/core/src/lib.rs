// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod autodiff;
pub mod baseline;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod refine;
pub mod synth;
pub mod trainer;
