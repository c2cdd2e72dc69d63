#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod bias;
pub mod ingest;
pub mod pipeline;
pub mod ranking;
pub mod stats;
pub mod synth;
pub mod variability;
