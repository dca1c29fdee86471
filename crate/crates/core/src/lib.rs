// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod data;
pub mod embedding;
pub mod evaluation;
pub mod memory;
pub mod pipeline;
pub mod portfolio;
pub mod pricing_net;
pub mod retry;
pub mod synthetic;
