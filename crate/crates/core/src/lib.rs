// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod divergence;
pub mod experiments;
pub mod feature_pipeline;
pub mod forest;
pub mod quadrature;
pub mod scaled_beta;
pub mod seed;
pub mod selection_theory;
