// Negated float comparisons (`!(x > 0.0)`) are deliberate throughout: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod special_functions;
pub mod fitting;
pub mod evaluation;
