// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distances;
pub mod error;
pub mod expfam;
pub mod harness;
pub mod lowerbound;
pub mod measures;
pub mod npmle;
pub mod polyapprox;
pub mod special;
