// NaN must fail range checks, so `!(x > y)` is used on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod protocol;
pub mod record;
pub mod session;
pub mod sim;
pub mod host;
pub mod cli;
