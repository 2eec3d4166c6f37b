//! Hedge-effectiveness analytics for equity indices under inflation and
//! currency crises.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod bootstrap;
pub mod copula;
pub mod dataio;
pub mod hedge;
pub mod month;
pub mod pipeline;
pub mod qreg;
pub mod returns;
pub mod stats;
pub mod tailsel;

pub use month::Month;
