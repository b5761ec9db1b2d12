#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod entanglement;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod oracle;
