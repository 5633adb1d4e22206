//! Poisson multinomial distributions: exact oracles, structural decompositions,
//! covers, robust moment estimation, hypothesis selection and learners.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covers;
pub mod decomposition;
pub mod error;
pub mod estimation;
pub mod io;
pub mod lattice;
pub mod learn;
pub mod linalg;
pub mod quadrature;
pub mod rounding;
pub mod selection;

pub use error::{Error, Result};
