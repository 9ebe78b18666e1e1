//! Rational Speech Acts reference games: pure chains, learned feature-based
//! chains, training and evaluation.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod optimize;
pub mod rsa;
pub mod seeds;
pub mod synthetic;
