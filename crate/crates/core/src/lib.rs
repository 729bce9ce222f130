//! Source-free domain adaptation for ensembles of architecturally distinct
//! hypotheses.
//!
//! Members are trained on a labeled source domain, then their feature
//! extractors are adapted to an unlabeled target domain by maximizing a
//! class-weighted mutual information while a hypothesis-disparity term pulls
//! every member toward a consensus anchor that down-weights outlying members.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod datagen;
pub mod diffcore;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod prediction;
pub mod seeding;

pub use error::{Error, Result};
