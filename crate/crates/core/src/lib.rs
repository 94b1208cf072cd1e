//! Experience-enhanced learning for automatic database management.
//!
//! Rule-based methods are used in three places around a learned model:
//! they label training data cheaply ([`elc`]), they are catalogued and
//! matched to the current environment ([`ekb`]), and they bound the error of
//! the learned answer through a credibility gate ([`sea`]). Two pipelines put
//! these together: [`eedl`] for supervised cardinality estimation and
//! [`eerl`] for reinforcement-learning index tuning. Both run against the
//! synthetic single-table engine in [`synthdb`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eedl;
pub mod eerl;
pub mod ekb;
pub mod elc;
mod error;
pub mod experiment;
pub mod learner;
pub mod metrics;
pub mod sea;
pub mod synthdb;
pub mod workload;

pub use error::{Error, Result};
