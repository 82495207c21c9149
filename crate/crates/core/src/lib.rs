//! Black-box tuning of categorical design-flow parameters.
//!
//! The crate is organized around the tuning pipeline:
//!
//! * [`space`] describes the categorical parameter space and tabulated datasets.
//! * [`importance`] estimates per-feature importance from previously labeled data.
//! * [`cluster`] partitions the space by the values of important features and keeps
//!   approximate (pseudo) labels for whole clusters.
//! * [`model`] holds the tree learners used as surrogates.
//! * [`explore`] runs the sampling strategies under a fixed evaluation budget.
//! * [`metrics`] scores finished runs against an exhaustively known ground truth.
//! * [`harness`] generates synthetic benchmarks, talks to external evaluators and
//!   persists run logs.

pub mod cluster;
pub mod error;
pub mod explore;
pub mod harness;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod space;

pub use error::{Error, Result};
