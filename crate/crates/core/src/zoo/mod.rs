//! Ready-made model architectures and the synthetic tasks that exercise
//! them.
//!
//! [`spec`] describes architectures as data (parseable text form included),
//! [`model`] instantiates and runs them, [`builders`] provides the stock
//! families, [`tasks`] renders labeled audio corpora, [`baselines`] scores
//! non-learned references against those corpora, and [`pipeline`] holds the
//! feature conditioning used between extraction and training.

pub mod baselines;
pub mod builders;
pub mod model;
pub mod pipeline;
pub mod spec;
pub mod tasks;

pub use model::Model;
pub use spec::{LayerSpec, ModelSpec};
