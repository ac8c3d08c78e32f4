//! Adaptive benchmark evaluation.
//!
//! Calibrates question difficulty offline with a one-parameter logistic
//! (Rasch) model fitted by variational inference, then interviews each
//! evaluated model: an ability estimate tracked online picks a success-
//! probability band, max-min retrieval over embeddings keeps the
//! candidates semantically diverse, and a pluggable judge (an external
//! chat-completion endpoint or a deterministic policy) makes the final
//! pick. Runs are scored by inversion-based ranking consistency against
//! full-benchmark results.

pub mod ability;
pub mod error;
pub mod judge;
pub mod logging;
pub mod memory;
pub mod metrics;
pub mod pool;
pub mod rasch;
pub mod selection;
pub mod semantic;
pub mod session;
pub mod sim;

pub use error::{Error, Result};
