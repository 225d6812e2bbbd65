//! Subset selection for set functions backed by a differentiable,
//! max-pooled set classifier.
//!
//! The engine removes `k` elements from a set one at a time, each step taking
//! the element with the highest score. Scores range from the exact marginal
//! gain (one objective evaluation per candidate) to first-order surrogates
//! that score every element from a single forward and backward pass by
//! swapping an element's embedding for an uninformative one.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod counter;
pub mod model;
pub mod data;
pub mod objective;
pub mod selection;
