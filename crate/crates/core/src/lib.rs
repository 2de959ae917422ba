//! Adaptive sequential model-based optimization.
//!
//! A portfolio of base Bayesian optimizers, each a pairing of a surrogate
//! model with an acquisition function, shares one trial history. Every round
//! a meta-layer scores the base optimizers from their past suggestions and
//! samples which of them proposes the next point(s).

pub mod acquisition;
pub mod adaptive;
pub mod error;
pub mod optimizer;
pub mod rng;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
