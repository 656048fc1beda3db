//! Graph embeddings built on layered soft group memberships.

pub mod attention;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod graph;
pub mod membership;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::Graph;
pub use numerics::{Tape, Tensor, Var};
