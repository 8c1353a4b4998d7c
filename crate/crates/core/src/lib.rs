//! Multi-hop question answering over knowledge graphs with
//! policy-gradient path-walking agents that may decline to answer.

pub mod dataset;
pub mod diffcore;
pub mod episode;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod inference;
pub mod kg_store;
pub mod policy;

pub use error::{Error, Result};
