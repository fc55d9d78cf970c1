//! Hierarchical multi-robot cooperative transport.

pub mod nets;
pub mod obs;
pub mod priority;
pub mod world;
pub mod trainer;
pub mod harness;
