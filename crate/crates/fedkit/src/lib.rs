//! Library surface of the driver: experiment configuration loading and the
//! validate/materialize/fit/encode/run pipeline used by the `fedkit` binary.

pub mod config;
pub mod pipeline;
