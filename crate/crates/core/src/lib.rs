pub mod cli;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod types;
