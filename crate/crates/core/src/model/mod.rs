//! Trainable parser components.

pub mod config;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod parser;
pub mod tape;
pub mod vocab;

pub use config::{AttentionMode, ModelConfig};
pub use params::{Gradients, ParamId, ParameterStore};
pub use parser::{Dropout, EncodedQuestion, ExampleContext, Parser, ProgramScores};
pub use vocab::Vocab;

#[cfg(test)]
mod tests;
