//! Instruction-driven indoor scene synthesis.
//!
//! A scene is generated in two stages: a semantic graph (object categories,
//! quantized appearance codes and pairwise spatial relations) is sampled
//! from a discrete diffusion prior conditioned on a text instruction, then a
//! layout for that graph is sampled from a Gaussian diffusion decoder.
//! Both stages use exact empirical-Bayes denoisers built from a dataset.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod graph_diffusion;
pub mod instruction;
pub mod io;
pub mod layout_diffusion;
pub mod pipeline;
pub mod quantizer;
pub mod relation;
pub mod rng;
pub mod scene;
pub mod svg;

pub use error::{Error, Result};
