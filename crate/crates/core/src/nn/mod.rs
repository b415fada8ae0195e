//! Minimal reverse-mode autodiff over `[N, C, H, W]` f64 tensors, plus the
//! layers, blocks, and optimizer shared by the learned components. Small by
//! intent: only the ops the nets in this crate actually use, each one checked
//! against finite differences in the tests.

mod adam;
mod graph;
#[cfg(test)]
mod gradcheck_tests;
mod layers;
pub mod unet;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, ParamStore, Var};
pub use layers::{
    sinusoidal_embedding, BatchNorm2d, Conv2d, GroupNorm, Mode, ResBlock,
};
