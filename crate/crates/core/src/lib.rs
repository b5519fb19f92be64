//! Text-guided editing of textures and environment lighting on fixed meshes.
//!
//! The crate renders a textured mesh with a differentiable split-sum shading
//! model, turns noise-prediction differences from a pluggable diffusion
//! backend into image-space gradients, and optimizes the texel grids (or the
//! environment cube map) with Adam.

pub mod cubemap;
pub mod diffrender;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod guidance;
pub mod img;
pub mod math;
pub mod optimize;
mod par;
pub mod sidecar;
pub mod shading;
pub mod tensor;
pub mod texture;

pub use error::{Error, Result};
