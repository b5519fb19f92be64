//! Split-sum image-based lighting: BRDF table, prefiltered environment,
//! per-pixel shading, and a Monte-Carlo reference integrator.

pub mod brdf;
pub mod env;
pub mod lut;
pub mod material;
pub mod reference;
pub mod shade;

pub use env::{EnvTableGrad, EnvironmentMap, PrefilterSettings, PrefilteredEnv};
pub use lut::BrdfLut;
pub use material::{MaterialSample, MaterialSet};
pub use reference::{reference_shade, ReferenceShader};
pub use shade::{shade, shade_vjp, ShadeOptions, ShadePoint};
