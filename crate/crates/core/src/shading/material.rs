use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::texture::Texture;

/// Flat tangent-space normal texel.
pub const FLAT_NORMAL: DVec3 = DVec3::new(0.5, 0.5, 1.0);

/// Diffuse albedo, occlusion/roughness/metalness, and tangent-space normal texel grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSet {
    pub kd: Texture,
    pub orm: Texture,
    pub normal: Texture,
}

/// Texel values sampled at one UV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub kd: DVec3,
    /// (occlusion, roughness, metalness)
    pub orm: DVec3,
    /// Raw normal texel in [0,1]³ (decoded at shading time).
    pub normal: DVec3,
}

impl MaterialSample {
    pub fn new(kd: DVec3, roughness: f64, metalness: f64) -> Self {
        Self {
            kd,
            orm: DVec3::new(1.0, roughness, metalness),
            normal: FLAT_NORMAL,
        }
    }
}

impl MaterialSet {
    pub fn uniform(res: usize, kd: DVec3, orm: DVec3) -> Result<Self> {
        Ok(Self {
            kd: Texture::new(res, res, kd)?,
            orm: Texture::new(res, res, orm)?,
            normal: Texture::new(res, res, FLAT_NORMAL)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("kd", &self.kd), ("orm", &self.orm), ("normal", &self.normal)] {
            if t.texels.len() != t.width * t.height || t.is_empty() {
                return Err(Error::Texture(format!("{name}: texel count does not match size")));
            }
            if t.texels.iter().any(|v| !v.is_finite()) {
                return Err(Error::Texture(format!("{name}: non-finite texel")));
            }
        }
        Ok(())
    }

    /// Projects every map back into [0,1].
    pub fn clamp(&mut self) {
        self.kd.clamp(0.0, 1.0);
        self.orm.clamp(0.0, 1.0);
        self.normal.clamp(0.0, 1.0);
    }

    pub fn sample(&self, uv: DVec2) -> MaterialSample {
        MaterialSample {
            kd: self.kd.sample(uv),
            orm: self.orm.sample(uv),
            normal: self.normal.sample(uv),
        }
    }
}

/// Decodes a [0,1]³ texel to a unit tangent-space normal.
pub fn decode_normal(texel: DVec3) -> DVec3 {
    (texel * 2.0 - 1.0).try_normalize().unwrap_or(DVec3::Z)
}
