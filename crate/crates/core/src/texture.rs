//! Texel grids with bilinear sampling and the matching adjoint footprint.

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;

/// Four texel indices and their bilinear weights.
pub type Footprint = [(usize, f64); 4];

/// An RGB texel grid addressed by UV in [0,1]², v = 0 on row 0, clamp-to-edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<DVec3>,
}

impl Texture {
    pub fn new(width: usize, height: usize, fill: DVec3) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Texture(format!("empty texture {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            texels: vec![fill; width * height],
        })
    }

    pub fn from_image(image: &Image) -> Result<Self> {
        if image.width == 0 || image.height == 0 {
            return Err(Error::Texture("empty image".into()));
        }
        Ok(Self {
            width: image.width,
            height: image.height,
            texels: image.data.clone(),
        })
    }

    pub fn from_texels(width: usize, height: usize, texels: Vec<DVec3>) -> Result<Self> {
        if width == 0 || height == 0 || texels.len() != width * height {
            return Err(Error::Texture(format!(
                "{} texels do not form a {width}x{height} texture",
                texels.len()
            )));
        }
        Ok(Self { width, height, texels })
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.texels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.texels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texels.is_empty()
    }

    pub fn footprint(&self, uv: DVec2) -> Footprint {
        let x = uv.x * self.width as f64 - 0.5;
        let y = uv.y * self.height as f64 - 0.5;
        let (x0, fx) = split(x, self.width);
        let (y0, fy) = split(y, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let w = self.width;
        [
            (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
            (y0 * w + x1, fx * (1.0 - fy)),
            (y1 * w + x0, (1.0 - fx) * fy),
            (y1 * w + x1, fx * fy),
        ]
    }

    pub fn gather(&self, fp: &Footprint) -> DVec3 {
        fp.iter().map(|&(i, w)| self.texels[i] * w).sum()
    }

    pub fn sample(&self, uv: DVec2) -> DVec3 {
        self.gather(&self.footprint(uv))
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        for t in &mut self.texels {
            *t = t.clamp(DVec3::splat(lo), DVec3::splat(hi));
        }
    }
}

/// Integer cell and fractional offset of a continuous texel coordinate, clamped to the grid.
fn split(coord: f64, size: usize) -> (usize, f64) {
    let max = (size - 1) as f64;
    let c = coord.clamp(0.0, max);
    let i = (c.floor() as usize).min(size.saturating_sub(2));
    if size == 1 {
        return (0, 0.0);
    }
    (i, c - i as f64)
}
