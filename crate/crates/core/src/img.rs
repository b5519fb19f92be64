//! Linear RGB image buffers.

use glam::DVec3;

use crate::error::{Error, Result};
use crate::math::{linear_to_srgb, srgb_to_linear};

/// Row-major RGB image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<DVec3>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: DVec3) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> DVec3) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> DVec3 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: DVec3) {
        self.data[y * self.width + x] = v;
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, 3]
    }

    /// Interleaved HWC values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.data.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn from_flat(width: usize, height: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != width * height * 3 {
            return Err(Error::Shape {
                expected: vec![height, width, 3],
                actual: vec![flat.len()],
            });
        }
        Ok(Self {
            width,
            height,
            data: flat
                .chunks_exact(3)
                .map(|c| DVec3::new(c[0], c[1], c[2]))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(DVec3) -> DVec3) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|p| p.is_finite())
    }

    pub fn sum_squared_difference(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).length_squared())
            .sum()
    }

    pub fn mean(&self) -> DVec3 {
        self.data.iter().copied().sum::<DVec3>() / self.data.len().max(1) as f64
    }

    /// 8-bit sRGB encoding of a linear image (clamped).
    pub fn to_srgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|p| p.to_array())
            .map(|c| (linear_to_srgb(c.clamp(0.0, 1.0)) * 255.0).round() as u8)
            .collect()
    }

    /// 8-bit encoding without a transfer curve (for already display-referred data).
    pub fn to_unorm8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|p| p.to_array())
            .map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_srgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let flat: Vec<f64> = bytes.iter().map(|&b| srgb_to_linear(b as f64 / 255.0)).collect();
        Self::from_flat(width, height, &flat)
    }

    pub fn from_unorm8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let flat: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Self::from_flat(width, height, &flat)
    }
}

/// Peak signal-to-noise ratio in dB for signals with the given peak value.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> f64 {
    let mse = a.sum_squared_difference(b) / (3 * a.data.len()) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}
