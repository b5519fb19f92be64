use glam::DVec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Orbit distribution around the scene centre. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub radius: (f64, f64),
    pub elevation: (f64, f64),
    pub azimuth: (f64, f64),
    pub fov: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            radius: (2.5, 3.5),
            elevation: (-15.0, 45.0),
            azimuth: (0.0, 360.0),
            fov: 45.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.radius) || self.radius.0 <= 0.0 {
            return Err(Error::Config(format!("camera radius range {:?} invalid", self.radius)));
        }
        if !ordered(self.elevation) || self.elevation.0 <= -90.0 || self.elevation.1 >= 90.0 {
            return Err(Error::Config(format!(
                "camera elevation range {:?} must lie inside (-90, 90)",
                self.elevation
            )));
        }
        if !ordered(self.azimuth) {
            return Err(Error::Config(format!("camera azimuth range {:?} invalid", self.azimuth)));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(Error::Config(format!("camera fov {} outside (0, 180)", self.fov)));
        }
        Ok(())
    }
}

/// Where a sampled camera sits on its orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPose {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
}

impl OrbitPose {
    /// Camera on the orbit looking at `center`; azimuth 0 sits on +z.
    pub fn camera(&self, center: DVec3, fov_deg: f64, width: usize, height: usize) -> Result<Camera> {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        let offset = DVec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * self.radius;
        Camera::look_at(center + offset, center, DVec3::Y, fov_deg.to_radians(), width, height)
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    // draw even for empty ranges so the rng stream does not depend on the config
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Uniform azimuth, elevation and radius inside the configured ranges.
pub fn sample_pose(rng: &mut impl Rng, cfg: &CameraConfig) -> OrbitPose {
    let azimuth = uniform(rng, cfg.azimuth);
    let elevation = uniform(rng, cfg.elevation);
    let radius = uniform(rng, cfg.radius);
    OrbitPose {
        azimuth: if cfg.azimuth.1 - cfg.azimuth.0 >= 360.0 { azimuth.rem_euclid(360.0) } else { azimuth },
        elevation,
        radius,
    }
}

pub fn sample_camera(
    rng: &mut impl Rng,
    cfg: &CameraConfig,
    center: DVec3,
    width: usize,
    height: usize,
) -> Result<(Camera, OrbitPose)> {
    let pose = sample_pose(rng, cfg);
    Ok((pose.camera(center, cfg.fov, width, height)?, pose))
}

/// `count` evenly spaced azimuths at fixed elevation and radius.
pub fn turntable(count: usize, elevation: f64, radius: f64) -> Vec<OrbitPose> {
    (0..count)
        .map(|i| OrbitPose {
            azimuth: 360.0 * i as f64 / count as f64,
            elevation,
            radius,
        })
        .collect()
}
