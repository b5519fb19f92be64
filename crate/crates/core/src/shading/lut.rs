use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use super::brdf::{alpha, sample_ggx_half, schlick_weight, smith_g};
use crate::error::{Error, Result};
use crate::math::{hammersley, seed_shift};
use crate::par;

/// Split-sum table over (n·ω_o, roughness). Holds the scale/bias pair of the
/// specular reflectance (≈ F0·A + B) and the blend factor that places the
/// environment lookup direction at the lobe's weighted mean direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrdfLut {
    pub res: usize,
    /// Row-major, row = roughness index, column = n·ω_o index; (A, B, blend).
    pub data: Vec<DVec3>,
}

/// Table value and its partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct LutSample {
    pub value: DVec3,
    pub d_ndotv: DVec3,
    pub d_roughness: DVec3,
}

/// Importance-sampled (A, B, blend) for one table entry.
///
/// The blend factor `f` is chosen so that `n + f (r - n)`, with `r` the mirror
/// direction, points along the cosine-weighted BRDF centroid of the lobe.
pub fn integrate_brdf(n_dot_v: f64, roughness: f64, samples: u32, shift: DVec2) -> DVec3 {
    let a = alpha(roughness);
    let v = DVec3::new((1.0 - n_dot_v * n_dot_v).max(0.0).sqrt(), 0.0, n_dot_v);
    let mut acc = DVec2::ZERO;
    let mut centroid = DVec3::ZERO;
    for i in 0..samples {
        let h = sample_ggx_half(hammersley(i, samples, shift), a);
        let vh = v.dot(h);
        let l = 2.0 * vh * h - v;
        let (nl, nh) = (l.z, h.z);
        if nl > 0.0 && vh > 0.0 {
            let g_vis = smith_g(n_dot_v, nl, a) * vh / (nh * n_dot_v);
            let fc = schlick_weight(vh);
            acc += DVec2::new((1.0 - fc) * g_vis, fc * g_vis);
            centroid += l * g_vis;
        }
    }
    let acc = acc / samples as f64;
    acc.extend(centroid_blend(v, centroid))
}

/// Solves `n + f (r - n) ∥ c` for `f` in the local frame (n = +z, v in the xz-plane).
fn centroid_blend(v: DVec3, c: DVec3) -> f64 {
    let r = DVec3::new(-v.x, 0.0, v.z);
    let den = r.x * c.z - c.x * (r.z - 1.0);
    if c.length_squared() == 0.0 || den.abs() < 1e-12 {
        return 1.0;
    }
    c.x / den
}

impl BrdfLut {
    pub fn precompute(res: usize, samples: u32, seed: u64) -> Result<BrdfLut> {
        if res < 16 {
            return Err(Error::Config(format!("lut resolution {res} < 16")));
        }
        if samples < 64 {
            return Err(Error::Config(format!("lut samples {samples} < 64")));
        }
        let shift = seed_shift(seed);
        let data = par::map_range(res * res, |k| {
            let (i, j) = (k % res, k / res);
            let nv = (i as f64 + 0.5) / res as f64;
            let r = (j as f64 + 0.5) / res as f64;
            integrate_brdf(nv, r, samples, shift)
        });
        Ok(BrdfLut { res, data })
    }

    fn at(&self, i: usize, j: usize) -> DVec3 {
        self.data[j * self.res + i]
    }

    pub fn lookup(&self, n_dot_v: f64, roughness: f64) -> LutSample {
        let n = self.res;
        let (i0, fx, gx) = coord(n_dot_v * n as f64 - 0.5, n);
        let (j0, fy, gy) = coord(roughness * n as f64 - 0.5, n);
        let (i1, j1) = ((i0 + 1).min(n - 1), (j0 + 1).min(n - 1));
        let (a, b, c, d) = (self.at(i0, j0), self.at(i1, j0), self.at(i0, j1), self.at(i1, j1));
        let top = a.lerp(b, fx);
        let bot = c.lerp(d, fx);
        let scale = n as f64;
        LutSample {
            value: top.lerp(bot, fy),
            d_ndotv: if gx { ((b - a) * (1.0 - fy) + (d - c) * fy) * scale } else { DVec3::ZERO },
            d_roughness: if gy { (bot - top) * scale } else { DVec3::ZERO },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn coord(p: f64, size: usize) -> (usize, f64, bool) {
    let max = (size - 1) as f64;
    if p <= 0.0 {
        (0, 0.0, false)
    } else if p >= max {
        (size - 2, 1.0, false)
    } else {
        let i = (p.floor() as usize).min(size - 2);
        (i, p - i as f64, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_tables() {
        assert!(BrdfLut::precompute(8, 128, 0).is_err());
        assert!(BrdfLut::precompute(16, 32, 0).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = BrdfLut::precompute(16, 64, 7).unwrap();
        let b = BrdfLut::precompute(16, 64, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entries_are_bounded() {
        let lut = BrdfLut::precompute(32, 256, 1).unwrap();
        assert!(lut.is_finite());
        for v in &lut.data {
            assert!(v.x >= 0.0 && v.x <= 1.05 && v.y >= 0.0 && v.y <= 1.05, "{v:?}");
            assert!(v.z > -0.1 && v.z <= 1.5, "{v:?}");
        }
    }

    #[test]
    fn lookup_derivatives_match_finite_differences() {
        let lut = BrdfLut::precompute(16, 128, 3).unwrap();
        let (nv, r, h) = (0.431, 0.618, 1e-7);
        let s = lut.lookup(nv, r);
        let fd_v = (lut.lookup(nv + h, r).value - lut.lookup(nv - h, r).value) / (2.0 * h);
        let fd_r = (lut.lookup(nv, r + h).value - lut.lookup(nv, r - h).value) / (2.0 * h);
        assert!((fd_v - s.d_ndotv).length() < 1e-5);
        assert!((fd_r - s.d_roughness).length() < 1e-5);
    }

    #[test]
    fn blend_is_near_one_for_smooth_surfaces() {
        // A near-mirror lobe is centred on the mirror direction.
        let v = integrate_brdf(0.7, 0.05, 1024, DVec2::ZERO);
        assert!((v.z - 1.0).abs() < 0.02, "{v:?}");
        // Rough lobes are pulled toward the normal.
        let v = integrate_brdf(0.7, 0.8, 1024, DVec2::ZERO);
        assert!(v.z < 0.8, "{v:?}");
    }
}
