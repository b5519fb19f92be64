//! Monte-Carlo estimate of the full rendering integral, used as an oracle for
//! the split-sum path. Deterministic multi-sample MIS: half the samples follow
//! the cosine lobe, half the GGX half-vector distribution, combined with the
//! balance heuristic.

use glam::DVec3;
use std::f64::consts::PI;

use super::brdf::{alpha, base_reflectance, fresnel, ggx_d, sample_ggx_half, smith_g, MIN_NDOTV};
use super::env::EnvironmentMap;
use super::material::MaterialSample;
use super::shade::ShadePoint;
use crate::math::{basis, cosine_hemisphere, hammersley, seed_shift};

/// Reference estimator for one material; the local-frame sample sets are built
/// once and reused for every shading point.
#[derive(Debug, Clone)]
pub struct ReferenceShader {
    material: MaterialSample,
    alpha: f64,
    f0: DVec3,
    diffuse: DVec3,
    cosine_dirs: Vec<DVec3>,
    half_vectors: Vec<DVec3>,
    c_diff: f64,
    c_spec: f64,
    samples: u32,
}

impl ReferenceShader {
    pub fn new(m: &MaterialSample, samples: u32, seed: u64) -> Self {
        let [_, roughness, metalness] = m.orm.to_array();
        let a = alpha(roughness);
        let has_diffuse = metalness < 1.0 && m.kd.max_element() > 0.0;
        let (n_diff, n_spec) = if has_diffuse {
            (samples / 2, samples - samples / 2)
        } else {
            (0, samples)
        };
        let shift_d = seed_shift(seed);
        let shift_s = seed_shift(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        Self {
            material: *m,
            alpha: a,
            f0: base_reflectance(m.kd, metalness),
            diffuse: m.kd * ((1.0 - metalness) / PI),
            cosine_dirs: (0..n_diff).map(|i| cosine_hemisphere(hammersley(i, n_diff, shift_d))).collect(),
            half_vectors: (0..n_spec).map(|i| sample_ggx_half(hammersley(i, n_spec, shift_s), a)).collect(),
            c_diff: n_diff as f64 / samples.max(1) as f64,
            c_spec: n_spec as f64 / samples.max(1) as f64,
            samples,
        }
    }

    pub fn shade(&self, p: &ShadePoint, env: &EnvironmentMap) -> DVec3 {
        let n = p.normal;
        let (t, b) = basis(n);
        let mut v = DVec3::new(p.view.dot(t), p.view.dot(b), p.view.dot(n));
        if v.z < MIN_NDOTV {
            // grazing or back-facing view: clamp onto the hemisphere
            v.z = MIN_NDOTV;
            v = v.normalize();
        }
        let a = self.alpha;
        let nv = v.z;
        let contribution = |l: DVec3| -> DVec3 {
            let nl = l.z;
            if nl <= 0.0 {
                return DVec3::ZERO;
            }
            let h = (v + l).normalize();
            let vh = v.dot(h).max(1e-12);
            let d = ggx_d(h.z.max(0.0), a);
            let pdf = self.c_diff * nl / PI + self.c_spec * d * h.z.max(0.0) / (4.0 * vh);
            if pdf <= 0.0 {
                return DVec3::ZERO;
            }
            let f = self.diffuse + fresnel(self.f0, vh) * (d * smith_g(nv, nl, a) / (4.0 * nl * nv));
            f * env.cube.sample(t * l.x + b * l.y + n * l.z) * (nl / pdf)
        };
        let mut sum = DVec3::ZERO;
        for &l in &self.cosine_dirs {
            sum += contribution(l);
        }
        for &h in &self.half_vectors {
            sum += contribution(2.0 * v.dot(h) * h - v);
        }
        sum * (self.material.orm.x / self.samples as f64)
    }
}

pub fn reference_shade(p: &ShadePoint, m: &MaterialSample, env: &EnvironmentMap, samples: u32, seed: u64) -> DVec3 {
    ReferenceShader::new(m, samples, seed).shade(p, env)
}
