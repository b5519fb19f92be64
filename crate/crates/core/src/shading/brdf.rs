//! GGX microfacet terms shared by the lookup table, the prefilter and the
//! Monte-Carlo reference.

use glam::{DVec2, DVec3};
use std::f64::consts::PI;

/// Roughness floor applied at shading time.
pub const MIN_ROUGHNESS: f64 = 0.04;
/// Lower clamp of n·ω_o.
pub const MIN_NDOTV: f64 = 1e-4;
/// Specular reflectance of dielectrics.
pub const DIELECTRIC_F0: f64 = 0.04;

/// GGX width α from perceptual roughness.
pub fn alpha(roughness: f64) -> f64 {
    let r = roughness.max(MIN_ROUGHNESS);
    r * r
}

pub fn ggx_d(n_dot_h: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

/// Smith-Schlick masking-shadowing with the image-based-lighting remap k = α/2.
pub fn smith_g(n_dot_v: f64, n_dot_l: f64, alpha: f64) -> f64 {
    let k = alpha * 0.5;
    let g1 = |x: f64| x / (x * (1.0 - k) + k);
    g1(n_dot_v) * g1(n_dot_l)
}

pub fn schlick_weight(v_dot_h: f64) -> f64 {
    (1.0 - v_dot_h).clamp(0.0, 1.0).powi(5)
}

pub fn fresnel(f0: DVec3, v_dot_h: f64) -> DVec3 {
    let w = schlick_weight(v_dot_h);
    f0 + (DVec3::ONE - f0) * w
}

/// GGX half vector around +z distributed as D(h)·(n·h).
pub fn sample_ggx_half(u: DVec2, alpha: f64) -> DVec3 {
    let a2 = alpha * alpha;
    let phi = 2.0 * PI * u.x;
    let cos_t = ((1.0 - u.y) / (1.0 + (a2 - 1.0) * u.y)).max(0.0).sqrt();
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    DVec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Metalness-workflow specular reflectance at normal incidence.
pub fn base_reflectance(kd: DVec3, metalness: f64) -> DVec3 {
    DVec3::splat(DIELECTRIC_F0 * (1.0 - metalness)) + kd * metalness
}

/// Full BSDF value f(ω_i, ω_o) for the Lambert + GGX metalness model, in a frame with n = +z.
pub fn eval_bsdf(kd: DVec3, roughness: f64, metalness: f64, v: DVec3, l: DVec3) -> DVec3 {
    let nl = l.z;
    if nl <= 0.0 {
        return DVec3::ZERO;
    }
    let nv = v.z.clamp(MIN_NDOTV, 1.0);
    let a = alpha(roughness);
    let diffuse = kd * ((1.0 - metalness) / PI);
    let h = (v + l).normalize();
    let vh = v.dot(h).max(0.0);
    let spec = fresnel(base_reflectance(kd, metalness), vh)
        * (ggx_d(h.z.max(0.0), a) * smith_g(nv, nl, a) / (4.0 * nl * nv));
    diffuse + spec
}
