//! Per-pixel split-sum shading and its vector-Jacobian product.

use glam::DVec3;

use super::brdf::{base_reflectance, DIELECTRIC_F0, MIN_NDOTV, MIN_ROUGHNESS};
use super::env::{EnvTableGrad, PrefilteredEnv};
use super::lut::BrdfLut;
use super::material::MaterialSample;
use crate::geometry::Fragment;
use crate::math::{normalize_vjp, reflect};

/// Lobe switches; both on for normal rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShadeOptions {
    pub diffuse: bool,
    pub specular: bool,
    /// Apply the tangent-space normal map.
    pub normal_map: bool,
}

impl Default for ShadeOptions {
    fn default() -> Self {
        Self {
            diffuse: true,
            specular: true,
            normal_map: true,
        }
    }
}

/// Geometric inputs of one shading point.
#[derive(Debug, Clone, Copy)]
pub struct ShadePoint {
    pub normal: DVec3,
    pub view: DVec3,
}

/// Lookup direction into the prefiltered map: the mirror direction pulled toward
/// the normal by the tabulated blend factor `f` (unnormalized).
pub fn lookup_direction(n: DVec3, v: DVec3, f: f64) -> DVec3 {
    let d = n + (reflect(v, n) - n) * f;
    if d.length_squared() < 1e-12 {
        n
    } else {
        d
    }
}

/// Shading normal from a fragment and an undecoded normal texel.
pub fn shading_normal(frag: &Fragment, normal_texel: DVec3, opts: &ShadeOptions) -> DVec3 {
    if !opts.normal_map {
        return frag.normal;
    }
    frag.perturb(super::material::decode_normal(normal_texel))
}

pub fn shade(p: &ShadePoint, m: &MaterialSample, pre: &PrefilteredEnv, lut: &BrdfLut, opts: &ShadeOptions) -> DVec3 {
    let [occlusion, roughness, metalness] = m.orm.to_array();
    let n = p.normal;
    let mut out = DVec3::ZERO;
    if opts.diffuse {
        out += m.kd * (1.0 - metalness) * pre.irradiance(n);
    }
    if opts.specular {
        let r = roughness.max(MIN_ROUGHNESS);
        let nv = n.dot(p.view).clamp(MIN_NDOTV, 1.0);
        let ab = lut.lookup(nv, r).value;
        let f0 = base_reflectance(m.kd, metalness);
        let dir = lookup_direction(n, p.view, ab.z);
        out += (f0 * ab.x + DVec3::splat(ab.y)) * pre.specular(dir, r);
    }
    (out * occlusion).max(DVec3::ZERO)
}

/// Gradients of one shaded pixel with respect to its material texel values and shading normal.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShadeGrad {
    pub kd: DVec3,
    pub orm: DVec3,
    pub normal: DVec3,
}

/// Vector-Jacobian product of [`shade`]. Table gradients are accumulated into `env_grad` when given.
pub fn shade_vjp(
    p: &ShadePoint,
    m: &MaterialSample,
    pre: &PrefilteredEnv,
    lut: &BrdfLut,
    opts: &ShadeOptions,
    g: DVec3,
    env_grad: Option<&mut EnvTableGrad>,
) -> ShadeGrad {
    let [occlusion, roughness, metalness] = m.orm.to_array();
    let n = p.normal;
    let v = p.view;
    let mut out = ShadeGrad::default();
    let go = g * occlusion;
    let mut bracket = DVec3::ZERO;
    let mut g_n = DVec3::ZERO;
    let mut env_grad = env_grad;

    if opts.diffuse {
        let taps = pre.irradiance.taps(n);
        let irr: DVec3 = taps.iter().map(|&(i, w, _)| pre.irradiance.data[i] * w).sum();
        bracket += m.kd * (1.0 - metalness) * irr;
        out.kd += go * (1.0 - metalness) * irr;
        out.orm.z -= go.dot(m.kd * irr);
        let g_irr = go * m.kd * (1.0 - metalness);
        for &(i, _, dw) in &taps {
            g_n += dw * g_irr.dot(pre.irradiance.data[i]);
        }
        if let Some(eg) = env_grad.as_deref_mut() {
            EnvTableGrad::add_taps(&mut eg.irradiance, &taps, 1.0, g_irr);
        }
    }

    if opts.specular {
        let r = roughness.max(MIN_ROUGHNESS);
        let nv_raw = n.dot(v);
        let nv = nv_raw.clamp(MIN_NDOTV, 1.0);
        let lut_s = lut.lookup(nv, r);
        let ab = lut_s.value;
        let f0 = base_reflectance(m.kd, metalness);
        let refl = reflect(v, n);
        let blend_f = ab.z;
        let dir = lookup_direction(n, v, blend_f);
        let degenerate = (n + (refl - n) * blend_f).length_squared() < 1e-12;
        let spec = pre.specular(dir, r);
        let scale = f0 * ab.x + DVec3::splat(ab.y);
        bracket += scale * spec;

        out.kd += go * metalness * ab.x * spec;
        out.orm.z += go.dot((m.kd - DVec3::splat(DIELECTRIC_F0)) * ab.x * spec);

        let g_a = go.dot(f0 * spec);
        let g_b = go.dot(spec);
        let g_spec = go * scale;
        if roughness > MIN_ROUGHNESS {
            out.orm.y += g_a * lut_s.d_roughness.x
                + g_b * lut_s.d_roughness.y
                + g_spec.dot(pre.specular_d_roughness(dir, r));
        }
        let mut g_dir = DVec3::ZERO;
        for (level, blend) in pre.specular_levels(r) {
            if blend == 0.0 {
                continue;
            }
            let mip = &pre.specular[level];
            let taps = mip.taps(dir);
            for &(i, _, dw) in &taps {
                g_dir += dw * (blend * g_spec.dot(mip.data[i]));
            }
            if let Some(eg) = env_grad.as_deref_mut() {
                EnvTableGrad::add_taps(&mut eg.mips[level], &taps, blend, g_spec);
            }
        }
        if degenerate {
            g_n += g_dir;
        } else {
            // dir = n + f (refl - n), refl = 2 (n·v) n - v, f = f(n·v, r)
            let g_f = g_dir.dot(refl - n);
            if roughness > MIN_ROUGHNESS {
                out.orm.y += g_f * lut_s.d_roughness.z;
            }
            let g_refl = g_dir * blend_f;
            g_n += g_dir * (1.0 - blend_f);
            g_n += 2.0 * (v * g_refl.dot(n) + g_refl * nv_raw);
            if nv_raw > MIN_NDOTV && nv_raw < 1.0 {
                g_n += v * (g_f * lut_s.d_ndotv.z);
            }
        }
        if nv_raw > MIN_NDOTV && nv_raw < 1.0 {
            let g_nv = g_a * lut_s.d_ndotv.x + g_b * lut_s.d_ndotv.y;
            g_n += v * g_nv;
        }
    }

    out.orm.x = g.dot(bracket);
    out.normal = g_n;
    out
}

/// Pulls a shading-normal gradient back to the raw normal texel.
pub fn normal_texel_vjp(frag: &Fragment, normal_texel: DVec3, g_n: DVec3) -> DVec3 {
    let raw = normal_texel * 2.0 - 1.0;
    if raw.length_squared() == 0.0 {
        return DVec3::ZERO;
    }
    let ts = raw.normalize();
    let (t, b, n) = frag.tbn();
    let w = t * ts.x + b * ts.y + n * ts.z;
    let g_w = normalize_vjp(w, g_n);
    let g_ts = DVec3::new(g_w.dot(t), g_w.dot(b), g_w.dot(n));
    normalize_vjp(raw, g_ts) * 2.0
}
