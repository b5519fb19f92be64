//! Trainable environment cube map and its prefiltered shading tables.
//!
//! Both tables are linear maps of the environment texels. The specular mips
//! keep their sparse kernel so gradients can be pulled back to the source
//! texels; the irradiance table is an analytic cosine quadrature whose weights
//! are recomputed on demand.

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use super::brdf::{alpha, sample_ggx_half, MIN_ROUGHNESS};
use crate::cubemap::{CubeTap, Cubemap};
use crate::error::{Error, Result};
use crate::math::{hammersley, mix, reflect, seed_shift, to_world};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub cube: Cubemap,
    pub trainable: bool,
    /// Bumped on every mutation so stale prefiltered tables can be detected.
    pub version: u64,
}

impl EnvironmentMap {
    pub fn new(cube: Cubemap) -> Result<Self> {
        let env = Self {
            cube,
            trainable: false,
            version: 0,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn constant(res: usize, radiance: DVec3) -> Result<Self> {
        Self::new(Cubemap::new(res, radiance))
    }

    pub fn validate(&self) -> Result<()> {
        let res = self.cube.res;
        if res == 0 || !res.is_power_of_two() {
            return Err(Error::Environment(format!("face resolution {res} is not a power of two")));
        }
        if self.cube.data.len() != 6 * res * res {
            return Err(Error::Environment("face size mismatch".into()));
        }
        if self.cube.data.iter().any(|v| !v.is_finite() || v.min_element() < 0.0) {
            return Err(Error::Environment("radiance must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn res(&self) -> usize {
        self.cube.res
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            cube: Cubemap {
                res: self.cube.res,
                data: self.cube.data.iter().map(|v| *v * s).collect(),
            },
            trainable: self.trainable,
            version: self.version + 1,
        }
    }

    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn clamp_non_negative(&mut self) {
        for v in &mut self.cube.data {
            *v = v.max(DVec3::ZERO);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefilterSettings {
    pub levels: usize,
    pub samples: u32,
    pub seed: u64,
    /// Coarsest face resolution of the specular pyramid.
    pub min_res: usize,
    /// Face resolution of the irradiance table (capped at the env resolution).
    pub irradiance_res: usize,
    /// Environment resolution the irradiance quadrature runs on (box-downsampled).
    pub irradiance_source_res: usize,
}

impl Default for PrefilterSettings {
    fn default() -> Self {
        Self {
            levels: 6,
            samples: 256,
            seed: 0,
            min_res: 8,
            irradiance_res: 16,
            irradiance_source_res: 32,
        }
    }
}

/// Sparse rows of a linear map onto the source cube map (CSR layout).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseKernel {
    pub offsets: Vec<usize>,
    pub entries: Vec<(u32, f64)>,
}

impl SparseKernel {
    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn apply(&self, src: &[DVec3]) -> Vec<DVec3> {
        (0..self.offsets.len() - 1)
            .map(|i| self.row(i).iter().map(|&(j, w)| src[j as usize] * w).sum())
            .collect()
    }

    /// dst += Kᵀ g
    pub fn apply_transpose(&self, g: &[DVec3], dst: &mut [DVec3]) {
        for (i, gi) in g.iter().enumerate() {
            if *gi == DVec3::ZERO {
                continue;
            }
            for &(j, w) in self.row(i) {
                dst[j as usize] += *gi * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefilteredEnv {
    /// Mip ℓ holds roughness ℓ / (levels - 1); mip 0 is a copy of the source.
    pub specular: Vec<Cubemap>,
    /// Kernels for mips 1.. (mip 0 is the identity).
    pub kernels: Vec<SparseKernel>,
    pub irradiance: Cubemap,
    pub source_version: u64,
    pub source_res: usize,
    pub settings: PrefilterSettings,
}

impl PrefilteredEnv {
    /// Builds both the specular pyramid and the irradiance table.
    pub fn build(env: &EnvironmentMap, settings: PrefilterSettings) -> Result<Self> {
        let mut pre = prefilter_specular(env, settings)?;
        pre.irradiance = convolve_irradiance(env, &settings);
        Ok(pre)
    }

    /// Brings the tables up to date with `env`. The specular kernels depend
    /// only on the sample sets, so for an unchanged resolution they are
    /// re-applied instead of rebuilt; the result is identical to [`Self::build`].
    pub fn refresh(&mut self, env: &EnvironmentMap) -> Result<()> {
        if self.source_version == env.version && self.source_res == env.res() {
            return Ok(());
        }
        if self.source_res != env.res() {
            *self = Self::build(env, self.settings)?;
            return Ok(());
        }
        env.validate()?;
        self.specular[0] = env.cube.clone();
        for (mip, kernel) in self.specular[1..].iter_mut().zip(&self.kernels) {
            mip.data = kernel.apply(&env.cube.data);
        }
        self.irradiance = convolve_irradiance(env, &self.settings);
        self.source_version = env.version;
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.specular.len()
    }

    pub fn check_fresh(&self, env: &EnvironmentMap) -> Result<()> {
        if self.source_version != env.version || self.source_res != env.res() {
            return Err(Error::StalePrefilter {
                built: self.source_version,
                current: env.version,
            });
        }
        Ok(())
    }

    pub fn roughness_of_level(&self, level: usize) -> f64 {
        level as f64 / (self.levels() - 1) as f64
    }

    /// Continuous mip coordinate for a (floored) roughness.
    fn level_coord(&self, roughness: f64) -> (usize, f64, bool) {
        let max = (self.levels() - 1) as f64;
        let p = roughness.clamp(0.0, 1.0) * max;
        if p >= max {
            return (self.levels() - 2, 1.0, false);
        }
        let i = p.floor() as usize;
        (i, p - i as f64, roughness > 0.0)
    }

    /// Trilinear specular lookup.
    pub fn specular(&self, dir: DVec3, roughness: f64) -> DVec3 {
        let (l0, f, _) = self.level_coord(roughness);
        let a = self.specular[l0].sample(dir);
        let b = self.specular[l0 + 1].sample(dir);
        mix(a, b, f)
    }

    /// The two mip levels touched by a lookup, their blend weights, and d(value)/d(roughness) factor.
    pub fn specular_levels(&self, roughness: f64) -> [(usize, f64); 2] {
        let (l0, f, _) = self.level_coord(roughness);
        [(l0, 1.0 - f), (l0 + 1, f)]
    }

    /// d(specular)/d(roughness) at a direction.
    pub fn specular_d_roughness(&self, dir: DVec3, roughness: f64) -> DVec3 {
        let (l0, _, active) = self.level_coord(roughness);
        if !active {
            return DVec3::ZERO;
        }
        (self.specular[l0 + 1].sample(dir) - self.specular[l0].sample(dir))
            * (self.levels() - 1) as f64
    }

    pub fn irradiance(&self, n: DVec3) -> DVec3 {
        self.irradiance.sample(n)
    }

    /// Pulls gradients on the tables back to the source environment texels.
    pub fn backward(&self, grads: &EnvTableGrad, env: &EnvironmentMap) -> Vec<DVec3> {
        let mut out = grads.mips[0].clone();
        for (kernel, g) in self.kernels.iter().zip(&grads.mips[1..]) {
            kernel.apply_transpose(g, &mut out);
        }
        irradiance_backward(env, &self.settings, &grads.irradiance, &mut out);
        out
    }
}

/// Gradient accumulators congruent to a [`PrefilteredEnv`]'s tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTableGrad {
    pub mips: Vec<Vec<DVec3>>,
    pub irradiance: Vec<DVec3>,
}

impl EnvTableGrad {
    pub fn zeros_like(pre: &PrefilteredEnv) -> Self {
        Self {
            mips: pre.specular.iter().map(|m| vec![DVec3::ZERO; m.len()]).collect(),
            irradiance: vec![DVec3::ZERO; pre.irradiance.len()],
        }
    }

    pub fn add_taps(buf: &mut [DVec3], taps: &[CubeTap; 4], scale: f64, g: DVec3) {
        for &(i, w, _) in taps {
            buf[i] += g * (w * scale);
        }
    }
}

fn mip_res(env_res: usize, level: usize, min_res: usize) -> usize {
    (env_res >> level).max(min_res.min(env_res)).max(1)
}

/// GGX-weighted prefiltered pyramid under the n = v = r assumption.
pub fn prefilter_specular(env: &EnvironmentMap, settings: PrefilterSettings) -> Result<PrefilteredEnv> {
    env.validate()?;
    if settings.levels < 2 {
        return Err(Error::Config(format!("prefilter needs at least 2 levels, got {}", settings.levels)));
    }
    if settings.samples == 0 {
        return Err(Error::Config("prefilter needs at least one sample".into()));
    }
    let levels = settings.levels;
    let mut specular = vec![env.cube.clone()];
    let mut kernels = Vec::with_capacity(levels - 1);
    for level in 1..levels {
        let roughness = (level as f64 / (levels - 1) as f64).max(MIN_ROUGHNESS);
        let res = mip_res(env.res(), level, settings.min_res);
        let target = Cubemap::new(res, DVec3::ZERO);
        let shift = seed_shift(settings.seed.wrapping_add(level as u64));
        let rows = par::map_range(target.len(), |i| {
            prefilter_row(&env.cube, target.dir_of(i), roughness, settings.samples, shift)
        });
        let mut kernel = SparseKernel {
            offsets: Vec::with_capacity(rows.len() + 1),
            entries: Vec::new(),
        };
        kernel.offsets.push(0);
        for row in rows {
            kernel.entries.extend(row);
            kernel.offsets.push(kernel.entries.len());
        }
        let data = kernel.apply(&env.cube.data);
        specular.push(Cubemap { res, data });
        kernels.push(kernel);
    }
    Ok(PrefilteredEnv {
        specular,
        kernels,
        irradiance: Cubemap::new(1, DVec3::ZERO),
        source_version: env.version,
        source_res: env.res(),
        settings,
    })
}

fn prefilter_row(src: &Cubemap, n: DVec3, roughness: f64, samples: u32, shift: DVec2) -> Vec<(u32, f64)> {
    let a = alpha(roughness);
    let mut taps: Vec<(u32, f64)> = Vec::with_capacity(samples as usize * 4);
    let mut total = 0.0;
    for k in 0..samples {
        let h = to_world(sample_ggx_half(hammersley(k, samples, shift), a), n);
        let l = reflect(n, h);
        let nl = n.dot(l);
        if nl <= 0.0 {
            continue;
        }
        let k = a * 0.5;
        let weight = nl / (nl * (1.0 - k) + k);
        total += weight;
        for (i, w, _) in src.taps(l) {
            if w != 0.0 {
                taps.push((i as u32, w * weight));
            }
        }
    }
    if total == 0.0 {
        // fall back to the mirror direction
        return src.taps(n).iter().map(|&(i, w, _)| (i as u32, w)).collect();
    }
    taps.sort_unstable_by_key(|t| t.0);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(taps.len());
    for (i, w) in taps {
        match merged.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => merged.push((i, w)),
        }
    }
    for e in &mut merged {
        e.1 /= total;
    }
    merged
}

/// Number of 2× box reductions applied before the irradiance quadrature.
fn irradiance_reductions(env_res: usize, settings: &PrefilterSettings) -> u32 {
    let target = settings.irradiance_source_res.max(1);
    let mut res = env_res;
    let mut k = 0;
    while res > target && res.is_multiple_of(2) {
        res /= 2;
        k += 1;
    }
    k
}

fn irradiance_source(env: &EnvironmentMap, settings: &PrefilterSettings) -> Cubemap {
    let mut src = env.cube.clone();
    for _ in 0..irradiance_reductions(env.res(), settings) {
        src = src.downsample();
    }
    src
}

/// Cosine-weighted average of incident radiance around each texel normal, by
/// exact quadrature over the (reduced) environment texels.
pub fn convolve_irradiance(env: &EnvironmentMap, settings: &PrefilterSettings) -> Cubemap {
    let src = irradiance_source(env, settings);
    let res = settings.irradiance_res.min(env.res()).max(1);
    let target = Cubemap::new(res, DVec3::ZERO);
    let dirs: Vec<(DVec3, f64)> = (0..src.len())
        .map(|j| (src.dir_of(j), src.texel_solid_angle(j)))
        .collect();
    let data = par::map_range(target.len(), |i| {
        let n = target.dir_of(i);
        let mut num = DVec3::ZERO;
        let mut den = 0.0;
        for (j, &(d, sa)) in dirs.iter().enumerate() {
            let c = n.dot(d);
            if c > 0.0 {
                num += src.data[j] * (c * sa);
                den += c * sa;
            }
        }
        num / den
    });
    Cubemap { res, data }
}

fn irradiance_backward(env: &EnvironmentMap, settings: &PrefilterSettings, g: &[DVec3], out: &mut [DVec3]) {
    if g.iter().all(|v| *v == DVec3::ZERO) {
        return;
    }
    let k = irradiance_reductions(env.res(), settings);
    let src_res = env.res() >> k;
    let src = Cubemap::new(src_res, DVec3::ZERO);
    let res = settings.irradiance_res.min(env.res()).max(1);
    let target = Cubemap::new(res, DVec3::ZERO);
    let dirs: Vec<(DVec3, f64)> = (0..src.len())
        .map(|j| (src.dir_of(j), src.texel_solid_angle(j)))
        .collect();
    let mut g_src = vec![DVec3::ZERO; src.len()];
    for (i, gi) in g.iter().enumerate() {
        if *gi == DVec3::ZERO {
            continue;
        }
        let n = target.dir_of(i);
        let den: f64 = dirs.iter().map(|&(d, sa)| (n.dot(d)).max(0.0) * sa).sum();
        for (j, &(d, sa)) in dirs.iter().enumerate() {
            let c = n.dot(d);
            if c > 0.0 {
                g_src[j] += *gi * (c * sa / den);
            }
        }
    }
    // adjoint of the box reductions: spread evenly over the 4^k children
    let block = 1usize << k;
    let share = 1.0 / (block * block) as f64;
    let full = env.res();
    for face in 0..6 {
        for y in 0..full {
            for x in 0..full {
                let j = (face * src_res + y / block) * src_res + x / block;
                out[(face * full + y) * full + x] += g_src[j] * share;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refresh_matches_rebuild() {
        let mut env = EnvironmentMap::new(Cubemap::from_fn(8, |d| DVec3::new(d.x.max(0.0), 0.5, d.z * d.z))).unwrap();
        let settings = PrefilterSettings {
            levels: 3,
            samples: 32,
            ..Default::default()
        };
        let mut pre = PrefilteredEnv::build(&env, settings).unwrap();
        for v in &mut env.cube.data {
            *v = *v * 1.5 + DVec3::new(0.1, 0.0, 0.2);
        }
        env.touch();
        assert!(pre.check_fresh(&env).is_err());
        pre.refresh(&env).unwrap();
        assert_eq!(pre, PrefilteredEnv::build(&env, settings).unwrap());
    }

    fn settings() -> PrefilterSettings {
        PrefilterSettings {
            levels: 4,
            samples: 64,
            seed: 5,
            min_res: 2,
            irradiance_res: 4,
            irradiance_source_res: 4,
        }
    }

    #[test]
    fn constant_env_gives_constant_tables() {
        let c = DVec3::new(0.5, 1.0, 2.0);
        let env = EnvironmentMap::constant(8, c).unwrap();
        let pre = PrefilteredEnv::build(&env, settings()).unwrap();
        for mip in &pre.specular {
            for v in &mip.data {
                assert!((*v - c).abs().max_element() < 1e-4);
            }
        }
        for v in &pre.irradiance.data {
            assert!((*v - c).abs().max_element() < 1e-4);
        }
    }

    #[test]
    fn black_env_gives_zero_irradiance() {
        let env = EnvironmentMap::constant(8, DVec3::ZERO).unwrap();
        let irr = convolve_irradiance(&env, &settings());
        assert!(irr.data.iter().all(|v| *v == DVec3::ZERO));
    }

    #[test]
    fn rejects_bad_inputs() {
        let env = EnvironmentMap::constant(8, DVec3::ONE).unwrap();
        let mut s = settings();
        s.levels = 1;
        assert!(prefilter_specular(&env, s).is_err());
        assert!(EnvironmentMap::constant(6, DVec3::ONE).is_err());
        assert!(EnvironmentMap::new(Cubemap::new(4, DVec3::new(-1.0, 0.0, 0.0))).is_err());
    }

    #[test]
    fn stale_tables_are_detected() {
        let mut env = EnvironmentMap::constant(4, DVec3::ONE).unwrap();
        let pre = PrefilteredEnv::build(&env, settings()).unwrap();
        assert!(pre.check_fresh(&env).is_ok());
        env.touch();
        assert!(matches!(pre.check_fresh(&env), Err(Error::StalePrefilter { .. })));
    }

    #[test]
    fn mip_zero_is_the_source() {
        let env = EnvironmentMap::new(Cubemap::from_fn(8, |d| (d + 1.0) * 0.5)).unwrap();
        let pre = prefilter_specular(&env, settings()).unwrap();
        assert_eq!(pre.specular[0], env.cube);
    }

    #[test]
    fn kernels_are_the_forward_map() {
        let env = EnvironmentMap::new(Cubemap::from_fn(8, |d| DVec3::splat(d.x.max(0.0) * 3.0) + 0.1)).unwrap();
        let pre = prefilter_specular(&env, settings()).unwrap();
        for k in &pre.kernels {
            for i in 0..k.offsets.len() - 1 {
                let s: f64 = k.row(i).iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn irradiance_transpose_matches_forward() {
        // <g, K e> == <K^T g, e> for the irradiance quadrature
        let s = settings();
        let env = EnvironmentMap::new(Cubemap::from_fn(8, |d| DVec3::new(d.x + 1.0, d.y * d.y, (d.z * 3.0).cos() + 1.0))).unwrap();
        let irr = convolve_irradiance(&env, &s);
        let g: Vec<DVec3> = (0..irr.len()).map(|i| DVec3::new((i as f64).sin(), 1.0, (i % 3) as f64)).collect();
        let lhs: f64 = irr.data.iter().zip(&g).map(|(a, b)| a.dot(*b)).sum();
        let mut back = vec![DVec3::ZERO; env.cube.len()];
        irradiance_backward(&env, &s, &g, &mut back);
        let rhs: f64 = back.iter().zip(&env.cube.data).map(|(a, b)| a.dot(*b)).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
