//! Content-addressed cache for the BRDF table and prefiltered environments.
//!
//! Entries live in `<out>/cache/<sha256>.bin`, keyed by every input that
//! affects the result (including seeds), so a changed input never hits a
//! stale entry.

use std::path::{Path, PathBuf};

use glam::DVec3;
use sha2::{Digest, Sha256};

use reltex_core::cubemap::Cubemap;
use reltex_core::optimize::checkpoint::Container;
use reltex_core::shading::env::SparseKernel;
use reltex_core::shading::{BrdfLut, EnvironmentMap, PrefilterSettings, PrefilteredEnv};

use crate::config::RenderConfig;
use crate::failure::Failure;

const LUT_TAG: &str = "brdf-lut/2";
const PREFILTER_TAG: &str = "prefiltered-env/1";

pub struct Cache {
    dir: PathBuf,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn flatten(v: &[DVec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(v: &[f64]) -> Vec<DVec3> {
    v.chunks_exact(3).map(DVec3::from_slice).collect()
}

pub fn lut_key(r: &RenderConfig) -> String {
    let mut h = Sha256::new();
    h.update(LUT_TAG);
    h.update((r.lut_res as u64).to_le_bytes());
    h.update(r.lut_samples.to_le_bytes());
    h.update(r.lut_seed.to_le_bytes());
    hex(&h.finalize())
}

pub fn prefilter_key(env: &EnvironmentMap, settings: &PrefilterSettings) -> String {
    let mut h = Sha256::new();
    h.update(PREFILTER_TAG);
    h.update((env.res() as u64).to_le_bytes());
    for v in &env.cube.data {
        for c in v.to_array() {
            h.update(c.to_le_bytes());
        }
    }
    h.update(serde_json::to_vec(settings).expect("settings serialize"));
    hex(&h.finalize())
}

impl Cache {
    pub fn new(out: &Path) -> Self {
        Self { dir: out.join("cache") }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    fn load(&self, key: &str) -> Option<Container> {
        let path = self.path(key);
        if !path.exists() {
            return None;
        }
        match Container::read(&path) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn store(&self, key: &str, c: &Container) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Failure::asset(self.dir.display(), e))?;
        let path = self.path(key);
        c.write(&path)?;
        Ok(path)
    }

    /// Returns the table and whether it came from the cache. With `persist`
    /// off a miss is computed but not written.
    pub fn lut(&self, r: &RenderConfig, persist: bool) -> Result<(BrdfLut, bool), Failure> {
        let key = lut_key(r);
        if let Some(c) = self.load(&key) {
            if let Ok((shape, data)) = c.get_f64("lut") {
                if shape == [r.lut_res, r.lut_res, 3] {
                    return Ok((
                        BrdfLut {
                            res: r.lut_res,
                            data: unflatten(data),
                        },
                        true,
                    ));
                }
            }
            log::warn!("cache entry {key} is malformed; recomputing");
        }
        let lut = BrdfLut::precompute(r.lut_res, r.lut_samples, r.lut_seed)?;
        if persist {
            let mut c = Container::new();
            c.put_f64("lut", &[lut.res, lut.res, 3], flatten(&lut.data));
            self.store(&key, &c)?;
        }
        Ok((lut, false))
    }

    pub fn prefiltered(
        &self,
        env: &EnvironmentMap,
        settings: PrefilterSettings,
        persist: bool,
    ) -> Result<(PrefilteredEnv, bool), Failure> {
        let key = prefilter_key(env, &settings);
        if let Some(c) = self.load(&key) {
            match decode_prefiltered(&c, env, settings) {
                Some(p) => return Ok((p, true)),
                None => log::warn!("cache entry {key} is malformed; recomputing"),
            }
        }
        let pre = PrefilteredEnv::build(env, settings)?;
        if persist {
            self.store(&key, &encode_prefiltered(&pre))?;
        }
        Ok((pre, false))
    }
}

fn put_cube(c: &mut Container, name: &str, cube: &Cubemap) {
    c.put_f64(name, &[6, cube.res, cube.res, 3], flatten(&cube.data));
}

fn get_cube(c: &Container, name: &str) -> Option<Cubemap> {
    let (shape, data) = c.get_f64(name).ok()?;
    match *shape {
        [6, r, r2, 3] if r == r2 => Some(Cubemap {
            res: r,
            data: unflatten(data),
        }),
        _ => None,
    }
}

fn encode_prefiltered(p: &PrefilteredEnv) -> Container {
    let mut c = Container::new();
    c.put_u64("levels", vec![p.specular.len() as u64, p.source_res as u64]);
    for (i, mip) in p.specular.iter().enumerate() {
        put_cube(&mut c, &format!("specular.{i}"), mip);
    }
    for (i, k) in p.kernels.iter().enumerate() {
        c.put_u64(&format!("kernel.{i}.offsets"), k.offsets.iter().map(|&o| o as u64).collect());
        c.put_u64(&format!("kernel.{i}.index"), k.entries.iter().map(|e| e.0 as u64).collect());
        let w: Vec<f64> = k.entries.iter().map(|e| e.1).collect();
        c.put_f64(&format!("kernel.{i}.weight"), &[w.len()], w);
    }
    put_cube(&mut c, "irradiance", &p.irradiance);
    c
}

fn decode_prefiltered(c: &Container, env: &EnvironmentMap, settings: PrefilterSettings) -> Option<PrefilteredEnv> {
    let [levels, source_res] = c.get_u64("levels").ok()?[..] else {
        return None;
    };
    if source_res as usize != env.res() || levels == 0 {
        return None;
    }
    let specular = (0..levels as usize)
        .map(|i| get_cube(c, &format!("specular.{i}")))
        .collect::<Option<Vec<_>>>()?;
    let kernels = (1..levels as usize)
        .map(|l| {
            let i = l - 1;
            let offsets: Vec<usize> = c
                .get_u64(&format!("kernel.{i}.offsets"))
                .ok()?
                .iter()
                .map(|&o| o as usize)
                .collect();
            let index = c.get_u64(&format!("kernel.{i}.index")).ok()?;
            let (_, weight) = c.get_f64(&format!("kernel.{i}.weight")).ok()?;
            if index.len() != weight.len() || offsets.last() != Some(&index.len()) {
                return None;
            }
            let entries = index.iter().zip(weight).map(|(&j, &w)| (j as u32, w)).collect();
            Some(SparseKernel { offsets, entries })
        })
        .collect::<Option<Vec<_>>>()?;
    Some(PrefilteredEnv {
        specular,
        kernels,
        irradiance: get_cube(c, "irradiance")?,
        source_version: env.version,
        source_res: env.res(),
        settings,
    })
}
