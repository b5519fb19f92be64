//! Loading and writing meshes, material maps, environment maps and renders.

use std::fs;
use std::path::Path;

use glam::DVec3;
use image::{ImageBuffer, Rgb};

use reltex_core::cubemap::{cubemap_to_equirect, equirect_to_cubemap, Cubemap};
use reltex_core::diffrender::ParameterSet;
use reltex_core::geometry::{load_mesh, Mesh};
use reltex_core::img::Image;
use reltex_core::optimize::checkpoint::Container;
use reltex_core::shading::{EnvironmentMap, MaterialSet};
use reltex_core::texture::Texture;

use crate::config::SceneConfig;
use crate::failure::Failure;

pub fn mesh(spec: &str) -> Result<Mesh, Failure> {
    match spec {
        "builtin:sphere" => Ok(Mesh::uv_sphere(1.0, 64, 32)),
        "builtin:quad" => Ok(Mesh::quad(1.0)),
        "builtin:cube" => Ok(Mesh::cube()),
        s if s.starts_with("builtin:") => Err(Failure::Config(format!(
            "unknown builtin mesh {s:?} (expected sphere, quad or cube)"
        ))),
        path => {
            let report = load_mesh(path)?;
            if report.degenerate_dropped > 0 {
                log::warn!("{path}: dropped {} degenerate triangles", report.degenerate_dropped);
            }
            Ok(report.mesh)
        }
    }
}

/// Soft sky with a warm key light; bright enough to show specular lobes.
fn studio(d: DVec3) -> DVec3 {
    let key = DVec3::new(0.5, 0.6, 0.62).normalize();
    DVec3::new(0.35, 0.4, 0.5)
        + DVec3::new(-0.05, 0.0, 0.1) * d.y
        + DVec3::new(0.1, 0.05, 0.0) * d.x
        + DVec3::new(1.5, 1.3, 1.0) * d.dot(key).max(0.0).powi(4)
}

fn sky(d: DVec3) -> DVec3 {
    let up = d.y.max(0.0);
    let ground = DVec3::new(0.15, 0.12, 0.1);
    let horizon = DVec3::new(0.7, 0.75, 0.8);
    let zenith = DVec3::new(0.25, 0.45, 0.9);
    if d.y < 0.0 {
        ground
    } else {
        horizon.lerp(zenith, up.sqrt())
    }
}

pub fn environment(spec: &str, res: usize) -> Result<EnvironmentMap, Failure> {
    let cube = match spec {
        "builtin:studio" => Cubemap::from_fn(res, studio),
        "builtin:sky" => Cubemap::from_fn(res, sky),
        s if s.starts_with("constant:") => {
            let parts: Vec<f64> = s["constant:".len()..]
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Config(format!("bad constant environment {s:?}: {e}")))?;
            let c = match parts[..] {
                [v] => DVec3::splat(v),
                [r, g, b] => DVec3::new(r, g, b),
                _ => return Err(Failure::Config(format!("constant environment {s:?} needs 1 or 3 values"))),
            };
            Cubemap::new(res, c)
        }
        s if s.starts_with("builtin:") => {
            return Err(Failure::Config(format!(
                "unknown builtin environment {s:?} (expected studio or sky)"
            )))
        }
        path => equirect_to_cubemap(&read_hdr(Path::new(path))?, res)?,
    };
    Ok(EnvironmentMap::new(cube)?)
}

fn texture(path: Option<&Path>, srgb: bool, res: usize, fill: DVec3) -> Result<Texture, Failure> {
    match path {
        None => Ok(Texture::new(res, res, fill)?),
        Some(p) => Ok(Texture::from_image(&read_png(p, srgb)?)?),
    }
}

pub fn materials(scene: &SceneConfig) -> Result<MaterialSet, Failure> {
    let res = scene.texture_res;
    Ok(MaterialSet {
        kd: texture(scene.kd.as_deref(), true, res, DVec3::from_array(scene.base_color))?,
        orm: texture(
            scene.orm.as_deref(),
            false,
            res,
            DVec3::new(1.0, scene.roughness, scene.metalness),
        )?,
        normal: texture(scene.normal.as_deref(), false, res, reltex_core::shading::material::FLAT_NORMAL)?,
    })
}

pub fn read_png(path: &Path, srgb: bool) -> Result<Image, Failure> {
    let img = image::open(path).map_err(|e| Failure::asset(path.display(), e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let img = if srgb {
        Image::from_srgb8(w, h, img.as_raw())?
    } else {
        Image::from_unorm8(w, h, img.as_raw())?
    };
    Ok(img)
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::asset(dir.display(), e))?;
    }
    Ok(())
}

/// 8-bit PNG; `srgb` applies the sRGB curve to linear data.
pub fn write_png(path: &Path, img: &Image, srgb: bool) -> Result<(), Failure> {
    ensure_parent(path)?;
    let bytes = if srgb { img.to_srgb8() } else { img.to_unorm8() };
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Failure::Asset(format!("{}: image size mismatch", path.display())))?;
    buf.save(path).map_err(|e| Failure::asset(path.display(), e))
}

pub fn read_hdr(path: &Path) -> Result<Image, Failure> {
    let img = image::open(path).map_err(|e| Failure::asset(path.display(), e))?.to_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let flat: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
    Ok(Image::from_flat(w, h, &flat)?)
}

/// Linear floating-point Radiance HDR.
pub fn write_hdr(path: &Path, img: &Image) -> Result<(), Failure> {
    ensure_parent(path)?;
    let flat: Vec<f32> = img.to_flat().iter().map(|&v| v.max(0.0) as f32).collect();
    let buf: ImageBuffer<Rgb<f32>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, flat)
        .ok_or_else(|| Failure::Asset(format!("{}: image size mismatch", path.display())))?;
    buf.save(path).map_err(|e| Failure::asset(path.display(), e))
}

pub fn write_env(path: &Path, env: &EnvironmentMap) -> Result<(), Failure> {
    let r = env.res();
    write_hdr(path, &cubemap_to_equirect(&env.cube, 4 * r, 2 * r))
}

fn flatten(v: &[DVec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(v: &[f64]) -> Vec<DVec3> {
    v.chunks_exact(3).map(DVec3::from_slice).collect()
}

/// Full-precision copy of the edited parameters (the PNGs are quantized).
pub fn write_params(path: &Path, p: &ParameterSet) -> Result<(), Failure> {
    ensure_parent(path)?;
    let mut c = Container::new();
    let m = &p.materials;
    for (name, t) in [("kd", &m.kd), ("orm", &m.orm), ("normal", &m.normal)] {
        c.put_f64(name, &[t.height, t.width, 3], flatten(&t.texels));
    }
    let r = p.env.res();
    c.put_f64("env", &[6, r, r, 3], flatten(&p.env.cube.data));
    Ok(c.write(path)?)
}

pub fn read_params(path: &Path) -> Result<(MaterialSet, EnvironmentMap), Failure> {
    let c = Container::read(path)?;
    let tex = |name: &str| -> Result<Texture, Failure> {
        let (shape, data) = c.get_f64(name)?;
        match *shape {
            [h, w, 3] => Ok(Texture::from_texels(w, h, unflatten(data))?),
            _ => Err(Failure::Asset(format!("{}: bad shape for {name}", path.display()))),
        }
    };
    let materials = MaterialSet {
        kd: tex("kd")?,
        orm: tex("orm")?,
        normal: tex("normal")?,
    };
    let (shape, data) = c.get_f64("env")?;
    let res = match *shape {
        [6, r, r2, 3] if r == r2 => r,
        _ => return Err(Failure::Asset(format!("{}: bad shape for env", path.display()))),
    };
    let env = EnvironmentMap::new(Cubemap {
        res,
        data: unflatten(data),
    })?;
    Ok((materials, env))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_hdr_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 3, |x, y| DVec3::new(x as f64 / 4.0, y as f64 / 2.0, 0.25));
        let p = dir.path().join("a/b.png");
        write_png(&p, &img, false).unwrap();
        let back = read_png(&p, false).unwrap();
        assert!(back.data.iter().zip(&img.data).all(|(a, b)| (*a - *b).abs().max_element() <= 0.5 / 255.0));
        let h = dir.path().join("c.hdr");
        let hdr = img.map(|v| v * 7.5);
        write_hdr(&h, &hdr).unwrap();
        let back = read_hdr(&h).unwrap();
        // Radiance RGBE keeps about 8 bits of mantissa
        assert!(back.data.iter().zip(&hdr.data).all(|(a, b)| (*a - *b).abs().max_element() <= 0.02 * b.max_element() + 1e-6));
    }

    #[test]
    fn builtin_specs() {
        assert!(mesh("builtin:torus").is_err());
        assert_eq!(environment("constant:0.5", 4).unwrap().cube.data[0], DVec3::splat(0.5));
        assert_eq!(environment("constant:1,2,3", 4).unwrap().cube.data[7], DVec3::new(1.0, 2.0, 3.0));
        assert_eq!(environment("constant:1,2", 4).unwrap_err().exit_code(), 2);
        assert_eq!(environment("/no/such/file.hdr", 4).unwrap_err().exit_code(), 3);
        assert!(environment("builtin:studio", 8).unwrap().cube.data.iter().all(|v| v.min_element() > 0.0));
    }
}
