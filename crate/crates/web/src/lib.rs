//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three interactive pieces: a material preview of a sphere under a studio
//! environment, the BRDF integration table as an image, and a live
//! text-guided colour edit of a sphere's albedo driven by the mock predictor.

use glam::DVec3;
use wasm_bindgen::prelude::*;

use reltex_core::cubemap::Cubemap;
use reltex_core::diffrender::{tonemap, ParameterSet, RenderOptions, Renderer, TrainableMask};
use reltex_core::geometry::Mesh;
use reltex_core::guidance::{ColorCaptioner, DiffusionSchedule, GuidanceConfig, TargetImagePredictor};
use reltex_core::img::Image;
use reltex_core::optimize::checkpoint::Container;
use reltex_core::optimize::{CameraConfig, OptimizeConfig, OrbitPose, Scene, Session};
use reltex_core::shading::{BrdfLut, EnvironmentMap, MaterialSet, PrefilterSettings, PrefilteredEnv};

const FOV: f64 = 40.0;
const RADIUS: f64 = 3.2;

fn js_err(e: reltex_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Soft sky with a warm key light.
fn studio(d: DVec3) -> DVec3 {
    let key = DVec3::new(0.5, 0.6, 0.62).normalize();
    DVec3::new(0.35, 0.4, 0.5)
        + DVec3::new(-0.05, 0.0, 0.1) * d.y
        + DVec3::new(0.1, 0.05, 0.0) * d.x
        + DVec3::new(1.5, 1.3, 1.0) * d.dot(key).max(0.0).powi(4)
}

fn prefilter_settings() -> PrefilterSettings {
    PrefilterSettings {
        samples: 128,
        min_res: 4,
        ..Default::default()
    }
}

fn rgba(img: &Image) -> Vec<u8> {
    img.to_unorm8()
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

fn render_rgba(
    scene: &Scene,
    params: &ParameterSet,
    pre: &PrefilteredEnv,
    azimuth: f64,
    elevation: f64,
    size: usize,
) -> Result<Vec<u8>, reltex_core::Error> {
    let pose = OrbitPose {
        azimuth,
        elevation: elevation.clamp(-85.0, 85.0),
        radius: RADIUS,
    };
    let camera = pose.camera(scene.center(), FOV, size, size)?;
    let renderer = Renderer {
        mesh: &scene.mesh,
        params,
        prefiltered: pre,
        lut: &scene.lut,
        options: scene.render,
    };
    Ok(rgba(&tonemap(&renderer.render(&camera)?.image)))
}

fn studio_scene(lut_res: usize) -> Result<(Scene, EnvironmentMap, PrefilteredEnv), reltex_core::Error> {
    let scene = Scene {
        mesh: Mesh::uv_sphere(1.0, 48, 24),
        lut: BrdfLut::precompute(lut_res, 128, 0)?,
        render: RenderOptions {
            background: DVec3::splat(0.08),
            ..Default::default()
        },
    };
    let env = EnvironmentMap::new(Cubemap::from_fn(16, studio))?;
    let pre = PrefilteredEnv::build(&env, prefilter_settings())?;
    Ok((scene, env, pre))
}

/// Sphere with one uniform material under the studio environment.
#[wasm_bindgen]
pub struct Preview {
    scene: Scene,
    params: ParameterSet,
    pre: PrefilteredEnv,
    size: usize,
}

#[wasm_bindgen]
impl Preview {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize) -> Result<Preview, JsError> {
        let (scene, env, pre) = studio_scene(32).map_err(js_err)?;
        let materials = MaterialSet::uniform(1, DVec3::new(0.8, 0.3, 0.2), DVec3::new(1.0, 0.4, 0.0)).map_err(js_err)?;
        let params = ParameterSet::new(materials, env, TrainableMask::TEXTURES).map_err(js_err)?;
        Ok(Preview {
            scene,
            params,
            pre,
            size: size.max(8),
        })
    }

    /// Linear base colour, roughness and metalness, each in [0, 1].
    pub fn set_material(&mut self, r: f64, g: f64, b: f64, roughness: f64, metalness: f64) {
        let m = &mut self.params.materials;
        m.kd.texels.fill(DVec3::new(r, g, b).clamp(DVec3::ZERO, DVec3::ONE));
        m.orm.texels.fill(DVec3::new(1.0, roughness.clamp(0.0, 1.0), metalness.clamp(0.0, 1.0)));
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// RGBA8 pixels of the sphere seen from the given orbit angles (degrees).
    pub fn render(&self, azimuth: f64, elevation: f64) -> Result<Vec<u8>, JsError> {
        render_rgba(&self.scene, &self.params, &self.pre, azimuth, elevation, self.size).map_err(js_err)
    }

    /// Side length of the BRDF table.
    pub fn lut_size(&self) -> usize {
        self.scene.lut.res
    }

    /// The BRDF table as RGBA8: red = scale A, green = bias B, blue = the
    /// lookup-direction blend. Rows run from smooth (top) to rough.
    pub fn lut_rgba(&self) -> Vec<u8> {
        let lut = &self.scene.lut;
        let img = Image::from_fn(lut.res, lut.res, |x, y| lut.data[y * lut.res + x]);
        rgba(&img)
    }
}

/// A colour edit of a grey sphere toward the colour named in a prompt,
/// advanced a few optimizer steps at a time. State between calls is a
/// checkpoint, so the run is identical however it is chunked.
#[wasm_bindgen]
pub struct ColorEdit {
    scene: Scene,
    cfg: OptimizeConfig,
    guidance: GuidanceConfig,
    state: Container,
    params: ParameterSet,
    pre: PrefilteredEnv,
    source_prompt: String,
    iteration: usize,
    size: usize,
}

#[wasm_bindgen]
impl ColorEdit {
    #[wasm_bindgen(constructor)]
    pub fn new(target_prompt: &str, iterations: usize, size: usize, seed: u64) -> Result<ColorEdit, JsError> {
        let (scene, env, _) = studio_scene(16).map_err(js_err)?;
        let materials = MaterialSet::uniform(16, DVec3::splat(0.45), DVec3::new(1.0, 0.5, 0.0)).map_err(js_err)?;
        let params = ParameterSet::new(materials, env, TrainableMask::TEXTURES).map_err(js_err)?;
        let cfg = OptimizeConfig {
            iterations,
            resolution: 32,
            lr_texture: 0.02,
            seed,
            camera: CameraConfig {
                radius: (RADIUS, RADIUS),
                elevation: (-10.0, 30.0),
                azimuth: (0.0, 360.0),
                fov: FOV,
            },
            prefilter: prefilter_settings(),
            ..Default::default()
        };
        let guidance = GuidanceConfig {
            source_prompt: "a gray object".into(),
            target_prompt: target_prompt.into(),
            adjust_period: 25,
            ..Default::default()
        };
        let session = Session::new(&scene, params, cfg.clone(), &guidance).map_err(js_err)?;
        let state = session.checkpoint();
        let (params, pre) = (session.params().clone(), session.prefiltered().clone());
        let source_prompt = session.source_prompt().to_string();
        drop(session);
        Ok(ColorEdit {
            scene,
            cfg,
            guidance,
            state,
            params,
            pre,
            source_prompt,
            iteration: 0,
            size: size.max(8),
        })
    }

    /// Runs up to `steps` iterations; returns the iteration reached.
    pub fn advance(&mut self, steps: usize) -> Result<usize, JsError> {
        let mut session = Session::resume(&self.scene, &self.state, self.cfg.clone(), &self.guidance).map_err(js_err)?;
        let mut pred = TargetImagePredictor::new(DiffusionSchedule::default()).with_color_words();
        let mut captioner = ColorCaptioner;
        for _ in 0..steps {
            if session.is_done() {
                break;
            }
            session.step(&mut pred, &mut captioner).map_err(js_err)?;
        }
        self.state = session.checkpoint();
        self.params = session.params().clone();
        self.pre = session.prefiltered().clone();
        self.source_prompt = session.source_prompt().to_string();
        self.iteration = session.iteration();
        Ok(self.iteration)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    /// The current source prompt, refreshed from captions during the run.
    pub fn source_prompt(&self) -> String {
        self.source_prompt.clone()
    }

    pub fn render(&self, azimuth: f64, elevation: f64) -> Result<Vec<u8>, JsError> {
        render_rgba(&self.scene, &self.params, &self.pre, azimuth, elevation, self.size).map_err(js_err)
    }

    /// Mean linear albedo of the edited texture as `[r, g, b]`.
    pub fn mean_albedo(&self) -> Vec<f64> {
        let t = &self.params.materials.kd.texels;
        (t.iter().sum::<DVec3>() / t.len() as f64).to_array().to_vec()
    }
}
