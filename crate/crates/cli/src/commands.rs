use std::path::{Path, PathBuf};

use glam::DVec3;
use serde_json::{json, Value};

use reltex_core::diffrender::{tonemap, ParameterSet, RenderOptions, Renderer, TrainableMask};
use reltex_core::eval::{score_views, EVAL_VIEWS};
use reltex_core::img::Image;
use reltex_core::optimize::checkpoint::Container;
use reltex_core::optimize::{turntable, Mode, Scene, Session, TrainLog};
use reltex_core::shading::{EnvironmentMap, MaterialSet, PrefilteredEnv};

use crate::assets;
use crate::backend;
use crate::cache::Cache;
use crate::config::ProjectConfig;
use crate::failure::Failure;

/// Output layout under the configured directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn textures(&self) -> PathBuf {
        self.root.join("textures")
    }
    pub fn env(&self) -> PathBuf {
        self.root.join("env")
    }
    pub fn renders(&self) -> PathBuf {
        self.root.join("renders")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("log")
    }
    /// Full-precision parameters written by `edit` and `relight`.
    pub fn params(&self) -> PathBuf {
        self.textures().join("params.bin")
    }
}

struct Loaded {
    scene: Scene,
    materials: MaterialSet,
    env: EnvironmentMap,
}

fn load(cfg: &ProjectConfig, persist: bool) -> Result<Loaded, Failure> {
    cfg.validate()?;
    let mesh = assets::mesh(&cfg.scene.mesh)?;
    let materials = assets::materials(&cfg.scene)?;
    let env = assets::environment(&cfg.scene.env, cfg.scene.env_res)?;
    let (lut, _) = Cache::new(&cfg.output).lut(&cfg.render, persist)?;
    let render = RenderOptions {
        background: DVec3::from_array(cfg.render.background),
        ..Default::default()
    };
    Ok(Loaded {
        scene: Scene { mesh, lut, render },
        materials,
        env,
    })
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::asset(dir.display(), e))?;
    }
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    std::fs::write(path, text + "\n").map_err(|e| Failure::asset(path.display(), e))
}

fn linear_turntable(
    scene: &Scene,
    params: &ParameterSet,
    pre: &PrefilteredEnv,
    cfg: &ProjectConfig,
    views: usize,
) -> Result<Vec<Image>, Failure> {
    let r = &cfg.render;
    let renderer = Renderer {
        mesh: &scene.mesh,
        params,
        prefiltered: pre,
        lut: &scene.lut,
        options: scene.render,
    };
    turntable(views, r.elevation, r.radius)
        .iter()
        .map(|pose| {
            let cam = pose.camera(scene.center(), r.fov, r.resolution, r.resolution)?;
            Ok(renderer.render(&cam)?.image)
        })
        .collect()
}

pub fn precompute(cfg: &ProjectConfig) -> Result<Value, Failure> {
    let loaded = load(cfg, true)?;
    let cache = Cache::new(&cfg.output);
    let (_, lut_hit) = cache.lut(&cfg.render, true)?;
    let (_, env_hit) = cache.prefiltered(&loaded.env, cfg.optimize.prefilter, true)?;
    Ok(json!({
        "command": "precompute",
        "lut": { "path": cache.path(&crate::cache::lut_key(&cfg.render)), "cached": lut_hit },
        "prefiltered": {
            "path": cache.path(&crate::cache::prefilter_key(&loaded.env, &cfg.optimize.prefilter)),
            "cached": env_hit,
        },
    }))
}

/// Turntable of the configured scene, or of the edited parameters with `edited`.
pub fn render(cfg: &ProjectConfig, edited: bool) -> Result<Value, Failure> {
    let loaded = load(cfg, true)?;
    let layout = Layout::new(&cfg.output);
    let (materials, env) = if edited {
        assets::read_params(&layout.params())?
    } else {
        (loaded.materials, loaded.env)
    };
    let (pre, _) = Cache::new(&cfg.output).prefiltered(&env, cfg.optimize.prefilter, true)?;
    let params = ParameterSet::new(materials, env, TrainableMask::TEXTURES)?;
    let images = linear_turntable(&loaded.scene, &params, &pre, cfg, cfg.render.views)?;
    let prefix = if edited { "edited" } else { "view" };
    let mut files = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let png = layout.renders().join(format!("{prefix}_{i:02}.png"));
        assets::write_png(&png, &tonemap(img), false)?;
        assets::write_hdr(&layout.renders().join(format!("{prefix}_{i:02}.hdr")), img)?;
        files.push(png);
    }
    Ok(json!({ "command": "render", "views": images.len(), "files": files }))
}

/// Shared driver of `edit` and `relight`.
pub fn train(cfg: &ProjectConfig, mode: Mode, dry_run: bool, resume: Option<&Path>) -> Result<Value, Failure> {
    let command = match mode {
        Mode::TextureEdit => "edit",
        Mode::Relight => "relight",
    };
    let mut cfg = cfg.clone();
    cfg.optimize.mode = mode;
    cfg.validate_for_training()?;
    let loaded = load(&cfg, !dry_run)?;
    let mut backend = backend::connect(&cfg.backend, &cfg.guidance.source_prompt)?;
    if dry_run {
        backend.check(&cfg.optimize.effective_guidance(&cfg.guidance), cfg.optimize.resolution)?;
        let params = ParameterSet::new(loaded.materials, loaded.env, cfg.optimize.trainable())?;
        Session::new(&loaded.scene, params, cfg.optimize.clone(), &cfg.guidance)?;
        if let Some(path) = resume {
            Container::read(path)?;
        }
        return Ok(json!({ "command": command, "dry_run": true, "valid": true, "backend": backend.name }));
    }

    let layout = Layout::new(&cfg.output);
    let mut session = match resume {
        Some(path) => Session::resume(&loaded.scene, &Container::read(path)?, cfg.optimize.clone(), &cfg.guidance)?,
        None => {
            let params = ParameterSet::new(loaded.materials, loaded.env, cfg.optimize.trainable())?;
            Session::new(&loaded.scene, params, cfg.optimize.clone(), &cfg.guidance)?
        }
    };
    let period = cfg.optimize.checkpoint_period;
    let ckpt_dir = layout.checkpoints();
    let mut checkpoints = Vec::new();
    session.run(&mut backend.predictor, &mut backend.captioner, |s, report| {
        let it = s.iteration();
        if it % 50 == 0 || s.is_done() {
            log::info!(
                "{command} {it}/{}: |cot| {:.4e}, source {:?}",
                s.config().iterations,
                report.record.cotangent_norm,
                s.source_prompt()
            );
        }
        if period > 0 && it % period == 0 {
            std::fs::create_dir_all(&ckpt_dir).map_err(|e| reltex_core::Error::Io {
                path: ckpt_dir.clone(),
                source: e,
            })?;
            let path = ckpt_dir.join(format!("iter_{it:06}.ckpt"));
            s.checkpoint().write(&path)?;
            checkpoints.push(path);
        }
        Ok(())
    })?;

    let adjustments = session.log().adjustments().count();
    let (params, log) = session.into_parts();
    write_outputs(&layout, &cfg, &params, &log, mode)?;
    Ok(json!({
        "command": command,
        "iterations": cfg.optimize.iterations,
        "adjustments": adjustments,
        "checkpoints": checkpoints,
        "output": cfg.output,
    }))
}

fn write_outputs(
    layout: &Layout,
    cfg: &ProjectConfig,
    params: &ParameterSet,
    log: &TrainLog,
    mode: Mode,
) -> Result<(), Failure> {
    let m = &params.materials;
    if mode == Mode::TextureEdit {
        assets::write_png(&layout.textures().join("kd.png"), &m.kd.to_image(), true)?;
        assets::write_png(&layout.textures().join("orm.png"), &m.orm.to_image(), false)?;
        assets::write_png(&layout.textures().join("normal.png"), &m.normal.to_image(), false)?;
    }
    assets::write_env(&layout.env().join("env.hdr"), &params.env)?;
    assets::write_params(&layout.params(), params)?;
    let log_path = layout.log().join("train.ndjson");
    std::fs::create_dir_all(layout.log()).map_err(|e| Failure::asset(layout.log().display(), e))?;
    let file = std::fs::File::create(&log_path).map_err(|e| Failure::asset(log_path.display(), e))?;
    log.write_ndjson(std::io::BufWriter::new(file))
        .map_err(|e| Failure::asset(log_path.display(), e))?;
    write_json(
        &layout.log().join("config.json"),
        &serde_json::to_value(cfg).expect("config serializes"),
    )
}

/// Scores the edited parameters against the configured originals.
pub fn eval(cfg: &ProjectConfig) -> Result<Value, Failure> {
    cfg.validate()?;
    if cfg.prompts.source.trim().is_empty() || cfg.prompts.target.trim().is_empty() {
        return Err(Failure::Config("eval needs both source and target prompts".into()));
    }
    let loaded = load(cfg, true)?;
    let layout = Layout::new(&cfg.output);
    let cache = Cache::new(&cfg.output);
    let (edited_m, edited_env) = assets::read_params(&layout.params())?;

    let (pre, _) = cache.prefiltered(&loaded.env, cfg.optimize.prefilter, true)?;
    let before_params = ParameterSet::new(loaded.materials, loaded.env, TrainableMask::TEXTURES)?;
    let before = linear_turntable(&loaded.scene, &before_params, &pre, cfg, EVAL_VIEWS)?;
    let (pre, _) = cache.prefiltered(&edited_env, cfg.optimize.prefilter, true)?;
    let after_params = ParameterSet::new(edited_m, edited_env, TrainableMask::TEXTURES)?;
    let after = linear_turntable(&loaded.scene, &after_params, &pre, cfg, EVAL_VIEWS)?;

    let display = |v: Vec<Image>| v.iter().map(tonemap).collect::<Vec<_>>();
    let mut backend = backend::connect(&cfg.backend, &cfg.prompts.source)?;
    let report = score_views(
        &mut backend.embedder,
        &display(before),
        &display(after),
        &cfg.prompts.source,
        &cfg.prompts.target,
    )?;
    let v = serde_json::to_value(&report).expect("reports serialize");
    write_json(&layout.log().join("scores.json"), &v)?;
    Ok(json!({ "command": "eval", "report": v }))
}
