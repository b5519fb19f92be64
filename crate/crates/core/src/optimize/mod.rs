//! The editing loop: sample a view, render, noise, turn the predictor's answer
//! into a texel gradient, take an Adam step, project back into range, and
//! periodically re-caption the render to refresh the source prompt.
//!
//! [`Session`] owns the full mutable state (parameters, prefiltered tables,
//! optimizer moments, RNG position, current source prompt) so a run can be
//! checkpointed and resumed bit-exactly.

mod adam;
mod camera;
pub mod checkpoint;
mod trainlog;

pub use adam::{AdamConfig, AdamState, Moments, TENSOR_NAMES};
pub use camera::{sample_camera, sample_pose, turntable, CameraConfig, OrbitPose};
pub use trainlog::{IterationRecord, LogEntry, TensorNorms, TrainLog};

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubemap::Cubemap;
use crate::diffrender::{tonemap, tonemap_vjp, GradientSet, ParameterSet, RenderOptions, Renderer, TrainableMask};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::guidance::{
    adjust_source_prompt, rdl_from_latent, sds_from_latent, Adjustment, Captioner, DiffusionSchedule,
    FixedCaptioner, GuidanceConfig, GuidanceMode, NoisePredictor,
};
use crate::img::Image;
use crate::shading::{BrdfLut, EnvironmentMap, PrefilterSettings, PrefilteredEnv};
use crate::tensor::Tensor;
use crate::texture::Texture;
use checkpoint::Container;

/// Milliseconds since the call, for the log. Reads zero on targets without a
/// clock (browser wasm), where timing is informational only.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64() * 1e3
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Material maps train; the environment trains only if `train.env` is set.
    #[default]
    TextureEdit,
    /// Only the environment map trains.
    Relight,
}

/// Which material tensors train in texture-edit mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFlags {
    pub kd: bool,
    pub orm: bool,
    pub normal: bool,
    /// Co-train the environment map while editing textures.
    pub env: bool,
}

impl Default for TrainFlags {
    fn default() -> Self {
        Self {
            kd: true,
            orm: true,
            normal: true,
            env: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub iterations: usize,
    pub lr_texture: f64,
    pub lr_env: f64,
    pub adam: AdamConfig,
    /// Views rendered per step; their gradients are averaged.
    pub batch: usize,
    /// Square render resolution in pixels.
    pub resolution: usize,
    pub camera: CameraConfig,
    pub seed: u64,
    /// Iterations between checkpoints (0 disables them).
    pub checkpoint_period: usize,
    pub mode: Mode,
    pub train: TrainFlags,
    /// Keep direction adjustment active in relight mode.
    pub relight_adjust: bool,
    /// Abort after this many consecutive non-finite steps.
    pub max_skipped: usize,
    pub prefilter: PrefilterSettings,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            iterations: 600,
            lr_texture: 0.01,
            lr_env: 0.02,
            adam: AdamConfig::default(),
            batch: 1,
            resolution: 512,
            camera: CameraConfig::default(),
            seed: 0,
            checkpoint_period: 0,
            mode: Mode::TextureEdit,
            train: TrainFlags::default(),
            relight_adjust: false,
            max_skipped: 10,
            prefilter: PrefilterSettings::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.lr_texture > 0.0 && self.lr_env > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.resolution < 16 {
            return Err(Error::Config(format!("resolution {} < 16", self.resolution)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps > 0".into()));
        }
        self.camera.validate()?;
        let mask = self.trainable();
        if !mask.any() {
            return Err(Error::Config("nothing to train".into()));
        }
        Ok(())
    }

    pub fn trainable(&self) -> TrainableMask {
        match self.mode {
            Mode::Relight => TrainableMask::ENV_ONLY,
            Mode::TextureEdit => TrainableMask {
                kd: self.train.kd,
                orm: self.train.orm,
                normal: self.train.normal,
                env: self.train.env,
            },
        }
    }

    /// Guidance settings actually used for this mode.
    pub fn effective_guidance(&self, g: &GuidanceConfig) -> GuidanceConfig {
        let mut g = g.clone();
        if self.mode == Mode::Relight && !self.relight_adjust {
            g.adjust = false;
        }
        g
    }
}

/// Fixed inputs of a run.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: Mesh,
    pub lut: BrdfLut,
    pub render: RenderOptions,
}

impl Scene {
    pub fn center(&self) -> DVec3 {
        self.mesh.centroid()
    }
}

/// Result of one [`Session::step`].
#[derive(Debug, Clone)]
pub struct StepReport {
    pub record: IterationRecord,
    pub adjustment: Adjustment,
}

pub struct Session<'a> {
    scene: &'a Scene,
    cfg: OptimizeConfig,
    guidance: GuidanceConfig,
    schedule: DiffusionSchedule,
    params: ParameterSet,
    prefiltered: PrefilteredEnv,
    adam: AdamState,
    rng: ChaCha8Rng,
    iteration: usize,
    consecutive_skips: usize,
    source_prompt: String,
    log: TrainLog,
}

impl<'a> Session<'a> {
    pub fn new(scene: &'a Scene, mut params: ParameterSet, cfg: OptimizeConfig, guidance: &GuidanceConfig) -> Result<Self> {
        cfg.validate()?;
        guidance.validate()?;
        guidance.validate_prompts()?;
        let guidance = cfg.effective_guidance(guidance);
        params.trainable = cfg.trainable();
        params.env.trainable = params.trainable.env;
        params.validate()?;
        let prefiltered = PrefilteredEnv::build(&params.env, cfg.prefilter)?;
        Ok(Self {
            scene,
            schedule: DiffusionSchedule::default(),
            adam: AdamState::new(&params),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            iteration: 0,
            consecutive_skips: 0,
            source_prompt: guidance.source_prompt.clone(),
            log: TrainLog::default(),
            prefiltered,
            params,
            guidance,
            cfg,
        })
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn prefiltered(&self) -> &PrefilteredEnv {
        &self.prefiltered
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn source_prompt(&self) -> &str {
        &self.source_prompt
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn config(&self) -> &OptimizeConfig {
        &self.cfg
    }

    pub fn guidance(&self) -> &GuidanceConfig {
        &self.guidance
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn renderer(&self) -> Renderer<'_> {
        Renderer {
            mesh: &self.scene.mesh,
            params: &self.params,
            prefiltered: &self.prefiltered,
            lut: &self.scene.lut,
            options: self.scene.render,
        }
    }

    pub fn into_parts(self) -> (ParameterSet, TrainLog) {
        (self.params, self.log)
    }

    /// One optimizer iteration.
    pub fn step(&mut self, pred: &mut dyn NoisePredictor, captioner: &mut dyn Captioner) -> Result<StepReport> {
        let elapsed_ms = stopwatch();
        self.iteration += 1;
        let it = self.iteration;
        let res = self.cfg.resolution;
        let center = self.scene.center();
        let mut total = GradientSet::zeros(&self.params);
        let mut ts = Vec::with_capacity(self.cfg.batch);
        let mut poses = Vec::with_capacity(self.cfg.batch);
        let mut cot_sq = 0.0;
        let mut finite = true;
        let mut display = None;
        for _ in 0..self.cfg.batch {
            let (camera, pose) = sample_camera(&mut self.rng, &self.cfg.camera, center, res, res)?;
            let t = self.schedule.sample_step(&mut self.rng, self.guidance.t_range);
            let renderer = Renderer {
                mesh: &self.scene.mesh,
                params: &self.params,
                prefiltered: &self.prefiltered,
                lut: &self.scene.lut,
                options: self.scene.render,
            };
            let out = renderer.render(&camera)?;
            let shown = tonemap(&out.image);
            let latent = pred.encode(&shown)?;
            let eps = Tensor::randn(&latent.shape, &mut self.rng);
            let g = &self.guidance;
            let cot = match g.mode {
                GuidanceMode::Relative => rdl_from_latent(
                    pred,
                    &shown,
                    &latent,
                    &g.target_prompt,
                    &self.source_prompt,
                    t,
                    &eps,
                    g,
                    &self.schedule,
                )?,
                GuidanceMode::Sds => sds_from_latent(pred, &shown, &latent, &g.target_prompt, t, &eps, g, &self.schedule)?,
            };
            cot_sq += cot.data.iter().map(|v| v.length_squared()).sum::<f64>();
            if cot.is_finite() {
                let grads = renderer.backward(&out, &tonemap_vjp(&out.image, &cot))?;
                total.add_assign(&grads);
            } else {
                finite = false;
            }
            ts.push(t);
            poses.push(pose);
            display = Some(shown);
        }
        if self.cfg.batch > 1 {
            total.scale(1.0 / self.cfg.batch as f64);
        }
        finite &= total.is_finite();

        if finite {
            self.consecutive_skips = 0;
            self.adam
                .step(&mut self.params, &total, &self.cfg.adam, self.cfg.lr_texture, self.cfg.lr_env);
            self.params.project();
            if self.params.trainable.env {
                self.params.env.touch();
                self.prefiltered.refresh(&self.params.env)?;
            }
        } else {
            self.consecutive_skips += 1;
            log::warn!(
                "iteration {it}: non-finite gradient, step skipped ({} in a row)",
                self.consecutive_skips
            );
        }

        let record = IterationRecord {
            iteration: it,
            t: ts,
            cotangent_norm: cot_sq.sqrt(),
            grad_norms: TensorNorms {
                kd: GradientSet::norm(&total.kd),
                orm: GradientSet::norm(&total.orm),
                normal: GradientSet::norm(&total.normal),
                env: GradientSet::norm(&total.env),
            },
            source_prompt: self.source_prompt.clone(),
            cameras: poses,
            skipped: !finite,
            wall_ms: elapsed_ms(),
        };
        self.log.push(LogEntry::Iteration(record.clone()));
        if self.consecutive_skips > self.cfg.max_skipped {
            return Err(Error::Diverged(format!(
                "{} consecutive non-finite gradients (last at iteration {it})",
                self.consecutive_skips
            )));
        }

        let shown = display.expect("batch >= 1");
        let adjustment = adjust_source_prompt(captioner, &shown, it, &self.guidance, &mut self.source_prompt);
        match &adjustment {
            Adjustment::Replaced(ev) => self.log.push(LogEntry::Adjustment(ev.clone())),
            Adjustment::Failed { iteration, message } => self.log.push(LogEntry::CaptionFailed {
                iteration: *iteration,
                message: message.clone(),
            }),
            Adjustment::Unchanged => {}
        }
        Ok(StepReport { record, adjustment })
    }

    /// Steps until the configured iteration count, calling `hook` after each step.
    pub fn run(
        &mut self,
        pred: &mut dyn NoisePredictor,
        captioner: &mut dyn Captioner,
        mut hook: impl FnMut(&Session, &StepReport) -> Result<()>,
    ) -> Result<()> {
        while !self.is_done() {
            let report = self.step(pred, captioner)?;
            hook(self, &report)?;
        }
        Ok(())
    }

    /// Full resumable state.
    pub fn checkpoint(&self) -> Container {
        let mut c = Container::new();
        let m = &self.params.materials;
        for (name, tex) in [("kd", &m.kd), ("orm", &m.orm), ("normal", &m.normal)] {
            c.put_f64(&format!("param.{name}"), &[tex.height, tex.width, 3], flatten(&tex.texels));
        }
        let r = self.params.env.res();
        c.put_f64("param.env", &[6, r, r, 3], flatten(&self.params.env.cube.data));
        for (name, mom) in TENSOR_NAMES.iter().zip(&self.adam.moments) {
            c.put_f64(&format!("adam.{name}.m"), &[mom.m.len(), 3], flatten(&mom.m));
            c.put_f64(&format!("adam.{name}.v"), &[mom.v.len(), 3], flatten(&mom.v));
        }
        let word = self.rng.get_word_pos();
        c.put_u64(
            "state",
            vec![
                self.iteration as u64,
                self.consecutive_skips as u64,
                self.params.env.version,
                self.adam.step,
                self.rng.get_stream(),
                word as u64,
                (word >> 64) as u64,
            ],
        );
        c.put_u64("rng.seed", self.rng.get_seed().iter().map(|&b| b as u64).collect());
        c.put_str("source_prompt", &self.source_prompt);
        c.put_str("config", &config_fingerprint(&self.cfg, &self.guidance));
        c.put_str("log", &{
            let mut buf = Vec::new();
            self.log.write_ndjson(&mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("json is UTF-8")
        });
        c
    }

    /// Restores a session from [`Session::checkpoint`]. The configuration must
    /// match the one the checkpoint was written with, except for the iteration
    /// count and checkpoint period.
    pub fn resume(scene: &'a Scene, c: &Container, cfg: OptimizeConfig, guidance: &GuidanceConfig) -> Result<Self> {
        let fresh_params = |name: &str| -> Result<Texture> {
            let (shape, data) = c.get_f64(&format!("param.{name}"))?;
            match *shape {
                [h, w, 3] => Texture::from_texels(w, h, unflatten(data)),
                _ => Err(Error::Checkpoint(format!("param.{name} has shape {shape:?}"))),
            }
        };
        let materials = crate::shading::MaterialSet {
            kd: fresh_params("kd")?,
            orm: fresh_params("orm")?,
            normal: fresh_params("normal")?,
        };
        let (shape, data) = c.get_f64("param.env")?;
        let env_res = match *shape {
            [6, r, r2, 3] if r == r2 => r,
            _ => return Err(Error::Checkpoint(format!("param.env has shape {shape:?}"))),
        };
        let env = EnvironmentMap::new(Cubemap {
            res: env_res,
            data: unflatten(data),
        })?;
        let params = ParameterSet {
            materials,
            env,
            trainable: cfg.trainable(),
        };
        let mut session = Session::new(scene, params, cfg, guidance)?;
        let stored = c.get_str("config")?;
        if stored != config_fingerprint(&session.cfg, &session.guidance) {
            return Err(Error::Config(
                "configuration differs from the one the checkpoint was written with".into(),
            ));
        }
        let state = c.get_u64("state")?;
        let [iteration, skips, env_version, adam_step, stream, lo, hi] = state[..] else {
            return Err(Error::Checkpoint("malformed state entry".into()));
        };
        session.iteration = iteration as usize;
        session.consecutive_skips = skips as usize;
        session.params.env.version = env_version;
        session.prefiltered = PrefilteredEnv::build(&session.params.env, session.cfg.prefilter)?;
        session.adam.step = adam_step;
        for (name, mom) in TENSOR_NAMES.iter().zip(&mut session.adam.moments) {
            let m = unflatten(c.get_f64(&format!("adam.{name}.m"))?.1);
            let v = unflatten(c.get_f64(&format!("adam.{name}.v"))?.1);
            if m.len() != mom.m.len() || v.len() != mom.v.len() {
                return Err(Error::Checkpoint(format!("adam.{name} does not match parameter size")));
            }
            *mom = Moments { m, v };
        }
        let seed_bytes = c.get_u64("rng.seed")?;
        let seed: [u8; 32] = seed_bytes
            .iter()
            .map(|&b| u8::try_from(b))
            .collect::<std::result::Result<Vec<u8>, _>>()
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| Error::Checkpoint("malformed rng seed".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(((hi as u128) << 64) | lo as u128);
        session.rng = rng;
        session.source_prompt = c.get_str("source_prompt")?.to_string();
        session.log = TrainLog::from_ndjson(c.get_str("log")?)?;
        Ok(session)
    }
}

fn flatten(v: &[DVec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(v: &[f64]) -> Vec<DVec3> {
    v.chunks_exact(3).map(DVec3::from_slice).collect()
}

fn config_fingerprint(cfg: &OptimizeConfig, guidance: &GuidanceConfig) -> String {
    let cfg = OptimizeConfig {
        iterations: 0,
        checkpoint_period: 0,
        ..cfg.clone()
    };
    let guidance = GuidanceConfig {
        source_prompt: String::new(),
        ..guidance.clone()
    };
    serde_json::to_string(&(cfg, guidance)).expect("configs serialize")
}

/// Texture editing: trains the material maps (and optionally the environment).
pub fn optimize(
    scene: &Scene,
    params: ParameterSet,
    cfg: &OptimizeConfig,
    guidance: &GuidanceConfig,
    pred: &mut dyn NoisePredictor,
    captioner: &mut dyn Captioner,
) -> Result<(ParameterSet, TrainLog)> {
    let cfg = OptimizeConfig {
        mode: Mode::TextureEdit,
        ..cfg.clone()
    };
    let mut session = Session::new(scene, params, cfg, guidance)?;
    session.run(pred, captioner, |_, _| Ok(()))?;
    Ok(session.into_parts())
}

/// Relighting: only the environment map trains; materials stay bit-identical.
/// Direction adjustment runs only if a captioner is given and
/// `relight_adjust` is set.
pub fn relight(
    scene: &Scene,
    params: ParameterSet,
    cfg: &OptimizeConfig,
    guidance: &GuidanceConfig,
    pred: &mut dyn NoisePredictor,
    captioner: Option<&mut dyn Captioner>,
) -> Result<(EnvironmentMap, TrainLog)> {
    let cfg = OptimizeConfig {
        mode: Mode::Relight,
        ..cfg.clone()
    };
    let mut fixed = FixedCaptioner::new(guidance.source_prompt.clone());
    let captioner: &mut dyn Captioner = match captioner {
        Some(c) => c,
        None => &mut fixed,
    };
    let mut session = Session::new(scene, params, cfg, guidance)?;
    session.run(pred, captioner, |_, _| Ok(()))?;
    let (params, log) = session.into_parts();
    Ok((params.env, log))
}

/// Renders `count` turntable views of the current parameters (display space).
pub fn render_turntable(
    scene: &Scene,
    params: &ParameterSet,
    prefiltered: &PrefilteredEnv,
    poses: &[OrbitPose],
    fov: f64,
    resolution: usize,
) -> Result<Vec<Image>> {
    let renderer = Renderer {
        mesh: &scene.mesh,
        params,
        prefiltered,
        lut: &scene.lut,
        options: scene.render,
    };
    poses
        .iter()
        .map(|p| {
            let cam = p.camera(scene.center(), fov, resolution, resolution)?;
            Ok(tonemap(&renderer.render(&cam)?.image))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::mock::{ScriptedCaptioner, TargetImagePredictor};

    fn scene() -> Scene {
        Scene {
            mesh: Mesh::quad(1.0),
            lut: BrdfLut::precompute(16, 64, 1).unwrap(),
            render: RenderOptions::default(),
        }
    }

    fn params() -> ParameterSet {
        let mats = crate::shading::MaterialSet::uniform(4, DVec3::splat(0.5), DVec3::new(1.0, 0.7, 0.0)).unwrap();
        ParameterSet::new(mats, EnvironmentMap::constant(4, DVec3::splat(0.6)).unwrap(), TrainableMask::TEXTURES).unwrap()
    }

    fn config(iterations: usize) -> OptimizeConfig {
        let mut cfg = OptimizeConfig {
            iterations,
            resolution: 16,
            ..Default::default()
        };
        cfg.prefilter.min_res = 2;
        cfg
    }

    fn guidance() -> GuidanceConfig {
        GuidanceConfig {
            source_prompt: "a gray object".into(),
            target_prompt: "a red object".into(),
            adjust_period: 3,
            ..Default::default()
        }
    }

    fn predictor() -> TargetImagePredictor {
        TargetImagePredictor::new(DiffusionSchedule::default()).with_color_words()
    }

    #[test]
    fn adjustments_happen_on_the_period() {
        let scene = scene();
        let mut s = Session::new(&scene, params(), config(10), &guidance()).unwrap();
        let mut cap = ScriptedCaptioner::new(["a blue object", "a green object", "a white object"]);
        s.run(&mut predictor(), &mut cap, |_, _| Ok(())).unwrap();
        let at: Vec<usize> = s.log().adjustments().map(|a| a.iteration).collect();
        assert_eq!(at, vec![3, 6, 9]);
        assert_eq!(cap.calls(), 3);
        assert_eq!(s.source_prompt(), "a white object");
        assert_eq!(s.log().iterations().count(), 10);
    }

    #[test]
    fn resume_continues_bit_exactly() {
        let scene = scene();
        let g = guidance();
        let straight = {
            let mut s = Session::new(&scene, params(), config(8), &g).unwrap();
            s.run(&mut predictor(), &mut ScriptedCaptioner::new(["a blue object"]), |_, _| Ok(()))
                .unwrap();
            s.into_parts()
        };
        let mut first = Session::new(&scene, params(), config(4), &g).unwrap();
        let mut cap = ScriptedCaptioner::new(["a blue object"]);
        first.run(&mut predictor(), &mut cap, |_, _| Ok(())).unwrap();
        let bytes = first.checkpoint().to_bytes();
        let restored = Container::from_bytes(&bytes).unwrap();
        let mut second = Session::resume(&scene, &restored, config(8), &g).unwrap();
        assert_eq!(second.iteration(), 4);
        second.run(&mut predictor(), &mut cap, |_, _| Ok(())).unwrap();
        let (p, log) = second.into_parts();
        assert_eq!(p.materials, straight.0.materials);
        let strip = |l: &TrainLog| -> Vec<LogEntry> {
            l.entries
                .iter()
                .cloned()
                .map(|e| match e {
                    LogEntry::Iteration(mut r) => {
                        r.wall_ms = 0.0;
                        LogEntry::Iteration(r)
                    }
                    e => e,
                })
                .collect()
        };
        assert_eq!(strip(&log), strip(&straight.1));
    }

    #[test]
    fn resume_rejects_a_different_config() {
        let scene = scene();
        let s = Session::new(&scene, params(), config(2), &guidance()).unwrap();
        let c = s.checkpoint();
        let other = OptimizeConfig {
            lr_texture: 0.5,
            ..config(2)
        };
        assert!(matches!(
            Session::resume(&scene, &c, other, &guidance()),
            Err(Error::Config(_))
        ));
        Session::resume(&scene, &c, config(9), &guidance()).unwrap();
    }

    #[test]
    fn relight_keeps_materials_and_moves_env() {
        let scene = scene();
        let p = params();
        let (env, log) = relight(&scene, p.clone(), &config(5), &guidance(), &mut predictor(), None).unwrap();
        assert_ne!(env.cube, p.env.cube);
        assert_eq!(log.adjustments().count(), 0);
        let (trained, _) = optimize(
            &scene,
            p.clone(),
            &config(2),
            &guidance(),
            &mut predictor(),
            &mut FixedCaptioner::new("a gray object"),
        )
        .unwrap();
        assert_eq!(trained.env, p.env);
        assert_ne!(trained.materials.kd, p.materials.kd);
    }

    #[test]
    fn config_rejects_nonsense() {
        assert!(config(0).validate().is_err());
        let frozen = OptimizeConfig {
            train: TrainFlags {
                kd: false,
                orm: false,
                normal: false,
                env: false,
            },
            ..config(1)
        };
        assert!(frozen.validate().is_err());
        let mut cfg = config(1);
        cfg.adam.beta1 = 1.0;
        assert!(cfg.validate().is_err());
    }
}
