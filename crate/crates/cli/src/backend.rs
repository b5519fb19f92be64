//! Predictor, captioner and embedder selection from a backend spec.

use glam::DVec3;

use reltex_core::eval::mock::ColorEmbedder;
use reltex_core::eval::Embedder;
use reltex_core::guidance::{
    Captioner, ColorCaptioner, DiffusionSchedule, FixedCaptioner, GuidanceConfig, NoisePredictor, NoiseQuery,
    NullPredictor, TargetImagePredictor,
};
use reltex_core::img::Image;
use reltex_core::sidecar::Sidecar;
use reltex_core::tensor::Tensor;

use crate::failure::Failure;

pub struct Backend {
    pub name: String,
    pub predictor: Box<dyn NoisePredictor>,
    pub captioner: Box<dyn Captioner>,
    pub embedder: Box<dyn Embedder>,
}

/// `mock:color` pulls renders toward colours named in the prompts, captions by
/// the nearest colour name and embeds by colour. `mock:null` yields zero
/// gradients. `sidecar:<endpoint>` talks to a model server.
pub fn connect(spec: &str, source_prompt: &str) -> Result<Backend, Failure> {
    let (predictor, captioner, embedder): (Box<dyn NoisePredictor>, Box<dyn Captioner>, Box<dyn Embedder>) =
        match spec {
            "mock:color" => (
                Box::new(TargetImagePredictor::new(DiffusionSchedule::default()).with_color_words()),
                Box::new(ColorCaptioner),
                Box::new(ColorEmbedder),
            ),
            "mock:null" => (
                Box::new(NullPredictor),
                Box::new(FixedCaptioner::new(source_prompt)),
                Box::new(ColorEmbedder),
            ),
            s if s.starts_with("sidecar:") => {
                let sc = Sidecar::connect(&s["sidecar:".len()..])?;
                log::info!("connected to sidecar: {:?}", sc.hello());
                (Box::new(sc.clone()), Box::new(sc.clone()), Box::new(sc))
            }
            s => {
                return Err(Failure::Config(format!(
                    "unknown backend {s:?} (expected mock:color, mock:null or sidecar:<endpoint>)"
                )))
            }
        };
    Ok(Backend {
        name: spec.to_string(),
        predictor,
        captioner,
        embedder,
    })
}

impl Backend {
    /// Exercises every predictor entry point once at the training resolution
    /// with both prompts, so a bad prompt or a dead server fails up front.
    pub fn check(&mut self, guidance: &GuidanceConfig, resolution: usize) -> Result<(), Failure> {
        let img = Image::new(resolution, resolution, DVec3::splat(0.5));
        let latent = self.predictor.encode(&img)?;
        let eps = Tensor::zeros(&latent.shape);
        let t = 500;
        for prompt in [&guidance.target_prompt, &guidance.source_prompt] {
            if prompt.is_empty() {
                continue;
            }
            let q = NoiseQuery {
                latent: &latent,
                prompt,
                t,
                guidance_scale: guidance.guidance_scale,
                eps: &eps,
            };
            let noise = self.predictor.predict_noise(&q)?;
            latent.check_shape(&noise)?;
        }
        self.predictor.latent_grad_to_image(&latent.scale(0.0), &img)?;
        Ok(())
    }
}
