//! Deterministic in-process predictors and captioners with closed-form behaviour.

use std::collections::HashMap;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Captioner, DiffusionSchedule, NoisePredictor, NoiseQuery};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::math::splitmix64;
use crate::tensor::Tensor;

fn identity_grad(grad: &Tensor, image: &Image) -> Result<Image> {
    let expected = Tensor::from_image(image);
    expected.check_shape(grad)?;
    grad.to_image()
}

/// Returns the injected noise: every score-distillation cotangent is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPredictor;

impl NoisePredictor for NullPredictor {
    fn encode(&mut self, image: &Image) -> Result<Tensor> {
        Ok(Tensor::from_image(image))
    }

    fn predict_noise(&mut self, q: &NoiseQuery) -> Result<Tensor> {
        Ok(q.eps.clone())
    }

    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        identity_grad(grad, image)
    }
}

#[derive(Debug, Clone)]
enum Target {
    Image(Tensor),
    Constant(DVec3),
}

/// Predicts the noise that would turn a fixed per-prompt image into `z_t`:
/// `ε̂ = (z_t − √ᾱ_t·I_y) / √(1−ᾱ_t)`. Under score distillation this pulls
/// renders toward `I_y`.
#[derive(Debug, Clone)]
pub struct TargetImagePredictor {
    schedule: DiffusionSchedule,
    targets: HashMap<String, Target>,
    color_words: bool,
}

impl TargetImagePredictor {
    pub fn new(schedule: DiffusionSchedule) -> Self {
        Self {
            schedule,
            targets: HashMap::new(),
            color_words: false,
        }
    }

    /// Unregistered prompts that name a colour resolve to a constant image of it.
    pub fn with_color_words(mut self) -> Self {
        self.color_words = true;
        self
    }

    pub fn register(&mut self, prompt: impl Into<String>, image: &Image) {
        self.targets.insert(prompt.into(), Target::Image(Tensor::from_image(image)));
    }

    pub fn register_constant(&mut self, prompt: impl Into<String>, color: DVec3) {
        self.targets.insert(prompt.into(), Target::Constant(color));
    }

    fn target(&self, prompt: &str, shape: &[usize]) -> Result<Tensor> {
        let target = match self.targets.get(prompt) {
            Some(t) => t.clone(),
            None => match named_color(prompt).filter(|_| self.color_words) {
                Some(c) => Target::Constant(c),
                None => return Err(Error::Backend(format!("no target registered for prompt {prompt:?}"))),
            },
        };
        match target {
            Target::Image(t) => {
                if t.shape != shape {
                    return Err(Error::Shape {
                        expected: shape.to_vec(),
                        actual: t.shape,
                    });
                }
                Ok(t)
            }
            Target::Constant(c) => {
                let mut t = Tensor::zeros(shape);
                for (i, v) in t.data.iter_mut().enumerate() {
                    *v = c[i % 3];
                }
                Ok(t)
            }
        }
    }
}

impl NoisePredictor for TargetImagePredictor {
    fn encode(&mut self, image: &Image) -> Result<Tensor> {
        Ok(Tensor::from_image(image))
    }

    fn predict_noise(&mut self, q: &NoiseQuery) -> Result<Tensor> {
        self.schedule.check_step(q.t)?;
        let target = self.target(q.prompt, &q.latent.shape)?;
        let (a, s) = (self.schedule.signal(q.t), self.schedule.noise(q.t));
        q.latent.axpby(1.0 / s, &target, -a / s)
    }

    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        identity_grad(grad, image)
    }
}

/// `ε̂ = M_y·z_t + b_y` with a fixed pseudo-random affine map per prompt.
#[derive(Debug, Clone)]
pub struct RandomLinearPredictor {
    seed: u64,
    maps: HashMap<(String, usize), (Vec<f64>, Vec<f64>)>,
}

impl RandomLinearPredictor {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            maps: HashMap::new(),
        }
    }

    fn map(&mut self, prompt: &str, n: usize) -> &(Vec<f64>, Vec<f64>) {
        let seed = self.seed;
        self.maps.entry((prompt.to_string(), n)).or_insert_with(|| {
            let h = prompt
                .bytes()
                .fold(splitmix64(seed ^ n as u64), |h, b| splitmix64(h ^ b as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(h);
            let scale = 1.0 / (n as f64).sqrt();
            let m = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
            let b = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (m, b)
        })
    }
}

impl NoisePredictor for RandomLinearPredictor {
    fn encode(&mut self, image: &Image) -> Result<Tensor> {
        Ok(Tensor::from_image(image))
    }

    fn predict_noise(&mut self, q: &NoiseQuery) -> Result<Tensor> {
        let n = q.latent.len();
        let (m, b) = self.map(q.prompt, n);
        let data = (0..n)
            .map(|i| {
                let row = &m[i * n..(i + 1) * n];
                row.iter().zip(&q.latent.data).map(|(a, z)| a * z).sum::<f64>() + b[i]
            })
            .collect();
        Tensor::new(q.latent.shape.clone(), data)
    }

    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        identity_grad(grad, image)
    }
}

/// Always returns the same caption.
#[derive(Debug, Clone)]
pub struct FixedCaptioner(pub String);

impl FixedCaptioner {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }
}

impl Captioner for FixedCaptioner {
    fn caption(&mut self, _: &Image) -> Result<String> {
        Ok(self.0.clone())
    }
}

/// Returns the scripted captions in call order, repeating the last one.
#[derive(Debug, Clone)]
pub struct ScriptedCaptioner {
    script: Vec<String>,
    next: usize,
}

impl ScriptedCaptioner {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            next: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.next
    }
}

impl Captioner for ScriptedCaptioner {
    fn caption(&mut self, _: &Image) -> Result<String> {
        let text = self
            .script
            .get(self.next.min(self.script.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| Error::Backend("empty caption script".into()))?;
        self.next += 1;
        Ok(text)
    }
}

const COLORS: [(&str, [f64; 3]); 12] = [
    ("black", [0.02, 0.02, 0.02]),
    ("white", [0.9, 0.9, 0.9]),
    ("gray", [0.4, 0.4, 0.4]),
    ("red", [0.8, 0.1, 0.1]),
    ("orange", [0.9, 0.45, 0.1]),
    ("yellow", [0.9, 0.8, 0.15]),
    ("green", [0.15, 0.65, 0.2]),
    ("cyan", [0.15, 0.7, 0.75]),
    ("blue", [0.1, 0.2, 0.8]),
    ("purple", [0.5, 0.2, 0.7]),
    ("pink", [0.9, 0.5, 0.65]),
    ("brown", [0.45, 0.28, 0.15]),
];

/// Linear RGB of the last colour word in `text`, if any.
pub fn named_color(text: &str) -> Option<DVec3> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter_map(|w| {
            let w = w.to_ascii_lowercase();
            let w = if w == "grey" { "gray".to_string() } else { w };
            COLORS.iter().find(|(name, _)| *name == w)
        })
        .next_back()
        .map(|(_, c)| DVec3::from_array(*c))
}

/// Names the palette colour nearest to the image's mean: "a <colour> object".
#[derive(Debug, Clone, Copy, Default)]
pub struct ColorCaptioner;

impl Captioner for ColorCaptioner {
    fn caption(&mut self, image: &Image) -> Result<String> {
        if image.data.is_empty() {
            return Err(Error::Backend("cannot caption an empty image".into()));
        }
        let mean = image.mean();
        let (name, _) = COLORS
            .iter()
            .map(|(n, c)| (n, (DVec3::from_array(*c) - mean).length_squared()))
            .fold((&"gray", f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        Ok(format!("a {name} object"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_predictor_inverts_clean_latent() {
        let sched = DiffusionSchedule::default();
        let c = DVec3::new(0.2, 0.5, 0.9);
        let mut p = TargetImagePredictor::new(sched.clone());
        p.register_constant("blue", c);
        let t = 400;
        let z = Tensor::from_image(&Image::new(2, 2, c)).scale(sched.signal(t));
        let eps = Tensor::zeros(&z.shape);
        let q = NoiseQuery {
            latent: &z,
            prompt: "blue",
            t,
            guidance_scale: 30.0,
            eps: &eps,
        };
        let out = p.predict_noise(&q).unwrap();
        assert!(out.data.iter().all(|v| v.abs() < 1e-15), "{out:?}");
        let q = NoiseQuery { prompt: "unknown", ..q };
        assert!(p.predict_noise(&q).is_err());
    }

    #[test]
    fn color_words() {
        assert_eq!(named_color("a RED chair"), Some(DVec3::new(0.8, 0.1, 0.1)));
        assert_eq!(named_color("a grey, then blue chair"), Some(DVec3::new(0.1, 0.2, 0.8)));
        assert_eq!(named_color("a chair"), None);
        let mut c = ColorCaptioner;
        assert_eq!(c.caption(&Image::new(2, 2, DVec3::new(0.75, 0.12, 0.1))).unwrap(), "a red object");
    }

    #[test]
    fn scripted_captioner_repeats_last() {
        let mut c = ScriptedCaptioner::new(["a", "b"]);
        let img = Image::new(1, 1, DVec3::ZERO);
        let got: Vec<_> = (0..4).map(|_| c.caption(&img).unwrap()).collect();
        assert_eq!(got, ["a", "b", "b", "b"]);
        assert_eq!(c.calls(), 4);
    }

    #[test]
    fn random_linear_is_deterministic_per_prompt() {
        let z = Tensor::new(vec![2, 1, 3], vec![0.1, -0.4, 0.3, 0.9, 0.0, -0.2]).unwrap();
        let eps = Tensor::zeros(&z.shape);
        let q = |prompt| NoiseQuery {
            latent: &z,
            prompt,
            t: 5,
            guidance_scale: 1.0,
            eps: &eps,
        };
        let mut a = RandomLinearPredictor::new(9);
        let mut b = RandomLinearPredictor::new(9);
        assert_eq!(a.predict_noise(&q("x")).unwrap(), b.predict_noise(&q("x")).unwrap());
        assert_ne!(a.predict_noise(&q("x")).unwrap(), a.predict_noise(&q("y")).unwrap());
    }
}
