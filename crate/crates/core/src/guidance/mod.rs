//! Diffusion-side gradient signals.
//!
//! A rendered (tonemapped) image is encoded, noised to step `t`, and handed to
//! a [`NoisePredictor`]. Score distillation uses `w(t)(ε̂(y) − ε)`; the
//! relative-direction signal uses the difference of two predictions,
//! `w(t)(ε̂(y_tgt) − ε̂(y_src))`, on the same noisy latent. Both are mapped back
//! to image space through the predictor's encoder adjoint.
//!
//! The source prompt can be refreshed periodically from a [`Captioner`] so the
//! relative direction tracks what the render currently looks like.

pub mod mock;

pub use mock::{
    named_color, ColorCaptioner, FixedCaptioner, NullPredictor, RandomLinearPredictor, ScriptedCaptioner,
    TargetImagePredictor,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;
use crate::tensor::Tensor;

/// Cumulative signal coefficients of a discrete noising process.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// `ᾱ_t = Π_{s≤t} (1 − β_s)` with β linear in `[beta_start, beta_end]`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!("invalid beta range [{beta_start}, {beta_end}]")));
        }
        let mut prod = 1.0;
        let alpha_bar = (0..steps)
            .map(|i| {
                let beta = beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64;
                prod *= 1.0 - beta;
                prod
            })
            .collect();
        Ok(Self { alpha_bar })
    }

    /// Explicit table; must be strictly decreasing inside (0, 1].
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.is_empty() || alpha_bar.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::Config("alpha_bar entries must lie in (0, 1]".into()));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("alpha_bar must be strictly decreasing".into()));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `√ᾱ_t`
    pub fn signal(&self, t: usize) -> f64 {
        self.alpha_bar[t].sqrt()
    }

    /// `√(1 − ᾱ_t)`
    pub fn noise(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t]).sqrt()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::Config(format!("step {t} outside [0, {})", self.steps())));
        }
        Ok(())
    }

    /// Uniform integer step in `[t_min·T, t_max·T]`, clipped to valid steps.
    pub fn sample_step(&self, rng: &mut impl Rng, t_range: (f64, f64)) -> usize {
        let last = self.steps() - 1;
        let lo = ((t_range.0 * self.steps() as f64).round() as usize).min(last);
        let hi = ((t_range.1 * self.steps() as f64).round() as usize).clamp(lo, last);
        rng.gen_range(lo..=hi)
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("default schedule is valid")
    }
}

/// Per-step weight `w(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Constant,
    OneMinusAlphaBar,
}

impl Weighting {
    pub fn weight(self, sched: &DiffusionSchedule, t: usize) -> f64 {
        match self {
            Weighting::Constant => 1.0,
            Weighting::OneMinusAlphaBar => 1.0 - sched.alpha_bar(t),
        }
    }
}

/// Which gradient signal drives the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Difference of target- and source-prompt predictions.
    #[default]
    Relative,
    /// Target prediction minus injected noise (ablation).
    Sds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Classifier-free guidance weight ω passed to the predictor.
    pub guidance_scale: f64,
    pub weighting: Weighting,
    /// Step range as fractions of the schedule length.
    pub t_range: (f64, f64),
    pub source_prompt: String,
    pub target_prompt: String,
    /// Re-caption every `adjust_period` iterations when `adjust` is on.
    pub adjust_period: usize,
    pub adjust: bool,
    pub mode: GuidanceMode,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            guidance_scale: 30.0,
            weighting: Weighting::Constant,
            t_range: (0.02, 0.98),
            source_prompt: String::new(),
            target_prompt: String::new(),
            adjust_period: 50,
            adjust: true,
            mode: GuidanceMode::Relative,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.t_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("t_range ({lo}, {hi}) must satisfy 0 <= min < max <= 1")));
        }
        if self.adjust_period == 0 {
            return Err(Error::Config("adjust_period must be >= 1".into()));
        }
        if !self.guidance_scale.is_finite() {
            return Err(Error::Config("guidance_scale must be finite".into()));
        }
        Ok(())
    }

    /// Prompts must be present for any run that queries the predictor.
    pub fn validate_prompts(&self) -> Result<()> {
        if self.target_prompt.trim().is_empty() {
            return Err(Error::Config("target prompt is empty".into()));
        }
        if self.mode == GuidanceMode::Relative && self.source_prompt.trim().is_empty() {
            return Err(Error::Config("source prompt is empty".into()));
        }
        Ok(())
    }
}

/// One noise-prediction request.
#[derive(Debug, Clone, Copy)]
pub struct NoiseQuery<'a> {
    pub latent: &'a Tensor,
    pub prompt: &'a str,
    pub t: usize,
    pub guidance_scale: f64,
    /// The noise that produced `latent`. Real predictors ignore it; mocks may
    /// use it to return exact answers.
    pub eps: &'a Tensor,
}

/// Text-conditioned noise predictor with an image encoder and its adjoint.
pub trait NoisePredictor {
    fn encode(&mut self, image: &Image) -> Result<Tensor>;
    fn predict_noise(&mut self, query: &NoiseQuery) -> Result<Tensor>;
    /// Pulls a latent cotangent back to image space (adjoint of `encode` at `image`).
    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image>;
}

/// Produces a short description of an image.
pub trait Captioner {
    fn caption(&mut self, image: &Image) -> Result<String>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for Box<P> {
    fn encode(&mut self, image: &Image) -> Result<Tensor> {
        (**self).encode(image)
    }
    fn predict_noise(&mut self, query: &NoiseQuery) -> Result<Tensor> {
        (**self).predict_noise(query)
    }
    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        (**self).latent_grad_to_image(grad, image)
    }
}

impl<C: Captioner + ?Sized> Captioner for Box<C> {
    fn caption(&mut self, image: &Image) -> Result<String> {
        (**self).caption(image)
    }
}

/// `z_t = √ᾱ_t·z + √(1−ᾱ_t)·ε`
pub fn add_noise(latent: &Tensor, t: usize, eps: &Tensor, sched: &DiffusionSchedule) -> Result<Tensor> {
    sched.check_step(t)?;
    latent.axpby(sched.signal(t), eps, sched.noise(t))
}

fn predict_checked(pred: &mut dyn NoisePredictor, query: &NoiseQuery) -> Result<Tensor> {
    let out = pred
        .predict_noise(query)
        .map_err(|e| Error::Backend(format!("predict_noise(prompt {:?}, t {}): {e}", query.prompt, query.t)))?;
    query.latent.check_shape(&out)?;
    Ok(out)
}

/// Image-space cotangent `Eᵀ[w(t)(ε̂(z_t; y) − ε)]`.
pub fn sds_gradient(
    pred: &mut dyn NoisePredictor,
    image: &Image,
    prompt: &str,
    t: usize,
    eps: &Tensor,
    cfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
) -> Result<Image> {
    let latent = pred.encode(image)?;
    sds_from_latent(pred, image, &latent, prompt, t, eps, cfg, sched)
}

/// [`sds_gradient`] for a latent the caller already encoded from `image`.
#[allow(clippy::too_many_arguments)]
pub fn sds_from_latent(
    pred: &mut dyn NoisePredictor,
    image: &Image,
    latent: &Tensor,
    prompt: &str,
    t: usize,
    eps: &Tensor,
    cfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
) -> Result<Image> {
    let z_t = add_noise(latent, t, eps, sched)?;
    let query = NoiseQuery {
        latent: &z_t,
        prompt,
        t,
        guidance_scale: cfg.guidance_scale,
        eps,
    };
    let predicted = predict_checked(pred, &query)?;
    let g = predicted.sub(eps)?.scale(cfg.weighting.weight(sched, t));
    pred.latent_grad_to_image(&g, image)
}

/// Image-space cotangent `Eᵀ[w(t)(ε̂(z_t; y_tgt) − ε̂(z_t; y_src))]`; both
/// predictions see the same noisy latent.
#[allow(clippy::too_many_arguments)]
pub fn rdl_gradient(
    pred: &mut dyn NoisePredictor,
    image: &Image,
    target_prompt: &str,
    source_prompt: &str,
    t: usize,
    eps: &Tensor,
    cfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
) -> Result<Image> {
    let latent = pred.encode(image)?;
    rdl_from_latent(pred, image, &latent, target_prompt, source_prompt, t, eps, cfg, sched)
}

/// [`rdl_gradient`] for a latent the caller already encoded from `image`.
#[allow(clippy::too_many_arguments)]
pub fn rdl_from_latent(
    pred: &mut dyn NoisePredictor,
    image: &Image,
    latent: &Tensor,
    target_prompt: &str,
    source_prompt: &str,
    t: usize,
    eps: &Tensor,
    cfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
) -> Result<Image> {
    let z_t = add_noise(latent, t, eps, sched)?;
    let query = |prompt| NoiseQuery {
        latent: &z_t,
        prompt,
        t,
        guidance_scale: cfg.guidance_scale,
        eps,
    };
    let tgt = predict_checked(pred, &query(target_prompt))?;
    let src = predict_checked(pred, &query(source_prompt))?;
    let g = tgt.sub(&src)?.scale(cfg.weighting.weight(sched, t));
    pred.latent_grad_to_image(&g, image)
}

/// A source-prompt replacement performed by [`adjust_source_prompt`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentEvent {
    pub iteration: usize,
    pub from: String,
    pub to: String,
}

/// Outcome of one adjustment check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Adjustment {
    /// Not an adjustment iteration (or adjustment disabled).
    Unchanged,
    /// The source prompt was replaced by a fresh caption (possibly equal to the old one).
    Replaced(AdjustmentEvent),
    /// The captioner failed; the previous prompt stays in effect.
    Failed { iteration: usize, message: String },
}

/// Every `adjust_period` iterations, replaces `source_prompt` with a caption
/// of the current render. Captioner failures are logged and leave the prompt
/// untouched so a long run is never aborted by them.
pub fn adjust_source_prompt(
    captioner: &mut dyn Captioner,
    render: &Image,
    iteration: usize,
    cfg: &GuidanceConfig,
    source_prompt: &mut String,
) -> Adjustment {
    if !cfg.adjust || iteration == 0 || !iteration.is_multiple_of(cfg.adjust_period) {
        return Adjustment::Unchanged;
    }
    match captioner.caption(render) {
        Ok(caption) if !caption.trim().is_empty() => {
            let from = std::mem::replace(source_prompt, caption.clone());
            log::info!("iteration {iteration}: source prompt {from:?} -> {caption:?}");
            Adjustment::Replaced(AdjustmentEvent {
                iteration,
                from,
                to: caption,
            })
        }
        Ok(_) => {
            log::warn!("iteration {iteration}: captioner returned an empty caption; keeping {source_prompt:?}");
            Adjustment::Failed {
                iteration,
                message: "empty caption".into(),
            }
        }
        Err(e) => {
            log::warn!("iteration {iteration}: captioner failed ({e}); keeping {source_prompt:?}");
            Adjustment::Failed {
                iteration,
                message: e.to_string(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam::DVec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_schedule_shape() {
        let s = DiffusionSchedule::default();
        assert_eq!(s.steps(), 1000);
        assert!((s.alpha_bar(0) - (1.0 - 1e-4)).abs() < 1e-15);
        assert!(s.alpha_bar(999) > 0.0 && s.alpha_bar(999) < 1e-3);
        for t in 1..1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }

    #[test]
    fn schedule_rejects_bad_tables() {
        assert!(DiffusionSchedule::from_alpha_bar(vec![0.9, 0.9]).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![1.5, 0.5]).is_err());
        assert!(DiffusionSchedule::linear(1, 1e-4, 0.02).is_err());
        assert!(DiffusionSchedule::linear(10, 0.02, 1e-4).is_err());
    }

    #[test]
    fn noising_edge_cases() {
        let sched = DiffusionSchedule::from_alpha_bar(vec![1.0, 0.25]).unwrap();
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let eps = Tensor::new(vec![3], vec![0.3, 0.1, -0.7]).unwrap();
        assert_eq!(add_noise(&x, 0, &eps, &sched).unwrap(), x);
        let zero = Tensor::zeros(&[3]);
        let z = add_noise(&zero, 1, &eps, &sched).unwrap();
        for (a, b) in z.data.iter().zip(&eps.data) {
            assert!((a - 0.75f64.sqrt() * b).abs() < 1e-15);
        }
        let z = add_noise(&x, 1, &zero, &sched).unwrap();
        assert_eq!(z, x.scale(0.5));
        assert!(add_noise(&x, 1, &Tensor::zeros(&[4]), &sched).is_err());
        assert!(add_noise(&x, 2, &eps, &sched).is_err());
    }

    #[test]
    fn step_sampling_respects_range() {
        let sched = DiffusionSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = sched.sample_step(&mut rng, (0.02, 0.98));
            assert!((20..=980).contains(&t));
        }
        assert_eq!(sched.sample_step(&mut rng, (0.5, 0.5)), 500);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GuidanceConfig::default();
        cfg.validate().unwrap();
        cfg.t_range = (0.5, 0.5);
        assert!(cfg.validate().is_err());
        cfg.t_range = (0.1, 0.9);
        cfg.adjust_period = 0;
        assert!(cfg.validate().is_err());
        let cfg = GuidanceConfig::default();
        assert!(cfg.validate_prompts().is_err());
    }

    struct Failing;
    impl Captioner for Failing {
        fn caption(&mut self, _: &Image) -> Result<String> {
            Err(Error::Backend("offline".into()))
        }
    }

    #[test]
    fn adjustment_period_arithmetic() {
        let cfg = GuidanceConfig {
            adjust_period: 50,
            ..Default::default()
        };
        let img = Image::new(2, 2, DVec3::ONE);
        let mut cap = FixedCaptioner::new("a red chair");
        let mut src = "a chair".to_string();
        assert_eq!(adjust_source_prompt(&mut cap, &img, 101, &cfg, &mut src), Adjustment::Unchanged);
        assert_eq!(src, "a chair");
        let got = adjust_source_prompt(&mut cap, &img, 100, &cfg, &mut src);
        assert_eq!(
            got,
            Adjustment::Replaced(AdjustmentEvent {
                iteration: 100,
                from: "a chair".into(),
                to: "a red chair".into()
            })
        );
        assert_eq!(src, "a red chair");
        assert_eq!(adjust_source_prompt(&mut cap, &img, 0, &cfg, &mut src), Adjustment::Unchanged);
    }

    #[test]
    fn captioner_failure_keeps_prompt() {
        let cfg = GuidanceConfig {
            adjust_period: 1,
            ..Default::default()
        };
        let mut src = "a chair".to_string();
        let got = adjust_source_prompt(&mut Failing, &Image::new(1, 1, DVec3::ZERO), 3, &cfg, &mut src);
        assert!(matches!(got, Adjustment::Failed { iteration: 3, .. }));
        assert_eq!(src, "a chair");
    }

    #[test]
    fn disabled_adjustment_never_captions() {
        let cfg = GuidanceConfig {
            adjust: false,
            adjust_period: 1,
            ..Default::default()
        };
        let mut src = "x".to_string();
        let got = adjust_source_prompt(&mut Failing, &Image::new(1, 1, DVec3::ZERO), 5, &cfg, &mut src);
        assert_eq!(got, Adjustment::Unchanged);
    }
}
