use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::diffrender::{GradientSet, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<DVec3>,
    pub v: Vec<DVec3>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![DVec3::ZERO; n],
            v: vec![DVec3::ZERO; n],
        }
    }

    fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Adam moments congruent to a [`ParameterSet`] (order: kd, orm, normal, env).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub moments: [Moments; 4],
}

pub const TENSOR_NAMES: [&str; 4] = ["kd", "orm", "normal", "env"];

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let m = &params.materials;
        Self {
            step: 0,
            moments: [
                Moments::zeros(m.kd.len()),
                Moments::zeros(m.orm.len()),
                Moments::zeros(m.normal.len()),
                Moments::zeros(params.env.cube.len()),
            ],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.moments.iter().all(Moments::is_finite)
    }

    /// One bias-corrected Adam update of every trainable tensor; frozen tensors
    /// (and their moments) are left untouched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradientSet, cfg: &AdamConfig, lr_texture: f64, lr_env: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let mask = params.trainable;
        let m = &mut params.materials;
        let targets: [(bool, &mut [DVec3], &[DVec3], f64); 4] = [
            (mask.kd, &mut m.kd.texels, &grads.kd, lr_texture),
            (mask.orm, &mut m.orm.texels, &grads.orm, lr_texture),
            (mask.normal, &mut m.normal.texels, &grads.normal, lr_texture),
            (mask.env, &mut params.env.cube.data, &grads.env, lr_env),
        ];
        for ((on, values, g, lr), mom) in targets.into_iter().zip(&mut self.moments) {
            if !on {
                continue;
            }
            for (((x, g), m), v) in values.iter_mut().zip(g).zip(&mut mom.m).zip(&mut mom.v) {
                *m = *m * cfg.beta1 + *g * (1.0 - cfg.beta1);
                *v = *v * cfg.beta2 + *g * *g * (1.0 - cfg.beta2);
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= m_hat / (v_hat.map(f64::sqrt) + cfg.eps) * lr;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffrender::TrainableMask;
    use crate::shading::{EnvironmentMap, MaterialSet};

    fn params(mask: TrainableMask) -> ParameterSet {
        let mats = MaterialSet::uniform(2, DVec3::splat(0.5), DVec3::new(1.0, 0.5, 0.0)).unwrap();
        ParameterSet::new(mats, EnvironmentMap::constant(1, DVec3::ONE).unwrap(), mask).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr·g/(|g| + eps) ≈ lr·sign(g).
        let mut p = params(TrainableMask::TEXTURES);
        let mut g = GradientSet::zeros(&p);
        g.kd[0] = DVec3::new(2.0, -3.0, 0.0);
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &g, &AdamConfig::default(), 0.01, 0.02);
        let kd = p.materials.kd.texels[0];
        assert!((kd.x - 0.49).abs() < 1e-8 && (kd.y - 0.51).abs() < 1e-8 && kd.z == 0.5, "{kd}");
        assert_eq!(p.materials.kd.texels[1], DVec3::splat(0.5));
    }

    #[test]
    fn frozen_tensors_are_untouched() {
        let mut p = params(TrainableMask::ENV_ONLY);
        let before = p.materials.clone();
        let mut g = GradientSet::zeros(&p);
        g.kd.fill(DVec3::ONE);
        g.env.fill(DVec3::splat(-1.0));
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &g, &AdamConfig::default(), 0.01, 0.02);
        assert_eq!(p.materials, before);
        assert!(adam.moments[0].m.iter().all(|m| *m == DVec3::ZERO));
        assert!((p.env.cube.data[0].x - 1.02).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params(TrainableMask::ALL);
        let before = p.clone();
        let g = GradientSet::zeros(&p);
        let mut adam = AdamState::new(&p);
        for _ in 0..3 {
            adam.step(&mut p, &g, &AdamConfig::default(), 0.01, 0.02);
        }
        assert_eq!(p, before);
    }
}
