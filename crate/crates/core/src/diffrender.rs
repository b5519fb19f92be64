//! Image formation and its adjoint.
//!
//! `render` rasterizes, samples the texel grids bilinearly, and shades every
//! covered pixel; `backward` takes an image-space cotangent back to texel and
//! environment gradients. Coverage is held fixed, so the adjoint only runs
//! through shading, bilinear sampling, normal decoding and the prefilter.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rasterize, Camera, Fragment, Mesh};
use crate::img::Image;
use crate::math::{linear_to_srgb, linear_to_srgb_derivative};
use crate::par;
use crate::shading::shade::{normal_texel_vjp, shading_normal};
use crate::shading::{
    shade, shade_vjp, BrdfLut, EnvTableGrad, EnvironmentMap, MaterialSample, MaterialSet, PrefilteredEnv,
    ShadeOptions, ShadePoint,
};
use crate::texture::Footprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableMask {
    pub kd: bool,
    pub orm: bool,
    pub normal: bool,
    pub env: bool,
}

impl TrainableMask {
    pub const TEXTURES: TrainableMask = TrainableMask {
        kd: true,
        orm: true,
        normal: true,
        env: false,
    };
    pub const ENV_ONLY: TrainableMask = TrainableMask {
        kd: false,
        orm: false,
        normal: false,
        env: true,
    };
    pub const ALL: TrainableMask = TrainableMask {
        kd: true,
        orm: true,
        normal: true,
        env: true,
    };

    pub fn any(&self) -> bool {
        self.kd || self.orm || self.normal || self.env
    }
}

/// The optimizable state: material grids, environment map, and which of them train.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub materials: MaterialSet,
    pub env: EnvironmentMap,
    pub trainable: TrainableMask,
}

impl ParameterSet {
    pub fn new(materials: MaterialSet, env: EnvironmentMap, trainable: TrainableMask) -> Result<Self> {
        let p = Self {
            materials,
            env,
            trainable,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.trainable.any() {
            return Err(Error::Config("at least one tensor must be trainable".into()));
        }
        self.materials.validate()?;
        self.env.validate()
    }

    /// Range projection applied after every optimizer step.
    pub fn project(&mut self) {
        self.materials.clamp();
        self.env.clamp_non_negative();
    }
}

/// Gradients congruent to a [`ParameterSet`]; zero for frozen tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub kd: Vec<DVec3>,
    pub orm: Vec<DVec3>,
    pub normal: Vec<DVec3>,
    pub env: Vec<DVec3>,
}

impl GradientSet {
    pub fn zeros(params: &ParameterSet) -> Self {
        Self {
            kd: vec![DVec3::ZERO; params.materials.kd.len()],
            orm: vec![DVec3::ZERO; params.materials.orm.len()],
            normal: vec![DVec3::ZERO; params.materials.normal.len()],
            env: vec![DVec3::ZERO; params.env.cube.len()],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[DVec3]); 4] {
        [("kd", &self.kd), ("orm", &self.orm), ("normal", &self.normal), ("env", &self.env)]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in [
            (&mut self.kd, &other.kd),
            (&mut self.orm, &other.orm),
            (&mut self.normal, &other.normal),
            (&mut self.env, &other.env),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in [&mut self.kd, &mut self.orm, &mut self.normal, &mut self.env] {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn norm(values: &[DVec3]) -> f64 {
        values.iter().map(|v| v.length_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub background: DVec3,
    pub shade: ShadeOptions,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: DVec3::ZERO,
            shade: ShadeOptions::default(),
        }
    }
}

/// What the backward pass needs to know about one covered pixel.
#[derive(Debug, Clone, Copy)]
pub struct PixelRecord {
    pub fragment: Fragment,
    pub kd_fp: Footprint,
    pub orm_fp: Footprint,
    pub normal_fp: Footprint,
    pub sample: MaterialSample,
    pub shading_normal: DVec3,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    /// Linear radiance.
    pub image: Image,
    pub coverage: Vec<bool>,
    pub records: Vec<Option<PixelRecord>>,
    pub camera: Camera,
    pub env_version: u64,
}

/// Borrowed scene state needed to render and differentiate images.
#[derive(Clone, Copy)]
pub struct Renderer<'a> {
    pub mesh: &'a Mesh,
    pub params: &'a ParameterSet,
    pub prefiltered: &'a PrefilteredEnv,
    pub lut: &'a BrdfLut,
    pub options: RenderOptions,
}

const BACKWARD_CHUNKS: usize = 8;

impl<'a> Renderer<'a> {
    pub fn render(&self, camera: &Camera) -> Result<RenderOutput> {
        self.prefiltered.check_fresh(&self.params.env)?;
        camera.validate()?;
        let gb = rasterize(self.mesh, camera);
        let mats = &self.params.materials;
        let opts = self.options.shade;
        let shaded: Vec<Option<(PixelRecord, DVec3)>> = par::map_range(gb.fragments.len(), |i| {
            gb.fragments[i].map(|frag| {
                let kd_fp = mats.kd.footprint(frag.uv);
                let orm_fp = mats.orm.footprint(frag.uv);
                let normal_fp = mats.normal.footprint(frag.uv);
                let sample = MaterialSample {
                    kd: mats.kd.gather(&kd_fp),
                    orm: mats.orm.gather(&orm_fp),
                    normal: mats.normal.gather(&normal_fp),
                };
                let n = shading_normal(&frag, sample.normal, &opts);
                let color = shade(
                    &ShadePoint {
                        normal: n,
                        view: frag.view,
                    },
                    &sample,
                    self.prefiltered,
                    self.lut,
                    &opts,
                );
                (
                    PixelRecord {
                        fragment: frag,
                        kd_fp,
                        orm_fp,
                        normal_fp,
                        sample,
                        shading_normal: n,
                    },
                    color,
                )
            })
        });
        let background = self.options.background;
        let image = Image {
            width: gb.width,
            height: gb.height,
            data: shaded.iter().map(|s| s.map_or(background, |(_, c)| c)).collect(),
        };
        Ok(RenderOutput {
            image,
            coverage: shaded.iter().map(Option::is_some).collect(),
            records: shaded.into_iter().map(|s| s.map(|(r, _)| r)).collect(),
            camera: camera.clone(),
            env_version: self.params.env.version,
        })
    }

    /// Applies the render's transposed Jacobian to a linear-space image cotangent.
    pub fn backward(&self, out: &RenderOutput, image_grad: &Image) -> Result<GradientSet> {
        if image_grad.width != out.image.width || image_grad.height != out.image.height {
            return Err(Error::Shape {
                expected: out.image.dims().to_vec(),
                actual: image_grad.dims().to_vec(),
            });
        }
        if out.env_version != self.prefiltered.source_version {
            return Err(Error::StalePrefilter {
                built: self.prefiltered.source_version,
                current: out.env_version,
            });
        }
        let mask = self.params.trainable;
        let opts = self.options.shade;
        let n = out.records.len();
        let chunk = n.div_ceil(BACKWARD_CHUNKS).max(1);
        let pre = self.prefiltered;
        let parts = par::map_range(n.div_ceil(chunk), |c| {
            let mut env_grad = mask.env.then(|| EnvTableGrad::zeros_like(pre));
            let grads: Vec<Option<(DVec3, DVec3, DVec3)>> = (c * chunk..((c + 1) * chunk).min(n))
                .map(|i| {
                    let rec = out.records[i].as_ref()?;
                    let g = image_grad.data[i];
                    if g == DVec3::ZERO {
                        return None;
                    }
                    let p = ShadePoint {
                        normal: rec.shading_normal,
                        view: rec.fragment.view,
                    };
                    let sg = shade_vjp(&p, &rec.sample, pre, self.lut, &opts, g, env_grad.as_mut());
                    let g_nrm = if mask.normal && opts.normal_map {
                        normal_texel_vjp(&rec.fragment, rec.sample.normal, sg.normal)
                    } else {
                        DVec3::ZERO
                    };
                    Some((sg.kd, sg.orm, g_nrm))
                })
                .collect();
            (grads, env_grad)
        });

        let mut result = GradientSet::zeros(self.params);
        let mut tables = mask.env.then(|| EnvTableGrad::zeros_like(pre));
        let mut i = 0;
        for (grads, env_part) in parts {
            for g in grads {
                if let (Some((g_kd, g_orm, g_nrm)), Some(rec)) = (g, out.records[i].as_ref()) {
                    if mask.kd {
                        scatter(&mut result.kd, &rec.kd_fp, g_kd);
                    }
                    if mask.orm {
                        scatter(&mut result.orm, &rec.orm_fp, g_orm);
                    }
                    if mask.normal {
                        scatter(&mut result.normal, &rec.normal_fp, g_nrm);
                    }
                }
                i += 1;
            }
            if let (Some(total), Some(part)) = (tables.as_mut(), env_part) {
                for (dst, src) in total.mips.iter_mut().zip(&part.mips) {
                    for (a, b) in dst.iter_mut().zip(src) {
                        *a += *b;
                    }
                }
                for (a, b) in total.irradiance.iter_mut().zip(&part.irradiance) {
                    *a += *b;
                }
            }
        }
        if let Some(tables) = tables {
            result.env = pre.backward(&tables, &self.params.env);
        }
        Ok(result)
    }
}

fn scatter(dst: &mut [DVec3], fp: &Footprint, g: DVec3) {
    for &(i, w) in fp {
        dst[i] += g * w;
    }
}

/// Display transform applied before guidance: clamp to [0,1], then the sRGB curve.
pub fn tonemap(linear: &Image) -> Image {
    linear.map(|p| {
        let c = p.clamp(DVec3::ZERO, DVec3::ONE);
        DVec3::new(linear_to_srgb(c.x), linear_to_srgb(c.y), linear_to_srgb(c.z))
    })
}

/// Adjoint of [`tonemap`]; zero where the clamp is active.
pub fn tonemap_vjp(linear: &Image, grad: &Image) -> Image {
    let data = linear
        .data
        .iter()
        .zip(&grad.data)
        .map(|(x, g)| {
            let d = |v: f64| {
                if (0.0..=1.0).contains(&v) {
                    linear_to_srgb_derivative(v)
                } else {
                    0.0
                }
            };
            DVec3::new(d(x.x), d(x.y), d(x.z)) * *g
        })
        .collect();
    Image {
        width: linear.width,
        height: linear.height,
        data,
    }
}
