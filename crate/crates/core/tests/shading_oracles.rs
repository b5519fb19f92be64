//! Physical sanity checks of the split-sum shading against closed-form
//! answers and the Monte Carlo reference.

use glam::DVec3;

use reltex_core::cubemap::Cubemap;
use reltex_core::shading::{
    shade, BrdfLut, EnvironmentMap, MaterialSample, PrefilterSettings, PrefilteredEnv, ReferenceShader, ShadeOptions,
    ShadePoint,
};

const ROUGHNESS: [f64; 5] = [0.05, 0.3, 0.5, 0.7, 1.0];
const NDOTV: [f64; 4] = [0.2, 0.5, 0.8, 1.0];

fn point(n_dot_v: f64) -> ShadePoint {
    ShadePoint {
        normal: DVec3::Z,
        view: DVec3::new((1.0 - n_dot_v * n_dot_v).sqrt(), 0.0, n_dot_v),
    }
}

fn specular_only() -> ShadeOptions {
    ShadeOptions {
        diffuse: false,
        ..Default::default()
    }
}

struct Furnace {
    lut: BrdfLut,
    env: EnvironmentMap,
    pre: PrefilteredEnv,
}

/// Uniform unit radiance from every direction.
fn furnace() -> Furnace {
    let lut = BrdfLut::precompute(32, 256, 0).unwrap();
    let env = EnvironmentMap::constant(16, DVec3::ONE).unwrap();
    let settings = PrefilterSettings {
        min_res: 4,
        ..Default::default()
    };
    let pre = PrefilteredEnv::build(&env, settings).unwrap();
    Furnace { lut, env, pre }
}

#[test]
fn white_furnace_never_gains_energy() {
    let f = furnace();
    for r in ROUGHNESS {
        for c in NDOTV {
            let m = MaterialSample::new(DVec3::ONE, r, 1.0);
            let split = shade(&point(c), &m, &f.pre, &f.lut, &specular_only());
            let reference = ReferenceShader::new(&m, 4096, 3).shade(&point(c), &f.env);
            assert!(split.max_element() <= 1.0 + 1e-9, "r {r} n.v {c}: split-sum {split}");
            assert!(reference.max_element() <= 1.0 + 1e-9, "r {r} n.v {c}: reference {reference}");
            if r <= 0.05 {
                assert!(split.min_element() > 0.98, "smooth mirror loses energy: {split}");
            }
        }
    }
}

#[test]
fn furnace_albedo_decreases_with_roughness_at_normal_incidence() {
    let f = furnace();
    let albedo: Vec<f64> = ROUGHNESS
        .iter()
        .map(|&r| shade(&point(1.0), &MaterialSample::new(DVec3::ONE, r, 1.0), &f.pre, &f.lut, &specular_only()).x)
        .collect();
    assert!(albedo.windows(2).all(|w| w[1] < w[0]), "{albedo:?}");
}

#[test]
fn furnace_matches_reference_integral() {
    let f = furnace();
    for r in ROUGHNESS {
        for c in NDOTV {
            for metal in [0.0, 1.0] {
                let m = MaterialSample::new(DVec3::new(0.9, 0.5, 0.2), r, metal);
                let split = shade(&point(c), &m, &f.pre, &f.lut, &ShadeOptions::default());
                let reference = ReferenceShader::new(&m, 4096, 3).shade(&point(c), &f.env);
                let rel = (split - reference).length() / reference.length();
                assert!(rel < 0.08, "r {r} n.v {c} metal {metal}: {split} vs {reference} ({rel:.3})");
            }
        }
    }
}

#[test]
fn lambertian_term_under_uniform_light_is_albedo_times_radiance() {
    let lut = BrdfLut::precompute(16, 64, 0).unwrap();
    let radiance = DVec3::new(0.5, 1.0, 2.0);
    let env = EnvironmentMap::constant(16, radiance).unwrap();
    let pre = PrefilteredEnv::build(&env, PrefilterSettings::default()).unwrap();
    let opts = ShadeOptions {
        specular: false,
        ..Default::default()
    };
    let kd = DVec3::new(0.7, 0.2, 0.4);
    for n in [DVec3::X, DVec3::NEG_Y, DVec3::new(1.0, 2.0, -3.0).normalize()] {
        let p = ShadePoint { normal: n, view: n };
        let got = shade(&p, &MaterialSample::new(kd, 0.5, 0.0), &pre, &lut, &opts);
        assert!((got - kd * radiance).abs().max_element() < 1e-3, "{got} at {n}");
    }
}

#[test]
fn smooth_metal_mirrors_the_environment() {
    let lut = BrdfLut::precompute(32, 256, 0).unwrap();
    let env = EnvironmentMap::new(Cubemap::from_fn(64, |d| {
        DVec3::new(1.0 + 0.5 * d.x, 1.0 + 0.3 * d.y, 1.0 - 0.4 * d.z)
    }))
    .unwrap();
    let pre = PrefilteredEnv::build(
        &env,
        PrefilterSettings {
            min_res: 8,
            ..Default::default()
        },
    )
    .unwrap();
    for c in [0.3, 0.7, 1.0] {
        let p = point(c);
        let mirrored = env.cube.sample(2.0 * c * DVec3::Z - p.view);
        let got = shade(&p, &MaterialSample::new(DVec3::ONE, 0.0, 1.0), &pre, &lut, &specular_only());
        assert!((got - mirrored).abs().max_element() < 1e-2, "n.v {c}: {got} vs {mirrored}");
    }
}

#[test]
fn shading_is_linear_in_the_environment() {
    let lut = BrdfLut::precompute(16, 64, 0).unwrap();
    let env = EnvironmentMap::new(Cubemap::from_fn(8, |d| DVec3::new(0.5 + 0.4 * d.x, 0.6, 0.5 - 0.3 * d.y))).unwrap();
    let settings = PrefilterSettings {
        samples: 64,
        min_res: 2,
        ..Default::default()
    };
    let pre = PrefilteredEnv::build(&env, settings).unwrap();
    let pre3 = PrefilteredEnv::build(&env.scaled(3.0), settings).unwrap();
    let m = MaterialSample::new(DVec3::new(0.3, 0.6, 0.9), 0.4, 0.5);
    for c in NDOTV {
        let a = shade(&point(c), &m, &pre, &lut, &ShadeOptions::default());
        let b = shade(&point(c), &m, &pre3, &lut, &ShadeOptions::default());
        assert!((b - 3.0 * a).abs().max_element() < 1e-12 * b.max_element().max(1.0));
    }
}
