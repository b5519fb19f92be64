//! Small numeric helpers shared by the shading code.

use glam::{DVec2, DVec3};
use std::f64::consts::PI;

/// Van der Corput radical inverse in base 2.
pub fn radical_inverse(mut bits: u32) -> f64 {
    bits = bits.rotate_right(16);
    bits = ((bits & 0x5555_5555) << 1) | ((bits & 0xAAAA_AAAA) >> 1);
    bits = ((bits & 0x3333_3333) << 2) | ((bits & 0xCCCC_CCCC) >> 2);
    bits = ((bits & 0x0F0F_0F0F) << 4) | ((bits & 0xF0F0_F0F0) >> 4);
    bits = ((bits & 0x00FF_00FF) << 8) | ((bits & 0xFF00_FF00) >> 8);
    bits as f64 * (1.0 / 4_294_967_296.0)
}

/// Hammersley point `i` of `n`, shifted by a Cranley-Patterson rotation.
pub fn hammersley(i: u32, n: u32, shift: DVec2) -> DVec2 {
    let p = DVec2::new(i as f64 / n as f64, radical_inverse(i)) + shift;
    p - p.floor()
}

/// Seed-dependent rotation for low-discrepancy sequences (splitmix64).
pub fn seed_shift(seed: u64) -> DVec2 {
    let a = splitmix64(seed);
    let b = splitmix64(a);
    DVec2::new(unit_f64(a), unit_f64(b))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Right-handed orthonormal basis (t, b) completing `n`.
pub fn basis(n: DVec3) -> (DVec3, DVec3) {
    // Frisvad / Duff et al. branchless construction
    let sign = 1.0f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = DVec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = DVec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

pub fn to_world(local: DVec3, n: DVec3) -> DVec3 {
    let (t, b) = basis(n);
    t * local.x + b * local.y + n * local.z
}

/// Cosine-weighted hemisphere sample around +z.
pub fn cosine_hemisphere(u: DVec2) -> DVec3 {
    let r = u.x.sqrt();
    let phi = 2.0 * PI * u.y;
    DVec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u.x).max(0.0).sqrt())
}

/// `a + (b - a) s`, exact when `a == b`.
pub fn mix(a: DVec3, b: DVec3, s: f64) -> DVec3 {
    a + (b - a) * s
}

pub fn reflect(v: DVec3, n: DVec3) -> DVec3 {
    2.0 * v.dot(n) * n - v
}

/// Jacobian-transpose product of `x / |x|`: returns `(I - n nᵀ) g / |x|`.
pub fn normalize_vjp(x: DVec3, g: DVec3) -> DVec3 {
    let len = x.length();
    let n = x / len;
    (g - n * n.dot(g)) / len
}

/// Linear to sRGB transfer with the standard linear toe.
pub fn linear_to_srgb(x: f64) -> f64 {
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn linear_to_srgb_derivative(x: f64) -> f64 {
    if x <= 0.003_130_8 {
        12.92
    } else {
        1.055 / 2.4 * x.powf(1.0 / 2.4 - 1.0)
    }
}

pub fn srgb_to_linear(x: f64) -> f64 {
    if x <= 0.040_45 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for n in [
            DVec3::Z,
            -DVec3::Z,
            DVec3::new(0.3, -0.5, 0.8).normalize(),
            DVec3::new(-1.0, 2.0, -0.1).normalize(),
        ] {
            let (t, b) = basis(n);
            assert!((t.length() - 1.0).abs() < 1e-12);
            assert!((b.length() - 1.0).abs() < 1e-12);
            assert!(t.dot(n).abs() < 1e-12 && b.dot(n).abs() < 1e-12 && t.dot(b).abs() < 1e-12);
            assert!((t.cross(b) - n).length() < 1e-12);
        }
    }

    #[test]
    fn srgb_round_trip() {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn srgb_derivative_matches_finite_difference() {
        for &x in &[0.001, 0.01, 0.2, 0.7] {
            let h = 1e-7;
            let fd = (linear_to_srgb(x + h) - linear_to_srgb(x - h)) / (2.0 * h);
            assert!((fd - linear_to_srgb_derivative(x)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_vjp_matches_finite_difference() {
        let x = DVec3::new(0.3, -1.2, 0.7);
        let g = DVec3::new(0.5, 0.25, -1.0);
        let h = 1e-6;
        let f = |x: DVec3| x.normalize().dot(g);
        let fd = DVec3::new(
            (f(x + DVec3::X * h) - f(x - DVec3::X * h)) / (2.0 * h),
            (f(x + DVec3::Y * h) - f(x - DVec3::Y * h)) / (2.0 * h),
            (f(x + DVec3::Z * h) - f(x - DVec3::Z * h)) / (2.0 * h),
        );
        assert!((fd - normalize_vjp(x, g)).length() < 1e-8);
    }
}
