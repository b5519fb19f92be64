//! Cube-map addressing, bilinear sampling with direction derivatives, and
//! latitude/longitude conversion.
//!
//! Face order is +X, -X, +Y, -Y, +Z, -Z with the usual GL orientation. Each
//! face is sampled bilinearly; taps that fall off a face are fetched from the
//! adjacent face, which keeps lookups continuous across edges (corners excepted).

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;
use crate::math::mix;

#[derive(Debug, Clone, Copy)]
struct FaceAxes {
    major: usize,
    major_sign: f64,
    s: usize,
    s_sign: f64,
    t: usize,
    t_sign: f64,
}

const FACES: [FaceAxes; 6] = [
    FaceAxes { major: 0, major_sign: 1.0, s: 2, s_sign: -1.0, t: 1, t_sign: -1.0 },
    FaceAxes { major: 0, major_sign: -1.0, s: 2, s_sign: 1.0, t: 1, t_sign: -1.0 },
    FaceAxes { major: 1, major_sign: 1.0, s: 0, s_sign: 1.0, t: 2, t_sign: 1.0 },
    FaceAxes { major: 1, major_sign: -1.0, s: 0, s_sign: 1.0, t: 2, t_sign: -1.0 },
    FaceAxes { major: 2, major_sign: 1.0, s: 0, s_sign: 1.0, t: 1, t_sign: -1.0 },
    FaceAxes { major: 2, major_sign: -1.0, s: 0, s_sign: -1.0, t: 1, t_sign: -1.0 },
];

fn select_face(d: DVec3) -> usize {
    let a = d.abs();
    if a.x >= a.y && a.x >= a.z {
        if d.x >= 0.0 { 0 } else { 1 }
    } else if a.y >= a.z {
        if d.y >= 0.0 { 2 } else { 3 }
    } else if d.z >= 0.0 {
        4
    } else {
        5
    }
}

/// Face index and face coordinates in [-1, 1]² of a direction.
pub fn dir_to_face(d: DVec3) -> (usize, DVec2) {
    // Written out per face (matches FACES) because this sits on hot sampling paths.
    let a = d.abs();
    if a.x >= a.y && a.x >= a.z {
        let inv = 1.0 / a.x;
        if d.x >= 0.0 {
            (0, DVec2::new(-d.z * inv, -d.y * inv))
        } else {
            (1, DVec2::new(d.z * inv, -d.y * inv))
        }
    } else if a.y >= a.z {
        let inv = 1.0 / a.y;
        if d.y >= 0.0 {
            (2, DVec2::new(d.x * inv, d.z * inv))
        } else {
            (3, DVec2::new(d.x * inv, -d.z * inv))
        }
    } else {
        let inv = 1.0 / a.z;
        if d.z >= 0.0 {
            (4, DVec2::new(d.x * inv, -d.y * inv))
        } else {
            (5, DVec2::new(-d.x * inv, -d.y * inv))
        }
    }
}

/// Unnormalized direction of face coordinates (s, t) in [-1, 1]².
pub fn face_to_dir(face: usize, st: DVec2) -> DVec3 {
    let f = FACES[face];
    let mut d = DVec3::ZERO;
    d[f.major] = f.major_sign;
    d[f.s] = f.s_sign * st.x;
    d[f.t] = f.t_sign * st.y;
    d
}

/// Bilinear tap: texel index, weight, and d(weight)/d(direction).
pub type CubeTap = (usize, f64, DVec3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cubemap {
    pub res: usize,
    pub data: Vec<DVec3>,
}

impl Cubemap {
    pub fn new(res: usize, fill: DVec3) -> Self {
        Self {
            res,
            data: vec![fill; 6 * res * res],
        }
    }

    pub fn from_fn(res: usize, f: impl Fn(DVec3) -> DVec3) -> Self {
        let mut data = Vec::with_capacity(6 * res * res);
        for face in 0..6 {
            for y in 0..res {
                for x in 0..res {
                    data.push(f(texel_dir(res, face, x, y)));
                }
            }
        }
        Self { res, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, face: usize, x: usize, y: usize) -> usize {
        (face * self.res + y) * self.res + x
    }

    /// Unit direction through the center of texel `i`.
    pub fn dir_of(&self, i: usize) -> DVec3 {
        let r2 = self.res * self.res;
        let face = i / r2;
        let rem = i % r2;
        texel_dir(self.res, face, rem % self.res, rem / self.res)
    }

    /// Texel index for integer face coordinates that may lie one texel outside
    /// the face; those are fetched from the neighbouring face so sampling stays
    /// continuous across seams.
    fn fetch_index(&self, face: usize, x: i64, y: i64) -> usize {
        let n = self.res as i64;
        if (0..n).contains(&x) && (0..n).contains(&y) {
            return self.index(face, x as usize, y as usize);
        }
        let s = (x as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let t = (y as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let (f2, st) = dir_to_face(face_to_dir(face, DVec2::new(s, t)));
        let px = (((st.x + 1.0) * 0.5 * n as f64).floor() as i64).clamp(0, n - 1);
        let py = (((st.y + 1.0) * 0.5 * n as f64).floor() as i64).clamp(0, n - 1);
        self.index(f2, px as usize, py as usize)
    }

    /// Face, pixel-space position, and d(position)/d(direction) rows.
    fn locate(&self, d: DVec3) -> (usize, DVec2, DVec3, DVec3) {
        let face = select_face(d);
        let f = FACES[face];
        let res = self.res as f64;
        let ma = d[f.major] * f.major_sign;
        let sc = f.s_sign * d[f.s];
        let tc = f.t_sign * d[f.t];
        let px = (sc / ma + 1.0) * 0.5 * res - 0.5;
        let py = (tc / ma + 1.0) * 0.5 * res - 0.5;
        let mut dpx = DVec3::ZERO;
        dpx[f.s] += f.s_sign / ma * 0.5 * res;
        dpx[f.major] -= sc / (ma * ma) * f.major_sign * 0.5 * res;
        let mut dpy = DVec3::ZERO;
        dpy[f.t] += f.t_sign / ma * 0.5 * res;
        dpy[f.major] -= tc / (ma * ma) * f.major_sign * 0.5 * res;
        (face, DVec2::new(px, py), dpx, dpy)
    }

    fn corners(&self, face: usize, p: DVec2) -> ([usize; 4], f64, f64) {
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let (fx, fy) = (p.x - x0, p.y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        (
            [
                self.fetch_index(face, x0, y0),
                self.fetch_index(face, x0 + 1, y0),
                self.fetch_index(face, x0, y0 + 1),
                self.fetch_index(face, x0 + 1, y0 + 1),
            ],
            fx,
            fy,
        )
    }

    pub fn taps(&self, d: DVec3) -> [CubeTap; 4] {
        let (face, p, dfx, dfy) = self.locate(d);
        let ([i00, i10, i01, i11], fx, fy) = self.corners(face, p);
        [
            (i00, (1.0 - fx) * (1.0 - fy), -dfx * (1.0 - fy) - dfy * (1.0 - fx)),
            (i10, fx * (1.0 - fy), dfx * (1.0 - fy) - dfy * fx),
            (i01, (1.0 - fx) * fy, -dfx * fy + dfy * (1.0 - fx)),
            (i11, fx * fy, dfx * fy + dfy * fx),
        ]
    }

    /// Bilinear sample; exact for constant maps.
    pub fn sample(&self, d: DVec3) -> DVec3 {
        let (face, st) = dir_to_face(d);
        let res = self.res as f64;
        let p = (st + 1.0) * (0.5 * res) - 0.5;
        // p >= -0.5, so shifting by one makes truncation a floor (cheaper than libm floor)
        let x0 = ((p.x + 1.0) as i64 - 1) as f64;
        let y0 = ((p.y + 1.0) as i64 - 1) as f64;
        let n = self.res as f64;
        let ([i00, i10, i01, i11], fx, fy) = if x0 >= 0.0 && y0 >= 0.0 && x0 + 1.0 < n && y0 + 1.0 < n {
            // interior fast path
            let i = self.index(face, x0 as usize, y0 as usize);
            ([i, i + 1, i + self.res, i + self.res + 1], p.x - x0, p.y - y0)
        } else {
            self.corners(face, p)
        };
        let top = mix(self.data[i00], self.data[i10], fx);
        let bot = mix(self.data[i01], self.data[i11], fx);
        mix(top, bot, fy)
    }

    /// Solid angle subtended by texel `i`.
    pub fn texel_solid_angle(&self, i: usize) -> f64 {
        let rem = i % (self.res * self.res);
        let (x, y) = (rem % self.res, rem / self.res);
        let inv = 2.0 / self.res as f64;
        let x0 = x as f64 * inv - 1.0;
        let y0 = y as f64 * inv - 1.0;
        let (x1, y1) = (x0 + inv, y0 + inv);
        let area = |x: f64, y: f64| (x * y).atan2((x * x + y * y + 1.0).sqrt());
        area(x0, y0) - area(x0, y1) - area(x1, y0) + area(x1, y1)
    }

    /// Box-filtered half-resolution copy (res must be even).
    pub fn downsample(&self) -> Cubemap {
        let r = self.res / 2;
        let mut out = Cubemap::new(r, DVec3::ZERO);
        for face in 0..6 {
            for y in 0..r {
                for x in 0..r {
                    let s = self.data[self.index(face, 2 * x, 2 * y)]
                        + self.data[self.index(face, 2 * x + 1, 2 * y)]
                        + self.data[self.index(face, 2 * x, 2 * y + 1)]
                        + self.data[self.index(face, 2 * x + 1, 2 * y + 1)];
                    let i = out.index(face, x, y);
                    out.data[i] = s * 0.25;
                }
            }
        }
        out
    }
}

pub fn texel_dir(res: usize, face: usize, x: usize, y: usize) -> DVec3 {
    let s = (x as f64 + 0.5) / res as f64 * 2.0 - 1.0;
    let t = (y as f64 + 0.5) / res as f64 * 2.0 - 1.0;
    face_to_dir(face, DVec2::new(s, t)).normalize()
}

/// Direction of equirectangular coordinates; u wraps around +y, v = 0 at the zenith.
pub fn equirect_dir(uv: DVec2) -> DVec3 {
    let phi = (uv.x - 0.5) * std::f64::consts::TAU;
    let theta = uv.y * std::f64::consts::PI;
    DVec3::new(theta.sin() * phi.sin(), theta.cos(), -theta.sin() * phi.cos())
}

pub fn dir_to_equirect(d: DVec3) -> DVec2 {
    let d = d.normalize();
    DVec2::new(
        0.5 + d.x.atan2(-d.z) / std::f64::consts::TAU,
        d.y.clamp(-1.0, 1.0).acos() / std::f64::consts::PI,
    )
}

/// Bilinear lookup in a latitude/longitude image, wrapping in u and clamping in v.
pub fn sample_equirect(img: &Image, uv: DVec2) -> DVec3 {
    let (w, h) = (img.width, img.height);
    let x = uv.x * w as f64 - 0.5;
    let y = (uv.y * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
    let xf = x.floor();
    let fx = x - xf;
    let x0 = (xf as i64).rem_euclid(w as i64) as usize;
    let x1 = (x0 + 1) % w;
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let fy = if h == 1 { 0.0 } else { y - y0 as f64 };
    let y1 = (y0 + 1).min(h - 1);
    let top = mix(img.get(x0, y0), img.get(x1, y0), fx);
    let bot = mix(img.get(x0, y1), img.get(x1, y1), fx);
    mix(top, bot, fy)
}

pub fn equirect_to_cubemap(img: &Image, face_res: usize) -> Result<Cubemap> {
    if face_res == 0 {
        return Err(Error::Environment("face resolution must be positive".into()));
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::Environment("empty equirectangular image".into()));
    }
    Ok(Cubemap::from_fn(face_res, |d| sample_equirect(img, dir_to_equirect(d))))
}

pub fn cubemap_to_equirect(cube: &Cubemap, width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |x, y| {
        let uv = DVec2::new((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
        cube.sample(equirect_dir(uv))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_round_trip() {
        for face in 0..6 {
            for &(s, t) in &[(0.0, 0.0), (0.5, -0.3), (-0.9, 0.9)] {
                let d = face_to_dir(face, DVec2::new(s, t));
                let (f2, st) = dir_to_face(d * 3.0);
                assert_eq!(f2, face);
                assert!((st - DVec2::new(s, t)).length() < 1e-12);
            }
        }
    }

    #[test]
    fn texel_directions_sample_back_exactly() {
        let cube = Cubemap::from_fn(4, |d| d);
        for i in 0..cube.len() {
            let d = cube.dir_of(i);
            assert!((cube.sample(d) - cube.data[i]).length() < 1e-12);
        }
    }

    #[test]
    fn solid_angles_sum_to_sphere() {
        let cube = Cubemap::new(8, DVec3::ZERO);
        let total: f64 = (0..cube.len()).map(|i| cube.texel_solid_angle(i)).sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn tap_gradients_match_finite_differences() {
        let cube = Cubemap::from_fn(6, |d| DVec3::new(d.x * d.y + 0.3, d.z.sin(), d.x.abs()));
        for d in [DVec3::new(0.8, 0.1, -0.3), DVec3::new(-0.2, 0.9, 0.35), DVec3::new(0.05, -0.2, -0.7)] {
            let taps = cube.taps(d);
            let grad: DVec3 = taps.iter().map(|&(i, _, g)| g * cube.data[i].x).sum();
            let h = 1e-6;
            for axis in 0..3 {
                let mut e = DVec3::ZERO;
                e[axis] = h;
                let fd = (cube.sample(d + e).x - cube.sample(d - e).x) / (2.0 * h);
                assert!((fd - grad[axis]).abs() < 1e-6, "axis {axis}: {fd} vs {}", grad[axis]);
            }
            let v: DVec3 = taps.iter().map(|&(i, w, _)| cube.data[i] * w).sum();
            assert!((v - cube.sample(d)).length() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_continuous_across_face_edges() {
        let cube = Cubemap::from_fn(4, |d| DVec3::new(d.x * 2.0 + d.y, d.z, 1.0));
        for d in [DVec3::new(1.0, 0.3, 1.0), DVec3::new(-1.0, 1.0, 0.2), DVec3::new(0.1, -1.0, -1.0)] {
            let e = 1e-9;
            let a = cube.sample(d + DVec3::new(e, e, -e));
            let b = cube.sample(d - DVec3::new(e, e, -e));
            assert!((a - b).length() < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn constant_equirect_gives_constant_cubemap_exactly() {
        let c = DVec3::new(0.25, 1.5, 3.0);
        let img = Image::new(32, 16, c);
        let cube = equirect_to_cubemap(&img, 8).unwrap();
        assert!(cube.data.iter().all(|&v| v == c));
        let back = cubemap_to_equirect(&cube, 32, 16);
        assert!(back.data.iter().all(|&v| v == c));
    }

    #[test]
    fn zero_face_resolution_is_rejected() {
        assert!(equirect_to_cubemap(&Image::new(4, 2, DVec3::ONE), 0).is_err());
    }

    #[test]
    fn equirect_direction_round_trip() {
        for &(u, v) in &[(0.1, 0.2), (0.5, 0.5), (0.93, 0.77)] {
            let uv = DVec2::new(u, v);
            assert!((dir_to_equirect(equirect_dir(uv)) - uv).length() < 1e-12);
        }
    }
}
