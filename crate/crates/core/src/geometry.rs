//! Fixed-topology triangle meshes, pinhole cameras and the per-pixel G-buffer.
//!
//! Rasterization is done by casting one ray through each pixel center against
//! the triangles whose projected bounding box covers that pixel. Ray/triangle
//! barycentrics are taken in world space, so attribute interpolation is
//! perspective-correct without a separate 1/w pass. Visibility is treated as
//! piecewise constant: nothing downstream differentiates through coverage.

use std::path::Path;

use glam::{DMat3, DVec2, DVec3, DVec4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::basis;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub positions: Vec<DVec3>,
    pub normals: Vec<DVec3>,
    /// xyz tangent, w handedness (±1).
    pub tangents: Vec<DVec4>,
    pub uvs: Vec<DVec2>,
    pub triangles: Vec<[u32; 3]>,
}

/// Outcome of building a mesh from raw attribute arrays.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub mesh: Mesh,
    pub degenerate_dropped: usize,
}

impl Mesh {
    /// Validates indices, drops zero-area triangles and fills in missing normals and tangents.
    pub fn from_parts(
        positions: Vec<DVec3>,
        normals: Option<Vec<DVec3>>,
        uvs: Option<Vec<DVec2>>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<LoadReport> {
        let uvs = uvs
            .filter(|u| !u.is_empty())
            .ok_or_else(|| Error::MissingUvs("mesh has no texture coordinates".into()))?;
        let n = positions.len();
        if uvs.len() != n {
            return Err(Error::Mesh(format!("{} uvs for {} vertices", uvs.len(), n)));
        }
        if uvs.iter().any(|uv| !uv.is_finite()) || positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Mesh("non-finite vertex attribute".into()));
        }
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(Error::Mesh(format!("index {bad} out of range for {n} vertices")));
        }

        let mut kept = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [a, b, c] = tri.map(|i| positions[i as usize]);
            let e1 = b - a;
            let e2 = c - a;
            let scale = e1.length_squared() + e2.length_squared();
            if e1.cross(e2).length() <= 1e-12 * scale || scale == 0.0 {
                continue;
            }
            kept.push(*tri);
        }
        let degenerate_dropped = triangles.len() - kept.len();
        if degenerate_dropped > 0 {
            log::warn!("dropped {degenerate_dropped} degenerate triangle(s)");
        }
        if kept.is_empty() {
            return Err(Error::Mesh("no non-degenerate triangles".into()));
        }

        let normals = match normals {
            Some(ns) if ns.len() == n && !ns.is_empty() => ns
                .into_iter()
                .zip(face_normals(&positions, &kept))
                .map(|(v, fallback)| {
                    if v.length_squared() > 1e-20 && v.is_finite() {
                        v.normalize()
                    } else {
                        fallback
                    }
                })
                .collect(),
            Some(ns) if !ns.is_empty() => {
                return Err(Error::Mesh(format!("{} normals for {} vertices", ns.len(), n)))
            }
            _ => face_normals(&positions, &kept),
        };
        let tangents = tangent_frames(&positions, &normals, &uvs, &kept);
        Ok(LoadReport {
            mesh: Mesh {
                positions,
                normals,
                tangents,
                uvs,
                triangles: kept,
            },
            degenerate_dropped,
        })
    }

    pub fn bounds(&self) -> (DVec3, DVec3) {
        self.positions.iter().fold(
            (DVec3::splat(f64::INFINITY), DVec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), &p| (lo.min(p), hi.max(p)),
        )
    }

    pub fn centroid(&self) -> DVec3 {
        let (lo, hi) = self.bounds();
        (lo + hi) * 0.5
    }

    pub fn transformed(&self, scale: f64, offset: DVec3) -> Mesh {
        Mesh {
            positions: self.positions.iter().map(|&p| p * scale + offset).collect(),
            ..self.clone()
        }
    }

    /// Square in the z = 0 plane facing +z, spanning [-half, half]², uv (0,0) at the top-left.
    pub fn quad(half: f64) -> Mesh {
        let positions = vec![
            DVec3::new(-half, half, 0.0),
            DVec3::new(half, half, 0.0),
            DVec3::new(half, -half, 0.0),
            DVec3::new(-half, -half, 0.0),
        ];
        let uvs = vec![
            DVec2::new(0.0, 0.0),
            DVec2::new(1.0, 0.0),
            DVec2::new(1.0, 1.0),
            DVec2::new(0.0, 1.0),
        ];
        Mesh::from_parts(positions, None, Some(uvs), vec![[0, 2, 1], [0, 3, 2]])
            .expect("quad is valid")
            .mesh
    }

    /// Latitude/longitude sphere centred at the origin with analytic normals.
    pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> Mesh {
        let mut positions = Vec::new();
        let mut normals = Vec::new();
        let mut uvs = Vec::new();
        for r in 0..=rings {
            let v = r as f64 / rings as f64;
            let theta = v * std::f64::consts::PI;
            for s in 0..=segments {
                let u = s as f64 / segments as f64;
                let phi = u * std::f64::consts::TAU;
                let n = DVec3::new(theta.sin() * phi.cos(), theta.cos(), -theta.sin() * phi.sin());
                positions.push(n * radius);
                normals.push(n);
                uvs.push(DVec2::new(u, v));
            }
        }
        let stride = (segments + 1) as u32;
        let mut triangles = Vec::new();
        for r in 0..rings as u32 {
            for s in 0..segments as u32 {
                let a = r * stride + s;
                let b = a + stride;
                triangles.push([a, b, a + 1]);
                triangles.push([a + 1, b, b + 1]);
            }
        }
        // pole rows produce zero-area triangles; from_parts drops them
        Mesh::from_parts(positions, Some(normals), Some(uvs), triangles)
            .expect("sphere is valid")
            .mesh
    }

    /// Unit cube centred at the origin, one UV square per face.
    pub fn cube() -> Mesh {
        let faces: [(DVec3, DVec3, DVec3); 6] = [
            (DVec3::X, -DVec3::Z, DVec3::Y),
            (-DVec3::X, DVec3::Z, DVec3::Y),
            (DVec3::Y, DVec3::X, -DVec3::Z),
            (-DVec3::Y, DVec3::X, DVec3::Z),
            (DVec3::Z, DVec3::X, DVec3::Y),
            (-DVec3::Z, -DVec3::X, DVec3::Y),
        ];
        let mut positions = Vec::new();
        let mut uvs = Vec::new();
        let mut triangles = Vec::new();
        for (n, right, up) in faces {
            let base = positions.len() as u32;
            for (du, dv) in [(-1.0, 1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                positions.push((n + right * du + up * dv) * 0.5);
                uvs.push(DVec2::new((du + 1.0) * 0.5, (1.0 - dv) * 0.5));
            }
            triangles.push([base, base + 2, base + 1]);
            triangles.push([base, base + 3, base + 2]);
        }
        Mesh::from_parts(positions, None, Some(uvs), triangles)
            .expect("cube is valid")
            .mesh
    }
}

fn face_normals(positions: &[DVec3], triangles: &[[u32; 3]]) -> Vec<DVec3> {
    let mut acc = vec![DVec3::ZERO; positions.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        // area weighted
        let n = (b - a).cross(c - a);
        for &i in tri {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| if n.length_squared() > 0.0 { n.normalize() } else { DVec3::Z })
        .collect()
}

/// Per-triangle UV-derivative tangents accumulated per vertex, then Gram-Schmidt against the normal.
fn tangent_frames(
    positions: &[DVec3],
    normals: &[DVec3],
    uvs: &[DVec2],
    triangles: &[[u32; 3]],
) -> Vec<DVec4> {
    let mut tan = vec![DVec3::ZERO; positions.len()];
    let mut bit = vec![DVec3::ZERO; positions.len()];
    for tri in triangles {
        let [i0, i1, i2] = tri.map(|i| i as usize);
        let e1 = positions[i1] - positions[i0];
        let e2 = positions[i2] - positions[i0];
        let d1 = uvs[i1] - uvs[i0];
        let d2 = uvs[i2] - uvs[i0];
        let det = d1.x * d2.y - d2.x * d1.y;
        if det.abs() < 1e-20 {
            continue;
        }
        let r = 1.0 / det;
        let t = (e1 * d2.y - e2 * d1.y) * r;
        let b = (e2 * d1.x - e1 * d2.x) * r;
        for i in [i0, i1, i2] {
            tan[i] += t;
            bit[i] += b;
        }
    }
    normals
        .iter()
        .zip(tan.iter().zip(&bit))
        .map(|(&n, (&t, &b))| {
            let t_ortho = t - n * n.dot(t);
            let t_ortho = if t_ortho.length_squared() > 1e-20 {
                t_ortho.normalize()
            } else {
                basis(n).0
            };
            let w = if n.cross(t_ortho).dot(b) < 0.0 { -1.0 } else { 1.0 };
            t_ortho.extend(w)
        })
        .collect()
}

/// Loads a Wavefront OBJ file. OBJ texture coordinates have v pointing up; they
/// are flipped so v = 0 addresses the first texture row.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "mesh file not found"),
        ));
    }
    let opts = tobj::LoadOptions {
        single_index: true,
        triangulate: true,
        ignore_points: true,
        ignore_lines: true,
    };
    let (models, _materials) =
        tobj::load_obj(path, &opts).map_err(|e| Error::Mesh(format!("{}: {e}", path.display())))?;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    let mut all_normals = true;
    for model in &models {
        let m = &model.mesh;
        let base = positions.len() as u32;
        let count = m.positions.len() / 3;
        if m.texcoords.len() / 2 != count {
            return Err(Error::MissingUvs(format!(
                "{}: object '{}' has no texture coordinates",
                path.display(),
                model.name
            )));
        }
        positions.extend(
            m.positions
                .chunks_exact(3)
                .map(|p| DVec3::new(p[0] as f64, p[1] as f64, p[2] as f64)),
        );
        uvs.extend(
            m.texcoords
                .chunks_exact(2)
                .map(|t| DVec2::new(t[0] as f64, 1.0 - t[1] as f64)),
        );
        if m.normals.len() / 3 == count {
            normals.extend(
                m.normals
                    .chunks_exact(3)
                    .map(|p| DVec3::new(p[0] as f64, p[1] as f64, p[2] as f64)),
            );
        } else {
            all_normals = false;
        }
        triangles.extend(
            m.indices
                .chunks_exact(3)
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }
    if positions.is_empty() {
        return Err(Error::Mesh(format!("{}: no geometry", path.display())));
    }
    Mesh::from_parts(positions, all_normals.then_some(normals), Some(uvs), triangles)
}

/// Pinhole camera. `rotation` maps camera space (x right, y up, looking down -z) to world space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: DVec3,
    pub rotation: DMat3,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn look_at(
        eye: DVec3,
        target: DVec3,
        up: DVec3,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Camera> {
        let back = (eye - target).normalize();
        let mut right = up.cross(back);
        if right.length_squared() < 1e-12 {
            right = basis(back).0;
        }
        let right = right.normalize();
        let cam_up = back.cross(right);
        let cam = Camera {
            position: eye,
            rotation: DMat3::from_cols(right, cam_up, back),
            fov_y,
            width,
            height,
            near: 1e-3,
            far: 1e4,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = self.rotation.transpose() * self.rotation;
        let err = (rtr - DMat3::IDENTITY).to_cols_array().iter().map(|v| v.abs()).fold(0.0, f64::max);
        // negated so a NaN error is rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bad = !(err <= 1e-5);
        if bad {
            return Err(Error::Camera(format!("rotation not orthonormal (|RᵀR - I| = {err:e})")));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Camera(format!("fov {} outside (0, π)", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera("resolution must be at least 1x1".into()));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::Camera("need 0 < near < far".into()));
        }
        Ok(())
    }

    fn half_extents(&self) -> DVec2 {
        let ty = (self.fov_y * 0.5).tan();
        DVec2::new(ty * self.width as f64 / self.height as f64, ty)
    }

    /// Camera-space direction through a pixel-space point, z = -1.
    fn camera_ray(&self, px: f64, py: f64) -> DVec3 {
        let h = self.half_extents();
        DVec3::new(
            (2.0 * px / self.width as f64 - 1.0) * h.x,
            (1.0 - 2.0 * py / self.height as f64) * h.y,
            -1.0,
        )
    }

    /// Unnormalized world ray through pixel `(x, y)`'s center; its parameter equals view depth.
    pub fn pixel_ray(&self, x: usize, y: usize) -> DVec3 {
        self.rotation * self.camera_ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Continuous pixel coordinates and view depth of a world point.
    pub fn project(&self, p: DVec3) -> (DVec2, f64) {
        let c = self.rotation.transpose() * (p - self.position);
        let depth = -c.z;
        let h = self.half_extents();
        let sx = (c.x / depth / h.x + 1.0) * 0.5 * self.width as f64;
        let sy = (1.0 - c.y / depth / h.y) * 0.5 * self.height as f64;
        (DVec2::new(sx, sy), depth)
    }
}

/// Shading inputs of one covered pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub position: DVec3,
    /// Interpolated, renormalized vertex normal.
    pub normal: DVec3,
    pub tangent: DVec4,
    pub uv: DVec2,
    /// Unit vector from the surface toward the camera.
    pub view: DVec3,
    pub triangle: u32,
    pub barycentrics: DVec3,
}

impl Fragment {
    /// World-space frame (t, b, n) used to interpret tangent-space normals.
    pub fn tbn(&self) -> (DVec3, DVec3, DVec3) {
        let n = self.normal;
        let t = self.tangent.truncate();
        let t = (t - n * n.dot(t)).try_normalize().unwrap_or_else(|| basis(n).0);
        let b = n.cross(t) * self.tangent.w;
        (t, b, n)
    }

    /// Applies a unit tangent-space normal to the geometric frame.
    pub fn perturb(&self, ts: DVec3) -> DVec3 {
        let (t, b, n) = self.tbn();
        (t * ts.x + b * ts.y + n * ts.z).normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub fragments: Vec<Option<Fragment>>,
}

impl GBuffer {
    pub fn get(&self, x: usize, y: usize) -> Option<&Fragment> {
        self.fragments[y * self.width + x].as_ref()
    }

    pub fn covered(&self) -> usize {
        self.fragments.iter().filter(|f| f.is_some()).count()
    }
}

struct ScreenTri {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

const BAND: usize = 8;

/// Nearest-hit visibility and attribute interpolation at pixel centers.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> GBuffer {
    let (w, h) = (camera.width, camera.height);
    let bounds: Vec<Option<ScreenTri>> = mesh
        .triangles
        .iter()
        .map(|tri| screen_bounds(mesh, camera, tri))
        .collect();
    let bands = h.div_ceil(BAND);
    let rows: Vec<Vec<Option<Fragment>>> = par::map_range(bands, |band| {
        let y_lo = band * BAND;
        let y_hi = (y_lo + BAND).min(h);
        let mut depth = vec![f64::INFINITY; (y_hi - y_lo) * w];
        let mut hit: Vec<Option<(u32, f64, f64)>> = vec![None; (y_hi - y_lo) * w];
        for (ti, (tri, bb)) in mesh.triangles.iter().zip(&bounds).enumerate() {
            let Some(bb) = bb else { continue };
            let ys = bb.y0.max(y_lo);
            let ye = bb.y1.min(y_hi - 1);
            if ys > ye {
                continue;
            }
            let [a, b, c] = tri.map(|i| mesh.positions[i as usize]);
            for y in ys..=ye {
                for x in bb.x0..=bb.x1 {
                    let dir = camera.pixel_ray(x, y);
                    if let Some((t, b1, b2)) = intersect(camera.position, dir, a, b, c) {
                        let k = (y - y_lo) * w + x;
                        if t >= camera.near && t <= camera.far && t < depth[k] {
                            depth[k] = t;
                            hit[k] = Some((ti as u32, b1, b2));
                        }
                    }
                }
            }
        }
        hit.iter()
            .map(|h| h.map(|(ti, b1, b2)| fragment(mesh, camera, ti, b1, b2)))
            .collect()
    });
    GBuffer {
        width: w,
        height: h,
        fragments: rows.into_iter().flatten().collect(),
    }
}

fn screen_bounds(mesh: &Mesh, camera: &Camera, tri: &[u32; 3]) -> Option<ScreenTri> {
    let (w, h) = (camera.width, camera.height);
    let projected = tri.map(|i| camera.project(mesh.positions[i as usize]));
    if projected.iter().all(|(_, d)| *d < camera.near) {
        return None;
    }
    if projected.iter().any(|(_, d)| *d < camera.near) {
        // straddles the near plane: test against the whole screen
        return Some(ScreenTri {
            x0: 0,
            x1: w - 1,
            y0: 0,
            y1: h - 1,
        });
    }
    let lo = projected.iter().fold(DVec2::splat(f64::INFINITY), |a, (p, _)| a.min(*p));
    let hi = projected.iter().fold(DVec2::splat(f64::NEG_INFINITY), |a, (p, _)| a.max(*p));
    // pixel centers at i + 0.5 inside [lo, hi], widened by one pixel for rounding
    let x0 = (lo.x - 1.5).ceil().max(0.0);
    let y0 = (lo.y - 1.5).ceil().max(0.0);
    let x1 = (hi.x + 0.5).floor().min(w as f64 - 1.0);
    let y1 = (hi.y + 0.5).floor().min(h as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(ScreenTri {
        x0: x0 as usize,
        x1: x1 as usize,
        y0: y0 as usize,
        y1: y1 as usize,
    })
}

/// Double-sided Möller–Trumbore; returns (t, b1, b2).
fn intersect(o: DVec3, d: DVec3, a: DVec3, b: DVec3, c: DVec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let b1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(e1);
    let b2 = d.dot(q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    Some((e2.dot(q) * inv, b1, b2))
}

fn fragment(mesh: &Mesh, camera: &Camera, ti: u32, b1: f64, b2: f64) -> Fragment {
    let [i0, i1, i2] = mesh.triangles[ti as usize].map(|i| i as usize);
    let b0 = 1.0 - b1 - b2;
    let lerp3 = |v: &[DVec3]| v[i0] * b0 + v[i1] * b1 + v[i2] * b2;
    let position = lerp3(&mesh.positions);
    let normal = lerp3(&mesh.normals).try_normalize().unwrap_or(mesh.normals[i0]);
    let t = mesh.tangents[i0] * b0 + mesh.tangents[i1] * b1 + mesh.tangents[i2] * b2;
    let tangent = t
        .truncate()
        .try_normalize()
        .unwrap_or(mesh.tangents[i0].truncate())
        .extend(mesh.tangents[i0].w);
    let uv = mesh.uvs[i0] * b0 + mesh.uvs[i1] * b1 + mesh.uvs[i2] * b2;
    Fragment {
        position,
        normal,
        tangent,
        uv,
        view: (camera.position - position).normalize(),
        triangle: ti,
        barycentrics: DVec3::new(b0, b1, b2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Camera at +z looking at a quad of half-size tan(fov/2) at distance 1.
    fn framing_camera(res: usize) -> (Mesh, Camera) {
        let fov = 60f64.to_radians();
        let half = (fov * 0.5).tan();
        let cam = Camera::look_at(DVec3::new(0.0, 0.0, 1.0), DVec3::ZERO, DVec3::Y, fov, res, res).unwrap();
        (Mesh::quad(half), cam)
    }

    #[test]
    fn full_screen_quad_covers_every_pixel_with_grid_uvs() {
        let (mesh, cam) = framing_camera(4);
        let gb = rasterize(&mesh, &cam);
        assert_eq!(gb.covered(), 16);
        for y in 0..4 {
            for x in 0..4 {
                let f = gb.get(x, y).unwrap();
                let expect = DVec2::new((x as f64 + 0.5) / 4.0, (y as f64 + 0.5) / 4.0);
                assert!((f.uv - expect).length() < 1e-5, "{:?} vs {:?}", f.uv, expect);
                assert!((f.view.length() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mesh_behind_camera_is_not_covered() {
        let (mesh, _) = framing_camera(4);
        let cam = Camera::look_at(DVec3::new(0.0, 0.0, 1.0), DVec3::new(0.0, 0.0, 2.0), DVec3::Y, 1.0, 8, 8).unwrap();
        assert_eq!(rasterize(&mesh, &cam).covered(), 0);
    }

    #[test]
    fn nearer_triangle_wins() {
        let uvs = vec![DVec2::ZERO, DVec2::X, DVec2::Y, DVec2::ZERO, DVec2::X, DVec2::Y];
        let positions = vec![
            DVec3::new(-1.0, -1.0, -0.5),
            DVec3::new(1.0, -1.0, -0.5),
            DVec3::new(0.0, 1.0, -0.5),
            DVec3::new(-1.0, -1.0, 0.0),
            DVec3::new(1.0, -1.0, 0.0),
            DVec3::new(0.0, 1.0, 0.0),
        ];
        let mesh = Mesh::from_parts(positions, None, Some(uvs), vec![[0, 1, 2], [3, 4, 5]]).unwrap().mesh;
        let cam = Camera::look_at(DVec3::new(0.0, 0.0, 3.0), DVec3::ZERO, DVec3::Y, 0.8, 16, 16).unwrap();
        let gb = rasterize(&mesh, &cam);
        assert!(gb.covered() > 0);
        assert!(gb.fragments.iter().flatten().all(|f| f.triangle == 1));
    }

    #[test]
    fn near_plane_straddling_triangle_is_rasterized() {
        let positions = vec![DVec3::new(-5.0, -1.0, 2.0), DVec3::new(5.0, -1.0, 2.0), DVec3::new(0.0, -1.0, -20.0)];
        let uvs = vec![DVec2::ZERO, DVec2::X, DVec2::Y];
        let mesh = Mesh::from_parts(positions, None, Some(uvs), vec![[0, 1, 2]]).unwrap().mesh;
        let cam = Camera::look_at(DVec3::ZERO, DVec3::new(0.0, 0.0, -1.0), DVec3::Y, 1.2, 16, 16).unwrap();
        let gb = rasterize(&mesh, &cam);
        assert!(gb.covered() > 0);
        assert!(gb.fragments.iter().flatten().all(|f| f.position.z < 0.0));
    }

    #[test]
    fn cube_has_axis_aligned_normals() {
        let cube = Mesh::cube();
        assert_eq!(cube.triangles.len(), 12);
        for n in &cube.normals {
            let a = n.abs();
            assert!((a.max_element() - 1.0).abs() < 1e-12 && (a.x + a.y + a.z - 1.0).abs() < 1e-12);
        }
    }

    fn write_obj(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".obj").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn obj_cube_loads_with_axis_normals() {
        let mut s = String::new();
        for p in [
            (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
            (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
        ] {
            s += &format!("v {} {} {}\n", p.0 as f64 * 0.5, p.1 as f64 * 0.5, p.2 as f64 * 0.5);
        }
        let quads = [[1, 2, 3, 4], [5, 8, 7, 6], [1, 5, 6, 2], [2, 6, 7, 3], [3, 7, 8, 4], [5, 1, 4, 8]];
        for (f, q) in quads.iter().enumerate() {
            s += "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n";
            s += &format!(
                "f {}/{} {}/{} {}/{} {}/{}\n",
                q[0], 4 * f + 1, q[1], 4 * f + 2, q[2], 4 * f + 3, q[3], 4 * f + 4
            );
        }
        let file = write_obj(&s);
        let report = load_mesh(file.path()).unwrap();
        assert_eq!(report.mesh.triangles.len(), 12);
        assert_eq!(report.degenerate_dropped, 0);
        for n in &report.mesh.normals {
            let a = n.abs();
            assert!((a.max_element() - 1.0).abs() < 1e-9, "{n:?}");
        }
        for t in &report.mesh.tangents {
            assert!((t.truncate().length() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_area_triangle_is_dropped() {
        let file = write_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nvt 0 0\nvt 1 0\nvt 0 1\nvt 1 1\nf 1/1 2/2 3/3\nf 1/1 2/2 4/4\n",
        );
        let report = load_mesh(file.path()).unwrap();
        assert_eq!(report.degenerate_dropped, 1);
        assert_eq!(report.mesh.triangles.len(), 1);
    }

    #[test]
    fn mesh_without_uvs_is_rejected() {
        let file = write_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let err = load_mesh(file.path()).unwrap_err();
        assert!(err.to_string().contains("UVs required"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(load_mesh("/nonexistent/mesh.obj"), Err(Error::Io { .. })));
    }

    #[test]
    fn camera_validation() {
        let mut cam = Camera::look_at(DVec3::Z, DVec3::ZERO, DVec3::Y, 1.0, 4, 4).unwrap();
        cam.rotation.x_axis *= 2.0;
        assert!(cam.validate().is_err());
        assert!(Camera::look_at(DVec3::Z, DVec3::ZERO, DVec3::Y, 3.2, 4, 4).is_err());
        assert!(Camera::look_at(DVec3::Z, DVec3::ZERO, DVec3::Y, 1.0, 0, 4).is_err());
    }

    #[test]
    fn rasterization_is_deterministic_and_scale_invariant() {
        let sphere = Mesh::uv_sphere(1.0, 24, 12);
        let cam = Camera::look_at(DVec3::new(0.3, 0.5, 3.0), DVec3::ZERO, DVec3::Y, 0.9, 40, 30).unwrap();
        let a = rasterize(&sphere, &cam);
        let b = rasterize(&sphere, &cam);
        assert_eq!(a, b);
        let big = sphere.transformed(4.0, DVec3::ZERO);
        let mut far = cam.clone();
        far.position *= 4.0;
        let c = rasterize(&big, &far);
        let cov = |g: &GBuffer| g.fragments.iter().map(|f| f.is_some()).collect::<Vec<_>>();
        assert_eq!(cov(&a), cov(&c));
    }
}
