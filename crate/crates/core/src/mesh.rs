//! Triangulated depth surface ("proxy mesh") and ray casting against it.

use nalgebra::{Point2, Point3, Vector3};

use crate::bvh::Bvh;
use crate::camera::{CameraIntrinsics, CameraPose, RelativePose};
use crate::error::{Error, Result};
use crate::raster::DepthMap;

/// Minimum accepted ray parameter; rejects self-hits at the ray origin.
pub const RAY_EPSILON: f64 = 1e-6;
/// Determinant magnitude below which a ray counts as parallel to a triangle.
pub const PARALLEL_EPSILON: f64 = 1e-12;
/// Slack on barycentric coordinates so rays through shared edges hit.
pub const BARYCENTRIC_SLACK: f64 = 1e-9;

const DIRECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeshOptions {
    /// Drop triangles whose max/min vertex depth ratio exceeds this value.
    /// `None` keeps every triangle.
    pub max_depth_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProxyMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    vertex_pixel: Vec<Point2<f64>>,
    bvh: Bvh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: Point3<f64>,
    pub triangle: u32,
    pub barycentric: [f64; 3],
}

impl ProxyMesh {
    /// Assemble a mesh from raw parts. Indices are validated.
    pub fn from_parts(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        vertex_pixel: Vec<Point2<f64>>,
    ) -> Result<Self> {
        if vertex_pixel.len() != vertices.len() {
            return Err(Error::mismatch(
                format!("{} vertex pixels", vertices.len()),
                vertex_pixel.len(),
            ));
        }
        let n = vertices.len() as u32;
        if let Some(bad) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::mismatch(format!("vertex indices < {n}"), format!("{bad:?}")));
        }
        let bvh = Bvh::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            vertex_pixel,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_pixel(&self) -> &[Point2<f64>] {
        &self.vertex_pixel
    }

    pub fn triangle_vertices(&self, tri: u32) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[tri as usize];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Closest hit along a unit-length ray, or `None` on a miss.
    pub fn cast_ray(&self, origin: &Point3<f64>, direction: &Vector3<f64>) -> Result<Option<RayHit>> {
        let norm = direction.norm();
        if !((norm - 1.0).abs() <= DIRECTION_TOLERANCE) {
            return Err(Error::DegenerateDirection(norm));
        }
        Ok(self.cast_unchecked(origin, direction))
    }

    pub(crate) fn cast_unchecked(&self, origin: &Point3<f64>, direction: &Vector3<f64>) -> Option<RayHit> {
        self.bvh
            .closest(origin, direction, |tri| {
                let [a, b, c] = self.triangle_vertices(tri);
                intersect_triangle(origin, direction, &a, &b, &c).map(|(t, bary)| (t, bary))
            })
            .map(|(triangle, t, barycentric)| RayHit {
                t,
                point: origin + direction * t,
                triangle,
                barycentric,
            })
    }

    /// Write the mesh as Wavefront OBJ text (debug aid).
    pub fn write_obj(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// Möller–Trumbore intersection without back-face culling.
///
/// Returns the ray parameter and barycentric weights `(w0, w1, w2)` for
/// vertices `(v0, v1, v2)` when `t > RAY_EPSILON`.
pub fn intersect_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    v0: &Point3<f64>,
    v1: &Point3<f64>,
    v2: &Point3<f64>,
) -> Option<(f64, [f64; 3])> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if !(det.abs() >= PARALLEL_EPSILON) {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(-BARYCENTRIC_SLACK..=1.0 + BARYCENTRIC_SLACK).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -BARYCENTRIC_SLACK || u + v > 1.0 + BARYCENTRIC_SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if !(t > RAY_EPSILON && t.is_finite()) {
        return None;
    }
    Some((t, [1.0 - u - v, u, v]))
}

/// Unproject every valid depth pixel and split each 2x2 pixel cell into the
/// triangles (TL, BL, TR) and (TR, BL, BR).
pub fn build_mesh(depth: &DepthMap, k: &CameraIntrinsics, options: &MeshOptions) -> Result<ProxyMesh> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::mismatch(
            format!("{}x{}", k.width, k.height),
            format!("{}x{} depth map", depth.width(), depth.height()),
        ));
    }
    let (w, h) = (depth.width(), depth.height());
    let mut index = vec![u32::MAX; w as usize * h as usize];
    let mut vertices = Vec::new();
    let mut vertex_pixel = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = depth.get(x, y) {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                index[(y * w + x) as usize] = vertices.len() as u32;
                vertices.push(k.unproject(&p, d)?);
                vertex_pixel.push(p);
            }
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyDepth);
    }

    let at = |x: u32, y: u32| index[(y * w + x) as usize];
    let keep = |tri: &[u32; 3]| {
        if tri.iter().any(|&i| i == u32::MAX) {
            return false;
        }
        match options.max_depth_ratio {
            None => true,
            Some(limit) => {
                let z = tri.map(|i| vertices[i as usize].z);
                let hi = z.iter().cloned().fold(f64::MIN, f64::max);
                let lo = z.iter().cloned().fold(f64::MAX, f64::min);
                hi / lo <= limit
            }
        }
    };
    let mut triangles = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let (tl, tr, bl, br) = (at(x, y), at(x + 1, y), at(x, y + 1), at(x + 1, y + 1));
            for tri in [[tl, bl, tr], [tr, bl, br]] {
                if keep(&tri) {
                    triangles.push(tri);
                }
            }
        }
    }
    ProxyMesh::from_parts(vertices, triangles, vertex_pixel)
}

/// Move mesh vertices by a rigid transform; topology is unchanged.
pub fn transform_mesh(mesh: &ProxyMesh, transform: &RelativePose) -> ProxyMesh {
    transform_mesh_by(mesh, transform.transform())
}

pub(crate) fn transform_mesh_by(mesh: &ProxyMesh, pose: &CameraPose) -> ProxyMesh {
    if pose.is_identity() {
        return mesh.clone();
    }
    let vertices: Vec<_> = mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
    let bvh = Bvh::build(&vertices, &mesh.triangles);
    ProxyMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        vertex_pixel: mesh.vertex_pixel.clone(),
        bvh,
    }
}

pub fn cast_ray(mesh: &ProxyMesh, origin: &Point3<f64>, direction: &Vector3<f64>) -> Result<Option<RayHit>> {
    mesh.cast_ray(origin, direction)
}
