//! Partial point clouds of triangle meshes seen from a virtual depth camera,
//! and k-nearest-neighbor normal estimation.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit, PointCloud, RigidTransform, Vec3};

/// Triangles with twice-area below this are dropped on construction.
const DEGENERATE_AREA: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Drops zero-area triangles; rejects out-of-range indices and empty results.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidInput(format!("triangle {t:?} indexes past {n} vertices")));
        }
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
            })
            .collect();
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no triangles".into()));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| t.apply_point(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Appends another mesh's triangles (no welding).
    pub fn merged(mut self, other: &TriMesh) -> Self {
        let off = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + off)));
        self
    }

    /// `(min, max)` corners of the vertex bounding box.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.vertices[0];
        let mut hi = lo;
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

/// Axis-aligned box `[lo, hi]`, outward winding.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> Result<TriMesh> {
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(v, tris)
}

/// Capped cylinder along `z` from `z = 0` to `height`, centered on the axis.
pub fn cylinder_mesh(radius: f64, height: f64, segments: usize) -> Result<TriMesh> {
    if segments < 3 || !(radius > 0.0) || !(height > 0.0) {
        return Err(Error::InvalidInput("cylinder needs 3+ segments and positive size".into()));
    }
    let mut v = Vec::with_capacity(2 * segments + 2);
    for k in 0..segments {
        let a = std::f64::consts::TAU * k as f64 / segments as f64;
        let (s, c) = a.sin_cos();
        v.push(Vec3::new(radius * c, radius * s, 0.0));
        v.push(Vec3::new(radius * c, radius * s, height));
    }
    let bottom = v.len();
    v.push(Vec3::zeros());
    v.push(Vec3::new(0.0, 0.0, height));
    let top = bottom + 1;
    let mut t = Vec::with_capacity(4 * segments);
    for k in 0..segments {
        let (a0, a1) = (2 * k, 2 * k + 1);
        let (b0, b1) = (2 * ((k + 1) % segments), 2 * ((k + 1) % segments) + 1);
        t.push([a0, b0, b1]);
        t.push([a0, b1, a1]);
        t.push([bottom, b0, a0]);
        t.push([top, a1, b1]);
    }
    TriMesh::new(v, t)
}

/// Crossbar of length `bar` along `x` on top of a stem of height `stem`;
/// both have square section `thickness`. Sits on `z = 0`.
pub fn t_handle_mesh(bar: f64, stem: f64, thickness: f64) -> Result<TriMesh> {
    let h = thickness / 2.0;
    let stem_mesh = box_mesh(Vec3::new(-h, -h, 0.0), Vec3::new(h, h, stem))?;
    let bar_mesh = box_mesh(
        Vec3::new(-bar / 2.0, -h, stem),
        Vec3::new(bar / 2.0, h, stem + thickness),
    )?;
    Ok(stem_mesh.merged(&bar_mesh))
}

/// Pinhole depth camera looking along its local `+z`, image `x` right, `y` down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualCamera {
    /// Camera to world.
    pub rotation: Matrix3<f64>,
    pub position: Vec3,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub fov: f64,
    pub noise_std: f64,
}

impl VirtualCamera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = unit(target - eye)?;
        let x = unit(z.cross(&up))?;
        let y = z.cross(&x);
        Ok(Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            position: eye,
            width: 160,
            height: 120,
            fov: 60f64.to_radians(),
            noise_std: 0.001,
        })
    }

    pub fn with_resolution(self, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..self
        }
    }

    pub fn with_noise(self, noise_std: f64) -> Self {
        Self { noise_std, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidInput("camera resolution must be at least 8x8".into()));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::InvalidInput("field of view must lie in (0, pi)".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidInput("noise std must be non-negative".into()));
        }
        let r = &self.rotation;
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("camera rotation is not proper".into()));
        }
        Ok(())
    }

    fn focal(&self) -> f64 {
        self.width as f64 / 2.0 / (self.fov / 2.0).tan()
    }

    /// Camera-frame ray through pixel `(i, j)`, scaled to unit depth.
    fn pixel_ray(&self, i: usize, j: usize) -> Vec3 {
        let f = self.focal();
        Vec3::new(
            (i as f64 + 0.5 - self.width as f64 / 2.0) / f,
            (j as f64 + 0.5 - self.height as f64 / 2.0) / f,
            1.0,
        )
    }
}

/// Ray parameter of the hit with triangle `(a, b, c)`, if any.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Nearest hit per pixel, Gaussian noise on depth, back-projected to world
/// coordinates. Points are in pixel order (row-major).
pub fn render_partial_cloud(mesh: &TriMesh, cam: &VirtualCamera, seed: u64) -> Result<PointCloud> {
    cam.validate()?;
    let tris: Vec<[Vec3; 3]> = mesh
        .triangles()
        .iter()
        .map(|t| t.map(|i| cam.rotation.transpose() * (mesh.vertices()[i] - cam.position)))
        .collect();
    let origin = Vec3::zeros();
    let depths: Vec<Option<(usize, f64)>> = (0..cam.width * cam.height)
        .into_par_iter()
        .map(|px| {
            let ray = cam.pixel_ray(px % cam.width, px / cam.width);
            tris.iter()
                .filter_map(|[a, b, c]| ray_triangle(&origin, &ray, a, b, c))
                .min_by(f64::total_cmp)
                .map(|t| (px, t))
        })
        .collect();
    let noise = Normal::new(0.0, cam.noise_std.max(0.0))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for (px, depth) in depths.into_iter().flatten() {
        let d = if cam.noise_std > 0.0 {
            depth + noise.sample(&mut rng)
        } else {
            depth
        };
        let local = cam.pixel_ray(px % cam.width, px / cam.width) * d;
        points.push(cam.rotation * local + cam.position);
    }
    if points.is_empty() {
        return Err(Error::NotVisible);
    }
    PointCloud::new(points, "world")
}

/// Camera above and to the side of the mesh, looking at its bounding-box
/// center from `2.5×` the box diagonal.
pub fn overview_camera(mesh: &TriMesh) -> Result<VirtualCamera> {
    overview_camera_at(mesh, 0.0)
}

/// [`overview_camera`] swung about the vertical by `azimuth` radians.
pub fn overview_camera_at(mesh: &TriMesh, azimuth: f64) -> Result<VirtualCamera> {
    let (lo, hi) = mesh.bounds();
    let center = (lo + hi) / 2.0;
    let (s, c) = azimuth.sin_cos();
    let dir = Vec3::new(0.6 * c + 0.8 * s, 0.6 * s - 0.8 * c, 0.9).normalize();
    let eye = center + dir * (2.5 * (hi - lo).norm());
    Ok(VirtualCamera::look_at(eye, center, Vec3::z())?.with_resolution(240, 180))
}

/// Desk-scale objects resting on `z = 0`: boxes, a cylinder and a T-handle
/// lying on its bar. Sizes stay near the training cuboid family (length
/// 0.14 to 0.25, height about 0.1) with one side within the gripper opening.
pub fn desk_objects() -> Result<Vec<(String, TriMesh)>> {
    let cuboid = |x: f64, y: f64, z: f64| {
        box_mesh(Vec3::new(-x / 2.0, -y / 2.0, 0.0), Vec3::new(x / 2.0, y / 2.0, z))
    };
    let flip = RigidTransform::from_axis_angle(Vec3::x(), std::f64::consts::PI, Vec3::new(0.0, 0.0, 0.13))?;
    Ok(vec![
        ("box".to_string(), cuboid(0.18, 0.06, 0.1)?),
        ("cylinder".to_string(), cylinder_mesh(0.033, 0.12, 48)?),
        ("t_handle".to_string(), t_handle_mesh(0.16, 0.1, 0.03)?.transformed(&flip)),
        ("long_box".to_string(), cuboid(0.22, 0.05, 0.09)?),
        ("block".to_string(), cuboid(0.14, 0.06, 0.11)?),
    ])
}

pub const DEFAULT_NORMAL_K: usize = 16;

/// Plane-fit normals over the `k` nearest points (the point included),
/// oriented toward `viewpoint`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<PointCloud> {
    let pts = cloud.points();
    if k < 3 || pts.len() < k {
        return Err(Error::InvalidInput(format!(
            "normal estimation needs k >= 3 and at least k points (k = {k}, n = {})",
            pts.len()
        )));
    }
    let normals: Vec<Vec3> = pts
        .par_iter()
        .map(|p| {
            let mut d: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, q)| ((q - p).norm_squared(), i))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nbrs = &d[..k];
            let mean = nbrs.iter().map(|&(_, i)| pts[i]).sum::<Vec3>() / k as f64;
            let mut cov = Matrix3::zeros();
            for &(_, i) in nbrs {
                let r = pts[i] - mean;
                cov += r * r.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let min = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(min).normalize();
            if (viewpoint - p).dot(&n) < 0.0 {
                n = -n;
            }
            n
        })
        .collect();
    cloud.clone().with_normals(normals)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn unit_cube() -> TriMesh {
        box_mesh(Vec3::zeros(), Vec3::repeat(1.0)).unwrap()
    }

    #[test]
    fn mesh_cleanup() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::x() * 2.0];
        let m = TriMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 9]]).is_err());
    }

    #[test]
    fn primitive_counts_and_winding() {
        let cube = unit_cube();
        assert_eq!(cube.triangles().len(), 12);
        let center = Vec3::repeat(0.5);
        for t in cube.triangles() {
            let [a, b, c] = t.map(|i| cube.vertices()[i]);
            assert!((b - a).cross(&(c - a)).dot(&(a - center)) > 0.0);
        }
        assert_eq!(cylinder_mesh(0.03, 0.1, 32).unwrap().triangles().len(), 128);
        assert_eq!(t_handle_mesh(0.2, 0.1, 0.03).unwrap().triangles().len(), 24);
    }

    #[test]
    fn moller_trumbore_hits_and_misses() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let o = Vec3::new(0.25, 0.25, 1.0);
        assert_abs_diff_eq!(ray_triangle(&o, &-Vec3::z(), &a, &b, &c).unwrap(), 1.0, epsilon = 1e-15);
        assert!(ray_triangle(&o, &Vec3::z(), &a, &b, &c).is_none());
        let off = Vec3::new(0.8, 0.8, 1.0);
        assert!(ray_triangle(&off, &-Vec3::z(), &a, &b, &c).is_none());
    }

    #[test]
    fn face_on_view_sees_no_hidden_face() {
        let cam = VirtualCamera::look_at(Vec3::new(0.5, 0.5, 3.0), Vec3::repeat(0.5), Vec3::y())
            .unwrap()
            .with_noise(0.0);
        let cloud = render_partial_cloud(&unit_cube(), &cam, 0).unwrap();
        assert!(!cloud.is_empty());
        for p in cloud.points() {
            assert!(p.z > 1e-3, "far face point {p:?}");
            assert_abs_diff_eq!(p.z, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn oblique_view_without_noise_lies_on_surface() {
        let cam = VirtualCamera::look_at(Vec3::new(2.0, -1.5, 2.5), Vec3::repeat(0.5), Vec3::z())
            .unwrap()
            .with_noise(0.0);
        let cloud = render_partial_cloud(&unit_cube(), &cam, 0).unwrap();
        for p in cloud.points() {
            let on_face = (0..3).any(|k| p[k].abs() < 1e-9 || (p[k] - 1.0).abs() < 1e-9);
            let inside = (0..3).all(|k| p[k] > -1e-9 && p[k] < 1.0 + 1e-9);
            assert!(on_face && inside);
            // Visible faces: x = 1, y = 0, z = 1.
            let visible = (p.x - 1.0).abs() < 1e-9 || p.y.abs() < 1e-9 || (p.z - 1.0).abs() < 1e-9;
            assert!(visible, "hidden face point {p:?}");
        }
    }

    #[test]
    fn resolution_scaling() {
        let cam = VirtualCamera::look_at(Vec3::new(2.0, -1.5, 2.5), Vec3::repeat(0.5), Vec3::z())
            .unwrap()
            .with_noise(0.0);
        let n1 = render_partial_cloud(&unit_cube(), &cam, 0).unwrap().len() as f64;
        let n2 = render_partial_cloud(&unit_cube(), &cam.with_resolution(320, 240), 0)
            .unwrap()
            .len() as f64;
        assert!((n2 / n1 - 4.0).abs() <= 0.4, "ratio {}", n2 / n1);
    }

    #[test]
    fn seeded_noise_and_invisibility() {
        let cam = VirtualCamera::look_at(Vec3::new(2.0, -1.5, 2.5), Vec3::repeat(0.5), Vec3::z()).unwrap();
        let a = render_partial_cloud(&unit_cube(), &cam, 7).unwrap();
        let b = render_partial_cloud(&unit_cube(), &cam, 7).unwrap();
        assert_eq!(a, b);
        let away = VirtualCamera::look_at(Vec3::new(5.0, 5.0, 5.0), Vec3::new(10.0, 10.0, 10.0), Vec3::z()).unwrap();
        assert!(matches!(render_partial_cloud(&unit_cube(), &away, 0), Err(Error::NotVisible)));
    }

    #[test]
    fn plane_normals() {
        let pts: Vec<Vec3> = (0..100)
            .map(|i| Vec3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 0.2))
            .collect();
        let cloud = PointCloud::new(pts, "world").unwrap();
        let out = estimate_normals(&cloud, 16, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        for n in out.normals().unwrap() {
            assert!(n.dot(&Vec3::z()) > 1f64.to_radians().cos());
        }
        assert!(estimate_normals(&cloud, 101, &Vec3::zeros()).is_err());
    }
}
