//! Screws, point clouds, oriented boxes and antipodal contact sampling.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Floor applied to box half-extents of degenerate (flat or point-like) clouds.
pub const BOX_EXTENT_FLOOR: f64 = 1e-4;

/// Inset of the contact grid from the face boundary, as a fraction of the face dimension.
pub const GRID_MARGIN: f64 = 0.05;

/// A proper rigid motion `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let axis = nalgebra::Unit::try_new(axis, 1e-12).ok_or(Error::DegenerateDirection)?;
        Ok(Self {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation,
        })
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// A zero-pitch screw (a directed line) in Plücker coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Screw {
    l: Vec3,
    m: Vec3,
    p: Option<Vec3>,
}

impl Screw {
    pub fn from_point_dir(p: Vec3, l: Vec3) -> Result<Self> {
        let l = unit(l)?;
        Ok(Self {
            l,
            m: p.cross(&l),
            p: Some(p),
        })
    }

    /// Builds a screw from raw Plücker coordinates. `l` is normalized and `m`
    /// rescaled accordingly; no anchor is stored.
    pub fn from_plucker(l: Vec3, m: Vec3) -> Result<Self> {
        let norm = l.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::DegenerateDirection);
        }
        let (l, m) = (l / norm, m / norm);
        if l.dot(&m).abs() > 1e-9 * (1.0 + m.norm()) {
            return Err(Error::InvalidInput(
                "Plücker coordinates violate l·m = 0".into(),
            ));
        }
        Ok(Self { l, m, p: None })
    }

    pub fn direction(&self) -> Vec3 {
        self.l
    }

    pub fn moment(&self) -> Vec3 {
        self.m
    }

    pub fn anchor(&self) -> Option<Vec3> {
        self.p
    }

    /// The stored anchor, or the foot of the perpendicular from the origin.
    pub fn point_on_line(&self) -> Vec3 {
        self.p.unwrap_or_else(|| self.l.cross(&self.m))
    }

    /// Same line with the anchor slid by `t` along the direction.
    pub fn slide(&self, t: f64) -> Self {
        Self {
            p: Some(self.point_on_line() + t * self.l),
            ..*self
        }
    }

    /// Moment about the line of force `f` applied at `c`: `l·(c×f) + m·f`.
    pub fn moment_about(&self, f: &Vec3, c: &Vec3) -> f64 {
        self.l.dot(&c.cross(f)) + self.m.dot(f)
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let l = t.apply_vector(&self.l);
        let p = t.apply_point(&self.point_on_line());
        Self {
            l,
            m: p.cross(&l),
            p: self.p.map(|a| t.apply_point(&a)),
        }
    }

    /// Distance from a point to the line.
    pub fn distance_to(&self, x: &Vec3) -> f64 {
        let d = x - self.point_on_line();
        (d - d.dot(&self.l) * self.l).norm()
    }
}

pub fn screw_from_point_dir(p: Vec3, l: Vec3) -> Result<Screw> {
    Screw::from_point_dir(p, l)
}

pub fn moment_about_screw(s: &Screw, f: &Vec3, c: &Vec3) -> f64 {
    s.moment_about(f, c)
}

pub(crate) fn unit(v: Vec3) -> Result<Vec3> {
    let n = v.norm();
    if n > 1e-12 && n.is_finite() {
        Ok(v / n)
    } else {
        Err(Error::DegenerateDirection)
    }
}

/// Deterministic orthonormal pair spanning the plane orthogonal to unit `n`.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let t1 = (helper - helper.dot(n) * n).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("non-finite point coordinate".into()));
        }
        Ok(Self {
            points,
            normals: None,
            frame: frame.into(),
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: normals.len(),
            });
        }
        if normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidInput("normals must have unit length".into()));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
            frame: frame.into(),
        }
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Columns are the box axes.
    pub rotation: Matrix3<f64>,
    pub half_extents: Vec3,
}

impl OrientedBox {
    pub fn axis(&self, k: usize) -> Vec3 {
        self.rotation.column(k).into_owned()
    }

    pub fn to_local(&self, x: &Vec3) -> Vec3 {
        self.rotation.transpose() * (x - self.center)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.center + self.rotation * local
    }

    pub fn vertices(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        std::array::from_fn(|i| {
            let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
            self.to_world(&Vec3::new(s(0) * h.x, s(1) * h.y, s(2) * h.z))
        })
    }

    pub fn contains(&self, x: &Vec3, slack: f64) -> bool {
        let local = self.to_local(x);
        (0..3).all(|k| local[k].abs() <= self.half_extents[k] + slack)
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    pub fn extent(&self, k: usize) -> f64 {
        2.0 * self.half_extents[k]
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            center: t.apply_point(&self.center),
            rotation: t.rotation * self.rotation,
            half_extents: self.half_extents,
        }
    }
}

/// Result of [`oriented_box_pca`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFit {
    pub bbox: OrientedBox,
    /// Set when the projected cloud was collinear and the axis-aligned box was used.
    pub fell_back: bool,
}

pub fn axis_aligned_box(cloud: &PointCloud) -> Result<OrientedBox> {
    let pts = cloud.points();
    if pts.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok(OrientedBox {
        center: (lo + hi) / 2.0,
        rotation: Matrix3::identity(),
        half_extents: ((hi - lo) / 2.0).map(|h| h.max(BOX_EXTENT_FLOOR)),
    })
}

/// Box whose third axis is the support normal and whose in-plane axes come
/// from a 2D PCA of the cloud projected onto the support plane.
///
/// The first principal axis is oriented so that the third moment of the
/// projected coordinates is non-negative (ties toward +world-x); the second
/// axis completes a right-handed frame.
pub fn oriented_box_pca(cloud: &PointCloud, support_normal: &Vec3) -> Result<BoxFit> {
    let pts = cloud.points();
    if pts.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let z = unit(*support_normal)?;
    let (e1, e2) = tangent_basis(&z);
    let mean = cloud.centroid();

    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - mean;
        let (u, v) = (d.dot(&e1), d.dot(&e2));
        a += u * u;
        b += u * v;
        c += v * v;
    }
    let n = pts.len() as f64;
    let (a, b, c) = (a / n, b / n, c / n);
    let half_diff = (a - c) / 2.0;
    let radius = (half_diff * half_diff + b * b).sqrt();
    let major = (a + c) / 2.0 + radius;
    let minor = (a + c) / 2.0 - radius;

    let scale = pts.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n;
    if major <= 1e-24 + 1e-18 * scale || minor <= 1e-12 * major {
        return Ok(BoxFit {
            bbox: axis_aligned_box(cloud)?,
            fell_back: true,
        });
    }

    let dir2 = if b.abs() > 1e-300 {
        nalgebra::Vector2::new(major - c, b)
    } else if a >= c {
        nalgebra::Vector2::new(1.0, 0.0)
    } else {
        nalgebra::Vector2::new(0.0, 1.0)
    };
    let mut a1 = (dir2.x * e1 + dir2.y * e2).normalize();

    let (mut m3, mut m3_abs) = (0.0, 0.0);
    for p in pts {
        let t = (p - mean).dot(&a1);
        m3 += t * t * t;
        m3_abs += (t * t * t).abs();
    }
    let flip = if m3.abs() <= 1e-12 * m3_abs {
        let wx = a1.dot(&Vec3::x());
        if wx.abs() > 1e-12 {
            wx < 0.0
        } else {
            a1.dot(&Vec3::y()) < 0.0
        }
    } else {
        m3 < 0.0
    };
    if flip {
        a1 = -a1;
    }
    let a2 = z.cross(&a1);
    let rotation = Matrix3::from_columns(&[a1, a2, z]);

    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in pts {
        let local = rotation.transpose() * p;
        lo = lo.inf(&local);
        hi = hi.sup(&local);
    }
    let mid = (lo + hi) / 2.0;
    Ok(BoxFit {
        bbox: OrientedBox {
            center: rotation * mid,
            rotation,
            half_extents: ((hi - lo) / 2.0).map(|h| h.max(BOX_EXTENT_FLOOR)),
        },
        fell_back: false,
    })
}

/// Transform from world coordinates into the object frame anchored at the box
/// vertex with the smallest local coordinates, axes along the box axes.
pub fn object_frame_from_box(b: &OrientedBox) -> RigidTransform {
    let origin = b.center - b.rotation * b.half_extents;
    let rt = b.rotation.transpose();
    RigidTransform::new(rt, -(rt * origin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Neg,
    Pos,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Neg => -1.0,
            Side::Pos => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Side::Neg => Side::Pos,
            Side::Pos => Side::Neg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub bbox: OrientedBox,
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn new(bbox: OrientedBox, axis: usize, side: Side) -> Result<Self> {
        if axis > 2 {
            return Err(Error::InvalidInput(format!("face axis {axis} out of range")));
        }
        Ok(Self { bbox, axis, side })
    }

    pub fn outward_normal(&self) -> Vec3 {
        self.side.sign() * self.bbox.axis(self.axis)
    }

    pub fn opposite(&self) -> Self {
        Self {
            side: self.side.flipped(),
            ..*self
        }
    }

    /// In-face axes, cyclic after the normal axis.
    pub fn in_plane_axes(&self) -> (usize, usize) {
        ((self.axis + 1) % 3, (self.axis + 2) % 3)
    }

    /// World position of the face point with in-face local coordinates `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        let (ua, va) = self.in_plane_axes();
        let mut local = Vec3::zeros();
        local[self.axis] = self.side.sign() * self.bbox.half_extents[self.axis];
        local[ua] = u;
        local[va] = v;
        self.bbox.to_world(&local)
    }

    pub fn is_opposite_of(&self, other: &Face) -> bool {
        self.bbox == other.bbox && self.axis == other.axis && self.side != other.side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntipodalPair {
    pub c_i: Vec3,
    pub c_j: Vec3,
    /// Inward normal at `c_i`.
    pub n_i: Vec3,
    /// Inward normal at `c_j`.
    pub n_j: Vec3,
}

impl AntipodalPair {
    /// Pair from two contact points; normals point from each contact toward the other.
    pub fn from_points(c_i: Vec3, c_j: Vec3) -> Result<Self> {
        let n_i = unit(c_j - c_i)?;
        Ok(Self {
            c_i,
            c_j,
            n_i,
            n_j: -n_i,
        })
    }

    pub fn midpoint(&self) -> Vec3 {
        (self.c_i + self.c_j) / 2.0
    }

    pub fn separation(&self) -> f64 {
        (self.c_j - self.c_i).norm()
    }

    pub fn swapped(&self) -> Self {
        Self {
            c_i: self.c_j,
            c_j: self.c_i,
            n_i: self.n_j,
            n_j: self.n_i,
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            c_i: t.apply_point(&self.c_i),
            c_j: t.apply_point(&self.c_j),
            n_i: t.apply_vector(&self.n_i),
            n_j: t.apply_vector(&self.n_j),
        }
    }
}

/// Regular grid of contact locations on a face, in the face's in-plane local
/// coordinates, inset from the boundary by [`GRID_MARGIN`].
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGrid {
    pub u_coords: Vec<f64>,
    pub v_coords: Vec<f64>,
}

impl FaceGrid {
    pub fn new(face: &Face, res_u: usize, res_v: usize) -> Result<Self> {
        if res_u < 2 || res_v < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        let (ua, va) = face.in_plane_axes();
        let h = face.bbox.half_extents;
        Ok(Self {
            u_coords: inset_linspace(h[ua], res_u),
            v_coords: inset_linspace(h[va], res_v),
        })
    }

    pub fn res_u(&self) -> usize {
        self.u_coords.len()
    }

    pub fn res_v(&self) -> usize {
        self.v_coords.len()
    }

    /// Vertex `(iu, iv)` flattened row-major with `u` fastest.
    pub fn vertex_index(&self, iu: usize, iv: usize) -> usize {
        iv * self.res_u() + iu
    }

    pub fn cell_index(&self, cu: usize, cv: usize) -> usize {
        cv * (self.res_u() - 1) + cu
    }

    pub fn n_cells(&self) -> usize {
        (self.res_u() - 1) * (self.res_v() - 1)
    }

    /// Cell containing in-plane coordinates `(u, v)`. Points on an interior
    /// grid line belong to the lower-index cell; points outside the grid to none.
    pub fn locate(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        Some((locate_1d(&self.u_coords, u)?, locate_1d(&self.v_coords, v)?))
    }
}

fn inset_linspace(half: f64, n: usize) -> Vec<f64> {
    let lo = -half + GRID_MARGIN * 2.0 * half;
    let hi = half - GRID_MARGIN * 2.0 * half;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn locate_1d(coords: &[f64], x: f64) -> Option<usize> {
    let (first, last) = (coords[0], coords[coords.len() - 1]);
    if !(x >= first && x <= last) {
        return None;
    }
    // First cell whose upper line is at or beyond x.
    let k = coords[1..].partition_point(|&c| c < x);
    Some(k.min(coords.len() - 2))
}

/// Antipodal pairs on a regular grid over `f_i`, each projected straight
/// across onto `f_j`. Ordering is row-major with `u` fastest.
pub fn sample_antipodal_grid(
    f_i: &Face,
    f_j: &Face,
    res_u: usize,
    res_v: usize,
) -> Result<Vec<AntipodalPair>> {
    if !f_i.is_opposite_of(f_j) {
        return Err(Error::FacesNotOpposite);
    }
    let grid = FaceGrid::new(f_i, res_u, res_v)?;
    Ok(grid_pairs(f_i, &grid))
}

pub(crate) fn grid_pairs(f_i: &Face, grid: &FaceGrid) -> Vec<AntipodalPair> {
    let f_j = f_i.opposite();
    let n_i = -f_i.outward_normal();
    let mut pairs = Vec::with_capacity(grid.res_u() * grid.res_v());
    for &v in &grid.v_coords {
        for &u in &grid.u_coords {
            pairs.push(AntipodalPair {
                c_i: f_i.point(u, v),
                c_j: f_j.point(u, v),
                n_i,
                n_j: -n_i,
            });
        }
    }
    pairs
}
